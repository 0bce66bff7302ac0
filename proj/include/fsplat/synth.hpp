#pragma once

#include <string>

#include "fsplat/dataset.hpp"
#include "fsplat/rasterize.hpp"

namespace fsplat {

enum class ShapeFamily { Discs, Lobed, Mixed };

struct SynthSpec {
  int primitive_count = 64;
  int train_views = 8;
  int test_views = 1;
  int width = 128;
  int height = 128;
  ShapeFamily family = ShapeFamily::Lobed;
  std::uint64_t seed = 0;
  double camera_distance = 4.0;
  Vec3 background = Vec3(0.05, 0.05, 0.05);
};

struct SynthResult {
  SceneModel ground_truth;
  Dataset dataset;
};

// Random valid primitives (multi-lobed when requested) rendered into target
// images by the forward rasterizer; cameras sit on a ring around the scene.
SynthResult synth_scene(const SynthSpec& spec);

// Same, plus writes manifest.json, images/, points.txt and gt.ckpt.
SynthResult synth_scene_to_dir(const SynthSpec& spec, const std::string& dir);

}  // namespace fsplat
