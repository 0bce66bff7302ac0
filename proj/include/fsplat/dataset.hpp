#pragma once

#include <string>
#include <vector>

#include "fsplat/image.hpp"
#include "fsplat/primitive.hpp"

namespace fsplat {

struct TrainView {
  Camera camera;
  Image image;
  std::string name;
  bool held_out = false;
};

struct Dataset {
  std::vector<TrainView> views;
  std::vector<Vec3> points;
  std::vector<Vec3> point_colors;

  std::vector<std::size_t> train_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < views.size(); ++i)
      if (!views[i].held_out) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> test_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < views.size(); ++i)
      if (views[i].held_out) out.push_back(i);
    return out;
  }
};

// 8-bit RGB PNG, values mapped linearly to [0, 1]. Images are treated as
// display-referred; no transfer-function conversion is applied.
Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

// Manifest: JSON listing cameras (intrinsics, pose, image path, split) and
// an optional "x y z r g b" point-cloud file.
Dataset load_dataset(const std::string& manifest_path, bool load_images = true);

void load_points_file(const std::string& path, std::vector<Vec3>& points,
                      std::vector<Vec3>& colors);
void save_points_file(const std::string& path, const std::vector<Vec3>& points,
                      const std::vector<Vec3>& colors);

}  // namespace fsplat
