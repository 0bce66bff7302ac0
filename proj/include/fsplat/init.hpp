#pragma once

#include <vector>

#include "fsplat/primitive.hpp"
#include "fsplat/rng.hpp"

namespace fsplat {

struct InitConfig {
  double dc_amplitude_raw = 1.0;
  double hf_amplitude_raw = 1e-2;  // higher-frequency seed value
  double opacity_init = 0.5;
  double sigma_init = 1.16;
  std::uint64_t seed = 0;
};

// One circular surfel per point; circumradius is the square root of the
// nearest-neighbour distance, the SH DC band comes from the point color and
// phases break symmetry with a per-point stream so initialization is stable
// under input permutation.
SceneModel init_from_points(const std::vector<Vec3>& points,
                            const std::vector<Vec3>& colors,
                            const InitConfig& cfg);

// Golden-angle spiral of background surfels on a sphere, normals pointing
// at the center, white DC color, dome flag set.
std::vector<Primitive> fibonacci_dome(int count, double radius,
                                      const Vec3& center,
                                      const InitConfig& cfg = {});

// Appends dome primitives to a scene and marks their flags.
void add_dome(SceneModel& scene, int count, double radius, const Vec3& center,
              const InitConfig& cfg = {});

}  // namespace fsplat
