#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "fsplat/image.hpp"
#include "fsplat/primitive.hpp"
#include "fsplat/sh.hpp"

namespace fsplat {

struct RenderConfig {
  int tile_size = 16;
  double near_clip = 0.01;
  Vec3 background = Vec3::Zero();
  double alpha_cutoff = 1.0 / 255.0;
  double transmittance_floor = 1e-4;
  int num_threads = 0;  // 0: hardware concurrency
};

// One compositing record; replayed in reverse by the backward pass.
struct BlendRecord {
  std::uint32_t prim = 0;
  double alpha = 0.0;
  double transmittance = 0.0;  // T before this record
  double depth = 0.0;          // exact camera-space depth of the hit
  double u = 0.0, v = 0.0;     // tangent-plane coordinates (unit-disc local)
};

struct RenderOutput {
  int width = 0, height = 0;
  Image color;      // H x W x 3
  Image depth;      // H x W, sum of omega_i * z_i
  Image normal;     // H x W x 3, sum of omega_i * n_i (camera-facing)
  Image alpha_acc;  // H x W
  std::vector<std::vector<BlendRecord>> blend;  // per pixel, front-to-back

  std::size_t pixel_index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
};

// View-dependent data cached once per (camera, primitive).
struct ProjectedPrimitive {
  std::uint32_t id = 0;
  // Rows 0, 1, 3 of A = world_to_screen * surfel_to_world drive the pixel
  // plane pullback; row 2 recovers the camera-space depth of the hit.
  std::array<double, 4> row_x{}, row_y{}, row_d{}, row_w{};
  double z_center = 0.0;
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;  // pixel bbox
  Vec3 color = Vec3::Zero();
  Vec3 normal = Vec3::Zero();  // camera-facing world normal
  double normal_sign = 1.0;
  double opacity = 0.0;
  double sigma = 1.0;
  std::array<std::complex<double>, kFreqCount> coeffs{};
  double screen_extent = 0.0;  // conservative projected diameter in pixels
};

struct TileBinning {
  int tiles_x = 0, tiles_y = 0, tile_size = 16;
  std::vector<ProjectedPrimitive> projected;
  // Per tile, indices into `projected`, sorted by (center depth, id).
  std::vector<std::vector<std::uint32_t>> tiles;
};

// Pinhole/ortho projection of a world point; nullopt when the point does
// not lie strictly in front of the near plane.
std::optional<Vec3> project_point(const Camera& cam, const Vec3& p,
                                  double near_clip);

struct SurfelHit {
  double u = 0.0, v = 0.0;
  double depth = 0.0;
};

// Ray-plane intersection via the two-plane pullback. Misses when the 2x2
// system is near-singular (plane edge-on) or the hit is behind the camera.
std::optional<SurfelHit> intersect(double pixel_x, double pixel_y,
                                   const ProjectedPrimitive& prim,
                                   double near_clip);

struct PixelAlpha {
  double alpha = 0.0;
  double rho = 0.0;
  double cos_theta = 1.0, sin_theta = 0.0;
  double boundary = 0.0;  // r(theta) in unit-disc local units
  double x = 0.0;         // normalized signed distance (r - rho) / r
};

// Windowed opacity at a tangent-plane point. `boundary` and `x` are kept
// for the backward pass.
PixelAlpha pixel_alpha(double opacity, double sigma,
                       const std::array<std::complex<double>, kFreqCount>& coeffs,
                       int k_active, double u, double v);

// Convenience overload matching the primitive-level contract.
PixelAlpha pixel_alpha(const Primitive& prim, double u, double v, int k_active);

// Projects, culls and bins every primitive; each tile list is sorted by
// ascending center depth with ids breaking ties.
TileBinning bin_tiles(const SceneModel& scene, const Camera& cam,
                      const RenderConfig& cfg, int k_active);

RenderOutput render(const SceneModel& scene, const Camera& cam,
                    const RenderConfig& cfg, int k_active);

// Shared by render/backward so both passes see identical records.
RenderOutput render_with_binning(const SceneModel& scene, const Camera& cam,
                                 const RenderConfig& cfg, int k_active,
                                 const TileBinning& binning);

}  // namespace fsplat
