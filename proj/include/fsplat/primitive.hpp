#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fsplat/common.hpp"
#include "fsplat/shape.hpp"

namespace fsplat {

struct Primitive {
  Vec3 center = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion (w, x, y, z)
  double opacity_raw = 0.0;          // o = sigmoid(opacity_raw)
  std::array<double, kShCoeffs> sh{};
  FourierShape shape;

  double opacity() const { return sigmoid(opacity_raw); }
};

// Per-primitive statistics gathered between densification steps.
struct AccumStats {
  double max_blend_weight = 0.0;   // max alpha_i * T_i over recent pixels
  int view_count = 0;              // views where the blend weight exceeded 1e-4
  double abs_grad_accum = 0.0;     // summed per-pixel |screen-space center grad|
  double max_screen_extent = 0.0;  // largest projected diameter in pixels
  int age_iters = 0;               // iterations since creation

  void reset() {
    max_blend_weight = 0.0;
    view_count = 0;
    abs_grad_accum = 0.0;
    max_screen_extent = 0.0;
  }
};

struct SceneModel {
  std::vector<Primitive> primitives;
  std::size_t budget_max = 0;
  int k_active = kFreqCount;
  int sh_degree_active = 3;
  std::vector<AccumStats> stats;
  std::vector<std::uint8_t> dome_flags;

  std::size_t live_count() const { return primitives.size(); }
  void sync_aux() {
    stats.resize(primitives.size());
    dome_flags.resize(primitives.size(), 0);
  }
};

struct Camera {
  enum class Projection { Perspective, Orthographic };

  double fx = 1.0, fy = 1.0;  // focal lengths (ortho: pixels per world unit)
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Mat4 world_to_camera = Mat4::Identity();
  Projection projection = Projection::Perspective;

  Vec3 position() const {
    Mat3 rot = world_to_camera.topLeftCorner<3, 3>();
    Vec3 t = world_to_camera.topRightCorner<3, 1>();
    return -rot.transpose() * t;
  }
};

// Rotation matrix of the (normalized) quaternion; columns are the local
// tangent frame (t_u, t_v, t_w) with t_w = t_u x t_v.
Mat3 tangent_frame(const Vec4& q);

// Homogeneous surfel-to-world transform mapping local (u, v, 1, 1).
// Tangent columns carry the circumradius, so the boundary lives inside the
// unit disc in local coordinates.
Mat4 surfel_to_world(const Primitive& prim);

// Maps world homogeneous points to (x_pix * w, y_pix * w, depth, w).
Mat4 world_to_screen(const Camera& cam);

// Simple look-at pose builder (camera z axis points at the target).
Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

}  // namespace fsplat
