#pragma once

#include <array>
#include <vector>

#include "fsplat/rasterize.hpp"
#include "fsplat/ste.hpp"

namespace fsplat {

// Per-primitive parameter gradients, shaped exactly like the parameters.
struct PrimGrad {
  Vec3 center = Vec3::Zero();
  Vec4 rotation = Vec4::Zero();
  double opacity_raw = 0.0;
  std::array<double, kShCoeffs> sh{};
  double circumradius_raw = 0.0;
  std::array<double, kFreqCount> amplitudes_raw{};
  std::array<double, kFreqCount> phases{};
  double sharpness_raw = 0.0;

  void add(const PrimGrad& other);
  void scale(double s);
};

struct GradBuffer {
  std::vector<PrimGrad> prims;
  // Per-pixel absolute screen-space center gradient, summed (NDC units).
  std::vector<double> abs_screen_grad;

  explicit GradBuffer(std::size_t n = 0) : prims(n), abs_screen_grad(n, 0.0) {}
};

// Loss gradients w.r.t. the rendered buffers, plus optional per-record
// terms for losses (depth distortion) that are not functions of the
// composited images alone. Empty vectors mean zero.
struct LossGrads {
  std::vector<double> d_color;   // H*W*3
  std::vector<double> d_depth;   // H*W
  std::vector<double> d_normal;  // H*W*3
  std::vector<double> d_alpha;   // H*W
  std::vector<std::vector<double>> d_rec_omega;  // aligned with blend log
  std::vector<std::vector<double>> d_rec_z;
};

// Hard: exact derivatives of the forward window (exterior pixels skipped);
// used for finite-difference validation. SmoothSurrogate: the straight-
// through estimator used in training.
enum class WindowMode { Hard, SmoothSurrogate };

GradBuffer backward(const SceneModel& scene, const Camera& cam,
                    const RenderConfig& cfg, const RenderOutput& output,
                    const LossGrads& grads, const SteConfig& ste, int k_active,
                    WindowMode mode = WindowMode::SmoothSurrogate,
                    const TileBinning* binning = nullptr);

// Color-only convenience entry point.
GradBuffer backward(const SceneModel& scene, const Camera& cam,
                    const RenderConfig& cfg, const RenderOutput& output,
                    const std::vector<double>& d_image, const SteConfig& ste,
                    int k_active, WindowMode mode = WindowMode::SmoothSurrogate);

}  // namespace fsplat
