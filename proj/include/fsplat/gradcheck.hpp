#pragma once

#include <string>
#include <vector>

#include "fsplat/backward.hpp"
#include "fsplat/image.hpp"

namespace fsplat {

enum class CheckLoss { L2, L1 };

struct GradCheckOptions {
  CheckLoss loss = CheckLoss::L2;
  double eps = 1e-4;
  bool mask_boundary = true;
  WindowMode mode = WindowMode::Hard;
  SteConfig ste;
  int k_active = kFreqCount;
};

struct GradCheckGroup {
  std::string name;
  int count = 0;
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  double sign_agreement = 1.0;  // fraction of coords with matching sign
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  int masked_pixels = 0;
  int total_pixels = 0;

  const GradCheckGroup& group(const std::string& name) const;
  std::string to_text() const;
  std::string to_csv() const;
};

// Central-difference validation of the analytic backward pass against the
// forward loss. The pixel mask (fixed before perturbation) drops pixels
// within one pixel of any boundary plus cutoff/termination crossings, where
// the loss is not smooth at the probe step.
GradCheckReport finite_diff_check(const SceneModel& scene, const Camera& cam,
                                  const RenderConfig& cfg, const Image& target,
                                  const GradCheckOptions& opts);

}  // namespace fsplat
