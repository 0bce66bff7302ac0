#pragma once

#include <cstdint>
#include <vector>

#include "fsplat/primitive.hpp"
#include "fsplat/rng.hpp"

namespace fsplat {

struct DensifyConfig {
  int interval = 500;
  int start_iter = 500;
  int end_iter = 25000;
  double tau_opacity = 0.005;     // kill below this opacity, always
  double tau_importance = 0.04;   // max blending weight threshold
  int min_views = 2;
  double tau_grad = 0.0004;       // screen-space gradient threshold (NDC)
  int hydra_from_iter = 3000;
  double birth_rate = 0.30;       // fraction of free budget added per step
  double clone_noise_eta = 0.05;  // tangent offset scale, times donor radius
  double max_extent_px = 1400;    // indoor floater kill threshold
  double lobe_split_extent_px = 100;  // above: lobe decomposition
  int lobe_samples = 256;             // M
  int lobe_segments = 3;              // S
  bool indoor = false;
};

// Keeps optimizer state aligned with scene mutations.
struct SceneEditHook {
  virtual ~SceneEditHook() = default;
  virtual void reset_slot(std::size_t) {}
  virtual void append_slot() {}
  virtual void compact(const std::vector<std::uint32_t>& keep) { (void)keep; }
};

// Death criteria: opacity below tau_o at any age; past the grace period
// also low blend weight, too few observing views, or (indoor) an oversized
// screen footprint.
std::vector<std::uint8_t> death_mask(const SceneModel& scene,
                                     const DensifyConfig& cfg,
                                     int views_per_epoch);

// Opacity for each of n co-located copies that composite to o.
double new_opacity(double o, int n);

// Binomial expansion of the composited n-child window integral; the
// alternating sum is capped at n = 32 (this pipeline only uses n = 2).
double relocation_denominator(double o_new, int n, double sigma);

// Circumradius preserving the parent's windowed mass; falls back to the
// parent radius when the denominator is degenerate.
double new_circumradius(double radius, double o, double sigma, double denom);

// Quadrature oracles (1e4-node trapezoid in rho) for the mass identities.
double window_mass_oracle(double o, double radius, double sigma);
double composite_mass_oracle(double o_new, double radius_new, double sigma,
                             int n);

struct LobeSegment {
  double theta_min = 0.0;
  double theta_max = 0.0;     // > theta_min, may exceed 2*pi when wrapping
  double centroid_r = 0.0;    // polar area centroid, unit-disc local units
  double centroid_theta = 0.0;
};

// Samples the boundary at M angles, ranks local minima by depth below the
// mean of their adjacent maxima, and cuts the S deepest valleys into
// angular segments. A circle yields no valleys.
std::vector<LobeSegment> detect_lobes(const FourierShape& shape, int samples,
                                      int segments);

struct DensifyReport {
  int iteration = 0;
  int deaths = 0;
  int relocations = 0;
  int additions = 0;
  int scale_splits = 0;
  int lobe_splits = 0;
  int pruned = 0;
  std::vector<std::uint32_t> donor_ids;
};

// Replaces dead primitives with children of sampled donors (opacity- or
// inverse-sharpness-weighted in alternation) and adds toward the budget.
void relocate_and_add(SceneModel& scene, const std::vector<std::uint8_t>& dead,
                      const DensifyConfig& cfg, Rng& rng, int step_parity,
                      SceneEditHook* hook, DensifyReport* report);

// Splits high-gradient candidates: scale-preserving two-child split below
// the extent threshold, deterministic lobe decomposition above it.
void hydra_split(SceneModel& scene, const std::vector<std::uint32_t>& candidates,
                 const DensifyConfig& cfg, Rng& rng, SceneEditHook* hook,
                 DensifyReport* report);

// One full step: death -> HYDRA -> relocate/add; prune-only after end_iter.
// Stats are reset and grace clocks restarted afterwards.
DensifyReport densify_step(SceneModel& scene, const DensifyConfig& cfg,
                           int iteration, Rng& rng, int views_per_epoch,
                           SceneEditHook* hook = nullptr);

}  // namespace fsplat
