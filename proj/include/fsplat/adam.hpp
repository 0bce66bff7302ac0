#pragma once

#include <cstdint>
#include <vector>

#include "fsplat/backward.hpp"
#include "fsplat/densify.hpp"

namespace fsplat {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

// Per-group learning rates; position follows an exponential schedule
// handled by the caller.
struct GroupLearningRates {
  double position = 1.6e-4;
  double rotation = 1e-3;
  double opacity = 0.014;
  double sh_dc = 2.5e-3;
  double sh_rest = 1.25e-4;
  double amplitude = 5e-2;
  double phase = 5e-3;
  double circumradius = 5e-3;
  double sharpness = 8e-4;
};

// First/second moment buffers mirroring the gradient layout.
struct AdamState : SceneEditHook {
  std::vector<PrimGrad> m;
  std::vector<PrimGrad> v;
  std::int64_t step = 0;

  void ensure(std::size_t n) {
    m.resize(n);
    v.resize(n);
  }
  void reset_slot(std::size_t idx) override {
    if (idx < m.size()) {
      m[idx] = PrimGrad{};
      v[idx] = PrimGrad{};
    }
  }
  void append_slot() override {
    m.emplace_back();
    v.emplace_back();
  }
  void compact(const std::vector<std::uint32_t>& keep) override {
    std::vector<PrimGrad> nm, nv;
    nm.reserve(keep.size());
    nv.reserve(keep.size());
    for (auto i : keep) {
      nm.push_back(m[i]);
      nv.push_back(v[i]);
    }
    m = std::move(nm);
    v = std::move(nv);
  }
};

// Which coefficient groups may move this iteration.
struct FreezeMask {
  int active_freqs = kFreqCount;  // amplitudes/phases at k >= this stay put
  int sh_bases = kShBases;        // bases at index >= this stay put
};

// One bias-corrected Adam step over every live primitive.
void adam_step(SceneModel& scene, const GradBuffer& grads, AdamState& state,
               const GroupLearningRates& lrs, const AdamConfig& cfg,
               const FreezeMask& freeze);

// Renormalizes every rotation quaternion (applied after each step).
void renormalize_rotations(SceneModel& scene);

// Gaussian exploration noise (std = sgld_lr) on the unfrozen amplitude and
// phase coefficients. Centers and rotations are never touched.
void sgld_shape_noise(SceneModel& scene, double sgld_lr, Rng& rng,
                      int active_freqs);

}  // namespace fsplat
