#include "fsplat/adam.hpp"

#include <cmath>

namespace fsplat {

namespace {

inline void update(double& param, double grad, double& m, double& v, double lr,
                   const AdamConfig& cfg, double bc1, double bc2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
  param -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
}

}  // namespace

void adam_step(SceneModel& scene, const GradBuffer& grads, AdamState& state,
               const GroupLearningRates& lrs, const AdamConfig& cfg,
               const FreezeMask& freeze) {
  state.ensure(scene.primitives.size());
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    Primitive& p = scene.primitives[i];
    const PrimGrad& g = grads.prims[i];
    PrimGrad& m = state.m[i];
    PrimGrad& v = state.v[i];

    for (int c = 0; c < 3; ++c)
      update(p.center[c], g.center[c], m.center[c], v.center[c], lrs.position,
             cfg, bc1, bc2);
    for (int c = 0; c < 4; ++c)
      update(p.rotation[c], g.rotation[c], m.rotation[c], v.rotation[c],
             lrs.rotation, cfg, bc1, bc2);
    update(p.opacity_raw, g.opacity_raw, m.opacity_raw, v.opacity_raw,
           lrs.opacity, cfg, bc1, bc2);
    for (int ch = 0; ch < 3; ++ch) {
      update(p.sh[ch * kShBases], g.sh[ch * kShBases], m.sh[ch * kShBases],
             v.sh[ch * kShBases], lrs.sh_dc, cfg, bc1, bc2);
      for (int b = 1; b < freeze.sh_bases; ++b) {
        int idx = ch * kShBases + b;
        update(p.sh[idx], g.sh[idx], m.sh[idx], v.sh[idx], lrs.sh_rest, cfg,
               bc1, bc2);
      }
    }
    update(p.shape.circumradius_raw, g.circumradius_raw, m.circumradius_raw,
           v.circumradius_raw, lrs.circumradius, cfg, bc1, bc2);
    for (int k = 0; k < freeze.active_freqs; ++k) {
      update(p.shape.amplitudes_raw[k], g.amplitudes_raw[k],
             m.amplitudes_raw[k], v.amplitudes_raw[k], lrs.amplitude, cfg, bc1,
             bc2);
      update(p.shape.phases[k], g.phases[k], m.phases[k], v.phases[k],
             lrs.phase, cfg, bc1, bc2);
    }
    update(p.shape.sharpness_raw, g.sharpness_raw, m.sharpness_raw,
           v.sharpness_raw, lrs.sharpness, cfg, bc1, bc2);
  }
}

void renormalize_rotations(SceneModel& scene) {
  for (Primitive& p : scene.primitives) {
    double n = p.rotation.norm();
    if (n > 0.0) p.rotation /= n;
  }
}

void sgld_shape_noise(SceneModel& scene, double sgld_lr, Rng& rng,
                      int active_freqs) {
  for (Primitive& p : scene.primitives) {
    for (int k = 0; k < kFreqCount; ++k) {
      double na = rng.normal();
      double np = rng.normal();
      if (sgld_lr == 0.0 || k >= active_freqs) continue;
      p.shape.amplitudes_raw[k] += sgld_lr * na;
      p.shape.phases[k] += sgld_lr * np;
    }
  }
}

}  // namespace fsplat
