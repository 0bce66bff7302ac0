#include <doctest.h>

#include <limits>

#include "fsplat/lod.hpp"
#include "fsplat/losses.hpp"
#include "fsplat/synth.hpp"
#include "test_util.hpp"

using namespace fsplat;

TEST_CASE("truncated payload accounting") {
  CHECK(truncated_scalar_count(kFreqCount) == 70);
  CHECK(truncated_scalar_count(1) == 60);
  for (int k = 1; k < kFreqCount; ++k) {
    CHECK(truncated_scalar_count(k + 1) == truncated_scalar_count(k) + 2);
  }
}

TEST_CASE("sweep rows match direct evaluation at full k") {
  SynthSpec spec;
  spec.primitive_count = 10;
  spec.train_views = 2;
  spec.test_views = 0;
  spec.width = spec.height = 48;
  spec.seed = 77;
  SynthResult synth = synth_scene(spec);

  RenderConfig cfg;
  cfg.background = spec.background;
  LodReport report = lod_sweep(synth.ground_truth, synth.dataset, cfg, {});
  REQUIRE(report.rows.size() == kFreqCount);

  // k strictly increasing, payload strictly increasing.
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    CHECK(report.rows[i].k_active > report.rows[i - 1].k_active);
    CHECK(report.rows[i].payload_bytes > report.rows[i - 1].payload_bytes);
  }

  // The k = K row reproduces the full model metrics exactly: these targets
  // came from the same renderer, so PSNR caps out.
  const LodRow& full = report.rows.back();
  CHECK(full.k_active == kFreqCount);
  CHECK(full.psnr_db == 100.0);
  CHECK(full.ssim == doctest::Approx(1.0));

  // Lower k rows degrade against the full-detail targets.
  CHECK(report.rows.front().psnr_db < full.psnr_db);
}

TEST_CASE("truncated rendering never reads coefficients above k_active") {
  SynthSpec spec;
  spec.primitive_count = 6;
  spec.train_views = 1;
  spec.test_views = 0;
  spec.width = spec.height = 32;
  spec.seed = 78;
  SynthResult synth = synth_scene(spec);
  const Camera& cam = synth.dataset.views[0].camera;
  RenderConfig cfg;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (int k = 1; k < kFreqCount; ++k) {
    // Live path: phases above k_active are never evaluated.
    SceneModel poisoned = synth.ground_truth;
    for (auto& p : poisoned.primitives) {
      for (int j = k; j < kFreqCount; ++j) p.shape.phases[j] = nan;
    }
    RenderOutput out = render(poisoned, cam, cfg, k);
    for (double v : out.color.data) CHECK(std::isfinite(v));

    // Truncated path: raw amplitudes above k_prime are dead storage too.
    SceneModel truncated = synth.ground_truth;
    for (auto& p : truncated.primitives) {
      p.shape = truncate_shape(p.shape, k);
      for (int j = k; j < kFreqCount; ++j) {
        p.shape.amplitudes_raw[j] = nan;
        p.shape.phases[j] = nan;
      }
    }
    RenderOutput out2 = render(truncated, cam, cfg, kFreqCount);
    for (double v : out2.color.data) CHECK(std::isfinite(v));
  }
}
