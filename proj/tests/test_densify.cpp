#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fsplat/densify.hpp"
#include "fsplat/losses.hpp"
#include "fsplat/rasterize.hpp"
#include "test_util.hpp"

using namespace fsplat;
using namespace fsplat::testutil;

namespace {

Camera centered_camera(int size) {
  Camera cam = front_camera(size, 0.0);
  cam.cx = size / 2.0 + 0.5;
  cam.cy = size / 2.0 + 0.5;
  return cam;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += std::abs(a.data[i] - b.data[i]);
  return acc / a.size();
}

}  // namespace

TEST_CASE("opacity split formula and its inverse") {
  CHECK(new_opacity(0.37, 1) == doctest::Approx(0.37));
  CHECK(new_opacity(0.5, 2) == doctest::Approx(1.0 - std::sqrt(0.5)));
  for (double o = 0.1; o <= 0.91; o += 0.1) {
    for (int n = 1; n <= 8; ++n) {
      double composed = 1.0 - std::pow(1.0 - new_opacity(o, n), n);
      CHECK(std::abs(composed - o) <= 1e-12);
    }
  }
}

TEST_CASE("relocation denominator") {
  // Single child: D = o / ((sigma+1)(sigma+2)).
  for (double sigma : {0.5, 1.0, 2.0}) {
    for (double o : {0.2, 0.6}) {
      CHECK(relocation_denominator(o, 1, sigma) ==
            doctest::Approx(o / ((sigma + 1) * (sigma + 2))));
    }
  }
  // Worked two-child case: o = 0.5, sigma = 1.
  double o_new = new_opacity(0.5, 2);
  double d = relocation_denominator(o_new, 2, 1.0);
  CHECK(d == doctest::Approx(o_new / 3.0 - o_new * o_new / 12.0));
  CHECK(d == doctest::Approx(0.09048).epsilon(1e-3));

  CHECK_THROWS_AS(relocation_denominator(0.5, 64, 1.0), ConfigError);
}

TEST_CASE("denominator matches the composited-mass quadrature") {
  for (double o : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
      for (int n : {2, 3, 4}) {
        double o_new = new_opacity(o, n);
        double d = relocation_denominator(o_new, n, sigma);
        double mass = composite_mass_oracle(o_new, 1.0, sigma, n);
        CHECK(std::abs(mass - 2.0 * std::numbers::pi * d) /
                  (2.0 * std::numbers::pi * d) <=
              1e-4);
      }
    }
  }
}

TEST_CASE("window mass oracle closed forms") {
  CHECK(window_mass_oracle(1.0, 1.0, 1.0) ==
        doctest::Approx(std::numbers::pi / 3.0).epsilon(1e-6));
  CHECK(window_mass_oracle(0.5, 1.0, 1.0) ==
        doctest::Approx(0.5 * std::numbers::pi / 3.0).epsilon(1e-6));
  for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
    for (double radius : {0.5, 2.0}) {
      double expected = 0.7 * 2.0 * std::numbers::pi * radius * radius /
                        ((sigma + 1) * (sigma + 2));
      CHECK(std::abs(window_mass_oracle(0.7, radius, sigma) - expected) /
                expected <=
            1e-6);
    }
  }
}

TEST_CASE("corrected circumradius preserves windowed mass") {
  CHECK(new_circumradius(2.0, 0.5, 1.0,
                         relocation_denominator(0.5, 1, 1.0)) ==
        doctest::Approx(2.0));
  double o_new = new_opacity(0.5, 2);
  double d = relocation_denominator(o_new, 2, 1.0);
  CHECK(new_circumradius(1.0, 0.5, 1.0, d) ==
        doctest::Approx(0.9597).epsilon(1e-3));
  CHECK(new_circumradius(1.3, 0.5, 1.0, -0.1) == 1.3);  // degenerate

  for (double o = 0.1; o <= 0.91; o += 0.1) {
    for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
      for (int n : {2, 3, 4}) {
        double parent = window_mass_oracle(o, 1.7, sigma);
        double on = new_opacity(o, n);
        double rn = new_circumradius(
            1.7, o, sigma, relocation_denominator(on, n, sigma));
        double children = composite_mass_oracle(on, rn, sigma, n);
        CHECK(std::abs(children - parent) / parent <= 1e-3);
      }
    }
  }
}

TEST_CASE("death criteria") {
  SceneModel scene;
  scene.budget_max = 8;
  DensifyConfig cfg;
  const int epoch = 10;

  // Opacity below the threshold dies at any age.
  Primitive faint = facing_primitive(Vec3(0, 0, 3), 0.3, 0.5, 1.0);
  faint.opacity_raw = logit(0.001);
  scene.primitives.push_back(faint);
  // Fresh primitive with no contribution: protected by grace.
  scene.primitives.push_back(facing_primitive(Vec3(0, 0, 3), 0.3, 0.5, 1.0));
  // Aged, healthy blend weight, but seen in one view only.
  scene.primitives.push_back(facing_primitive(Vec3(0, 0, 3), 0.3, 0.5, 1.0));
  // Aged and healthy.
  scene.primitives.push_back(facing_primitive(Vec3(0, 0, 3), 0.3, 0.5, 1.0));
  scene.sync_aux();
  scene.stats[0].age_iters = 100;
  scene.stats[1].age_iters = 0;
  scene.stats[2].age_iters = 100;
  scene.stats[2].max_blend_weight = 0.5;
  scene.stats[2].view_count = 1;
  scene.stats[3].age_iters = 100;
  scene.stats[3].max_blend_weight = 0.5;
  scene.stats[3].view_count = 5;

  auto dead = death_mask(scene, cfg, epoch);
  CHECK(dead[0] == 1);
  CHECK(dead[1] == 0);
  CHECK(dead[2] == 1);
  CHECK(dead[3] == 0);

  // Indoor extent rule.
  DensifyConfig indoor = cfg;
  indoor.indoor = true;
  scene.stats[3].max_screen_extent = 2000.0;
  auto dead_in = death_mask(scene, indoor, epoch);
  CHECK(dead_in[3] == 1);
  auto dead_out = death_mask(scene, cfg, epoch);
  CHECK(dead_out[3] == 0);
}

TEST_CASE("relocation rewrites dead slots from live donors") {
  SceneModel scene;
  scene.budget_max = 2;
  Primitive donor = facing_primitive(Vec3(1, 2, 5), 1.0, 0.5, 1.0);
  Primitive dead_prim = facing_primitive(Vec3(-3, 0, 5), 0.4, 0.001, 1.0);
  scene.primitives = {donor, dead_prim};
  scene.sync_aux();

  std::vector<std::uint8_t> dead = {0, 1};
  DensifyConfig cfg;
  cfg.clone_noise_eta = 0.0;
  Rng rng(5);
  DensifyReport report;
  relocate_and_add(scene, dead, cfg, rng, 0, nullptr, &report);

  CHECK(report.relocations == 1);
  REQUIRE(report.donor_ids.size() == 1);
  CHECK(report.donor_ids[0] == 0);  // the dead one cannot donate
  for (int i = 0; i < 2; ++i) {
    CHECK(scene.primitives[i].opacity() ==
          doctest::Approx(1.0 - std::sqrt(0.5)));
    CHECK(scene.primitives[i].shape.circumradius() ==
          doctest::Approx(0.95969).epsilon(1e-4));
    CHECK(scene.primitives[i].center.isApprox(Vec3(1, 2, 5), 1e-12));
  }
}

TEST_CASE("co-located relocation approximately preserves the rendered image") {
  Camera cam = centered_camera(64);
  Primitive donor = facing_primitive(Vec3(0, 0, 3), 0.9, 0.5, 1.0);
  set_color(donor, Vec3(1.0, 1.0, 1.0));
  Primitive doomed = facing_primitive(Vec3(5, 5, 40), 0.1, 0.001, 1.0);
  SceneModel scene;
  scene.primitives = {donor, doomed};
  scene.budget_max = 2;
  scene.sh_degree_active = 0;
  scene.sync_aux();

  RenderConfig rcfg;
  Image before = render(scene, cam, rcfg, 1).color;

  DensifyConfig cfg;
  cfg.clone_noise_eta = 0.0;
  std::vector<std::uint8_t> dead = {0, 1};
  dead[0] = 0;
  Rng rng(7);
  relocate_and_add(scene, dead, cfg, rng, 0, nullptr, nullptr);
  Image after = render(scene, cam, rcfg, 1).color;
  CHECK(mean_abs_diff(before, after) <= 2e-2);
}

TEST_CASE("budget additions stay within the cap") {
  SceneModel scene;
  scene.budget_max = 20;
  for (int i = 0; i < 10; ++i) {
    scene.primitives.push_back(
        facing_primitive(Vec3(i, 0, 5), 0.4, 0.6, 1.0));
  }
  scene.sync_aux();
  std::vector<std::uint8_t> dead(10, 0);
  DensifyConfig cfg;
  cfg.birth_rate = 0.30;
  Rng rng(9);
  DensifyReport report;
  relocate_and_add(scene, dead, cfg, rng, 1, nullptr, &report);
  // floor(0.3 * (20 - 10)) = 3 additions.
  CHECK(report.additions == 3);
  CHECK(scene.live_count() == 13);
  CHECK(scene.live_count() <= scene.budget_max);
}

TEST_CASE("valley detection on a three-fold shape") {
  FourierShape s;
  s.circumradius_raw = 0.0;
  s.amplitudes_raw = {std::sqrt(0.6), 0, 0, std::sqrt(0.4), 0, 0};
  const int m = 256;
  auto segs = detect_lobes(s, m, 3);
  REQUIRE(segs.size() == 3);

  // Valleys at pi/3, pi, 5pi/3 (boundaries of the returned segments).
  std::vector<double> expected = {std::numbers::pi / 3.0, std::numbers::pi,
                                  5.0 * std::numbers::pi / 3.0};
  const double tol = 2.0 * std::numbers::pi / m + 1e-9;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(segs[i].theta_min - expected[i]) <= tol);
  }
  // Segments partition the circle.
  double total = 0.0;
  for (const auto& seg : segs) {
    CHECK(seg.theta_max > seg.theta_min);
    total += seg.theta_max - seg.theta_min;
  }
  CHECK(total == doctest::Approx(2.0 * std::numbers::pi));
  // Centroid angles are finite and inside the circle.
  for (const auto& seg : segs) {
    CHECK(std::abs(seg.centroid_theta) <= 2.0 * std::numbers::pi);
    CHECK(seg.centroid_r >= 0.0);
    CHECK(seg.centroid_r <= 1.0);
  }

  // A disc has no valleys.
  FourierShape disc;
  disc.amplitudes_raw = {1, 0, 0, 0, 0, 0};
  CHECK(detect_lobes(disc, m, 3).empty());
}

TEST_CASE("dense sampling refines the valley positions") {
  FourierShape s;
  s.circumradius_raw = 0.0;
  s.amplitudes_raw = {std::sqrt(0.6), 0, 0, std::sqrt(0.4), 0, 0};
  auto coarse = detect_lobes(s, 256, 3);
  auto fine = detect_lobes(s, 4096, 3);
  REQUIRE(coarse.size() == 3);
  REQUIRE(fine.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(coarse[i].theta_min - fine[i].theta_min) <=
          2.0 * std::numbers::pi / 256 + 1e-9);
  }
}

TEST_CASE("hydra splitting") {
  DensifyConfig cfg;
  cfg.lobe_split_extent_px = 100;
  Rng rng(13);

  SUBCASE("lobed parent above the extent threshold decomposes") {
    Primitive parent = facing_primitive(Vec3(0, 0, 3), 1.0, 0.8, 0.7);
    parent.shape.amplitudes_raw = {std::sqrt(0.6), 0, 0, std::sqrt(0.4), 0, 0};
    set_color(parent, Vec3(0.9, 0.5, 0.2));
    SceneModel scene;
    scene.primitives.push_back(parent);
    scene.budget_max = 8;
    scene.sh_degree_active = 0;
    scene.sync_aux();
    scene.stats[0].max_screen_extent = 300.0;

    DensifyReport report;
    hydra_split(scene, {0}, cfg, rng, nullptr, &report);
    CHECK(report.lobe_splits == 1);
    CHECK(scene.live_count() == 3);  // net +2

    for (const Primitive& child : scene.primitives) {
      auto rbar = child.shape.normalized_amplitudes();
      double sum = 0.0;
      for (double v : rbar) sum += v;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      // Children overlap, so they carry the three-way relocation opacity.
      CHECK(child.opacity() == doctest::Approx(new_opacity(parent.opacity(), 3)));
      CHECK(child.shape.sharpness() ==
            doctest::Approx(parent.shape.sharpness()));
    }
  }

  SUBCASE("circle above the threshold falls back to a scale split") {
    Primitive parent = facing_primitive(Vec3(0, 0, 3), 1.0, 0.8, 0.7);
    SceneModel scene;
    scene.primitives.push_back(parent);
    scene.budget_max = 8;
    scene.sh_degree_active = 0;
    scene.sync_aux();
    scene.stats[0].max_screen_extent = 300.0;

    DensifyReport report;
    hydra_split(scene, {0}, cfg, rng, nullptr, &report);
    CHECK(report.lobe_splits == 0);
    CHECK(report.scale_splits == 1);
    CHECK(scene.live_count() == 2);  // net +1
  }

  SUBCASE("small candidate gets the scale-preserving split") {
    Primitive parent = facing_primitive(Vec3(0, 0, 3), 0.4, 0.6, 1.0);
    SceneModel scene;
    scene.primitives.push_back(parent);
    scene.budget_max = 8;
    scene.sh_degree_active = 0;
    scene.sync_aux();
    scene.stats[0].max_screen_extent = 30.0;

    DensifyReport report;
    hydra_split(scene, {0}, cfg, rng, nullptr, &report);
    CHECK(report.scale_splits == 1);
    CHECK(scene.live_count() == 2);
    double o_new = new_opacity(0.6, 2);
    CHECK(scene.primitives[0].opacity() == doctest::Approx(o_new));
    CHECK(scene.primitives[1].opacity() == doctest::Approx(o_new));
  }
}

TEST_CASE("lobe decomposition approximates the parent render") {
  Camera cam = centered_camera(128);
  Rng rng(17);
  DensifyConfig cfg;
  cfg.lobe_split_extent_px = 50;
  RenderConfig rcfg;

  double worst = 100.0;
  for (int trial = 0; trial < 8; ++trial) {
    double opacity = rng.uniform(0.4, 0.9);
    double sigma = rng.uniform(0.9, 1.8);
    Primitive parent = facing_primitive(Vec3(0, 0, 3), 1.1, opacity, sigma);
    double lobe_mass = rng.uniform(0.28, 0.42);
    parent.shape.amplitudes_raw = {std::sqrt(1.0 - lobe_mass), 0, 0,
                                   std::sqrt(lobe_mass), 0, 0};
    parent.shape.phases[3] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    set_color(parent, Vec3(rng.uniform(0.4, 0.95), rng.uniform(0.4, 0.95),
                           rng.uniform(0.4, 0.95)));
    SceneModel scene;
    scene.primitives.push_back(parent);
    scene.budget_max = 8;
    scene.sh_degree_active = 0;
    scene.sync_aux();
    scene.stats[0].max_screen_extent = 300.0;

    Image before = render(scene, cam, rcfg, kFreqCount).color;
    DensifyReport report;
    hydra_split(scene, {0}, cfg, rng, nullptr, &report);
    REQUIRE(report.lobe_splits == 1);
    Image after = render(scene, cam, rcfg, kFreqCount).color;
    worst = std::min(worst, psnr(after, before));
  }
  CHECK(worst >= 25.0);
}

TEST_CASE("densify step cadence and budget") {
  SceneModel scene;
  scene.budget_max = 12;
  for (int i = 0; i < 8; ++i) {
    scene.primitives.push_back(
        facing_primitive(Vec3(i * 0.3, 0, 4), 0.3, 0.6, 1.0));
  }
  scene.sync_aux();
  for (auto& st : scene.stats) {
    st.age_iters = 200;
    st.max_blend_weight = 0.5;
    st.view_count = 8;
  }
  DensifyConfig cfg;
  cfg.interval = 500;
  cfg.start_iter = 500;
  cfg.end_iter = 2000;

  Rng rng(21);
  // Off cadence: nothing happens.
  SceneModel copy = scene;
  DensifyReport rep = densify_step(copy, cfg, 123, rng, 8, nullptr);
  CHECK(copy.live_count() == scene.live_count());
  CHECK(rep.deaths == 0);

  // On cadence: additions toward the budget, never exceeding it.
  rep = densify_step(copy, cfg, 500, rng, 8, nullptr);
  CHECK(copy.live_count() <= copy.budget_max);
  CHECK(copy.live_count() >= scene.live_count());

  // Past the range: prune only, count never grows.
  SceneModel late = scene;
  late.primitives[2].opacity_raw = logit(0.0001);
  std::size_t before_count = late.live_count();
  rep = densify_step(late, cfg, 2500, rng, 8, nullptr);
  CHECK(late.live_count() == before_count - 1);
  CHECK(rep.pruned == 1);
}
