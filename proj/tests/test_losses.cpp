#include <doctest.h>

#include <cmath>

#include "fsplat/losses.hpp"
#include "test_util.hpp"

using namespace fsplat;
using namespace fsplat::testutil;

namespace {

Image random_image(int w, int h, std::uint64_t seed) {
  Image img(w, h, 3);
  Rng rng(seed);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

Image constant_image(int w, int h, double value) {
  Image img(w, h, 3);
  for (auto& v : img.data) v = value;
  return img;
}

// Hand-built single-pixel output for the per-record loss formulas.
RenderOutput one_pixel_output(const std::vector<std::pair<double, double>>&
                                  alpha_depth) {
  RenderOutput out;
  out.width = out.height = 1;
  out.color = Image(1, 1, 3);
  out.depth = Image(1, 1, 1);
  out.normal = Image(1, 1, 3);
  out.alpha_acc = Image(1, 1, 1);
  out.blend.resize(1);
  double t = 1.0;
  for (std::size_t i = 0; i < alpha_depth.size(); ++i) {
    BlendRecord rec;
    rec.prim = static_cast<std::uint32_t>(i);
    rec.alpha = alpha_depth[i].first;
    rec.transmittance = t;
    rec.depth = alpha_depth[i].second;
    out.blend[0].push_back(rec);
    t *= 1.0 - rec.alpha;
  }
  out.alpha_acc.data[0] = 1.0 - t;
  return out;
}

}  // namespace

TEST_CASE("ssim basics") {
  Image a = random_image(24, 24, 5);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Image b = random_image(24, 24, 6);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) <= 1e-9);
  CHECK(ssim(a, b) < 1.0);

  Image c = constant_image(8, 8, 0.3);
  CHECK_THROWS_AS(ssim(a, c), DataError);
}

TEST_CASE("ssim gradient matches finite differences") {
  Image pred = random_image(16, 16, 7);
  Image target = random_image(16, 16, 8);
  std::vector<double> grad;
  ssim(pred, target, &grad);
  Rng rng(9);
  for (int probe = 0; probe < 40; ++probe) {
    std::size_t i = rng.uniform_index(pred.size());
    const double h = 1e-5;
    Image plus = pred, minus = pred;
    plus.data[i] += h;
    minus.data[i] -= h;
    double fd = (ssim(plus, target) - ssim(minus, target)) / (2 * h);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("photometric loss") {
  Image a = random_image(16, 16, 11);
  PhotometricResult same = photometric_loss(a, a, 0.2);
  CHECK(same.value == doctest::Approx(0.0).epsilon(1e-12));
  for (double g : same.d_pred) CHECK(std::abs(g) <= 1e-15);

  Image zeros = constant_image(16, 16, 0.0);
  Image ones = constant_image(16, 16, 1.0);
  PhotometricResult pure_l1 = photometric_loss(zeros, ones, 0.0);
  CHECK(pure_l1.value == doctest::Approx(1.0));

  // Finite differences through both terms.
  Image target = random_image(16, 16, 12);
  PhotometricResult res = photometric_loss(a, target, 0.25);
  Rng rng(13);
  for (int probe = 0; probe < 30; ++probe) {
    std::size_t i = rng.uniform_index(a.size());
    const double h = 1e-5;
    Image plus = a, minus = a;
    plus.data[i] += h;
    minus.data[i] -= h;
    double fd = (photometric_loss(plus, target, 0.25).value -
                 photometric_loss(minus, target, 0.25).value) /
                (2 * h);
    CHECK(res.d_pred[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("depth distortion loss") {
  // Single record: no pairs.
  auto single = one_pixel_output({{0.5, 2.0}});
  CHECK(depth_distortion_loss(single).value == 0.0);

  // Two records with omega 0.5 and 0.5 * 0.5... use alphas that give
  // omega = (0.5, 0.5 * T) with T = 0.5: set up (0.5, 1.0) instead to hit
  // the worked example omega = (0.5, 0.5): alpha2 = 1 would break
  // compositing, so build the records directly.
  RenderOutput two = one_pixel_output({{0.5, 1.0}, {0.5, 3.0}});
  // omegas: 0.5 and 0.25; L = 2 * 0.5 * 0.25 * 2 = 0.5.
  DistortionResult r = depth_distortion_loss(two);
  CHECK(r.value == doctest::Approx(0.5));

  // The worked pair with omega = (0.5, 0.5): force transmittance to 1.
  two.blend[0][1].transmittance = 1.0;
  r = depth_distortion_loss(two);
  CHECK(r.value == doctest::Approx(1.0));

  // Co-located depths.
  auto coloc = one_pixel_output({{0.4, 2.0}, {0.4, 2.0}, {0.3, 2.0}});
  CHECK(depth_distortion_loss(coloc).value == doctest::Approx(0.0));

  // Gradients against finite differences on the record fields.
  auto out = one_pixel_output({{0.5, 1.2}, {0.4, 2.7}, {0.3, 1.9}});
  DistortionResult base = depth_distortion_loss(out);
  const double h = 1e-6;
  for (std::size_t i = 0; i < out.blend[0].size(); ++i) {
    RenderOutput plus = out, minus = out;
    plus.blend[0][i].depth += h;
    minus.blend[0][i].depth -= h;
    double fd = (depth_distortion_loss(plus).value -
                 depth_distortion_loss(minus).value) /
                (2 * h);
    CHECK(base.d_z[0][i] == doctest::Approx(fd).epsilon(1e-6));
    // omega enters through alpha * T; perturb alpha on the front record
    // only (its own T is 1) to probe d_omega directly.
    if (i == 0) {
      RenderOutput pa = out, ma = out;
      pa.blend[0][0].alpha += h;
      ma.blend[0][0].alpha -= h;
      // Keep later transmittances fixed: d_omega is the partial w.r.t.
      // this record's weight alone.
      double fd_a = (depth_distortion_loss(pa).value -
                     depth_distortion_loss(ma).value) /
                    (2 * h);
      CHECK(base.d_omega[0][0] == doctest::Approx(fd_a).epsilon(1e-6));
    }
  }
}

TEST_CASE("normal consistency on a camera-facing wall") {
  Camera cam = front_camera(48, 0.0);
  cam.cx = cam.cy = 24.5;
  Primitive wall = facing_primitive(Vec3(0, 0, 3), 2.5, 0.95, 0.5);
  set_color(wall, Vec3(0.7, 0.7, 0.7));
  SceneModel scene;
  scene.primitives.push_back(wall);
  scene.budget_max = 1;
  scene.sh_degree_active = 0;
  scene.sync_aux();
  RenderConfig cfg;
  RenderOutput out = render(scene, cam, cfg, 1);
  NormalConsistencyResult res = normal_consistency_loss(out, cam);
  CHECK(res.value <= 1e-3);
}

TEST_CASE("normal consistency formula on fabricated buffers") {
  // Constant-depth wall whose rendered normal is orthogonal to the
  // depth-map normal: every valid pixel contributes its full weight.
  Camera cam = front_camera(16, 0.0);
  RenderOutput out;
  out.width = out.height = 16;
  out.color = Image(16, 16, 3);
  out.depth = Image(16, 16, 1);
  out.normal = Image(16, 16, 3);
  out.alpha_acc = Image(16, 16, 1);
  out.blend.resize(16 * 16);
  const double omega = 0.8;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      out.depth.at(x, y, 0) = omega * 3.0;
      out.alpha_acc.at(x, y, 0) = omega;
      out.normal.at(x, y, 0) = omega;  // +x, orthogonal to the -z wall normal
    }
  }
  NormalConsistencyResult res = normal_consistency_loss(out, cam);
  // Interior pixels each contribute omega / (H * W).
  double expected = omega * 14.0 * 14.0 / (16.0 * 16.0);
  CHECK(res.value == doctest::Approx(expected).epsilon(1e-9));

  // Zero-weight pixels contribute nothing.
  for (auto& v : out.alpha_acc.data) v = 0.0;
  for (auto& v : out.depth.data) v = 0.0;
  for (auto& v : out.normal.data) v = 0.0;
  CHECK(normal_consistency_loss(out, cam).value == 0.0);
}

TEST_CASE("normal consistency gradients match finite differences") {
  Camera cam = front_camera(24, 0.0);
  cam.cx = cam.cy = 12.5;
  Rng rng(31);
  SceneModel scene;
  scene.budget_max = 4;
  scene.sh_degree_active = 0;
  for (int i = 0; i < 4; ++i) {
    Primitive p = facing_primitive(
        Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
             rng.uniform(2.5, 3.5)),
        rng.uniform(0.8, 1.4), rng.uniform(0.8, 0.95), rng.uniform(0.4, 1.0));
    Vec4 q(1.0, 0.2 * rng.normal(), 0.2 * rng.normal(), 0.2 * rng.normal());
    p.rotation = q / q.norm();
    scene.primitives.push_back(p);
  }
  scene.sync_aux();
  RenderConfig cfg;
  RenderOutput out = render(scene, cam, cfg, 1);
  NormalConsistencyResult res = normal_consistency_loss(out, cam);

  const double h = 1e-6;
  Rng pick(32);
  for (int probe = 0; probe < 20; ++probe) {
    std::size_t i = pick.uniform_index(out.depth.size());
    if (out.alpha_acc.data[i] < 0.15) continue;  // stay clear of the gate
    RenderOutput plus = out, minus = out;
    plus.depth.data[i] += h;
    minus.depth.data[i] -= h;
    double fd = (normal_consistency_loss(plus, cam).value -
                 normal_consistency_loss(minus, cam).value) /
                (2 * h);
    CHECK(res.d_depth[i] == doctest::Approx(fd).epsilon(1e-4));
  }
  for (int probe = 0; probe < 20; ++probe) {
    std::size_t i = pick.uniform_index(out.normal.size());
    RenderOutput plus = out, minus = out;
    plus.normal.data[i] += h;
    minus.normal.data[i] -= h;
    double fd = (normal_consistency_loss(plus, cam).value -
                 normal_consistency_loss(minus, cam).value) /
                (2 * h);
    CHECK(res.d_normal[i] == doctest::Approx(fd).epsilon(1e-4));
  }
  for (int probe = 0; probe < 20; ++probe) {
    std::size_t i = pick.uniform_index(out.alpha_acc.size());
    if (out.alpha_acc.data[i] < 0.15) continue;
    RenderOutput plus = out, minus = out;
    plus.alpha_acc.data[i] += h;
    minus.alpha_acc.data[i] -= h;
    double fd = (normal_consistency_loss(plus, cam).value -
                 normal_consistency_loss(minus, cam).value) /
                (2 * h);
    CHECK(res.d_alpha[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("total loss composition") {
  Camera cam = front_camera(32, 0.0);
  Rng rng(41);
  SceneModel scene;
  scene.budget_max = 6;
  scene.sh_degree_active = 0;
  for (int i = 0; i < 6; ++i) {
    Primitive p = facing_primitive(
        Vec3(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
             rng.uniform(2, 4)),
        rng.uniform(0.3, 0.8), rng.uniform(0.5, 0.9), rng.uniform(0.5, 1.5));
    set_color(p, Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
    scene.primitives.push_back(p);
  }
  scene.sync_aux();
  RenderConfig rcfg;
  RenderOutput out = render(scene, cam, rcfg, 1);
  Image target = random_image(32, 32, 42);

  LossConfig photo_only;
  photo_only.lambda_dist = 0.0;
  photo_only.lambda_normal = 0.0;
  photo_only.regularizer_warmup_iters = 0;
  TotalLoss base = total_loss(out, target, cam, photo_only, 100);
  CHECK(base.value == doctest::Approx(base.photometric));

  LossConfig with_dist = photo_only;
  with_dist.lambda_dist = 0.5;
  TotalLoss d1 = total_loss(out, target, cam, with_dist, 100);
  with_dist.lambda_dist = 1.0;
  TotalLoss d2 = total_loss(out, target, cam, with_dist, 100);
  CHECK(d2.value - base.value ==
        doctest::Approx(2.0 * (d1.value - base.value)).epsilon(1e-9));

  // Before the warm-up the regularizers are off.
  with_dist.regularizer_warmup_iters = 1000;
  with_dist.lambda_normal = 0.05;
  TotalLoss cold = total_loss(out, target, cam, with_dist, 10);
  CHECK(cold.value == doctest::Approx(base.value));
  CHECK(cold.grads.d_depth.empty());

  TotalLoss warm = total_loss(out, target, cam, with_dist, 2000);
  CHECK(std::isfinite(warm.value));
  CHECK_FALSE(warm.grads.d_depth.empty());
}

TEST_CASE("psnr") {
  Image a = random_image(8, 8, 51);
  CHECK(psnr(a, a) == 100.0);

  Image zeros = constant_image(8, 8, 0.0);
  Image ones = constant_image(8, 8, 1.0);
  CHECK(psnr(zeros, ones) == doctest::Approx(0.0));

  Image tenth = constant_image(8, 8, 0.1);
  CHECK(psnr(zeros, tenth) == doctest::Approx(20.0));

  CHECK_THROWS_AS(psnr(a, constant_image(4, 4, 0.0)), DataError);
}
