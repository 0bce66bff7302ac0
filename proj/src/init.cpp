#include "fsplat/init.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "fsplat/sh.hpp"

namespace fsplat {

namespace {

constexpr double kShC0 = 0.28209479177387814;

Primitive base_primitive(const InitConfig& cfg) {
  Primitive p;
  p.opacity_raw = logit(cfg.opacity_init);
  p.shape.sharpness_raw = inverse_softplus(cfg.sigma_init - kSigmaEps);
  p.shape.amplitudes_raw[0] = cfg.dc_amplitude_raw;
  for (int k = 1; k < kFreqCount; ++k)
    p.shape.amplitudes_raw[k] = cfg.hf_amplitude_raw;
  return p;
}

void set_dc_color(Primitive& p, const Vec3& rgb) {
  for (int c = 0; c < 3; ++c) {
    p.sh[c * kShBases] = (rgb[c] - 0.5) / kShC0;
  }
}

}  // namespace

SceneModel init_from_points(const std::vector<Vec3>& points,
                            const std::vector<Vec3>& colors,
                            const InitConfig& cfg) {
  if (points.size() < 2) {
    throw DataError("point initialization needs at least two points");
  }
  if (colors.size() != points.size()) {
    throw DataError("points and colors differ in length");
  }

  SceneModel scene;
  scene.budget_max = points.size();
  scene.k_active = 1;
  scene.sh_degree_active = 0;
  scene.primitives.reserve(points.size());

  for (std::size_t i = 0; i < points.size(); ++i) {
    double nearest = std::numeric_limits<double>::max();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (j == i) continue;
      nearest = std::min(nearest, (points[i] - points[j]).norm());
    }
    Primitive p = base_primitive(cfg);
    p.center = points[i];
    p.shape.circumradius_raw = std::log(std::sqrt(std::max(nearest, 1e-12)));
    set_dc_color(p, colors[i]);
    // Per-point stream keyed on the index so permuted inputs still get the
    // same phases for the same point slot.
    Rng rng = Rng::stream(cfg.seed, RngStream::Init, i);
    for (int k = 0; k < kFreqCount; ++k) {
      p.shape.phases[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    scene.primitives.push_back(p);
  }
  scene.sync_aux();
  return scene;
}

std::vector<Primitive> fibonacci_dome(int count, double radius,
                                      const Vec3& center,
                                      const InitConfig& cfg) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Primitive> out;
  out.reserve(count);
  // Surfel radius sized to roughly tile the sphere.
  const double surfel_radius =
      2.0 * radius / std::sqrt(static_cast<double>(std::max(count, 1)));
  for (int i = 0; i < count; ++i) {
    double z = count == 1 ? 1.0 : 1.0 - 2.0 * (i + 0.5) / count;
    double ring = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = golden * i;
    Vec3 dir(ring * std::cos(phi), ring * std::sin(phi), z);

    Primitive p = base_primitive(cfg);
    p.center = center + radius * dir;
    p.shape.circumradius_raw = std::log(surfel_radius);
    set_dc_color(p, Vec3(1.0, 1.0, 1.0));

    // Orient the normal (t_w) toward the dome center.
    Vec3 normal = -dir;
    Vec3 axis = Vec3(0, 0, 1).cross(normal);
    double s = axis.norm();
    double c = Vec3(0, 0, 1).dot(normal);
    Vec4 q(1, 0, 0, 0);
    if (s > 1e-12) {
      double angle = std::atan2(s, c);
      axis /= s;
      q = Vec4(std::cos(angle / 2), axis[0] * std::sin(angle / 2),
               axis[1] * std::sin(angle / 2), axis[2] * std::sin(angle / 2));
    } else if (c < 0) {
      q = Vec4(0, 1, 0, 0);  // flipped pole
    }
    p.rotation = q;

    Rng rng = Rng::stream(cfg.seed, RngStream::Init, 0x10000u + i);
    for (int k = 0; k < kFreqCount; ++k) {
      p.shape.phases[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    out.push_back(p);
  }
  return out;
}

void add_dome(SceneModel& scene, int count, double radius, const Vec3& center,
              const InitConfig& cfg) {
  auto dome = fibonacci_dome(count, radius, center, cfg);
  for (auto& p : dome) {
    scene.primitives.push_back(p);
    scene.stats.push_back(AccumStats{});
    scene.dome_flags.push_back(1);
  }
  scene.budget_max = std::max(scene.budget_max, scene.primitives.size());
}

}  // namespace fsplat
