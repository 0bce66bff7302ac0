#include "fsplat/densify.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace fsplat {

namespace {

constexpr int kOracleNodes = 10000;
constexpr int kRelocationCap = 32;

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

std::vector<std::uint8_t> death_mask(const SceneModel& scene,
                                     const DensifyConfig& cfg,
                                     int views_per_epoch) {
  std::vector<std::uint8_t> dead(scene.primitives.size(), 0);
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    const AccumStats& st = scene.stats[i];
    if (p.opacity() < cfg.tau_opacity) {
      dead[i] = 1;
      continue;
    }
    const bool in_grace = st.age_iters < views_per_epoch;
    if (in_grace) continue;
    if (st.max_blend_weight < cfg.tau_importance || st.view_count < cfg.min_views) {
      dead[i] = 1;
      continue;
    }
    if (cfg.indoor && st.max_screen_extent > cfg.max_extent_px) dead[i] = 1;
  }
  return dead;
}

double new_opacity(double o, int n) {
  return 1.0 - std::pow(1.0 - o, 1.0 / static_cast<double>(n));
}

double relocation_denominator(double o_new, int n, double sigma) {
  if (n > kRelocationCap) {
    throw ConfigError("relocation child count above the supported cap of 32");
  }
  double d = 0.0;
  for (int i = 1; i <= n; ++i) {
    for (int k = 0; k < i; ++k) {
      double sign = (k % 2 == 0) ? 1.0 : -1.0;
      double sk = sigma * (k + 1);
      d += binomial(i - 1, k) * sign * std::pow(o_new, k + 1) /
           ((sk + 1.0) * (sk + 2.0));
    }
  }
  return d;
}

double new_circumradius(double radius, double o, double sigma, double denom) {
  if (denom <= 0.0) return radius;
  return radius * std::sqrt(o / ((sigma + 1.0) * (sigma + 2.0) * denom));
}

double window_mass_oracle(double o, double radius, double sigma) {
  double acc = 0.0;
  const double h = radius / kOracleNodes;
  auto f = [&](double rho) {
    double base = std::max(0.0, (radius - rho) / radius);
    return o * std::pow(base, sigma) * 2.0 * std::numbers::pi * rho;
  };
  for (int i = 0; i < kOracleNodes; ++i) {
    acc += 0.5 * (f(i * h) + f((i + 1) * h)) * h;
  }
  return acc;
}

double composite_mass_oracle(double o_new, double radius_new, double sigma,
                             int n) {
  double acc = 0.0;
  const double h = radius_new / kOracleNodes;
  auto f = [&](double rho) {
    double base = std::max(0.0, (radius_new - rho) / radius_new);
    double w = std::pow(base, sigma);
    return (1.0 - std::pow(1.0 - o_new * w, n)) * 2.0 * std::numbers::pi * rho;
  };
  for (int i = 0; i < kOracleNodes; ++i) {
    acc += 0.5 * (f(i * h) + f((i + 1) * h)) * h;
  }
  return acc;
}

std::vector<LobeSegment> detect_lobes(const FourierShape& shape, int samples,
                                      int segments) {
  const int m = samples;
  std::vector<double> r(m);
  auto coeffs = shape_coefficients(shape, kFreqCount);
  for (int i = 0; i < m; ++i) {
    double theta = 2.0 * std::numbers::pi * i / m;
    r[i] = std::abs(boundary_polynomial(coeffs, kFreqCount, std::cos(theta),
                                        std::sin(theta)));
  }

  auto wrap = [m](int i) { return ((i % m) + m) % m; };
  struct Valley {
    int index;
    double depth;
  };
  std::vector<Valley> valleys;
  for (int i = 0; i < m; ++i) {
    if (!(r[i] < r[wrap(i - 1)] && r[i] <= r[wrap(i + 1)])) continue;
    // Walk to the adjacent local maxima on both sides.
    int l = i;
    while (r[wrap(l - 1)] >= r[l] && wrap(l - 1) != i) l = wrap(l - 1);
    int rr = i;
    while (r[wrap(rr + 1)] >= r[rr] && wrap(rr + 1) != i) rr = wrap(rr + 1);
    double depth = 0.5 * (r[l] + r[rr]) - r[i];
    if (depth > 1e-9) valleys.push_back({i, depth});
  }
  if (valleys.empty()) return {};
  std::sort(valleys.begin(), valleys.end(), [](const Valley& a, const Valley& b) {
    if (a.depth != b.depth) return a.depth > b.depth;
    return a.index < b.index;
  });
  int keep = std::min<int>(segments, static_cast<int>(valleys.size()));
  std::vector<int> cuts;
  for (int i = 0; i < keep; ++i) cuts.push_back(valleys[i].index);
  std::sort(cuts.begin(), cuts.end());

  const double step = 2.0 * std::numbers::pi / m;
  std::vector<LobeSegment> out;
  for (int s = 0; s < keep; ++s) {
    LobeSegment seg;
    seg.theta_min = cuts[s] * step;
    seg.theta_max = (s + 1 < keep ? cuts[s + 1] : cuts[0] + m) * step;
    // Area centroid of the polar region between the cuts.
    double area = 0.0, cx = 0.0, cy = 0.0;
    int bins = cuts[(s + 1) % keep] - cuts[s];
    if (bins <= 0) bins += m;
    for (int b = 0; b < bins; ++b) {
      int idx = wrap(cuts[s] + b);
      double theta = seg.theta_min + b * step;
      double r2 = r[idx] * r[idx];
      area += 0.5 * r2 * step;
      cx += (r2 * r[idx] / 3.0) * std::cos(theta) * step;
      cy += (r2 * r[idx] / 3.0) * std::sin(theta) * step;
    }
    if (area > 1e-12) {
      cx /= area;
      cy /= area;
    }
    seg.centroid_r = std::hypot(cx, cy);
    seg.centroid_theta = std::atan2(cy, cx);
    out.push_back(seg);
  }
  return out;
}

namespace {

// Two-child relocation parameters shared by clone-and-replace and the
// scale-preserving split.
struct TwoChild {
  double opacity_raw;
  double circumradius_raw;
};

TwoChild two_child_params(const Primitive& donor) {
  double o = donor.opacity();
  double sigma = donor.shape.sharpness();
  double o_new = new_opacity(o, 2);
  double denom = relocation_denominator(o_new, 2, sigma);
  double r_new = new_circumradius(donor.shape.circumradius(), o, sigma, denom);
  return {logit(o_new), std::log(r_new)};
}

void reset_slot(SceneModel& scene, std::size_t idx, const Primitive& value,
                std::uint8_t dome, SceneEditHook* hook) {
  scene.primitives[idx] = value;
  scene.stats[idx] = AccumStats{};
  scene.dome_flags[idx] = dome;
  if (hook) hook->reset_slot(idx);
}

void append_slot(SceneModel& scene, const Primitive& value, std::uint8_t dome,
                 SceneEditHook* hook) {
  scene.primitives.push_back(value);
  scene.stats.push_back(AccumStats{});
  scene.dome_flags.push_back(dome);
  if (hook) hook->append_slot();
}

// Samples a donor index among live primitives, weighted by opacity on even
// steps and inverse sharpness on odd steps.
std::int64_t sample_donor(const SceneModel& scene,
                          const std::vector<std::uint8_t>& excluded,
                          int step_parity, Rng& rng) {
  double total = 0.0;
  std::vector<double> weights(scene.primitives.size(), 0.0);
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    if (excluded[i]) continue;
    const Primitive& p = scene.primitives[i];
    double w = step_parity % 2 == 0 ? p.opacity() : 1.0 / p.shape.sharpness();
    weights[i] = w;
    total += w;
  }
  if (total <= 0.0) return -1;
  double pick = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (weights[i] > 0.0 && pick <= acc) return static_cast<std::int64_t>(i);
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return static_cast<std::int64_t>(i);
  }
  return -1;
}

Vec3 tangent_offset(const Primitive& p, double dx, double dy) {
  Mat3 frame = tangent_frame(p.rotation);
  return dx * frame.col(0) + dy * frame.col(1);
}

}  // namespace

void relocate_and_add(SceneModel& scene, const std::vector<std::uint8_t>& dead,
                      const DensifyConfig& cfg, Rng& rng, int step_parity,
                      SceneEditHook* hook, DensifyReport* report) {
  std::vector<std::uint32_t> dead_ids;
  for (std::size_t i = 0; i < dead.size(); ++i)
    if (dead[i]) dead_ids.push_back(static_cast<std::uint32_t>(i));

  std::size_t live = 0;
  for (std::size_t i = 0; i < dead.size(); ++i)
    if (!dead[i]) ++live;
  if (live == 0 && !dead_ids.empty()) {
    throw NumericalError("no live primitives to relocate onto");
  }

  // Donors may not be dead; the exclusion set grows as donors are used so
  // one slot is not rewritten twice in a step.
  std::vector<std::uint8_t> excluded = dead;

  auto spawn_pair = [&](std::int64_t donor_idx, std::int64_t target_slot) {
    const Primitive donor = scene.primitives[donor_idx];
    const std::uint8_t dome = scene.dome_flags[donor_idx];
    TwoChild tc = two_child_params(donor);
    Primitive child = donor;
    child.opacity_raw = tc.opacity_raw;
    child.shape.circumradius_raw = tc.circumradius_raw;

    Primitive at_donor = child;
    Primitive offset_child = child;
    double eta = cfg.clone_noise_eta * donor.shape.circumradius();
    double ex = rng.normal(), ey = rng.normal();
    offset_child.center += tangent_offset(donor, eta * ex, eta * ey);

    reset_slot(scene, donor_idx, at_donor, dome, hook);
    if (target_slot >= 0) {
      reset_slot(scene, target_slot, offset_child, dome, hook);
    } else {
      append_slot(scene, offset_child, dome, hook);
    }
    if (report) report->donor_ids.push_back(static_cast<std::uint32_t>(donor_idx));
  };

  for (std::uint32_t dead_id : dead_ids) {
    std::int64_t donor = sample_donor(scene, excluded, step_parity, rng);
    if (donor < 0) break;
    excluded[donor] = 1;
    spawn_pair(donor, dead_id);
    if (report) ++report->relocations;
  }

  // Additions toward the budget, capped by the birth rate.
  std::size_t live_now = scene.live_count();
  if (live_now < scene.budget_max) {
    auto cap = static_cast<std::size_t>(
        cfg.birth_rate * static_cast<double>(scene.budget_max - live_now));
    for (std::size_t a = 0; a < cap && scene.live_count() < scene.budget_max;
         ++a) {
      excluded.resize(scene.primitives.size(), 1);
      std::int64_t donor = sample_donor(scene, excluded, step_parity, rng);
      if (donor < 0) break;
      excluded[donor] = 1;
      spawn_pair(donor, -1);
      if (report) ++report->additions;
    }
  }
}

namespace {

// Deterministic replacement for a learned per-segment generator. Each child
// keeps its segment of the parent boundary at full extent; everywhere else
// its boundary follows a scaled-down ghost of the whole parent outline.
// Children specialize to their lobes while their overlap near the parent
// center keeps the composited window close to the parent render (children
// that tile the segments exactly leave a deep hole there, because every
// child window vanishes where the parent window peaks).
constexpr double kGhostScale = 0.65;     // closure outline, times parent
constexpr double kCentroidOffset = 0.5;  // child center, times centroid

Primitive fit_segment_child(const Primitive& parent, const LobeSegment& seg,
                            int samples) {
  using cd = std::complex<double>;
  auto coeffs = shape_coefficients(parent.shape, kFreqCount);
  auto boundary = [&](double theta) {
    return std::abs(boundary_polynomial(coeffs, kFreqCount, std::cos(theta),
                                        std::sin(theta)));
  };
  const double cx = kCentroidOffset * seg.centroid_r * std::cos(seg.centroid_theta);
  const double cy = kCentroidOffset * seg.centroid_r * std::sin(seg.centroid_theta);

  // Region outline: parent center, then the segment arc.
  const double span = seg.theta_max - seg.theta_min;
  const int arc_n = std::max(32, samples / 2);
  std::vector<Vec2> poly;
  poly.emplace_back(0.0, 0.0);
  for (int i = 0; i <= arc_n; ++i) {
    double theta = seg.theta_min + span * i / arc_n;
    double r = boundary(theta);
    poly.emplace_back(r * std::cos(theta), r * std::sin(theta));
  }

  // Farthest outline crossing along a ray from the centroid.
  auto region_distance = [&](const Vec2& dir) {
    double best = -1.0;
    const Vec2 origin(cx, cy);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& a = poly[i];
      const Vec2& b = poly[(i + 1) % poly.size()];
      Vec2 e = b - a;
      double den = dir[0] * (-e[1]) - dir[1] * (-e[0]);
      if (std::abs(den) < 1e-15) continue;
      Vec2 rhs = a - origin;
      double t = (rhs[0] * (-e[1]) - rhs[1] * (-e[0])) / den;
      double s = (dir[0] * rhs[1] - dir[1] * rhs[0]) / den;
      if (t > 0.0 && s >= -1e-12 && s <= 1.0 + 1e-12) best = std::max(best, t);
    }
    return best;
  };
  // Ghost closure: the parent outline shrunk about the parent center,
  // traced from the child center.
  auto ghost_distance = [&](const Vec2& dir) {
    double best = -1.0;
    const Vec2 origin(cx, cy);
    const int n = 96;
    for (int i = 0; i < n; ++i) {
      double t0 = 2.0 * std::numbers::pi * i / n;
      double t1 = 2.0 * std::numbers::pi * (i + 1) / n;
      Vec2 a = kGhostScale * boundary(t0) * Vec2(std::cos(t0), std::sin(t0));
      Vec2 b = kGhostScale * boundary(t1) * Vec2(std::cos(t1), std::sin(t1));
      Vec2 e = b - a;
      double den = dir[0] * (-e[1]) - dir[1] * (-e[0]);
      if (std::abs(den) < 1e-15) continue;
      Vec2 rhs = a - origin;
      double t = (rhs[0] * (-e[1]) - rhs[1] * (-e[0])) / den;
      double s = (dir[0] * rhs[1] - dir[1] * rhs[0]) / den;
      if (t > 0.0 && s >= -1e-12 && s <= 1.0 + 1e-12) best = std::max(best, t);
    }
    return best;
  };

  std::vector<double> psi, dist;
  const int fit_n = std::max(64, samples / 2);
  for (int i = 0; i < fit_n; ++i) {
    double angle = 2.0 * std::numbers::pi * i / fit_n;
    Vec2 dir(std::cos(angle), std::sin(angle));
    double d = std::max(region_distance(dir), ghost_distance(dir));
    if (d <= 0.0) continue;
    psi.push_back(angle);
    dist.push_back(d);
  }

  // Overlapping children composite like co-located relocation copies, so
  // they take the kernel-independent three-way opacity.
  const double child_o = new_opacity(parent.opacity(), 3);
  const double child_sigma = parent.shape.sharpness();

  // Ridge-regularized normal equations for g(psi) = sum_k g_k e^{ik psi}.
  Eigen::Matrix<cd, kFreqCount, kFreqCount> ata;
  Eigen::Vector<cd, kFreqCount> atb;
  ata.setZero();
  atb.setZero();
  for (std::size_t j = 0; j < psi.size(); ++j) {
    Eigen::Vector<cd, kFreqCount> row;
    for (int k = 0; k < kFreqCount; ++k)
      row[k] = std::polar(1.0, k * psi[j]);
    ata += row * row.adjoint();
    atb += row * cd(dist[j], 0.0);
  }
  for (int k = 0; k < kFreqCount; ++k) ata(k, k) += cd(1e-9, 0.0);
  Eigen::Vector<cd, kFreqCount> g = ata.ldlt().solve(atb);

  double amp_sum = 0.0;
  std::array<double, kFreqCount> amp{}, phase{};
  for (int k = 0; k < kFreqCount; ++k) {
    amp[k] = std::abs(g[k]);
    phase[k] = amp[k] > 0.0 ? std::arg(g[k]) : 0.0;
    amp_sum += amp[k];
  }

  Primitive child = parent;
  const double parent_radius = parent.shape.circumradius();
  child.center = parent.center + parent_radius * (cx * tangent_frame(parent.rotation).col(0) +
                                                  cy * tangent_frame(parent.rotation).col(1));
  child.opacity_raw = logit(std::min(child_o, 1.0 - 1e-9));
  child.shape.sharpness_raw = inverse_softplus(std::max(child_sigma - kSigmaEps, 1e-6));
  child.shape.frozen_rbar.reset();
  if (amp_sum <= 1e-9) {
    double mean_d = 0.0;
    for (double d : dist) mean_d += d;
    mean_d = dist.empty() ? 0.5 : mean_d / dist.size();
    child.shape.amplitudes_raw = {1, 0, 0, 0, 0, 0};
    child.shape.phases = {};
    child.shape.circumradius_raw = std::log(std::max(1e-6, parent_radius * mean_d));
    return child;
  }
  for (int k = 0; k < kFreqCount; ++k) {
    child.shape.amplitudes_raw[k] = std::sqrt(amp[k] / amp_sum);
    child.shape.phases[k] = phase[k];
  }
  child.shape.circumradius_raw = std::log(parent_radius * amp_sum);
  return child;
}

}  // namespace

void hydra_split(SceneModel& scene, const std::vector<std::uint32_t>& candidates,
                 const DensifyConfig& cfg, Rng& rng, SceneEditHook* hook,
                 DensifyReport* report) {
  const double min_span = 2.0 * std::numbers::pi / cfg.lobe_samples;
  for (std::uint32_t id : candidates) {
    const Primitive parent = scene.primitives[id];
    const std::uint8_t dome = scene.dome_flags[id];
    const double extent = scene.stats[id].max_screen_extent;

    bool lobe_mode = extent > cfg.lobe_split_extent_px;
    std::vector<LobeSegment> segs;
    if (lobe_mode) {
      segs = detect_lobes(parent.shape, cfg.lobe_samples, cfg.lobe_segments);
      if (segs.size() < 2) lobe_mode = false;  // circles fall back
    }

    if (lobe_mode) {
      std::vector<Primitive> children;
      for (const LobeSegment& seg : segs) {
        if (seg.theta_max - seg.theta_min < min_span) continue;
        children.push_back(fit_segment_child(parent, seg, cfg.lobe_samples));
      }
      if (children.size() < 2 ||
          scene.live_count() + children.size() - 1 > scene.budget_max) {
        continue;
      }
      reset_slot(scene, id, children[0], dome, hook);
      for (std::size_t c = 1; c < children.size(); ++c)
        append_slot(scene, children[c], dome, hook);
      if (report) ++report->lobe_splits;
    } else {
      if (scene.live_count() + 1 > scene.budget_max) continue;
      TwoChild tc = two_child_params(parent);
      Primitive child = parent;
      child.opacity_raw = tc.opacity_raw;
      child.shape.circumradius_raw = tc.circumradius_raw;
      double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double eta = cfg.clone_noise_eta * parent.shape.circumradius();
      Vec3 offset = tangent_offset(parent, eta * std::cos(angle), eta * std::sin(angle));
      Primitive a = child, b = child;
      a.center += offset;
      b.center -= offset;
      reset_slot(scene, id, a, dome, hook);
      append_slot(scene, b, dome, hook);
      if (report) ++report->scale_splits;
    }
  }
}

DensifyReport densify_step(SceneModel& scene, const DensifyConfig& cfg,
                           int iteration, Rng& rng, int views_per_epoch,
                           SceneEditHook* hook) {
  DensifyReport report;
  report.iteration = iteration;
  if (iteration < cfg.start_iter || iteration % cfg.interval != 0) {
    return report;
  }
  scene.sync_aux();

  std::vector<std::uint8_t> dead = death_mask(scene, cfg, views_per_epoch);
  for (auto d : dead) report.deaths += d;

  if (iteration > cfg.end_iter) {
    // Prune only: drop dead primitives outright.
    std::vector<std::uint32_t> keep;
    for (std::uint32_t i = 0; i < scene.primitives.size(); ++i)
      if (!dead[i]) keep.push_back(i);
    if (keep.size() != scene.primitives.size()) {
      SceneModel pruned = scene;
      pruned.primitives.clear();
      pruned.stats.clear();
      pruned.dome_flags.clear();
      for (std::uint32_t i : keep) {
        pruned.primitives.push_back(scene.primitives[i]);
        pruned.stats.push_back(scene.stats[i]);
        pruned.dome_flags.push_back(scene.dome_flags[i]);
      }
      scene.primitives = std::move(pruned.primitives);
      scene.stats = std::move(pruned.stats);
      scene.dome_flags = std::move(pruned.dome_flags);
      if (hook) hook->compact(keep);
    }
    report.pruned = report.deaths;
    for (auto& st : scene.stats) st.reset();
    return report;
  }

  // Stage 2: subdivision of high-gradient survivors.
  if (iteration >= cfg.hydra_from_iter) {
    std::vector<std::pair<double, std::uint32_t>> ranked;
    for (std::uint32_t i = 0; i < scene.primitives.size(); ++i) {
      if (dead[i]) continue;
      const AccumStats& st = scene.stats[i];
      double grad = st.abs_grad_accum / std::max(1, st.view_count);
      if (st.age_iters < views_per_epoch) continue;
      if (grad > cfg.tau_grad) ranked.emplace_back(grad, i);
    }
    std::sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::uint32_t> candidates;
    for (auto& [g, i] : ranked) candidates.push_back(i);
    hydra_split(scene, candidates, cfg, rng, hook, &report);
    dead.resize(scene.primitives.size(), 0);
  }

  // Stage 3: clone-and-replace plus budget additions.
  int parity = iteration / cfg.interval;
  relocate_and_add(scene, dead, cfg, rng, parity, hook, &report);

  for (auto& st : scene.stats) st.reset();
  // New primitives start their grace clock at zero; survivors keep aging.
  return report;
}

}  // namespace fsplat
