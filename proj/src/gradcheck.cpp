#include "fsplat/gradcheck.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "fsplat/rasterize.hpp"

namespace fsplat {

namespace {

std::vector<std::uint8_t> build_mask(const SceneModel& scene, const Camera& cam,
                                     const RenderConfig& cfg,
                                     const GradCheckOptions& opts) {
  const std::size_t n_px = static_cast<std::size_t>(cam.width) * cam.height;
  std::vector<std::uint8_t> mask(n_px, 0);
  if (!opts.mask_boundary) return mask;

  TileBinning bin = bin_tiles(scene, cam, cfg, opts.k_active);
  const double focal = std::max(cam.fx, cam.fy);
  const bool persp = cam.projection == Camera::Projection::Perspective;

  for (std::size_t tile = 0; tile < bin.tiles.size(); ++tile) {
    int tx = static_cast<int>(tile) % bin.tiles_x;
    int ty = static_cast<int>(tile) / bin.tiles_x;
    int x0 = tx * bin.tile_size, y0 = ty * bin.tile_size;
    int x1 = std::min(cam.width, x0 + bin.tile_size);
    int y1 = std::min(cam.height, y0 + bin.tile_size);
    for (int py = y0; py < y1; ++py) {
      for (int px = x0; px < x1; ++px) {
        const std::size_t pix = static_cast<std::size_t>(py) * cam.width + px;
        double transmittance = 1.0;
        for (std::uint32_t j : bin.tiles[tile]) {
          const ProjectedPrimitive& proj = bin.projected[j];
          auto hit = intersect(px + 0.5, py + 0.5, proj, cfg.near_clip);
          if (!hit) continue;
          PixelAlpha pa = pixel_alpha(proj.opacity, proj.sigma, proj.coeffs,
                                      opts.k_active, hit->u, hit->v);
          const double radius =
              scene.primitives[proj.id].shape.circumradius();
          const double px_per_local =
              radius * focal / (persp ? proj.z_center : 1.0);
          if (pa.boundary > 0.0 &&
              std::abs(pa.x) * pa.boundary * px_per_local < 1.0) {
            mask[pix] = 1;
          }
          if (std::abs(pa.alpha - cfg.alpha_cutoff) < 2e-3) mask[pix] = 1;
          if (pa.alpha >= cfg.alpha_cutoff) {
            transmittance *= 1.0 - pa.alpha;
            if (transmittance < cfg.transmittance_floor) break;
          }
        }
        if (transmittance > cfg.transmittance_floor / 3.0 &&
            transmittance < cfg.transmittance_floor * 3.0) {
          mask[pix] = 1;
        }
      }
    }
  }
  return mask;
}

double masked_loss(const Image& pred, const Image& target,
                   const std::vector<std::uint8_t>& mask, CheckLoss loss,
                   std::size_t n_unmasked) {
  double acc = 0.0;
  const std::size_t n_px = mask.size();
  for (std::size_t i = 0; i < n_px; ++i) {
    if (mask[i]) continue;
    for (int c = 0; c < 3; ++c) {
      double d = pred.data[3 * i + c] - target.data[3 * i + c];
      acc += loss == CheckLoss::L2 ? d * d : std::abs(d);
    }
  }
  return acc / (3.0 * static_cast<double>(n_unmasked));
}

}  // namespace

const GradCheckGroup& GradCheckReport::group(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return g;
  throw DataError("unknown gradient group: " + name);
}

std::string GradCheckReport::to_text() const {
  std::ostringstream os;
  os << "masked " << masked_pixels << "/" << total_pixels << " pixels\n";
  for (const auto& g : groups) {
    os << g.name << ": n=" << g.count << " max_rel=" << g.max_rel_err
       << " mean_rel=" << g.mean_rel_err << " sign=" << g.sign_agreement
       << "\n";
  }
  return os.str();
}

std::string GradCheckReport::to_csv() const {
  std::ostringstream os;
  os << "group,count,max_rel_err,mean_rel_err,sign_agreement\n";
  for (const auto& g : groups) {
    os << g.name << "," << g.count << "," << g.max_rel_err << ","
       << g.mean_rel_err << "," << g.sign_agreement << "\n";
  }
  return os.str();
}

GradCheckReport finite_diff_check(const SceneModel& scene, const Camera& cam,
                                  const RenderConfig& cfg, const Image& target,
                                  const GradCheckOptions& opts) {
  SceneModel work = scene;
  const std::size_t n_px = static_cast<std::size_t>(cam.width) * cam.height;
  std::vector<std::uint8_t> mask = build_mask(work, cam, cfg, opts);
  std::size_t n_unmasked = 0;
  for (auto m : mask)
    if (!m) ++n_unmasked;
  if (n_unmasked == 0) throw DataError("every pixel masked; scene too dense");

  // Analytic gradient of the masked loss.
  RenderOutput out = render(work, cam, cfg, opts.k_active);
  LossGrads lg;
  lg.d_color.assign(3 * n_px, 0.0);
  const double inv_n = 1.0 / (3.0 * static_cast<double>(n_unmasked));
  for (std::size_t i = 0; i < n_px; ++i) {
    if (mask[i]) continue;
    for (int c = 0; c < 3; ++c) {
      double d = out.color.data[3 * i + c] - target.data[3 * i + c];
      lg.d_color[3 * i + c] =
          opts.loss == CheckLoss::L2
              ? 2.0 * d * inv_n
              : (d > 0 ? inv_n : (d < 0 ? -inv_n : 0.0));
    }
  }
  GradBuffer analytic =
      backward(work, cam, cfg, out, lg, opts.ste, opts.k_active, opts.mode);

  auto fd_loss = [&]() {
    RenderOutput r = render(work, cam, cfg, opts.k_active);
    return masked_loss(r.color, target, mask, opts.loss, n_unmasked);
  };

  struct Acc {
    std::vector<double> analytic, fd;
  };
  std::map<std::string, Acc> acc;
  auto probe = [&](std::uint32_t prim, const std::string& group, double& param,
                   double a_grad) {
    const double save = param;
    param = save + opts.eps;
    double lp = fd_loss();
    param = save - opts.eps;
    double lm = fd_loss();
    param = save;
    acc[group].analytic.push_back(a_grad);
    acc[group].fd.push_back((lp - lm) / (2.0 * opts.eps));
    (void)prim;
  };

  for (std::uint32_t i = 0; i < work.primitives.size(); ++i) {
    Primitive& p = work.primitives[i];
    const PrimGrad& g = analytic.prims[i];
    for (int c = 0; c < 3; ++c) probe(i, "center", p.center[c], g.center[c]);
    for (int c = 0; c < 4; ++c)
      probe(i, "rotation", p.rotation[c], g.rotation[c]);
    probe(i, "opacity", p.opacity_raw, g.opacity_raw);
    for (int ch = 0; ch < 3; ++ch) {
      probe(i, "sh_dc", p.sh[ch * kShBases], g.sh[ch * kShBases]);
      int bases = (scene.sh_degree_active + 1) * (scene.sh_degree_active + 1);
      for (int b = 1; b < bases; ++b)
        probe(i, "sh_rest", p.sh[ch * kShBases + b], g.sh[ch * kShBases + b]);
    }
    probe(i, "circumradius", p.shape.circumradius_raw, g.circumradius_raw);
    for (int k = 0; k < kFreqCount; ++k) {
      probe(i, "amplitudes", p.shape.amplitudes_raw[k], g.amplitudes_raw[k]);
      probe(i, "phases", p.shape.phases[k], g.phases[k]);
    }
    probe(i, "sharpness", p.shape.sharpness_raw, g.sharpness_raw);
  }

  GradCheckReport report;
  report.total_pixels = static_cast<int>(n_px);
  report.masked_pixels = static_cast<int>(n_px - n_unmasked);
  for (auto& [name, a] : acc) {
    GradCheckGroup grp;
    grp.name = name;
    grp.count = static_cast<int>(a.fd.size());
    double scale = 0.0;
    for (double f : a.fd) scale = std::max(scale, std::abs(f));
    double sum_rel = 0.0;
    int agree = 0, signed_coords = 0;
    for (std::size_t j = 0; j < a.fd.size(); ++j) {
      double denom = std::max({std::abs(a.fd[j]), 0.01 * scale, 1e-12});
      double rel = std::abs(a.analytic[j] - a.fd[j]) / denom;
      grp.max_rel_err = std::max(grp.max_rel_err, rel);
      sum_rel += rel;
      // Sign consistency is only meaningful where the loss actually has a
      // descent direction along this coordinate.
      if (std::abs(a.fd[j]) <= 1e-3 * scale) continue;
      ++signed_coords;
      if (a.analytic[j] * a.fd[j] > 0.0) ++agree;
    }
    grp.mean_rel_err = a.fd.empty() ? 0.0 : sum_rel / a.fd.size();
    grp.sign_agreement =
        signed_coords == 0 ? 1.0 : static_cast<double>(agree) / signed_coords;
    report.groups.push_back(grp);
  }
  return report;
}

}  // namespace fsplat
