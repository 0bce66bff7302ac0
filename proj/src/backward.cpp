#include "fsplat/backward.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <unordered_map>

#include "fsplat/parallel.hpp"

namespace fsplat {

void PrimGrad::add(const PrimGrad& other) {
  center += other.center;
  rotation += other.rotation;
  opacity_raw += other.opacity_raw;
  for (int i = 0; i < kShCoeffs; ++i) sh[i] += other.sh[i];
  circumradius_raw += other.circumradius_raw;
  for (int k = 0; k < kFreqCount; ++k) {
    amplitudes_raw[k] += other.amplitudes_raw[k];
    phases[k] += other.phases[k];
  }
  sharpness_raw += other.sharpness_raw;
}

void PrimGrad::scale(double s) {
  center *= s;
  rotation *= s;
  opacity_raw *= s;
  for (auto& v : sh) v *= s;
  circumradius_raw *= s;
  for (auto& v : amplitudes_raw) v *= s;
  for (auto& v : phases) v *= s;
  sharpness_raw *= s;
}

namespace {

using cd = std::complex<double>;

// Per-projected-primitive quantities reused across all of its pixels.
struct BackCtx {
  double opacity = 0.0, d_opacity_draw = 0.0;
  double sigma = 0.0, d_sigma_draw = 0.0;
  double radius = 0.0;
  std::array<double, kFreqCount> rbar{}, raw{};
  double sum_sq = 0.0;
  std::array<cd, kFreqCount> phase_unit{};  // e^{i phi_k}
  Vec3 t_u, t_v, t_w;
  Vec4 q_unit;
  double q_norm = 1.0;
  Vec3 dir;  // camera -> center, unit
  double dist = 0.0;
  std::array<double, kShBases> basis{};
  std::array<Vec3, kShBases> d_basis{};
  bool clamped[3] = {false, false, false};
};

struct TileGrads {
  std::vector<std::uint32_t> ids;
  std::vector<PrimGrad> grads;
  std::vector<double> abs_screen;
  std::unordered_map<std::uint32_t, std::size_t> index;

  PrimGrad& at(std::uint32_t id, double*& abs_slot) {
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, ids.size()).first;
      ids.push_back(id);
      grads.emplace_back();
      abs_screen.push_back(0.0);
    }
    abs_slot = &abs_screen[it->second];
    return grads[it->second];
  }
};

// Gradient of the boundary modulus |z| w.r.t. normalized amplitudes,
// phases and the polar angle.
struct BoundaryGrad {
  cd z;
  double mod = 0.0;
  std::array<double, kFreqCount> d_rbar{};
  std::array<double, kFreqCount> d_phase{};
  double d_theta = 0.0;
};

BoundaryGrad boundary_grad(const BackCtx& ctx, int k_active, double cos_t,
                           double sin_t) {
  BoundaryGrad out;
  cd w(cos_t, sin_t);
  cd wpow(1.0, 0.0);
  cd z(0.0, 0.0);
  cd zp(0.0, 0.0);  // sum_k k * c_k * w^k
  std::array<cd, kFreqCount> basis{};
  for (int k = 0; k < k_active; ++k) {
    basis[k] = ctx.phase_unit[k] * wpow;
    cd term = ctx.rbar[k] * basis[k];
    z += term;
    zp += static_cast<double>(k) * term;
    wpow *= w;
  }
  out.z = z;
  out.mod = std::abs(z);
  if (out.mod <= 0.0) return out;
  cd zc = std::conj(z);
  for (int k = 0; k < k_active; ++k) {
    cd zb = zc * basis[k];
    out.d_rbar[k] = zb.real() / out.mod;
    out.d_phase[k] = -std::imag(zc * (ctx.rbar[k] * basis[k])) / out.mod;
  }
  out.d_theta = (z.imag() * zp.real() - z.real() * zp.imag()) / out.mod;
  return out;
}

// Chain from d|z|/d rbar into the raw amplitudes through the squared-L1
// normalization. Active coefficients also pull on inactive raws via the
// shared denominator.
void accumulate_amplitude_grads(const BackCtx& ctx, int k_active,
                                const std::array<double, kFreqCount>& d_rbar,
                                double scale, PrimGrad& grad) {
  double dot = 0.0;
  for (int k = 0; k < k_active; ++k) dot += d_rbar[k] * ctx.rbar[k];
  for (int j = 0; j < kFreqCount; ++j) {
    double d_j = j < k_active ? d_rbar[j] : 0.0;
    grad.amplitudes_raw[j] += scale * 2.0 * ctx.raw[j] / ctx.sum_sq * (d_j - dot);
  }
}

void accumulate_rotation_grad(const BackCtx& ctx, const Vec3& g_u,
                              const Vec3& g_v, const Vec3& g_w,
                              PrimGrad& grad) {
  const double w = ctx.q_unit[0], x = ctx.q_unit[1], y = ctx.q_unit[2],
               z = ctx.q_unit[3];
  Vec4 g;
  g[0] = g_u.dot(Vec3(0, 2 * z, -2 * y)) + g_v.dot(Vec3(-2 * z, 0, 2 * x)) +
         g_w.dot(Vec3(2 * y, -2 * x, 0));
  g[1] = g_u.dot(Vec3(0, 2 * y, 2 * z)) + g_v.dot(Vec3(2 * y, -4 * x, 2 * w)) +
         g_w.dot(Vec3(2 * z, -2 * w, -4 * x));
  g[2] = g_u.dot(Vec3(-4 * y, 2 * x, -2 * w)) + g_v.dot(Vec3(2 * x, 0, 2 * z)) +
         g_w.dot(Vec3(2 * w, 2 * z, -4 * y));
  g[3] = g_u.dot(Vec3(-4 * z, 2 * w, 2 * x)) + g_v.dot(Vec3(-2 * w, -4 * z, 2 * y)) +
         g_w.dot(Vec3(2 * x, 2 * y, 0));
  // Project through quaternion normalization.
  grad.rotation += (g - ctx.q_unit * ctx.q_unit.dot(g)) / ctx.q_norm;
}

}  // namespace

GradBuffer backward(const SceneModel& scene, const Camera& cam,
                    const RenderConfig& cfg, const RenderOutput& output,
                    const LossGrads& grads, const SteConfig& ste, int k_active,
                    WindowMode mode, const TileBinning* binning) {
  const std::size_t n_px = static_cast<std::size_t>(cam.width) * cam.height;
  if (output.width != cam.width || output.height != cam.height ||
      output.blend.size() != n_px) {
    throw DataError("render output does not match the camera");
  }
  if (grads.d_color.size() != 3 * n_px) {
    throw DataError("d_color must be H*W*3");
  }

  TileBinning local_bin;
  if (!binning) local_bin = bin_tiles(scene, cam, cfg, k_active);
  const TileBinning& bin = binning ? *binning : local_bin;

  // Per-primitive context (indexed like bin.projected).
  std::vector<BackCtx> ctxs(bin.projected.size());
  const Vec3 cam_pos = cam.position();
  const Mat3 cam_rot = cam.world_to_camera.topLeftCorner<3, 3>();
  for (std::size_t j = 0; j < bin.projected.size(); ++j) {
    const Primitive& p = scene.primitives[bin.projected[j].id];
    BackCtx& c = ctxs[j];
    c.opacity = p.opacity();
    c.d_opacity_draw = c.opacity * (1.0 - c.opacity);
    c.sigma = p.shape.sharpness();
    c.d_sigma_draw = sigmoid(p.shape.sharpness_raw);
    c.radius = p.shape.circumradius();
    c.raw = p.shape.amplitudes_raw;
    c.sum_sq = 0.0;
    for (double a : c.raw) c.sum_sq += a * a;
    c.rbar = p.shape.normalized_amplitudes();
    for (int k = 0; k < kFreqCount; ++k)
      c.phase_unit[k] = std::polar(1.0, p.shape.phases[k]);
    Mat3 frame = tangent_frame(p.rotation);
    c.t_u = frame.col(0);
    c.t_v = frame.col(1);
    c.t_w = frame.col(2);
    c.q_norm = p.rotation.norm();
    c.q_unit = p.rotation / c.q_norm;
    Vec3 d = p.center - cam_pos;
    c.dist = d.norm();
    c.dir = c.dist > 0 ? Vec3(d / c.dist) : Vec3(0, 0, 1);
    sh_basis_with_grad(c.dir, scene.sh_degree_active, c.basis, c.d_basis);
    int bases = (scene.sh_degree_active + 1) * (scene.sh_degree_active + 1);
    for (int ch = 0; ch < 3; ++ch) {
      double v = 0.5;
      for (int i = 0; i < bases; ++i) v += p.sh[ch * kShBases + i] * c.basis[i];
      c.clamped[ch] = v < 0.0;
    }
  }

  const Mat4 w_mat = world_to_screen(cam);
  const Mat4 w_t = w_mat.transpose();
  const bool persp = cam.projection == Camera::Projection::Perspective;
  const bool has_depth = !grads.d_depth.empty();
  const bool has_normal = !grads.d_normal.empty();
  const bool has_alpha = !grads.d_alpha.empty();
  const bool has_rec = !grads.d_rec_omega.empty();
  const bool has_rec_z = !grads.d_rec_z.empty();
  const int sh_bases_active =
      (scene.sh_degree_active + 1) * (scene.sh_degree_active + 1);

  std::vector<TileGrads> tile_grads(bin.tiles.size());

  parallel_for(bin.tiles.size(), cfg.num_threads, [&](std::size_t tile) {
    TileGrads& tg = tile_grads[tile];
    int tx = static_cast<int>(tile) % bin.tiles_x;
    int ty = static_cast<int>(tile) / bin.tiles_x;
    int x0 = tx * bin.tile_size;
    int y0 = ty * bin.tile_size;
    int x1 = std::min(cam.width, x0 + bin.tile_size);
    int y1 = std::min(cam.height, y0 + bin.tile_size);
    const auto& list = bin.tiles[tile];
    if (list.empty()) return;

    for (int py = y0; py < y1; ++py) {
      for (int px = x0; px < x1; ++px) {
        const std::size_t pix = output.pixel_index(px, py);
        const Vec3 d_color(grads.d_color[3 * pix], grads.d_color[3 * pix + 1],
                           grads.d_color[3 * pix + 2]);
        const double d_depth = has_depth ? grads.d_depth[pix] : 0.0;
        const Vec3 d_normal =
            has_normal ? Vec3(grads.d_normal[3 * pix], grads.d_normal[3 * pix + 1],
                              grads.d_normal[3 * pix + 2])
                       : Vec3::Zero();
        const double d_alpha = has_alpha ? grads.d_alpha[pix] : 0.0;
        const auto& records = output.blend[pix];
        const auto* rec_omega = has_rec ? &grads.d_rec_omega[pix] : nullptr;
        const auto* rec_z = has_rec_z ? &grads.d_rec_z[pix] : nullptr;

        bool any_signal = d_color.squaredNorm() != 0.0 || d_depth != 0.0 ||
                          d_normal.squaredNorm() != 0.0 || d_alpha != 0.0 ||
                          (rec_omega && !rec_omega->empty()) ||
                          (rec_z && !rec_z->empty());
        if (!any_signal) continue;

        double t_final = 1.0;
        if (!records.empty()) {
          const auto& last = records.back();
          t_final = last.transmittance * (1.0 - last.alpha);
        }
        const double bg_dot = cfg.background.dot(d_color);
        double suffix = t_final * bg_dot;        // sum_{i>k} omega_i G_i + bg
        double suffix_color = t_final * bg_dot;  // color-channel part only
        double t_insert = t_final;
        const double sx = px + 0.5, sy = py + 0.5;
        int r = static_cast<int>(records.size()) - 1;

        for (int li = static_cast<int>(list.size()) - 1; li >= 0; --li) {
          const std::uint32_t j = list[li];
          const ProjectedPrimitive& proj = bin.projected[j];
          const BackCtx& ctx = ctxs[j];

          if (r >= 0 && records[r].prim == proj.id) {
            // Actual contributor: exact compositing gradients.
            const BlendRecord& rec = records[r];
            const double omega = rec.alpha * rec.transmittance;
            const double g_full =
                proj.color.dot(d_color) + rec.depth * d_depth +
                proj.normal.dot(d_normal) + d_alpha +
                (rec_omega && !rec_omega->empty() ? (*rec_omega)[r] : 0.0);
            const double d_alpha_i =
                g_full * rec.transmittance - suffix / (1.0 - rec.alpha);
            double d_z = omega * d_depth +
                         (rec_z && !rec_z->empty() ? (*rec_z)[r] : 0.0);
            suffix += omega * g_full;
            suffix_color += omega * proj.color.dot(d_color);
            t_insert = rec.transmittance;
            --r;

            double* abs_slot = nullptr;
            PrimGrad& pg = tg.at(proj.id, abs_slot);

            // Color -> SH coefficients and view direction.
            Vec3 d_dir = Vec3::Zero();
            const Primitive& prim = scene.primitives[proj.id];
            for (int ch = 0; ch < 3; ++ch) {
              if (ctx.clamped[ch]) continue;
              double dch = omega * d_color[ch];
              if (dch == 0.0) continue;
              for (int i = 0; i < sh_bases_active; ++i) {
                pg.sh[ch * kShBases + i] += dch * ctx.basis[i];
                d_dir += dch * prim.sh[ch * kShBases + i] * ctx.d_basis[i];
              }
            }
            if (ctx.dist > 0.0) {
              pg.center +=
                  (d_dir - ctx.dir * ctx.dir.dot(d_dir)) / ctx.dist;
            }

            // Normal buffer -> t_w.
            Vec3 g_w = Vec3::Zero();
            if (has_normal) g_w = proj.normal_sign * omega * d_normal;

            // Window chain.
            const double rho = std::hypot(rec.u, rec.v);
            double d_u = 0.0, d_v = 0.0;
            double d_opacity = 0.0, d_sigma = 0.0;
            if (rho == 0.0) {
              d_opacity = d_alpha_i;  // alpha = o at the center
            } else {
              const double cos_t = rec.u / rho, sin_t = rec.v / rho;
              BoundaryGrad bg = boundary_grad(ctx, k_active, cos_t, sin_t);
              const double rb = bg.mod;
              const double x = (rb - rho) / rb;
              double da_do = 0.0, da_dsigma = 0.0, da_dx = 0.0;
              if (mode == WindowMode::SmoothSurrogate) {
                SteEval se = ste_window(x, ctx.sigma, ste);
                da_do = se.value;
                da_dsigma = ctx.opacity * se.d_dsigma;
                da_dx = ctx.opacity * se.d_dx;
              } else {
                const double wv = std::pow(x, ctx.sigma);
                da_do = wv;
                da_dsigma = ctx.opacity * wv * std::log(x);
                da_dx = ctx.opacity * ctx.sigma * std::pow(x, ctx.sigma - 1.0);
              }
              d_opacity = d_alpha_i * da_do;
              d_sigma = d_alpha_i * da_dsigma;
              const double d_x = d_alpha_i * da_dx;
              const double d_rho = -d_x / rb;
              double d_rb = d_x * rho / (rb * rb);
              for (int k = 0; k < k_active; ++k) {
                pg.phases[k] += d_rb * bg.d_phase[k];
              }
              accumulate_amplitude_grads(ctx, k_active, bg.d_rbar, d_rb, pg);
              const double d_theta = d_rb * bg.d_theta;
              d_u = d_rho * cos_t - d_theta * sin_t / rho;
              d_v = d_rho * sin_t + d_theta * cos_t / rho;
            }
            pg.opacity_raw += d_opacity * ctx.d_opacity_draw;
            pg.sharpness_raw += d_sigma * ctx.d_sigma_draw;

            // Depth output depends on (u, v) through the depth row.
            d_u += d_z * proj.row_d[0];
            d_v += d_z * proj.row_d[1];

            // (u, v) -> pullback planes -> A = W * H.
            double hu[4], hv[4];
            for (int q = 0; q < 4; ++q) {
              hu[q] = sx * proj.row_w[q] - proj.row_x[q];
              hv[q] = sy * proj.row_w[q] - proj.row_y[q];
            }
            const double den = hu[0] * hv[1] - hu[1] * hv[0];
            const double inv_den = 1.0 / den;
            const double u = rec.u, v = rec.v;
            double d_hu[4] = {0, 0, 0, 0}, d_hv[4] = {0, 0, 0, 0};
            d_hu[0] = (-u * hv[1] * d_u + (-hv[3] - v * hv[1]) * d_v) * inv_den;
            d_hu[1] = ((hv[3] + u * hv[0]) * d_u + v * hv[0] * d_v) * inv_den;
            d_hu[3] = (-hv[1] * d_u + hv[0] * d_v) * inv_den;
            d_hv[0] = (u * hu[1] * d_u + (hu[3] + v * hu[1]) * d_v) * inv_den;
            d_hv[1] = ((-hu[3] - u * hu[0]) * d_u - v * hu[0] * d_v) * inv_den;
            d_hv[3] = (hu[1] * d_u - hu[0] * d_v) * inv_den;

            Mat4 d_a = Mat4::Zero();
            for (int q = 0; q < 4; ++q) {
              d_a(0, q) = -d_hu[q];
              d_a(1, q) = -d_hv[q];
              d_a(3, q) = sx * d_hu[q] + sy * d_hv[q];
            }
            d_a(2, 0) = d_z * u;
            d_a(2, 1) = d_z * v;
            d_a(2, 3) = d_z;

            Mat4 d_h = w_t * d_a;
            Vec3 d_center = d_h.col(3).head<3>();
            Vec3 g_u = ctx.radius * d_h.col(0).head<3>();
            Vec3 g_v = ctx.radius * d_h.col(1).head<3>();
            const double d_radius = ctx.t_u.dot(d_h.col(0).head<3>()) +
                                    ctx.t_v.dot(d_h.col(1).head<3>());
            pg.circumradius_raw += d_radius * ctx.radius;
            pg.center += d_center;
            accumulate_rotation_grad(ctx, g_u, g_v, g_w, pg);

            // Absolute screen-space center gradient (NDC units) for
            // densification, summed per pixel before any sign cancels.
            Vec3 g_cam = cam_rot * d_center;
            double zf = persp ? proj.z_center : 1.0;
            double gx = 0.5 * cam.width * zf / cam.fx * g_cam[0];
            double gy = 0.5 * cam.height * zf / cam.fy * g_cam[1];
            *abs_slot += std::hypot(gx, gy);
          } else if (mode == WindowMode::SmoothSurrogate &&
                     t_insert >= cfg.transmittance_floor &&
                     d_color.squaredNorm() != 0.0) {
            // Exterior pixel inside the circumradius: straight-through
            // gradient routed to the shape coefficients only.
            auto hit = intersect(sx, sy, proj, cfg.near_clip);
            if (!hit) continue;
            const double rho = std::hypot(hit->u, hit->v);
            if (rho > 1.0 || rho == 0.0) continue;
            const double cos_t = hit->u / rho, sin_t = hit->v / rho;
            BoundaryGrad bg = boundary_grad(ctx, k_active, cos_t, sin_t);
            if (bg.mod <= 1e-12) continue;
            const double x = (bg.mod - rho) / bg.mod;
            if (x > 0.0) continue;  // interior misses were cutoff/terminated
            const double d_alpha_v =
                proj.color.dot(d_color) * t_insert - suffix_color;
            SteEval se = ste_window(x, ctx.sigma, ste);
            const double d_rb =
                d_alpha_v * ctx.opacity * se.d_dx * rho / (bg.mod * bg.mod);
            if (d_rb == 0.0) continue;
            double* abs_slot = nullptr;
            PrimGrad& pg = tg.at(proj.id, abs_slot);
            for (int k = 0; k < k_active; ++k) {
              pg.phases[k] += d_rb * bg.d_phase[k];
            }
            accumulate_amplitude_grads(ctx, k_active, bg.d_rbar, d_rb, pg);
          }
        }
      }
    }
  });

  // Deterministic merge in tile order, then first-touch order within a tile.
  GradBuffer out(scene.primitives.size());
  for (const TileGrads& tg : tile_grads) {
    for (std::size_t i = 0; i < tg.ids.size(); ++i) {
      out.prims[tg.ids[i]].add(tg.grads[i]);
      out.abs_screen_grad[tg.ids[i]] += tg.abs_screen[i];
    }
  }

  for (std::size_t i = 0; i < out.prims.size(); ++i) {
    const PrimGrad& g = out.prims[i];
    auto bad = [&](double v) { return !std::isfinite(v); };
    const char* which = nullptr;
    if (bad(g.center[0]) || bad(g.center[1]) || bad(g.center[2])) which = "center";
    for (int q = 0; q < 4 && !which; ++q)
      if (bad(g.rotation[q])) which = "rotation";
    if (!which && bad(g.opacity_raw)) which = "opacity";
    if (!which)
      for (double v : g.sh)
        if (bad(v)) {
          which = "sh";
          break;
        }
    if (!which && bad(g.circumradius_raw)) which = "circumradius";
    if (!which)
      for (int k = 0; k < kFreqCount; ++k)
        if (bad(g.amplitudes_raw[k]) || bad(g.phases[k])) {
          which = "shape";
          break;
        }
    if (!which && bad(g.sharpness_raw)) which = "sharpness";
    if (which) {
      throw NumericalError("non-finite gradient for primitive " +
                           std::to_string(i) + " parameter " + which);
    }
  }
  return out;
}

GradBuffer backward(const SceneModel& scene, const Camera& cam,
                    const RenderConfig& cfg, const RenderOutput& output,
                    const std::vector<double>& d_image, const SteConfig& ste,
                    int k_active, WindowMode mode) {
  LossGrads grads;
  grads.d_color = d_image;
  return backward(scene, cam, cfg, output, grads, ste, k_active, mode);
}

}  // namespace fsplat
