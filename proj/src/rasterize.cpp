#include "fsplat/rasterize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fsplat/parallel.hpp"

namespace fsplat {

namespace {

bool all_finite(const Primitive& p, int k_active, int sh_degree) {
  auto finite3 = [](const Vec3& v) {
    return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
  };
  if (!finite3(p.center)) return false;
  for (int i = 0; i < 4; ++i)
    if (!std::isfinite(p.rotation[i])) return false;
  if (!std::isfinite(p.opacity_raw) || !std::isfinite(p.shape.circumradius_raw) ||
      !std::isfinite(p.shape.sharpness_raw))
    return false;
  int bases = (sh_degree + 1) * (sh_degree + 1);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < bases; ++i)
      if (!std::isfinite(p.sh[c * kShBases + i])) return false;
  if (p.shape.frozen_rbar) {
    for (double v : *p.shape.frozen_rbar)
      if (!std::isfinite(v)) return false;
  } else {
    for (double v : p.shape.amplitudes_raw)
      if (!std::isfinite(v)) return false;
  }
  // Phases of zero-amplitude coefficients are never evaluated.
  for (int k = 0; k < k_active; ++k) {
    bool live_term = p.shape.frozen_rbar ? (*p.shape.frozen_rbar)[k] != 0.0
                                         : p.shape.amplitudes_raw[k] != 0.0;
    if (live_term && !std::isfinite(p.shape.phases[k])) return false;
  }
  return true;
}

}  // namespace

std::optional<Vec3> project_point(const Camera& cam, const Vec3& p,
                                  double near_clip) {
  Vec3 pc = cam.world_to_camera.topLeftCorner<3, 3>() * p +
            cam.world_to_camera.topRightCorner<3, 1>();
  if (pc[2] <= near_clip) return std::nullopt;
  if (cam.projection == Camera::Projection::Perspective) {
    return Vec3(cam.fx * pc[0] / pc[2] + cam.cx,
                cam.fy * pc[1] / pc[2] + cam.cy, pc[2]);
  }
  return Vec3(cam.fx * pc[0] + cam.cx, cam.fy * pc[1] + cam.cy, pc[2]);
}

std::optional<SurfelHit> intersect(double pixel_x, double pixel_y,
                                   const ProjectedPrimitive& prim,
                                   double near_clip) {
  // h_u = (WH)^T (-1, 0, 0, x_p), h_v = (WH)^T (0, -1, 0, y_p); the local
  // point (u, v, 1, 1) must lie on both pixel planes.
  double hu[4], hv[4];
  for (int j = 0; j < 4; ++j) {
    hu[j] = pixel_x * prim.row_w[j] - prim.row_x[j];
    hv[j] = pixel_y * prim.row_w[j] - prim.row_y[j];
  }
  double den = hu[0] * hv[1] - hu[1] * hv[0];
  if (std::abs(den) < 1e-12) return std::nullopt;
  SurfelHit hit;
  hit.u = (hu[1] * hv[3] - hu[3] * hv[1]) / den;
  hit.v = (hu[3] * hv[0] - hu[0] * hv[3]) / den;
  hit.depth = prim.row_d[0] * hit.u + prim.row_d[1] * hit.v + prim.row_d[3];
  if (hit.depth <= near_clip) return std::nullopt;
  return hit;
}

PixelAlpha pixel_alpha(double opacity, double sigma,
                       const std::array<std::complex<double>, kFreqCount>& coeffs,
                       int k_active, double u, double v) {
  PixelAlpha out;
  out.rho = std::sqrt(u * u + v * v);
  if (out.rho == 0.0) {
    // Window maximum at the center; theta is undefined but unused.
    out.boundary = std::abs(coeffs[0]);
    out.x = 1.0;
    out.alpha = opacity;
    return out;
  }
  out.cos_theta = u / out.rho;
  out.sin_theta = v / out.rho;
  out.boundary = std::abs(
      boundary_polynomial(coeffs, k_active, out.cos_theta, out.sin_theta));
  if (out.boundary <= 0.0) {
    out.x = -1.0;
    return out;  // zero-width lobe direction
  }
  out.x = (out.boundary - out.rho) / out.boundary;
  if (out.x <= 0.0) return out;  // on or outside the boundary
  out.alpha = opacity * std::pow(out.x, sigma);
  return out;
}

PixelAlpha pixel_alpha(const Primitive& prim, double u, double v,
                       int k_active) {
  auto coeffs = shape_coefficients(prim.shape, k_active);
  return pixel_alpha(prim.opacity(), prim.shape.sharpness(), coeffs, k_active,
                     u, v);
}

TileBinning bin_tiles(const SceneModel& scene, const Camera& cam,
                      const RenderConfig& cfg, int k_active) {
  TileBinning bin;
  bin.tile_size = cfg.tile_size;
  bin.tiles_x = (cam.width + cfg.tile_size - 1) / cfg.tile_size;
  bin.tiles_y = (cam.height + cfg.tile_size - 1) / cfg.tile_size;
  bin.tiles.assign(static_cast<std::size_t>(bin.tiles_x) * bin.tiles_y, {});

  const Mat4 screen = world_to_screen(cam);
  const Mat3 cam_rot = cam.world_to_camera.topLeftCorner<3, 3>();
  const Vec3 cam_t = cam.world_to_camera.topRightCorner<3, 1>();
  const Vec3 cam_pos = cam.position();
  const bool persp = cam.projection == Camera::Projection::Perspective;

  for (std::uint32_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    if (!all_finite(p, k_active, scene.sh_degree_active)) {
      throw NumericalError("non-finite parameter in primitive " +
                           std::to_string(i));
    }
    Vec3 pc = cam_rot * p.center + cam_t;
    if (pc[2] <= cfg.near_clip) continue;

    double radius = p.shape.circumradius();
    // Bound the projected footprint by the camera-space AABB of the
    // circumscribing sphere; the corner projections bound the disc.
    double x_min = 1e30, x_max = -1e30, y_min = 1e30, y_max = -1e30;
    for (int corner = 0; corner < 8; ++corner) {
      Vec3 q = pc + radius * Vec3(corner & 1 ? 1 : -1, corner & 2 ? 1 : -1,
                                  corner & 4 ? 1 : -1);
      double zq = persp ? std::max(q[2], cfg.near_clip) : 1.0;
      double px = persp ? cam.fx * q[0] / zq + cam.cx : cam.fx * q[0] + cam.cx;
      double py = persp ? cam.fy * q[1] / zq + cam.cy : cam.fy * q[1] + cam.cy;
      x_min = std::min(x_min, px);
      x_max = std::max(x_max, px);
      y_min = std::min(y_min, py);
      y_max = std::max(y_max, py);
    }
    if (x_max < 0 || y_max < 0 || x_min >= cam.width || y_min >= cam.height)
      continue;

    ProjectedPrimitive proj;
    proj.id = i;
    Mat4 a = screen * surfel_to_world(p);
    for (int j = 0; j < 4; ++j) {
      proj.row_x[j] = a(0, j);
      proj.row_y[j] = a(1, j);
      proj.row_d[j] = a(2, j);
      proj.row_w[j] = a(3, j);
    }
    proj.z_center = pc[2];
    proj.x_min = x_min;
    proj.x_max = x_max;
    proj.y_min = y_min;
    proj.y_max = y_max;
    proj.screen_extent = std::max(x_max - x_min, y_max - y_min);

    Vec3 dir = p.center - cam_pos;
    double dist = dir.norm();
    dir = dist > 0 ? Vec3(dir / dist) : Vec3(0, 0, 1);
    proj.color = sh_eval(p.sh, dir, scene.sh_degree_active);
    Vec3 t_w = tangent_frame(p.rotation).col(2);
    proj.normal_sign = t_w.dot(dir) > 0.0 ? -1.0 : 1.0;
    proj.normal = proj.normal_sign * t_w;
    proj.opacity = p.opacity();
    proj.sigma = p.shape.sharpness();
    proj.coeffs = shape_coefficients(p.shape, k_active);
    bin.projected.push_back(proj);
  }

  // Depth sort once (ties by id), then bin: per-tile lists stay sorted.
  std::vector<std::uint32_t> order(bin.projected.size());
  for (std::uint32_t j = 0; j < order.size(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto& pa = bin.projected[a];
    const auto& pb = bin.projected[b];
    if (pa.z_center != pb.z_center) return pa.z_center < pb.z_center;
    return pa.id < pb.id;
  });
  for (std::uint32_t j : order) {
    const auto& proj = bin.projected[j];
    int tx0 = std::max(0, static_cast<int>(std::floor(proj.x_min)) / cfg.tile_size);
    int ty0 = std::max(0, static_cast<int>(std::floor(proj.y_min)) / cfg.tile_size);
    int tx1 = std::min(bin.tiles_x - 1,
                       static_cast<int>(std::floor(proj.x_max)) / cfg.tile_size);
    int ty1 = std::min(bin.tiles_y - 1,
                       static_cast<int>(std::floor(proj.y_max)) / cfg.tile_size);
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        bin.tiles[static_cast<std::size_t>(ty) * bin.tiles_x + tx].push_back(j);
  }
  return bin;
}

RenderOutput render_with_binning(const SceneModel& scene, const Camera& cam,
                                 const RenderConfig& cfg, int k_active,
                                 const TileBinning& bin) {
  (void)scene;
  RenderOutput out;
  out.width = cam.width;
  out.height = cam.height;
  out.color = Image(cam.width, cam.height, 3);
  out.depth = Image(cam.width, cam.height, 1);
  out.normal = Image(cam.width, cam.height, 3);
  out.alpha_acc = Image(cam.width, cam.height, 1);
  out.blend.assign(static_cast<std::size_t>(cam.width) * cam.height, {});

  std::size_t n_tiles = bin.tiles.size();
  parallel_for(n_tiles, cfg.num_threads, [&](std::size_t tile) {
    int tx = static_cast<int>(tile) % bin.tiles_x;
    int ty = static_cast<int>(tile) / bin.tiles_x;
    int x0 = tx * bin.tile_size;
    int y0 = ty * bin.tile_size;
    int x1 = std::min(cam.width, x0 + bin.tile_size);
    int y1 = std::min(cam.height, y0 + bin.tile_size);
    const auto& list = bin.tiles[tile];

    for (int py = y0; py < y1; ++py) {
      for (int px = x0; px < x1; ++px) {
        double sx = px + 0.5, sy = py + 0.5;  // pixel center
        double transmittance = 1.0;
        Vec3 color = Vec3::Zero();
        double depth = 0.0;
        Vec3 normal = Vec3::Zero();
        auto& records = out.blend[out.pixel_index(px, py)];

        for (std::uint32_t j : list) {
          const ProjectedPrimitive& proj = bin.projected[j];
          auto hit = intersect(sx, sy, proj, cfg.near_clip);
          if (!hit) continue;
          PixelAlpha pa = pixel_alpha(proj.opacity, proj.sigma, proj.coeffs,
                                      k_active, hit->u, hit->v);
          if (pa.alpha < cfg.alpha_cutoff) continue;
          double omega = pa.alpha * transmittance;
          color += omega * proj.color;
          depth += omega * hit->depth;
          normal += omega * proj.normal;
          records.push_back({proj.id, pa.alpha, transmittance, hit->depth,
                             hit->u, hit->v});
          transmittance *= 1.0 - pa.alpha;
          if (transmittance < cfg.transmittance_floor) break;
        }

        color += transmittance * cfg.background;
        for (int c = 0; c < 3; ++c) {
          out.color.at(px, py, c) = color[c];
          out.normal.at(px, py, c) = normal[c];
        }
        out.depth.at(px, py, 0) = depth;
        out.alpha_acc.at(px, py, 0) = 1.0 - transmittance;
      }
    }
  });
  return out;
}

RenderOutput render(const SceneModel& scene, const Camera& cam,
                    const RenderConfig& cfg, int k_active) {
  TileBinning bin = bin_tiles(scene, cam, cfg, k_active);
  return render_with_binning(scene, cam, cfg, k_active, bin);
}

}  // namespace fsplat
