#include "fsplat/losses.hpp"

#include <algorithm>
#include <cmath>

namespace fsplat {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    double d = i - kWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable zero-padded Gaussian blur of one channel plane.
void blur(const std::vector<double>& src, int w, int h,
          std::vector<double>& tmp, std::vector<double>& dst) {
  static const std::array<double, kWindow> kernel = gaussian_kernel();
  const int half = kWindow / 2;
  tmp.assign(src.size(), 0.0);
  dst.assign(src.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -half; t <= half; ++t) {
        int xx = x + t;
        if (xx < 0 || xx >= w) continue;
        acc += kernel[t + half] * src[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -half; t <= half; ++t) {
        int yy = y + t;
        if (yy < 0 || yy >= h) continue;
        acc += kernel[t + half] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      dst[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
}

void check_same_shape(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw DataError("image dimension mismatch");
  }
}

}  // namespace

double ssim(const Image& pred, const Image& target,
            std::vector<double>* d_pred) {
  check_same_shape(pred, target);
  const int w = pred.width, h = pred.height, ch = pred.channels;
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  if (d_pred) d_pred->assign(pred.size(), 0.0);

  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  std::vector<double> mu1, mu2, q1, q2, q12, tmp;
  std::vector<double> w1(plane), w2(plane), w3(plane);
  double total = 0.0;

  for (int c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = pred.data[i * ch + c];
      y[i] = target.data[i * ch + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    blur(x, w, h, tmp, mu1);
    blur(y, w, h, tmp, mu2);
    blur(xx, w, h, tmp, q1);
    blur(yy, w, h, tmp, q2);
    blur(xy, w, h, tmp, q12);

    for (std::size_t i = 0; i < plane; ++i) {
      const double m1 = mu1[i], m2 = mu2[i];
      const double s1 = q1[i] - m1 * m1;
      const double s2 = q2[i] - m2 * m2;
      const double s12 = q12[i] - m1 * m2;
      const double a1 = 2.0 * m1 * m2 + kC1;
      const double a2 = 2.0 * s12 + kC2;
      const double b1 = m1 * m1 + m2 * m2 + kC1;
      const double b2 = s1 + s2 + kC2;
      const double denom = b1 * b2;
      const double s = a1 * a2 / denom;
      total += s;
      if (d_pred) {
        // dS/d(mu1, q1, q12); blurred back below.
        w1[i] = 2.0 * m2 * (a2 - a1) / denom - 2.0 * m1 * s * (b2 - b1) / denom;
        w2[i] = -s / b2;
        w3[i] = 2.0 * a1 / denom;
      }
    }
    if (d_pred) {
      // The Gaussian window is symmetric, so the adjoint of each blur is
      // the same blur.
      blur(w1, w, h, tmp, mu1);
      blur(w2, w, h, tmp, q1);
      blur(w3, w, h, tmp, q12);
      const double inv_n = 1.0 / (static_cast<double>(plane) * ch);
      for (std::size_t i = 0; i < plane; ++i) {
        (*d_pred)[i * ch + c] =
            inv_n * (mu1[i] + 2.0 * x[i] * q1[i] + y[i] * q12[i]);
      }
    }
  }
  return total / (static_cast<double>(plane) * ch);
}

PhotometricResult photometric_loss(const Image& pred, const Image& target,
                                   double lambda_dssim) {
  check_same_shape(pred, target);
  PhotometricResult out;
  out.d_pred.assign(pred.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double l1 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred.data[i] - target.data[i];
    l1 += std::abs(d);
    out.d_pred[i] = (1.0 - lambda_dssim) * inv_n * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
  }
  out.l1 = l1 * inv_n;

  if (lambda_dssim > 0.0) {
    std::vector<double> d_ssim;
    double s = ssim(pred, target, &d_ssim);
    out.dssim = (1.0 - s) / 2.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      out.d_pred[i] += lambda_dssim * (-0.5) * d_ssim[i];
    }
  }
  out.value = (1.0 - lambda_dssim) * out.l1 + lambda_dssim * out.dssim;
  return out;
}

DistortionResult depth_distortion_loss(const RenderOutput& output) {
  DistortionResult out;
  const std::size_t n_px = output.blend.size();
  out.d_omega.resize(n_px);
  out.d_z.resize(n_px);
  const double inv_n = 1.0 / static_cast<double>(n_px);
  for (std::size_t p = 0; p < n_px; ++p) {
    const auto& records = output.blend[p];
    const std::size_t n = records.size();
    out.d_omega[p].assign(n, 0.0);
    out.d_z[p].assign(n, 0.0);
    if (n < 2) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = records[i].alpha * records[i].transmittance;
      const double zi = records[i].depth;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double wj = records[j].alpha * records[j].transmittance;
        const double zj = records[j].depth;
        const double diff = zi - zj;
        const double ad = std::abs(diff);
        out.value += 2.0 * wi * wj * ad * inv_n;
        const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
        out.d_omega[p][i] += 2.0 * wj * ad * inv_n;
        out.d_omega[p][j] += 2.0 * wi * ad * inv_n;
        out.d_z[p][i] += 2.0 * wi * wj * sgn * inv_n;
        out.d_z[p][j] -= 2.0 * wi * wj * sgn * inv_n;
      }
    }
  }
  return out;
}

NormalConsistencyResult normal_consistency_loss(const RenderOutput& output,
                                                const Camera& cam) {
  NormalConsistencyResult out;
  const int w = output.width, h = output.height;
  const std::size_t n_px = static_cast<std::size_t>(w) * h;
  out.d_normal.assign(3 * n_px, 0.0);
  out.d_depth.assign(n_px, 0.0);
  out.d_alpha.assign(n_px, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n_px);
  const double kMinAlpha = 0.1;
  const bool persp = cam.projection == Camera::Projection::Perspective;
  const Mat3 rot_t = cam.world_to_camera.topLeftCorner<3, 3>().transpose();

  // Back-projected position of pixel (x, y) at normalized depth d and its
  // derivative w.r.t. d.
  auto ray = [&](int x, int y) {
    double px = x + 0.5, py = y + 0.5;
    return persp ? Vec3((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0)
                 : Vec3(0.0, 0.0, 1.0);
  };
  auto lateral = [&](int x, int y, double d) {
    // Orthographic rays shift laterally with the pixel, not with depth.
    (void)d;
    double px = x + 0.5, py = y + 0.5;
    return Vec3((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 0.0);
  };

  std::vector<double> ndepth(n_px, 0.0), nvalid(n_px, 0.0);
  for (std::size_t i = 0; i < n_px; ++i) {
    double a = output.alpha_acc.data[i];
    if (a >= kMinAlpha) {
      ndepth[i] = output.depth.data[i] / a;
      nvalid[i] = 1.0;
    }
  }
  auto position = [&](int x, int y) {
    double d = ndepth[static_cast<std::size_t>(y) * w + x];
    return persp ? Vec3(d * ray(x, y)) : Vec3(lateral(x, y, d) + Vec3(0, 0, d));
  };

  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (nvalid[i] == 0.0) continue;
      const std::size_t ixm = i - 1, ixp = i + 1, iym = i - w, iyp = i + w;
      if (nvalid[ixm] == 0 || nvalid[ixp] == 0 || nvalid[iym] == 0 ||
          nvalid[iyp] == 0)
        continue;

      Vec3 dpdx = 0.5 * (position(x + 1, y) - position(x - 1, y));
      Vec3 dpdy = 0.5 * (position(x, y + 1) - position(x, y - 1));
      Vec3 cross = dpdx.cross(dpdy);
      double cn = cross.norm();
      if (cn < 1e-12) continue;
      Vec3 n_cam = -cross / cn;  // camera-facing
      Vec3 n_world = rot_t * n_cam;

      const Vec3 rend_n(output.normal.data[3 * i], output.normal.data[3 * i + 1],
                        output.normal.data[3 * i + 2]);
      const double a_acc = output.alpha_acc.data[i];
      out.value += inv_n * (a_acc - rend_n.dot(n_world));

      // d/d(alpha_acc) of the sum_i w_i term.
      out.d_alpha[i] += inv_n;
      for (int c = 0; c < 3; ++c) out.d_normal[3 * i + c] -= inv_n * n_world[c];

      // Chain into the four neighbouring depths through N.
      Vec3 d_nworld = -inv_n * rend_n;
      Vec3 d_ncam = rot_t.transpose() * d_nworld;
      // N = -cross/|cross|; the unit-vector Jacobian projects out the
      // radial component.
      Vec3 d_cross = (-d_ncam + n_cam * n_cam.dot(d_ncam)) / cn;
      // cross = dpdx x dpdy.
      Vec3 d_dpdx = dpdy.cross(d_cross);
      Vec3 d_dpdy = d_cross.cross(dpdx);
      struct Tap {
        int x, y;
        Vec3 g;
      };
      const Tap taps[4] = {{x + 1, y, 0.5 * d_dpdx},
                           {x - 1, y, -0.5 * d_dpdx},
                           {x, y + 1, 0.5 * d_dpdy},
                           {x, y - 1, -0.5 * d_dpdy}};
      for (const Tap& t : taps) {
        const std::size_t ti = static_cast<std::size_t>(t.y) * w + t.x;
        // position = ndepth * ray (persp) or lateral + (0,0,ndepth).
        double d_nd = persp ? t.g.dot(ray(t.x, t.y)) : t.g[2];
        // ndepth = depth / alpha.
        double a = output.alpha_acc.data[ti];
        out.d_depth[ti] += d_nd / a;
        out.d_alpha[ti] -= d_nd * output.depth.data[ti] / (a * a);
      }
    }
  }
  return out;
}

TotalLoss total_loss(const RenderOutput& output, const Image& target,
                     const Camera& cam, const LossConfig& cfg, int iteration) {
  TotalLoss out;
  PhotometricResult photo = photometric_loss(output.color, target, cfg.lambda_dssim);
  out.photometric = photo.value;
  out.l1 = photo.l1;
  out.value = photo.value;
  out.grads.d_color = std::move(photo.d_pred);

  const bool warm = iteration >= cfg.regularizer_warmup_iters;
  if (warm && cfg.lambda_dist > 0.0) {
    DistortionResult dist = depth_distortion_loss(output);
    out.distortion = dist.value;
    out.value += cfg.lambda_dist * dist.value;
    out.grads.d_rec_omega = std::move(dist.d_omega);
    out.grads.d_rec_z = std::move(dist.d_z);
    for (auto& v : out.grads.d_rec_omega)
      for (auto& g : v) g *= cfg.lambda_dist;
    for (auto& v : out.grads.d_rec_z)
      for (auto& g : v) g *= cfg.lambda_dist;
  }
  if (warm && cfg.lambda_normal > 0.0) {
    NormalConsistencyResult nc = normal_consistency_loss(output, cam);
    out.normal = nc.value;
    out.value += cfg.lambda_normal * nc.value;
    out.grads.d_normal = std::move(nc.d_normal);
    out.grads.d_depth = std::move(nc.d_depth);
    out.grads.d_alpha = std::move(nc.d_alpha);
    for (auto& g : out.grads.d_normal) g *= cfg.lambda_normal;
    for (auto& g : out.grads.d_depth) g *= cfg.lambda_normal;
    for (auto& g : out.grads.d_alpha) g *= cfg.lambda_normal;
  }
  return out;
}

double psnr(const Image& pred, const Image& target) {
  check_same_shape(pred, target);
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred.data[i] - target.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pred.size());
  if (mse <= 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace fsplat
