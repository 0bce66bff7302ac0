#include "fsplat/sh.hpp"

namespace fsplat {

namespace {
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792,
                           0.31539156525252005, -1.0925484305920792,
                           0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,
                           -0.4570457994644658, 0.3731763325901154,
                           -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
}  // namespace

std::array<double, kShBases> sh_basis(const Vec3& dir, int degree_active) {
  std::array<double, kShBases> b{};
  std::array<Vec3, kShBases> unused;
  sh_basis_with_grad(dir, degree_active, b, unused);
  return b;
}

void sh_basis_with_grad(const Vec3& dir, int degree_active,
                        std::array<double, kShBases>& b,
                        std::array<Vec3, kShBases>& g) {
  const double x = dir[0], y = dir[1], z = dir[2];
  b.fill(0.0);
  for (auto& v : g) v.setZero();

  b[0] = kC0;
  if (degree_active < 1) return;

  b[1] = -kC1 * y;
  g[1] = Vec3(0, -kC1, 0);
  b[2] = kC1 * z;
  g[2] = Vec3(0, 0, kC1);
  b[3] = -kC1 * x;
  g[3] = Vec3(-kC1, 0, 0);
  if (degree_active < 2) return;

  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, yz = y * z, xz = x * z;
  b[4] = kC2[0] * xy;
  g[4] = kC2[0] * Vec3(y, x, 0);
  b[5] = kC2[1] * yz;
  g[5] = kC2[1] * Vec3(0, z, y);
  b[6] = kC2[2] * (2.0 * zz - xx - yy);
  g[6] = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
  b[7] = kC2[3] * xz;
  g[7] = kC2[3] * Vec3(z, 0, x);
  b[8] = kC2[4] * (xx - yy);
  g[8] = kC2[4] * Vec3(2 * x, -2 * y, 0);
  if (degree_active < 3) return;

  b[9] = kC3[0] * y * (3.0 * xx - yy);
  g[9] = kC3[0] * Vec3(6 * xy, 3 * xx - 3 * yy, 0);
  b[10] = kC3[1] * xy * z;
  g[10] = kC3[1] * Vec3(yz, xz, xy);
  b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  g[11] = kC3[2] * Vec3(-2 * xy, 4 * zz - xx - 3 * yy, 8 * yz);
  b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  g[12] = kC3[3] * Vec3(-6 * xz, -6 * yz, 6 * zz - 3 * xx - 3 * yy);
  b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  g[13] = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * xy, 8 * xz);
  b[14] = kC3[5] * z * (xx - yy);
  g[14] = kC3[5] * Vec3(2 * xz, -2 * yz, xx - yy);
  b[15] = kC3[6] * x * (xx - 3.0 * yy);
  g[15] = kC3[6] * Vec3(3 * xx - 3 * yy, -6 * xy, 0);
}

Vec3 sh_eval(const std::array<double, kShCoeffs>& sh, const Vec3& dir,
             int degree_active) {
  auto basis = sh_basis(dir, degree_active);
  int n = (degree_active + 1) * (degree_active + 1);
  Vec3 rgb(0.5, 0.5, 0.5);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < n; ++i) rgb[c] += sh[c * kShBases + i] * basis[i];
    if (rgb[c] < 0.0) rgb[c] = 0.0;
  }
  return rgb;
}

}  // namespace fsplat
