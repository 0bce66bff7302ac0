#include "fsplat/shape.hpp"

#include <cmath>

namespace fsplat {

std::array<double, kFreqCount> normalize_amplitudes(
    const std::array<double, kFreqCount>& raw) {
  double sum_sq = 0.0;
  for (double a : raw) sum_sq += a * a;
  if (sum_sq == 0.0) {
    throw NumericalError("degenerate shape: all raw amplitudes are zero");
  }
  std::array<double, kFreqCount> rbar{};
  for (int k = 0; k < kFreqCount; ++k) rbar[k] = raw[k] * raw[k] / sum_sq;
  return rbar;
}

std::array<double, kFreqCount> FourierShape::normalized_amplitudes() const {
  if (frozen_rbar) return *frozen_rbar;
  return normalize_amplitudes(amplitudes_raw);
}

std::array<std::complex<double>, kFreqCount> shape_coefficients(
    const FourierShape& shape, int k_active) {
  auto rbar = shape.normalized_amplitudes();
  std::array<std::complex<double>, kFreqCount> coeffs{};
  for (int k = 0; k < k_active; ++k) {
    // Zero-amplitude terms contribute nothing; their phase is dead storage.
    if (rbar[k] != 0.0) coeffs[k] = std::polar(rbar[k], shape.phases[k]);
  }
  return coeffs;
}

std::complex<double> boundary_polynomial(
    const std::array<std::complex<double>, kFreqCount>& coeffs, int k_active,
    double cos_theta, double sin_theta) {
  const std::complex<double> w(cos_theta, sin_theta);
  std::complex<double> z = coeffs[k_active - 1];
  for (int k = k_active - 2; k >= 0; --k) {
    z = z * w + coeffs[k];
  }
  return z;
}

double boundary_radius(const FourierShape& shape, double cos_theta,
                       double sin_theta, int k_active) {
  auto coeffs = shape_coefficients(shape, k_active);
  return shape.circumradius() *
         std::abs(boundary_polynomial(coeffs, k_active, cos_theta, sin_theta));
}

double boundary_radius_naive(const FourierShape& shape, double theta,
                             int k_active) {
  auto rbar = shape.normalized_amplitudes();
  double re = 0.0, im = 0.0;
  for (int k = 0; k < k_active; ++k) {
    double arg = k * theta + shape.phases[k];
    re += rbar[k] * std::cos(arg);
    im += rbar[k] * std::sin(arg);
  }
  return shape.circumradius() * std::hypot(re, im);
}

FourierShape truncate_shape(const FourierShape& shape, int k_prime) {
  FourierShape out = shape;
  auto rbar = shape.normalized_amplitudes();
  for (int k = k_prime; k < kFreqCount; ++k) {
    rbar[k] = 0.0;
    out.amplitudes_raw[k] = 0.0;
  }
  out.frozen_rbar = rbar;
  return out;
}

}  // namespace fsplat
