#pragma once

#include <array>
#include <complex>
#include <optional>

#include "fsplat/common.hpp"

namespace fsplat {

// Closed boundary r(theta) = R * |sum_k c_k e^{ik theta}| with complex
// coefficients c_k = rbar_k e^{i phi_k}. Squared-L1 normalization of the
// amplitudes guarantees sum_k rbar_k = 1 and hence r(theta) <= R.
struct FourierShape {
  double circumradius_raw = 0.0;  // R = exp(circumradius_raw)
  std::array<double, kFreqCount> amplitudes_raw{};
  std::array<double, kFreqCount> phases{};
  double sharpness_raw = 0.0;  // sigma = softplus(sharpness_raw) + kSigmaEps

  // Set by truncation: pins the normalized amplitudes so retained
  // coefficients stay bit-identical to the trained ones.
  std::optional<std::array<double, kFreqCount>> frozen_rbar;

  double circumradius() const { return std::exp(circumradius_raw); }
  double sharpness() const { return softplus(sharpness_raw) + kSigmaEps; }
  std::array<double, kFreqCount> normalized_amplitudes() const;
};

// Squared-L1 normalization: rbar_k = raw_k^2 / sum raw^2.
// Throws NumericalError when every entry is zero.
std::array<double, kFreqCount> normalize_amplitudes(
    const std::array<double, kFreqCount>& raw);

// Complex coefficients c_k for k < k_active from normalized amplitudes.
std::array<std::complex<double>, kFreqCount> shape_coefficients(
    const FourierShape& shape, int k_active);

// Horner evaluation of the boundary polynomial at w = (cos, sin);
// returns z0 with r(theta) = R * |z0|.
std::complex<double> boundary_polynomial(
    const std::array<std::complex<double>, kFreqCount>& coeffs, int k_active,
    double cos_theta, double sin_theta);

// Boundary radius in world units, evaluated by the Horner recurrence.
double boundary_radius(const FourierShape& shape, double cos_theta,
                       double sin_theta, int k_active);

// Direct summation oracle: R * |sum rbar_k e^{i(k theta + phi_k)}| with
// per-term transcendentals. Kept independent of the Horner path.
double boundary_radius_naive(const FourierShape& shape, double theta,
                             int k_active);

// Zeroes the normalized amplitudes at and above k_prime without
// re-normalizing, so the retained boundary terms are unchanged.
FourierShape truncate_shape(const FourierShape& shape, int k_prime);

}  // namespace fsplat
