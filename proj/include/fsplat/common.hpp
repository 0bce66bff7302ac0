#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Number of Fourier frequencies per primitive (DC + 5 harmonics).
inline constexpr int kFreqCount = 6;
// Spherical harmonics: 3 channels x 16 real basis functions (degree <= 3).
inline constexpr int kShCoeffs = 48;
inline constexpr int kShBases = 16;
// Floor added to softplus(sharpness_raw) so sigma stays strictly positive.
inline constexpr double kSigmaEps = 1e-3;

// Scalars stored per primitive: 3 center + 4 quat + 1 opacity + 48 SH
// + 1 circumradius + K amplitudes + K phases + 1 sharpness.
inline constexpr int kPrimitiveScalars = 58 + 2 * kFreqCount;

// CLI exit codes: 0 ok, 2 config, 3 data, 4 numerical.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Inverse of softplus; input must be > 0.
inline double inverse_softplus(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace fsplat
