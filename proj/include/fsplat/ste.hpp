#pragma once

#include "fsplat/common.hpp"

namespace fsplat {

struct SteConfig {
  double beta = 3.0;
  double gamma = 0.5;
};

struct SteEval {
  double value = 0.0;
  double d_dx = 0.0;
  double d_dsigma = 0.0;
};

// Smooth backward surrogate for the hard power window:
//   w(x) = sigmoid(bx) * clamp(softplus(bx)/b, 0, 1)^sigma + g * sigmoid(bx)
// The additive sigmoid keeps d/dx nonzero outside the boundary (x < 0), so
// shape coefficients keep receiving gradient there. The clamp uses
// sub-gradient 0 once softplus(bx)/b saturates at 1.
inline SteEval ste_window(double x, double sigma, const SteConfig& cfg) {
  const double bx = cfg.beta * x;
  const double sig = sigmoid(bx);
  const double dsig = cfg.beta * sig * (1.0 - sig);
  double s = softplus(bx) / cfg.beta;
  double ds_dx = sig;
  if (s >= 1.0) {
    s = 1.0;
    ds_dx = 0.0;
  }
  SteEval out;
  if (s <= 0.0) {
    out.value = cfg.gamma * sig;
    out.d_dx = cfg.gamma * dsig;
    return out;
  }
  const double pow_s = std::pow(s, sigma);
  out.value = sig * pow_s + cfg.gamma * sig;
  out.d_dx = dsig * pow_s + sigma * sig * ds_dx * std::pow(s, sigma - 1.0) +
             cfg.gamma * dsig;
  out.d_dsigma = sig * pow_s * std::log(s);
  return out;
}

}  // namespace fsplat
