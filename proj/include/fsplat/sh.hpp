#pragma once

#include <array>

#include "fsplat/common.hpp"

namespace fsplat {

// Real spherical harmonics basis values for a unit direction, bands 0..3.
// Bands above degree_active are zero.
std::array<double, kShBases> sh_basis(const Vec3& dir, int degree_active);

// Basis values plus their Jacobian w.r.t. the (unnormalized-safe) direction
// components; used for the color gradient through the view direction.
void sh_basis_with_grad(const Vec3& dir, int degree_active,
                        std::array<double, kShBases>& basis,
                        std::array<Vec3, kShBases>& d_basis);

// View-dependent color: per-channel expansion + 0.5 offset, clamped at 0.
Vec3 sh_eval(const std::array<double, kShCoeffs>& sh, const Vec3& dir,
             int degree_active);

}  // namespace fsplat
