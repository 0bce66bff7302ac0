#pragma once

#include <vector>

#include "fsplat/backward.hpp"
#include "fsplat/image.hpp"
#include "fsplat/rasterize.hpp"

namespace fsplat {

struct LossConfig {
  double lambda_dssim = 0.2;
  double lambda_dist = 0.0;
  double lambda_normal = 0.05;
  int regularizer_warmup_iters = 3000;
};

// SSIM with an 11x11 Gaussian window (sigma 1.5), per channel, averaged
// over pixels and channels. When d_pred is non-null it receives dSSIM/dpred.
double ssim(const Image& pred, const Image& target,
            std::vector<double>* d_pred = nullptr);

struct PhotometricResult {
  double value = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  std::vector<double> d_pred;
};

// (1 - lambda) * mean-L1 + lambda * (1 - SSIM) / 2, with gradient.
PhotometricResult photometric_loss(const Image& pred, const Image& target,
                                   double lambda_dssim);

struct DistortionResult {
  double value = 0.0;
  std::vector<std::vector<double>> d_omega;  // aligned with blend log
  std::vector<std::vector<double>> d_z;
};

// Per pixel sum_{i,j} w_i w_j |z_i - z_j| with w_i = alpha_i T_i,
// averaged over all pixels.
DistortionResult depth_distortion_loss(const RenderOutput& output);

struct NormalConsistencyResult {
  double value = 0.0;
  std::vector<double> d_normal;  // H*W*3
  std::vector<double> d_depth;   // H*W
  std::vector<double> d_alpha;   // H*W
};

// Per pixel sum_i w_i (1 - n_i . N) where N comes from central finite
// differences of the alpha-normalized depth map, back-projected to camera
// space and rotated to world. Border and low-coverage pixels are skipped.
NormalConsistencyResult normal_consistency_loss(const RenderOutput& output,
                                                const Camera& cam);

// Weighted total with regularizers gated by the warm-up iteration; merges
// all per-buffer gradients into one packet for the backward pass.
struct TotalLoss {
  double value = 0.0;
  double photometric = 0.0;
  double l1 = 0.0;
  double distortion = 0.0;
  double normal = 0.0;
  LossGrads grads;
};

TotalLoss total_loss(const RenderOutput& output, const Image& target,
                     const Camera& cam, const LossConfig& cfg, int iteration);

// 10 * log10(1 / MSE), capped at 100 dB.
double psnr(const Image& pred, const Image& target);

}  // namespace fsplat
