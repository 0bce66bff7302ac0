#pragma once

#include <string>
#include <vector>

#include "fsplat/dataset.hpp"
#include "fsplat/rasterize.hpp"

namespace fsplat {

struct LodRow {
  int k_active = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::size_t bytes_per_primitive = 0;
  std::size_t payload_bytes = 0;
};

struct LodReport {
  std::vector<LodRow> rows;
  std::string to_csv() const;
};

// Scalars a truncated checkpoint carries per primitive: everything except
// the dropped amplitude/phase pairs.
std::size_t truncated_scalar_count(int k_active);

// Renders every non-held-out view at each k (no retraining, no
// re-normalization) and reports quality against the dataset images plus the
// truncated payload size. Optionally writes one PNG per (k, view).
LodReport lod_sweep(const SceneModel& scene, const Dataset& data,
                    const RenderConfig& cfg, const std::vector<int>& k_values,
                    const std::string& image_dir = "");

}  // namespace fsplat
