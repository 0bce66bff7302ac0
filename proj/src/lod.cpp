#include "fsplat/lod.hpp"

#include <filesystem>
#include <sstream>

#include "fsplat/losses.hpp"
#include "fsplat/parallel.hpp"

namespace fsplat {

std::size_t truncated_scalar_count(int k_active) {
  return static_cast<std::size_t>(58 + 2 * k_active);
}

std::string LodReport::to_csv() const {
  std::ostringstream os;
  os << "k_active,psnr_db,ssim,bytes_per_primitive,payload_bytes\n";
  for (const auto& r : rows) {
    os << r.k_active << "," << r.psnr_db << "," << r.ssim << ","
       << r.bytes_per_primitive << "," << r.payload_bytes << "\n";
  }
  return os.str();
}

LodReport lod_sweep(const SceneModel& scene, const Dataset& data,
                    const RenderConfig& cfg, const std::vector<int>& k_values,
                    const std::string& image_dir) {
  LodReport report;
  std::vector<int> ks = k_values;
  if (ks.empty()) {
    for (int k = 1; k <= kFreqCount; ++k) ks.push_back(k);
  }
  for (int k : ks) {
    if (k < 1 || k > kFreqCount) throw ConfigError("k_active out of range");
  }
  if (!image_dir.empty()) std::filesystem::create_directories(image_dir);

  for (int k : ks) {
    LodRow row;
    row.k_active = k;
    row.bytes_per_primitive = truncated_scalar_count(k) * sizeof(float);
    row.payload_bytes = row.bytes_per_primitive * scene.primitives.size();
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int n_views = 0;
    for (std::size_t vi = 0; vi < data.views.size(); ++vi) {
      const TrainView& view = data.views[vi];
      if (view.image.size() == 0) continue;
      RenderOutput out = render(scene, view.camera, cfg, k);
      psnr_sum += psnr(out.color, view.image);
      ssim_sum += ssim(out.color, view.image);
      ++n_views;
      if (!image_dir.empty()) {
        std::ostringstream name;
        name << image_dir << "/k" << k << "_view" << vi << ".png";
        save_png(name.str(), out.color);
      }
    }
    if (n_views == 0) throw DataError("no views with images to evaluate");
    row.psnr_db = psnr_sum / n_views;
    row.ssim = ssim_sum / n_views;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace fsplat
