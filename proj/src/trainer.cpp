#include "fsplat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fsplat/checkpoint.hpp"
#include "fsplat/rasterize.hpp"

namespace fsplat {

double position_lr_at(const TrainConfig& cfg, int iteration) {
  if (cfg.iterations <= 1) return cfg.pos_lr_init;
  double t = static_cast<double>(iteration) / (cfg.iterations - 1);
  return cfg.pos_lr_init *
         std::pow(cfg.pos_lr_final / cfg.pos_lr_init, t);
}

double scene_extent(const Dataset& data) {
  if (data.views.empty()) return 1.0;
  Vec3 mean = Vec3::Zero();
  for (const auto& v : data.views) mean += v.camera.position();
  mean /= static_cast<double>(data.views.size());
  double radius = 0.0;
  for (const auto& v : data.views)
    radius = std::max(radius, (v.camera.position() - mean).norm());
  return std::max(radius * 1.1, 1e-3);
}

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch,
                                     const std::vector<std::size_t>& pool) {
  std::vector<std::size_t> order = pool;
  Rng rng = Rng::stream(seed, RngStream::ViewSampling, epoch);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = rng.uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void accumulate_stats(SceneModel& scene, const RenderOutput& output,
                      const TileBinning& bin, const GradBuffer& grads) {
  std::vector<std::uint8_t> seen(scene.primitives.size(), 0);
  for (const auto& records : output.blend) {
    for (const BlendRecord& rec : records) {
      double omega = rec.alpha * rec.transmittance;
      AccumStats& st = scene.stats[rec.prim];
      if (omega > st.max_blend_weight) st.max_blend_weight = omega;
      if (omega > 1e-4) seen[rec.prim] = 1;
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) ++scene.stats[i].view_count;
  for (const auto& proj : bin.projected) {
    AccumStats& st = scene.stats[proj.id];
    st.max_screen_extent = std::max(st.max_screen_extent, proj.screen_extent);
  }
  for (std::size_t i = 0; i < grads.abs_screen_grad.size(); ++i)
    scene.stats[i].abs_grad_accum += grads.abs_screen_grad[i];
}

void write_log_csv(const std::string& path,
                   const std::vector<TrainLogRow>& log) {
  std::ofstream f(path);
  f << "iteration,total,l1,photometric,distortion,normal,psnr,live,k_active,"
       "sh_degree\n";
  for (const auto& r : log) {
    f << r.iteration << "," << r.total << "," << r.l1 << "," << r.photometric
      << "," << r.distortion << "," << r.normal << "," << r.psnr << ","
      << r.live << "," << r.k_active << "," << r.sh_degree << "\n";
  }
}

void append_densify_log(const std::string& path, const DensifyReport& rep) {
  nlohmann::json j;
  j["iteration"] = rep.iteration;
  j["deaths"] = rep.deaths;
  j["relocations"] = rep.relocations;
  j["additions"] = rep.additions;
  j["scale_splits"] = rep.scale_splits;
  j["lobe_splits"] = rep.lobe_splits;
  j["pruned"] = rep.pruned;
  j["donors"] = rep.donor_ids;
  std::ofstream f(path, std::ios::app);
  f << j.dump() << "\n";
}

}  // namespace

TrainResult train(SceneModel scene, const Dataset& data,
                  const TrainOptions& opts) {
  const auto train_views = data.train_indices();
  if (train_views.empty()) throw DataError("dataset has no training views");
  scene.sync_aux();
  if (scene.budget_max == 0) scene.budget_max = scene.primitives.size();

  const TrainConfig& tc = opts.train;
  const double extent =
      tc.spatial_lr_scale > 0.0 ? tc.spatial_lr_scale : scene_extent(data);

  AdamConfig adam_cfg;
  adam_cfg.eps = tc.adam_epsilon;
  AdamState adam;
  adam.ensure(scene.primitives.size());

  TrainResult result;
  const bool writing = !opts.out_dir.empty();
  if (writing) std::filesystem::create_directories(opts.out_dir);
  const std::string densify_log =
      writing ? opts.out_dir + "/densify_events.jsonl" : "";

  const int views_per_epoch = static_cast<int>(train_views.size());
  std::vector<std::size_t> order;
  std::uint64_t order_epoch = ~0ULL;

  auto write_checkpoint = [&](int iteration, const std::string& name) {
    // Rounding happens at the checkpoint cadence whether or not the file is
    // written, so in-memory and resumed runs follow the same trajectory.
    quantize_to_checkpoint_precision(scene);
    if (!writing) return;
    CheckpointExtra extra;
    extra.iteration = iteration;
    extra.seed = tc.seed;
    extra.has_adam = true;
    extra.adam = adam;
    save_checkpoint(opts.out_dir + "/" + name, scene, &extra);
  };

  for (int iter = 0; iter < tc.iterations; ++iter) {
    // Schedules.
    scene.k_active = iter < tc.freq_unfreeze_iter ? 1 : kFreqCount;
    scene.sh_degree_active =
        std::min(3, tc.sh_interval > 0 ? iter / tc.sh_interval : 3);

    std::uint64_t epoch = static_cast<std::uint64_t>(iter) / views_per_epoch;
    if (epoch != order_epoch) {
      order = epoch_order(tc.seed, epoch, train_views);
      order_epoch = epoch;
    }
    const TrainView& view = data.views[order[iter % views_per_epoch]];

    TileBinning bin =
        bin_tiles(scene, view.camera, opts.render, scene.k_active);
    RenderOutput output = render_with_binning(scene, view.camera, opts.render,
                                              scene.k_active, bin);

    TotalLoss loss =
        total_loss(output, view.image, view.camera, opts.loss, iter);
    if (!std::isfinite(loss.value)) {
      write_checkpoint(iter, "diagnostic.ckpt");
      throw NumericalError("non-finite loss at iteration " +
                           std::to_string(iter));
    }

    GradBuffer grads;
    try {
      grads = backward(scene, view.camera, opts.render, output, loss.grads,
                       opts.ste, scene.k_active, WindowMode::SmoothSurrogate,
                       &bin);
    } catch (const NumericalError&) {
      write_checkpoint(iter, "diagnostic.ckpt");
      throw;
    }

    if (tc.lambda_scale > 0.0) {
      const double inv_n =
          1.0 / static_cast<double>(scene.primitives.size());
      for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        double radius = scene.primitives[i].shape.circumradius();
        grads.prims[i].circumradius_raw += tc.lambda_scale * radius * inv_n;
      }
    }

    accumulate_stats(scene, output, bin, grads);

    GroupLearningRates lrs;
    lrs.position = position_lr_at(tc, iter) * extent;
    lrs.rotation = tc.rotation_lr;
    lrs.opacity = tc.opacity_lr;
    lrs.sh_dc = tc.sh_dc_lr;
    lrs.sh_rest = tc.sh_rest_lr;
    lrs.amplitude = tc.amplitude_lr;
    lrs.phase = tc.phase_lr;
    lrs.circumradius = tc.circumradius_lr;
    lrs.sharpness = tc.sharpness_lr;

    FreezeMask freeze;
    freeze.active_freqs = scene.k_active;
    freeze.sh_bases =
        (scene.sh_degree_active + 1) * (scene.sh_degree_active + 1);

    adam_step(scene, grads, adam, lrs, adam_cfg, freeze);
    renormalize_rotations(scene);

    if (tc.sgld_lr > 0.0) {
      Rng noise = Rng::stream(tc.seed, RngStream::ShapeNoise, iter);
      sgld_shape_noise(scene, tc.sgld_lr, noise, scene.k_active);
    }

    for (auto& st : scene.stats) ++st.age_iters;

    if (opts.enable_densify && iter >= opts.densify.start_iter &&
        iter % opts.densify.interval == 0) {
      Rng reloc = Rng::stream(tc.seed, RngStream::Relocation, iter);
      DensifyReport rep =
          densify_step(scene, opts.densify, iter, reloc, views_per_epoch, &adam);
      result.densify_events.push_back(rep);
      if (writing) append_densify_log(densify_log, rep);
    }

    if (scene.live_count() > scene.budget_max) {
      throw NumericalError("primitive budget exceeded at iteration " +
                           std::to_string(iter));
    }

    TrainLogRow row;
    row.iteration = iter;
    row.total = loss.value;
    row.l1 = loss.l1;
    row.photometric = loss.photometric;
    row.distortion = loss.distortion;
    row.normal = loss.normal;
    row.psnr = psnr(output.color, view.image);
    row.live = scene.live_count();
    row.k_active = scene.k_active;
    row.sh_degree = scene.sh_degree_active;
    result.log.push_back(row);

    if (tc.checkpoint_interval > 0 && (iter + 1) % tc.checkpoint_interval == 0) {
      std::ostringstream name;
      name << "iter_" << (iter + 1) << ".ckpt";
      write_checkpoint(iter + 1, name.str());
    }
  }

  write_checkpoint(tc.iterations, "final.ckpt");
  if (writing) write_log_csv(opts.out_dir + "/train_log.csv", result.log);
  result.scene = std::move(scene);
  return result;
}

}  // namespace fsplat
