#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "fsplat/checkpoint.hpp"
#include "fsplat/config.hpp"
#include "fsplat/gradcheck.hpp"
#include "fsplat/init.hpp"
#include "fsplat/lod.hpp"
#include "fsplat/losses.hpp"
#include "fsplat/synth.hpp"
#include "fsplat/trainer.hpp"

namespace fs = std::filesystem;
using namespace fsplat;

namespace {

int run_synth(const std::string& out_dir, int count, int views, int size,
              std::uint64_t seed, const std::string& family) {
  SynthSpec spec;
  spec.primitive_count = count;
  spec.train_views = views;
  spec.width = spec.height = size;
  spec.seed = seed;
  if (family == "discs") {
    spec.family = ShapeFamily::Discs;
  } else if (family == "lobed") {
    spec.family = ShapeFamily::Lobed;
  } else if (family == "mixed") {
    spec.family = ShapeFamily::Mixed;
  } else {
    throw ConfigError("family must be discs, lobed or mixed");
  }
  synth_scene_to_dir(spec, out_dir);
  std::cout << "wrote dataset to " << out_dir << "\n";
  return 0;
}

SceneModel scene_from_args(const std::string& scene_path, const Dataset& data,
                           const AppConfig& cfg) {
  std::vector<Vec3> points = data.points;
  std::vector<Vec3> colors = data.point_colors;
  if (!scene_path.empty()) {
    if (scene_path.size() > 5 &&
        scene_path.substr(scene_path.size() - 5) == ".ckpt") {
      return load_checkpoint(scene_path).scene;
    }
    load_points_file(scene_path, points, colors);
  }
  if (points.empty()) {
    throw DataError("no initialization points: pass --scene or list a point "
                    "cloud in the manifest");
  }
  InitConfig init_cfg;
  init_cfg.seed = cfg.train.seed;
  SceneModel scene = init_from_points(points, colors, init_cfg);
  scene.budget_max = cfg.budget_max > 0 ? cfg.budget_max : points.size();
  if (!cfg.indoor && cfg.dome_fraction > 0.0) {
    int dome_n = static_cast<int>(cfg.dome_fraction * scene.budget_max);
    if (dome_n > 0) {
      double extent = 0.0;
      for (const auto& p : points) extent = std::max(extent, p.norm());
      add_dome(scene, dome_n, std::max(extent * 3.0, 1.0), Vec3::Zero(),
               init_cfg);
    }
  }
  return scene;
}

int run_train(const std::string& config_path, const std::string& scene_path,
              const std::string& images_dir, const std::string& out_dir,
              std::uint64_t seed, bool seed_set, bool indoor) {
  AppConfig cfg = load_config(config_path, indoor);
  if (seed_set) cfg.train.seed = seed;
  Dataset data = load_dataset((fs::path(images_dir) / "manifest.json").string());
  SceneModel scene = scene_from_args(scene_path, data, cfg);

  TrainOptions opts;
  opts.train = cfg.train;
  opts.loss = cfg.loss;
  opts.densify = cfg.densify;
  opts.render = cfg.render;
  opts.ste = cfg.ste;
  opts.enable_densify = cfg.enable_densify;
  opts.out_dir = out_dir;
  TrainResult result = train(std::move(scene), data, opts);
  std::cout << "trained " << result.scene.live_count() << " primitives, final "
            << "loss " << (result.log.empty() ? 0.0 : result.log.back().total)
            << "\n";
  return 0;
}

int run_render(const std::string& ckpt, const std::string& manifest,
               int camera_index, int k, const std::string& out_path) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  Dataset data = load_dataset(manifest, /*load_images=*/false);
  if (camera_index < 0 || camera_index >= static_cast<int>(data.views.size())) {
    throw DataError("camera index out of range");
  }
  if (k < 1 || k > kFreqCount) throw ConfigError("k must be in [1, 6]");
  RenderConfig rcfg;
  RenderOutput out =
      render(loaded.scene, data.views[camera_index].camera, rcfg, k);
  save_png(out_path, out.color);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_lod_sweep(const std::string& ckpt, const std::string& manifest,
                  const std::string& out_dir, const std::string& ks_str) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  Dataset data = load_dataset(manifest);
  std::vector<int> ks;
  if (!ks_str.empty()) {
    std::stringstream ss(ks_str);
    std::string item;
    while (std::getline(ss, item, ',')) ks.push_back(std::stoi(item));
  }
  fs::create_directories(out_dir);
  RenderConfig rcfg;
  LodReport report = lod_sweep(loaded.scene, data, rcfg, ks,
                               (fs::path(out_dir) / "renders").string());
  std::ofstream csv(fs::path(out_dir) / "lod_report.csv");
  csv << report.to_csv();
  std::cout << report.to_csv();
  return 0;
}

int run_gradcheck(int prims, int size, std::uint64_t seed,
                  const std::string& mode, const std::string& loss,
                  const std::string& csv_path) {
  SynthSpec spec;
  spec.primitive_count = prims;
  spec.train_views = 1;
  spec.test_views = 0;
  spec.width = spec.height = size;
  spec.seed = seed;
  spec.family = ShapeFamily::Mixed;
  SynthResult synth = synth_scene(spec);

  // Check gradients of a perturbed copy against the clean render.
  SceneModel noisy = synth.ground_truth;
  Rng rng = Rng::stream(seed, RngStream::Synth, 99);
  for (auto& p : noisy.primitives) {
    p.center += Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.01;
    p.opacity_raw += 0.05 * rng.normal();
    for (auto& a : p.shape.amplitudes_raw) a += 0.01 * rng.normal();
  }

  GradCheckOptions opts;
  opts.mode = mode == "ste" ? WindowMode::SmoothSurrogate : WindowMode::Hard;
  opts.loss = loss == "l1" ? CheckLoss::L1 : CheckLoss::L2;
  RenderConfig rcfg;
  GradCheckReport report =
      finite_diff_check(noisy, synth.dataset.views[0].camera, rcfg,
                        synth.dataset.views[0].image, opts);
  std::cout << report.to_text();
  if (!csv_path.empty()) {
    std::ofstream f(csv_path);
    f << report.to_csv();
  }
  return 0;
}

std::vector<std::string> image_list(const std::string& path) {
  std::vector<std::string> out;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() == ".png") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
  } else {
    out.push_back(path);
  }
  return out;
}

int run_metrics(const std::string& pred, const std::string& target,
                const std::string& csv_path) {
  auto preds = image_list(pred);
  auto targets = image_list(target);
  if (preds.size() != targets.size() || preds.empty()) {
    throw DataError("prediction and target image counts differ or are empty");
  }
  std::ostringstream csv;
  csv << "name,psnr_db,ssim\n";
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Image a = load_png(preds[i]);
    Image b = load_png(targets[i]);
    double p = psnr(a, b);
    double s = ssim(a, b);
    psnr_sum += p;
    ssim_sum += s;
    csv << fs::path(preds[i]).filename().string() << "," << p << "," << s
        << "\n";
  }
  csv << "mean," << psnr_sum / preds.size() << "," << ssim_sum / preds.size()
      << "\n";
  std::cout << csv.str();
  if (!csv_path.empty()) {
    std::ofstream f(csv_path);
    f << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fourier-boundary surfel splatting"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "synth_scene";
  int synth_count = 64, synth_views = 8, synth_size = 128;
  std::uint64_t synth_seed = 0;
  std::string synth_family = "lobed";
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--count", synth_count, "primitive count");
  synth->add_option("--views", synth_views, "training views");
  synth->add_option("--size", synth_size, "image side length");
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--family", synth_family, "discs | lobed | mixed");

  auto* tr = app.add_subcommand("train", "optimize a scene");
  std::string tr_config, tr_scene, tr_images, tr_out = "run";
  std::uint64_t tr_seed = 0;
  bool tr_indoor = false, tr_outdoor = false;
  tr->add_option("--config", tr_config, "JSON config file");
  tr->add_option("--scene", tr_scene, "point cloud (.txt) or checkpoint (.ckpt)");
  tr->add_option("--images", tr_images, "dataset directory with manifest.json")
      ->required();
  tr->add_option("--out", tr_out, "output directory");
  auto* seed_opt = tr->add_option("--seed", tr_seed, "random seed");
  tr->add_flag("--indoor", tr_indoor, "indoor scene-type defaults");
  tr->add_flag("--outdoor", tr_outdoor, "outdoor scene-type defaults");

  auto* rd = app.add_subcommand("render", "render a checkpoint");
  std::string rd_ckpt, rd_manifest, rd_out = "render.png";
  int rd_cam = 0, rd_k = kFreqCount;
  rd->add_option("--checkpoint", rd_ckpt)->required();
  rd->add_option("--manifest", rd_manifest)->required();
  rd->add_option("--camera-index", rd_cam);
  rd->add_option("--k", rd_k, "active frequency count");
  rd->add_option("--out", rd_out);

  auto* lod = app.add_subcommand("lod-sweep", "rate/distortion sweep over k");
  std::string lod_ckpt, lod_manifest, lod_out = "lod", lod_ks;
  lod->add_option("--checkpoint", lod_ckpt)->required();
  lod->add_option("--manifest", lod_manifest)->required();
  lod->add_option("--out", lod_out);
  lod->add_option("--ks", lod_ks, "comma-separated k values (default 1..6)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference validation");
  int gc_prims = 16, gc_size = 64;
  std::uint64_t gc_seed = 3;
  std::string gc_mode = "hard", gc_loss = "l2", gc_csv;
  gc->add_option("--prims", gc_prims);
  gc->add_option("--size", gc_size);
  gc->add_option("--seed", gc_seed);
  gc->add_option("--mode", gc_mode, "hard | ste");
  gc->add_option("--loss", gc_loss, "l2 | l1");
  gc->add_option("--csv", gc_csv, "write report CSV here");

  auto* mt = app.add_subcommand("metrics", "PSNR/SSIM between image sets");
  std::string mt_pred, mt_target, mt_csv;
  mt->add_option("--pred", mt_pred)->required();
  mt->add_option("--target", mt_target)->required();
  mt->add_option("--csv", mt_csv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return run_synth(synth_out, synth_count, synth_views, synth_size,
                       synth_seed, synth_family);
    }
    if (tr->parsed()) {
      if (tr_indoor && tr_outdoor) {
        throw ConfigError("--indoor and --outdoor are mutually exclusive");
      }
      return run_train(tr_config, tr_scene, tr_images, tr_out, tr_seed,
                       seed_opt->count() > 0, tr_indoor);
    }
    if (rd->parsed()) {
      return run_render(rd_ckpt, rd_manifest, rd_cam, rd_k, rd_out);
    }
    if (lod->parsed()) {
      return run_lod_sweep(lod_ckpt, lod_manifest, lod_out, lod_ks);
    }
    if (gc->parsed()) {
      return run_gradcheck(gc_prims, gc_size, gc_seed, gc_mode, gc_loss,
                           gc_csv);
    }
    if (mt->parsed()) {
      return run_metrics(mt_pred, mt_target, mt_csv);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
