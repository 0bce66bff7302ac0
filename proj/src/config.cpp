#include "fsplat/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace fsplat {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown config key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void get(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

AppConfig default_config(bool indoor) {
  AppConfig cfg;
  cfg.indoor = indoor;
  cfg.densify.indoor = indoor;
  if (indoor) {
    cfg.loss.lambda_dssim = 0.25;
    cfg.loss.lambda_dist = 1.0;
    cfg.loss.lambda_normal = 0.0001;
    cfg.train.opacity_lr = 0.05;
    cfg.densify.lobe_split_extent_px = 50;
    cfg.dome_fraction = 0.0;
  } else {
    cfg.loss.lambda_dssim = 0.20;
    cfg.loss.lambda_dist = 0.0;
    cfg.loss.lambda_normal = 0.05;
    cfg.train.opacity_lr = 0.014;
    cfg.densify.lobe_split_extent_px = 100;
    cfg.dome_fraction = 0.05;
  }
  return cfg;
}

AppConfig load_config(const std::string& path, bool indoor) {
  AppConfig cfg = default_config(indoor);
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    f >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }

  check_keys(doc,
             {"scene_type", "train", "loss", "densify", "render", "ste",
              "budget_max", "dome_fraction", "enable_densify"},
             "config root");
  if (doc.contains("scene_type")) {
    const std::string st = doc["scene_type"].get<std::string>();
    if (st != "indoor" && st != "outdoor") {
      throw ConfigError("scene_type must be 'indoor' or 'outdoor'");
    }
    cfg = default_config(st == "indoor");
  }
  get(doc, "budget_max", cfg.budget_max);
  get(doc, "dome_fraction", cfg.dome_fraction);
  get(doc, "enable_densify", cfg.enable_densify);

  if (doc.contains("train")) {
    const json& t = doc["train"];
    check_keys(t,
               {"iterations", "pos_lr_init", "pos_lr_final", "sh_dc_lr",
                "sh_rest_lr", "amplitude_lr", "phase_lr", "circumradius_lr",
                "rotation_lr", "sharpness_lr", "opacity_lr", "adam_epsilon",
                "sgld_lr", "freq_unfreeze_iter", "sh_interval", "seed",
                "spatial_lr_scale", "lambda_scale", "checkpoint_interval"},
               "train");
    get(t, "iterations", cfg.train.iterations);
    get(t, "pos_lr_init", cfg.train.pos_lr_init);
    get(t, "pos_lr_final", cfg.train.pos_lr_final);
    get(t, "sh_dc_lr", cfg.train.sh_dc_lr);
    get(t, "sh_rest_lr", cfg.train.sh_rest_lr);
    get(t, "amplitude_lr", cfg.train.amplitude_lr);
    get(t, "phase_lr", cfg.train.phase_lr);
    get(t, "circumradius_lr", cfg.train.circumradius_lr);
    get(t, "rotation_lr", cfg.train.rotation_lr);
    get(t, "sharpness_lr", cfg.train.sharpness_lr);
    get(t, "opacity_lr", cfg.train.opacity_lr);
    get(t, "adam_epsilon", cfg.train.adam_epsilon);
    get(t, "sgld_lr", cfg.train.sgld_lr);
    get(t, "freq_unfreeze_iter", cfg.train.freq_unfreeze_iter);
    get(t, "sh_interval", cfg.train.sh_interval);
    get(t, "seed", cfg.train.seed);
    get(t, "spatial_lr_scale", cfg.train.spatial_lr_scale);
    get(t, "lambda_scale", cfg.train.lambda_scale);
    get(t, "checkpoint_interval", cfg.train.checkpoint_interval);
    if (cfg.train.iterations < 1) throw ConfigError("iterations must be >= 1");
  }
  if (doc.contains("loss")) {
    const json& l = doc["loss"];
    check_keys(l,
               {"lambda_dssim", "lambda_dist", "lambda_normal",
                "regularizer_warmup_iters"},
               "loss");
    get(l, "lambda_dssim", cfg.loss.lambda_dssim);
    get(l, "lambda_dist", cfg.loss.lambda_dist);
    get(l, "lambda_normal", cfg.loss.lambda_normal);
    get(l, "regularizer_warmup_iters", cfg.loss.regularizer_warmup_iters);
    if (cfg.loss.lambda_dssim < 0 || cfg.loss.lambda_dist < 0 ||
        cfg.loss.lambda_normal < 0) {
      throw ConfigError("loss weights must be non-negative");
    }
  }
  if (doc.contains("densify")) {
    const json& d = doc["densify"];
    check_keys(d,
               {"interval", "start_iter", "end_iter", "tau_opacity",
                "tau_importance", "min_views", "tau_grad", "hydra_from_iter",
                "birth_rate", "clone_noise_eta", "max_extent_px",
                "lobe_split_extent_px", "lobe_samples", "lobe_segments"},
               "densify");
    get(d, "interval", cfg.densify.interval);
    get(d, "start_iter", cfg.densify.start_iter);
    get(d, "end_iter", cfg.densify.end_iter);
    get(d, "tau_opacity", cfg.densify.tau_opacity);
    get(d, "tau_importance", cfg.densify.tau_importance);
    get(d, "min_views", cfg.densify.min_views);
    get(d, "tau_grad", cfg.densify.tau_grad);
    get(d, "hydra_from_iter", cfg.densify.hydra_from_iter);
    get(d, "birth_rate", cfg.densify.birth_rate);
    get(d, "clone_noise_eta", cfg.densify.clone_noise_eta);
    get(d, "max_extent_px", cfg.densify.max_extent_px);
    get(d, "lobe_split_extent_px", cfg.densify.lobe_split_extent_px);
    get(d, "lobe_samples", cfg.densify.lobe_samples);
    get(d, "lobe_segments", cfg.densify.lobe_segments);
    if (cfg.densify.interval < 1) throw ConfigError("densify interval must be >= 1");
  }
  if (doc.contains("render")) {
    const json& r = doc["render"];
    check_keys(r,
               {"tile_size", "near_clip", "background", "alpha_cutoff",
                "transmittance_floor", "num_threads"},
               "render");
    get(r, "tile_size", cfg.render.tile_size);
    get(r, "near_clip", cfg.render.near_clip);
    if (r.contains("background")) {
      auto b = r["background"];
      if (!b.is_array() || b.size() != 3)
        throw ConfigError("background must be [r, g, b]");
      for (int c = 0; c < 3; ++c) cfg.render.background[c] = b[c].get<double>();
    }
    get(r, "alpha_cutoff", cfg.render.alpha_cutoff);
    get(r, "transmittance_floor", cfg.render.transmittance_floor);
    get(r, "num_threads", cfg.render.num_threads);
    if (cfg.render.tile_size < 1) throw ConfigError("tile_size must be >= 1");
    if (cfg.render.transmittance_floor <= 0 ||
        cfg.render.transmittance_floor >= 1) {
      throw ConfigError("transmittance_floor must be in (0, 1)");
    }
  }
  if (doc.contains("ste")) {
    const json& s = doc["ste"];
    check_keys(s, {"beta", "gamma"}, "ste");
    get(s, "beta", cfg.ste.beta);
    get(s, "gamma", cfg.ste.gamma);
    if (cfg.ste.beta <= 0 || cfg.ste.gamma < 0) {
      throw ConfigError("ste beta must be positive and gamma non-negative");
    }
  }
  return cfg;
}

}  // namespace fsplat
