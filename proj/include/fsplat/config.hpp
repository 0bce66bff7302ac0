#pragma once

#include <string>

#include "fsplat/trainer.hpp"

namespace fsplat {

struct AppConfig {
  TrainConfig train;
  LossConfig loss;
  DensifyConfig densify;
  RenderConfig render;
  SteConfig ste;
  bool indoor = false;
  std::size_t budget_max = 0;     // 0: one primitive per input point
  double dome_fraction = 0.05;    // outdoor background dome, share of budget
  bool enable_densify = true;
};

// Defaults for the chosen scene type.
AppConfig default_config(bool indoor);

// JSON file mirroring the config structs; unknown keys are rejected.
// Values in the file override the scene-type defaults.
AppConfig load_config(const std::string& path, bool indoor);

}  // namespace fsplat
