#pragma once

#include <cstdint>
#include <string>

#include "fsplat/adam.hpp"
#include "fsplat/primitive.hpp"

namespace fsplat {

// Model file: one JSON header line, then per-primitive records of
// kPrimitiveScalars little-endian float32 (center, quaternion, opacity,
// SH, circumradius, amplitudes, phases, sharpness), then the declared
// extra sections (dome flags, optionally optimizer state for exact resume).
struct CheckpointExtra {
  int iteration = 0;
  std::uint64_t seed = 0;
  bool has_adam = false;
  AdamState adam;
};

void save_checkpoint(const std::string& path, const SceneModel& scene,
                     const CheckpointExtra* extra = nullptr);

struct LoadedCheckpoint {
  SceneModel scene;
  CheckpointExtra extra;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Rounds every stored parameter through float32. Applied at checkpoint
// iterations so a resumed run replays the uninterrupted trajectory bit for
// bit.
void quantize_to_checkpoint_precision(SceneModel& scene);

}  // namespace fsplat
