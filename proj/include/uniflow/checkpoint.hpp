#pragma once

// Checkpoint directory: manifest.txt lists the model config and, per tensor,
// `tensor <name> f32 <rows>x<cols> <byte offset>`; weights.bin holds the raw
// little-endian float32 data. EMA tensors carry the `ema/` prefix, optimizer
// moments `adam_m/` and `adam_v/`.

#include <filesystem>
#include <optional>

#include "uniflow/trainer.hpp"

namespace uniflow {

struct Checkpoint {
  ModelParams<float> params;
  ModelParams<float> ema;
  std::optional<OptimizerState<float>> opt;
  int stages_done = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace uniflow
