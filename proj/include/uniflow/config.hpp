#pragma once

// Run configuration: `key = value` lines, '#' comments, blank lines ignored.
// Keys: seed, scale, d_emb, n_blocks, n_heads, d_enc, repa_block,
// stage{1,2,3}.{steps,batch,lr,ratio}, cfg.w, cfg.steps.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "uniflow/sampler.hpp"
#include "uniflow/trainer.hpp"

namespace uniflow {

struct TrainConfig {
  std::uint64_t seed = 0;
  double scale = 0.01;
  ModelConfig model;
  std::array<StageConfig, 3> stages{desk_stage(1, 0.01), desk_stage(2, 0.01),
                                    desk_stage(3, 0.01)};
  double cfg_w = 2.0;
  int cfg_steps = 30;

  SamplerConfig sampler(std::uint64_t sample_seed) const { return {cfg_w, cfg_steps, sample_seed}; }
  void validate() const;
};

TrainConfig parse_config(std::istream& is, const std::string& source = "<config>");
TrainConfig load_config(const std::filesystem::path& path);
// Emits every key; parse_config(format_config(c)) reproduces c.
std::string format_config(const TrainConfig& c);

}  // namespace uniflow
