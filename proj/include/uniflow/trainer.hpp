#pragma once

// Three-stage training: per-stage freezing, task-ratio batch mixing, AdamW
// with linear warmup and global-norm clipping, and an EMA shadow.

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "uniflow/objective.hpp"

namespace uniflow {

// Percentages for understanding : generation : text-only.
struct TaskRatio {
  double und = 0.0;
  double gen = 0.0;
  double text = 0.0;

  void validate() const;
  std::string str() const;  // "14:80:6"
  static TaskRatio parse(const std::string& s);
  bool operator==(const TaskRatio&) const = default;
};

struct StageConfig {
  int stage = 1;
  double lr = 1e-4;
  int warmup_steps = 0;
  int total_steps = 0;
  int batch_size = 32;
  TaskRatio ratio;
  TaskRatio early_ratio;  // applied for the first early_steps steps
  int early_steps = 0;

  TaskRatio ratio_at(int step) const;  // step is 1-based within the stage
  double lr_at(int step) const;        // lr * min(1, step / warmup)
  void validate() const;
};

// Full-scale schedule (stage 1..3).
StageConfig full_scale_stage(int stage);
// Desk schedule: explicit step counts and batch sizes, warmup and the
// stage-2 early phase multiplied by `scale`.
StageConfig desk_stage(int stage, double scale);

bool trainable(int stage, ParamGroup g);

// ---- optimizer ------------------------------------------------------------

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip = 1.0;
};

template <class T>
struct OptimizerState {
  ModelParams<T> m;
  ModelParams<T> v;
  long step = 0;
};

template <class T>
OptimizerState<T> make_optimizer_state(const ModelParams<T>& p);

template <class T>
double global_norm(const ModelParams<T>& g);

// Clips `grads` in place to global norm `clip`, then applies one AdamW
// update. Returns the pre-clip global norm. Throws on non-finite gradients
// without touching params or state.
template <class T>
double adamw_step(ModelParams<T>& params, ModelParams<T>& grads, OptimizerState<T>& state,
                  double lr, const AdamWConfig& cfg = {});

inline constexpr double kEmaRatio = 0.99;

template <class T>
void ema_update(ModelParams<T>& ema, const ModelParams<T>& params, double ratio = kEmaRatio);

// ---- batches --------------------------------------------------------------

struct BatchSlot {
  Task task = Task::und;
  int index = 0;  // into the corresponding corpus split
};

std::vector<BatchSlot> mix_batch(const Corpus& corpus, const TaskRatio& ratio, int batch_size,
                                 Rng& rng);

// ---- stages ---------------------------------------------------------------

struct TrainState {
  ModelParams<float> params;
  ModelParams<float> ema;
  OptimizerState<float> opt;
};

TrainState make_train_state(const ModelConfig& cfg, std::uint64_t seed);

struct StepLog {
  int step = 0;  // 1-based within the stage
  int stage = 0;
  std::string task;
  double loss = 0.0;
};

struct StageResult {
  std::vector<StepLog> log;
  LossReport first;
  LossReport last;
};

struct RunOptions {
  std::ostream* csv = nullptr;  // rows "step,stage,task,loss", no header
  std::function<void(int step, const LossReport&)> progress;
  AdamWConfig adamw;
};

// One training stage. Batches and stochastic draws come from substreams of
// `seed` keyed by (stage, step), so a run is reproducible from its inputs.
StageResult run_stage(const StageConfig& stage, const Corpus& corpus, TrainState& state,
                      std::uint64_t seed, const RunOptions& opt = {});

inline constexpr const char* kLogHeader = "step,stage,task,loss";

}  // namespace uniflow
