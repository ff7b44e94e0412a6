#pragma once

// The combined training objective over a task-mixed mini-batch:
// AR on understanding and text-only samples, RF + REPA on generation
// samples, evaluated over packed sequences with one shared backward pass.

#include <functional>
#include <vector>

#include "uniflow/generate.hpp"
#include "uniflow/repa.hpp"
#include "uniflow/understand.hpp"

namespace uniflow {

enum class Task : std::uint8_t { und, gen, text };
const char* task_name(Task t);

template <class T>
struct WorkItem {
  Task task = Task::und;
  const UndSample* und = nullptr;
  const GenSample* gen = nullptr;
  const std::vector<int>* text = nullptr;
  GenDraw<T> draw;  // gen only
};

template <class T>
struct ObjectiveOptions {
  int l_max = 256;
  bool use_ar = true;
  bool use_rf = true;
  bool use_repa = true;
  double repa_weight = 1.0;
  // Backpropagate into the understanding encoder (off while it is frozen).
  bool und_encoder_grads = true;
  // Parameters that produce the (stop-gradient) alignment targets; defaults
  // to the model itself. Finite-difference checks pin them to a fixed copy.
  const ModelParams<T>* target_params = nullptr;
  // Test hooks; the argument is the index among generation items.
  std::function<void(Mat<T>& velocity, int gen_index)> velocity_hook;
  std::function<void(Mat<T>& pred, int gen_index)> align_hook;
};

struct LossReport {
  double total = 0.0;
  double ar = 0.0;    // mean NLL over all AR response tokens
  double und = 0.0;   // ... restricted to understanding samples
  double text = 0.0;  // ... restricted to text-only samples
  double rf = 0.0;
  double repa = 0.0;
  int ar_tokens = 0;
  int und_tokens = 0;
  int text_tokens = 0;
  int n_und = 0;
  int n_gen = 0;
  int n_text = 0;
};

// Builds the sequence for one work item (generation: noisy latent from the
// item's draw, caption removed when the draw drops it).
template <class T>
Sample<T> build_sample(const WorkItem<T>& item);

// total = ar + rf + repa_weight * repa. When grads is non-null, adds
// d(total)/d(theta) into it.
template <class T>
LossReport batch_objective(const ModelParams<T>& p, const std::vector<WorkItem<T>>& items,
                           const ObjectiveOptions<T>& opt, NoDeduce<ModelParams<T>>* grads);

// Rectified-flow loss alone with fresh draws from `rng`.
template <class T>
double rf_loss(const std::vector<GenSample>& batch, const ModelParams<T>& p, Rng& rng,
               double drop_rate = kPromptDropRate,
               const std::function<void(Mat<T>&, int)>& velocity_hook = {});

}  // namespace uniflow
