#include "uniflow/trainer.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace uniflow {

void TaskRatio::validate() const {
  if (und < 0 || gen < 0 || text < 0) throw Error("data ratio " + str() + " has a negative part");
  if (std::abs(und + gen + text - 100.0) > 1e-9) {
    throw Error("data ratio " + str() + " does not sum to 100");
  }
}

std::string TaskRatio::str() const {
  std::ostringstream os;
  os << und << ":" << gen << ":" << text;
  return os.str();
}

TaskRatio TaskRatio::parse(const std::string& s) {
  TaskRatio r;
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> r.und >> c1 >> r.gen >> c2 >> r.text) || c1 != ':' || c2 != ':') {
    throw Error("malformed data ratio \"" + s + "\" (expected und:gen:text)");
  }
  std::string rest;
  if (is >> rest) throw Error("malformed data ratio \"" + s + "\"");
  r.validate();
  return r;
}

TaskRatio StageConfig::ratio_at(int step) const {
  return step <= early_steps ? early_ratio : ratio;
}

double StageConfig::lr_at(int step) const {
  if (warmup_steps <= 0) return lr;
  return lr * std::min(1.0, static_cast<double>(step) / warmup_steps);
}

void StageConfig::validate() const {
  if (stage < 1 || stage > 3) throw Error("stage id must be 1, 2 or 3");
  if (total_steps < 0 || batch_size < 1 || warmup_steps < 0 || early_steps < 0) {
    throw Error("stage " + std::to_string(stage) + ": invalid step/batch counts");
  }
  if (!(lr > 0) || !std::isfinite(lr)) throw Error("stage " + std::to_string(stage) + ": lr must be > 0");
  ratio.validate();
  if (early_steps > 0) early_ratio.validate();
}

StageConfig full_scale_stage(int stage) {
  StageConfig s;
  s.stage = stage;
  switch (stage) {
    case 1:
      s.lr = 1e-4, s.warmup_steps = 2000, s.total_steps = 10000, s.batch_size = 512;
      s.ratio = {50, 50, 0};
      break;
    case 2:
      s.lr = 1e-4, s.warmup_steps = 2000, s.total_steps = 390000, s.batch_size = 512;
      s.ratio = {14, 80, 6};
      s.early_ratio = {30, 50, 20};
      s.early_steps = 10000;
      break;
    case 3:
      s.lr = 2e-5, s.warmup_steps = 1000, s.total_steps = 26000, s.batch_size = 256;
      s.ratio = {21, 70, 9};
      break;
    default:
      throw Error("stage id must be 1, 2 or 3");
  }
  s.early_ratio = stage == 2 ? s.early_ratio : s.ratio;
  return s;
}

StageConfig desk_stage(int stage, double scale) {
  StageConfig s = full_scale_stage(stage);
  static constexpr int kSteps[3] = {200, 4000, 600};
  static constexpr int kBatch[3] = {32, 32, 16};
  static constexpr double kLr[3] = {1e-3, 1e-3, 2e-4};
  s.total_steps = kSteps[stage - 1];
  s.batch_size = kBatch[stage - 1];
  s.lr = kLr[stage - 1];
  s.warmup_steps = static_cast<int>(std::lround(s.warmup_steps * scale));
  s.early_steps = static_cast<int>(std::lround(s.early_steps * scale));
  return s;
}

bool trainable(int stage, ParamGroup g) {
  switch (stage) {
    case 1:
      return g == ParamGroup::und_proj || g == ParamGroup::g_enc || g == ParamGroup::g_dec ||
             g == ParamGroup::time || g == ParamGroup::align;
    case 2:
      return g != ParamGroup::f_enc;
    case 3:
      return true;
  }
  throw Error("stage id must be 1, 2 or 3");
}

// ---- optimizer ------------------------------------------------------------

template <class T>
OptimizerState<T> make_optimizer_state(const ModelParams<T>& p) {
  return {zeros_like(p), zeros_like(p), 0};
}

template <class T>
double global_norm(const ModelParams<T>& g) {
  double sq = 0.0;
  for (const auto& t : g.tensors()) sq += t.tensor->template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

template <class T>
double adamw_step(ModelParams<T>& params, ModelParams<T>& grads, OptimizerState<T>& state,
                  double lr, const AdamWConfig& cfg) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw Error("adamw_step: non-finite gradients");
  auto gs = grads.tensors();
  if (cfg.clip > 0 && norm > cfg.clip) {
    const T s = static_cast<T>(cfg.clip / norm);
    for (auto& g : gs) *g.tensor *= s;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.eps);
  auto ps = params.tensors();
  auto ms = state.m.tensors();
  auto vs = state.v.tensors();
  for (size_t i = 0; i < ps.size(); ++i) {
    auto p = ps[i].tensor->array();
    auto g = gs[i].tensor->array();
    auto m = ms[i].tensor->array();
    auto v = vs[i].tensor->array();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    if (cfg.weight_decay != 0.0) p -= static_cast<T>(lr * cfg.weight_decay) * p;
    p -= step_size * m / (v.sqrt() * inv_sqrt_bc2 + eps);
  }
  return norm;
}

template <class T>
void ema_update(ModelParams<T>& ema, const ModelParams<T>& params, double ratio) {
  auto es = ema.tensors();
  auto ps = params.tensors();
  const T k = static_cast<T>(1.0 - ratio);
  // ema + (1 - r)(p - ema): leaves ema bit-identical when it already equals p
  for (size_t i = 0; i < es.size(); ++i) *es[i].tensor += k * (*ps[i].tensor - *es[i].tensor);
}

// ---- batches --------------------------------------------------------------

std::vector<BatchSlot> mix_batch(const Corpus& corpus, const TaskRatio& ratio, int batch_size,
                                 Rng& rng) {
  ratio.validate();
  if (ratio.und > 0 && corpus.und.empty()) throw Error("mix_batch: no understanding samples");
  if (ratio.gen > 0 && corpus.gen.empty()) throw Error("mix_batch: no generation samples");
  if (ratio.text > 0 && corpus.text.empty()) throw Error("mix_batch: no text-only samples");
  std::vector<BatchSlot> out(batch_size);
  for (auto& s : out) {
    const double u = 100.0 * rng.uniform();
    if (u < ratio.und) {
      s.task = Task::und;
    } else if (u < ratio.und + ratio.gen || ratio.text == 0) {
      s.task = Task::gen;
    } else {
      s.task = Task::text;
    }
    const size_t n = s.task == Task::und   ? corpus.und.size()
                     : s.task == Task::gen ? corpus.gen.size()
                                           : corpus.text.size();
    s.index = static_cast<int>(rng.below(n));
  }
  return out;
}

// ---- stages ---------------------------------------------------------------

TrainState make_train_state(const ModelConfig& cfg, std::uint64_t seed) {
  TrainState s;
  s.params = init_model<float>(cfg, seed);
  s.ema = s.params;
  s.opt = make_optimizer_state(s.params);
  return s;
}

namespace {

void check_finite(double v, const char* task, int stage, int step) {
  if (!std::isfinite(v)) {
    throw Error("non-finite loss at stage " + std::to_string(stage) + " step " +
                std::to_string(step) + " (task " + task + ")");
  }
}

}  // namespace

StageResult run_stage(const StageConfig& stage, const Corpus& corpus, TrainState& state,
                      std::uint64_t seed, const RunOptions& opt) {
  stage.validate();
  ModelParams<float>& p = state.params;
  StageResult res;
  ModelParams<float> grads = zeros_like(p);

  auto names = p.tensors();
  std::vector<bool> frozen(names.size());
  for (size_t i = 0; i < names.size(); ++i) {
    frozen[i] = !trainable(stage.stage, group_of(names[i].name));
  }

  ObjectiveOptions<float> oo;
  oo.l_max = p.cfg.l_max;
  oo.und_encoder_grads = p.cfg.shared_encoder || trainable(stage.stage, ParamGroup::f_enc);

  const auto sid = static_cast<std::uint64_t>(stage.stage);
  for (int step = 1; step <= stage.total_steps; ++step) {
    const auto k = static_cast<std::uint64_t>(step);
    Rng batch_rng(derive_seed(seed, {sid, k, 0}));
    const std::vector<BatchSlot> slots =
        mix_batch(corpus, stage.ratio_at(step), stage.batch_size, batch_rng);
    std::vector<WorkItem<float>> items(slots.size());
    for (size_t i = 0; i < slots.size(); ++i) {
      WorkItem<float>& it = items[i];
      it.task = slots[i].task;
      switch (it.task) {
        case Task::und: it.und = &corpus.und[slots[i].index]; break;
        case Task::text: it.text = &corpus.text[slots[i].index]; break;
        case Task::gen: {
          it.gen = &corpus.gen[slots[i].index];
          Rng draw_rng(derive_seed(seed, {sid, k, 1, static_cast<std::uint64_t>(i)}));
          it.draw = draw_gen<float>(draw_rng);
          break;
        }
      }
    }

    set_zero(grads);
    LossReport rep;
    try {
      rep = batch_objective(p, items, oo, &grads);
    } catch (const Error& e) {
      throw Error("stage " + std::to_string(stage.stage) + " step " + std::to_string(step) +
                  ": " + e.what());
    }
    if (rep.und_tokens > 0) check_finite(rep.und, "und", stage.stage, step);
    if (rep.text_tokens > 0) check_finite(rep.text, "text", stage.stage, step);
    if (rep.n_gen > 0) {
      check_finite(rep.rf, "gen", stage.stage, step);
      check_finite(rep.repa, "gen", stage.stage, step);
    }

    auto gs = grads.tensors();
    for (size_t i = 0; i < gs.size(); ++i) {
      if (frozen[i]) gs[i].tensor->setZero();
    }
    try {
      adamw_step(p, grads, state.opt, stage.lr_at(step), opt.adamw);
    } catch (const Error& e) {
      throw Error("stage " + std::to_string(stage.stage) + " step " + std::to_string(step) +
                  ": " + e.what());
    }
    ema_update(state.ema, p);

    auto emit = [&](const char* task, double loss) {
      res.log.push_back({step, stage.stage, task, loss});
      if (opt.csv) {
        *opt.csv << step << "," << stage.stage << "," << task << "," << loss << "\n";
      }
    };
    if (rep.und_tokens > 0) emit("und", rep.und);
    if (rep.text_tokens > 0) emit("text", rep.text);
    if (rep.n_gen > 0) {
      emit("gen.rf", rep.rf);
      emit("gen.repa", rep.repa);
    }
    emit("total", rep.total);
    if (step == 1) res.first = rep;
    res.last = rep;
    if (opt.progress) opt.progress(step, rep);
  }
  return res;
}

template OptimizerState<float> make_optimizer_state<float>(const ModelParams<float>&);
template OptimizerState<double> make_optimizer_state<double>(const ModelParams<double>&);
template double global_norm<float>(const ModelParams<float>&);
template double global_norm<double>(const ModelParams<double>&);
template double adamw_step<float>(ModelParams<float>&, ModelParams<float>&,
                                  OptimizerState<float>&, double, const AdamWConfig&);
template double adamw_step<double>(ModelParams<double>&, ModelParams<double>&,
                                   OptimizerState<double>&, double, const AdamWConfig&);
template void ema_update<float>(ModelParams<float>&, const ModelParams<float>&, double);
template void ema_update<double>(ModelParams<double>&, const ModelParams<double>&, double);

}  // namespace uniflow
