// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
//   uniflow_acceptance [--work DIR] [--only N[,N...]]

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "uniflow/checkpoint.hpp"
#include "uniflow/evalkit.hpp"
#include "uniflow/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace uniflow;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

template <class T>
bool bit_equal(const Mat<T>& a, const Mat<T>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

template <class T>
bool params_bit_equal(const ModelParams<T>& a, const ModelParams<T>& b) {
  const auto ta = a.tensors(), tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (size_t i = 0; i < ta.size(); ++i) {
    if (!bit_equal(*ta[i].tensor, *tb[i].tensor)) return false;
  }
  return true;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

fs::path g_work;

Corpus default_corpus() { return make_corpus(0, 2000, 2000, 500); }

// Random task-mixed work items drawn from a corpus.
std::vector<WorkItem<float>> random_items(const Corpus& c, Rng& rng, int n, bool with_gen) {
  std::vector<WorkItem<float>> items;
  for (int i = 0; i < n; ++i) {
    WorkItem<float> it;
    const int kind = static_cast<int>(rng.below(with_gen ? 3 : 2));
    if (kind == 0) {
      it.task = Task::und;
      it.und = &c.und[rng.below(c.und.size())];
    } else if (kind == 1) {
      it.task = Task::text;
      it.text = &c.text[rng.below(c.text.size())];
    } else {
      it.task = Task::gen;
      it.gen = &c.gen[rng.below(c.gen.size())];
      it.draw = draw_gen<float>(rng);
    }
    items.push_back(std::move(it));
  }
  return items;
}

// ---- 1: gradient suite -----------------------------------------------------

Outcome gradient_suite() {
  const double t0 = cpu_seconds();
  const auto cases = run_loss_gradchecks(kGradCheckCoords);
  const double sec = cpu_seconds() - t0;
  Outcome o{sec <= 120.0, ""};
  for (const auto& c : cases) {
    o.pass = o.pass && c.passed();
    o.detail += fmt("%s %.2e, ", c.name.c_str(), c.result.max_rel_error);
  }
  o.detail += fmt("tol %.0e, eps %.0e, %.0fs CPU (limit 120s)", kGradCheckTol, kGradCheckEps, sec);
  return o;
}

// ---- 2: analytic flow oracle ------------------------------------------------

// One-hidden-layer tanh MLP v(z, t), trained on the straight-line objective
// between N(0, 1) and N(2, 0.5^2).
struct FlowMlp {
  static constexpr int kHidden = 64;
  Eigen::MatrixXd w1, b1, w2, b2;

  explicit FlowMlp(Rng& rng) {
    w1 = Eigen::MatrixXd(2, kHidden);
    for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = rng.normal(0.0, 1.0);
    b1 = Eigen::MatrixXd::Zero(1, kHidden);
    w2 = Eigen::MatrixXd(kHidden, 1);
    for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = rng.normal(0.0, 1.0 / kHidden);
    b2 = Eigen::MatrixXd::Zero(1, 1);
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Eigen::MatrixXd* hidden = nullptr) const {
    Eigen::MatrixXd h = ((x * w1).rowwise() + b1.row(0)).array().tanh().matrix();
    Eigen::MatrixXd v = (h * w2).array() + b2(0, 0);
    if (hidden) *hidden = std::move(h);
    return v;
  }
};

// E[x - z0 | z_t = z] for jointly Gaussian x ~ N(2, 0.25), z0 ~ N(0, 1).
double oracle_velocity(double z, double t) {
  const double mean_zt = 2.0 * t;
  const double var_zt = 0.25 * t * t + (1 - t) * (1 - t);
  const double cov = 0.25 * t - (1 - t);
  return 2.0 + cov / var_zt * (z - mean_zt);
}

Outcome flow_oracle() {
  const double t0 = cpu_seconds();
  Rng rng(20240);
  FlowMlp net(rng);
  struct Adam {
    Eigen::MatrixXd m, v;
  };
  std::vector<Eigen::MatrixXd*> params{&net.w1, &net.b1, &net.w2, &net.b2};
  std::vector<Adam> st;
  for (auto* p : params) st.push_back({Eigen::MatrixXd::Zero(p->rows(), p->cols()), Eigen::MatrixXd::Zero(p->rows(), p->cols())});

  const int steps = 8000, batch = 512;
  for (int step = 1; step <= steps; ++step) {
    Mat<double> x(batch, 1), z0(batch, 1);
    Eigen::MatrixXd in(batch, 2);
    Eigen::MatrixXd target(batch, 1);
    for (int i = 0; i < batch; ++i) {
      x(i, 0) = rng.normal(2.0, 0.5);
      z0(i, 0) = rng.normal();
      const double t = rng.uniform();
      const Mat<double> zt = interpolate<double>(x.row(i), z0.row(i), t);
      in(i, 0) = zt(0, 0);
      in(i, 1) = t;
      target(i, 0) = x(i, 0) - z0(i, 0);
    }
    Eigen::MatrixXd h;
    const Eigen::MatrixXd v = net.forward(in, &h);
    const Eigen::MatrixXd dv = 2.0 * (v - target) / batch;
    std::vector<Eigen::MatrixXd> g(4);
    g[3] = dv.colwise().sum();
    g[2] = h.transpose() * dv;
    const Eigen::MatrixXd dpre = ((dv * net.w2.transpose()).array() * (1.0 - h.array().square())).matrix();
    g[1] = dpre.colwise().sum();
    g[0] = in.transpose() * dpre;
    // cosine decay from 3e-3 to 1e-4
    const double lr = 1e-4 + 0.5 * (3e-3 - 1e-4) * (1 + std::cos(std::numbers::pi * step / steps));
    const double bc1 = 1 - std::pow(0.9, step), bc2 = 1 - std::pow(0.999, step);
    for (size_t k = 0; k < params.size(); ++k) {
      st[k].m = 0.9 * st[k].m + 0.1 * g[k];
      st[k].v = 0.999 * st[k].v + 0.001 * g[k].cwiseProduct(g[k]);
      params[k]->array() -= lr * (st[k].m.array() / bc1) / ((st[k].v.array() / bc2).sqrt() + 1e-8);
    }
  }

  // Grid: t in 0.05..0.95, z within two standard deviations of the z_t marginal.
  double msd = 0.0;
  int cells = 0;
  for (int ti = 1; ti <= 19; ++ti) {
    const double t = ti * 0.05;
    const double sd = std::sqrt(0.25 * t * t + (1 - t) * (1 - t));
    for (int zi = 0; zi <= 20; ++zi) {
      const double z = 2.0 * t + sd * (-2.0 + 0.2 * zi);
      Eigen::MatrixXd in(1, 2);
      in << z, t;
      const double d = net.forward(in)(0, 0) - oracle_velocity(z, t);
      msd += d * d;
      ++cells;
    }
  }
  msd /= cells;

  const int n = 10000, n_steps = 100;
  FlowState<double> s{Mat<double>(n, 1), 0.0};
  for (int i = 0; i < n; ++i) s.z(i, 0) = rng.normal();
  for (int k = 0; k < n_steps; ++k) {
    s.t = static_cast<double>(k) / n_steps;
    Eigen::MatrixXd in(n, 2);
    in.col(0) = s.z.col(0);
    in.col(1).setConstant(s.t);
    const Mat<double> v = net.forward(in);
    s = euler_step(s, v, 1.0 / n_steps);
  }
  const double mean = s.z.mean();
  const double var = (s.z.array() - mean).square().mean();
  const double sec = cpu_seconds() - t0;
  Outcome o;
  o.pass = msd <= 0.05 && std::abs(mean - 2.0) <= 0.1 && std::abs(var - 0.25) <= 0.05 && sec <= 300;
  o.detail = fmt("velocity MSD %.4f (<= 0.05), transported mean %.4f (2 +- 0.1), variance %.4f "
                 "(0.25 +- 0.05), %.0fs CPU",
                 msd, mean, var, sec);
  return o;
}

// ---- 3: CFG identities ------------------------------------------------------

Outcome cfg_identities() {
  auto p = init_model<float>(ModelConfig{}, 3);
  // give the zero-initialized ConvNeXt outputs some weight so the field is non-trivial
  Rng jr(4);
  for (auto& t : p.tensors()) {
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) t.tensor->data()[i] += static_cast<float>(jr.normal(0, 0.02));
  }
  const auto prompt = tokenize("red circle top-left");
  const int n = 8;

  // Conditional-only Euler sampler written out directly.
  Rng zr(derive_seed(11, {0x5a}));
  FlowState<float> s{standard_normal_grid<float>(zr), 0.0};
  for (int k = 0; k < n; ++k) {
    s.t = static_cast<double>(k) / n;
    s = euler_step(s, velocity(s, prompt, p), 1.0 / n);
  }
  SamplerStats st1, st2;
  const Mat<float> z1 = integrate(prompt, p, SamplerConfig{1.0, n, 11}, &st1);
  integrate(prompt, p, SamplerConfig{2.0, n, 11}, &st2);
  const bool w1_equal = bit_equal(z1, s.z);

  Mat<double> c = Mat<double>::Constant(1, 1, 1.0), u = Mat<double>::Constant(1, 1, 0.5);
  const double scalar = cfg_velocity(c, u, 2.0)(0, 0);

  bool counts = st1.network_calls == n && st2.network_calls == 2 * n;
  for (int k : st1.calls_per_step) counts = counts && k == 1;
  for (int k : st2.calls_per_step) counts = counts && k == 2;
  Outcome o;
  o.pass = w1_equal && scalar == 1.5 && counts;
  o.detail = fmt("w=1 bit-equal to conditional path: %s; 2*1.0+(1-2)*0.5 = %.17g; calls/step "
                 "w=1: %d, w=2: %d",
                 w1_equal ? "yes" : "no", scalar, st1.calls_per_step[0], st2.calls_per_step[0]);
  return o;
}

// ---- 4: masking invariance ---------------------------------------------------

Outcome masking_invariance() {
  const Corpus c = make_corpus(41, 200, 200, 100);
  auto p = init_model<float>(ModelConfig{}, 42);
  Rng rng(43);
  int batches = 0, mismatches = 0, mutated = 0;
  while (batches < 100) {
    const auto items = random_items(c, rng, 2 + static_cast<int>(rng.below(5)), true);
    std::vector<Sample<float>> samples;
    for (const auto& it : items) samples.push_back(build_sample(it));
    for (auto& b : pack(samples, p, p.cfg.l_max)) {
      if (batches == 100) break;
      if (b.layout.response_tokens() == 0) continue;
      ++batches;
      const double ref = ar_loss(b, p);
      PackedBatch<float> m = b;
      for (int q = 0; q < m.layout.length; ++q) {
        if (m.layout.loss_mask[q]) continue;
        m.layout.targets[q] = static_cast<int>(rng.below(kVocabSize));
        ++mutated;
      }
      mismatches += ar_loss(m, p) != ref;
    }
  }
  return {mismatches == 0, fmt("%d packed batches, %d condition/pad targets mutated, %d losses "
                               "changed (bitwise)",
                               batches, mutated, mismatches)};
}

// ---- 5: stop-gradient -------------------------------------------------------

Outcome stop_gradient() {
  const Corpus c = make_corpus(51, 0, 100, 0);
  auto p = init_model<float>(ModelConfig{}, 52);
  Rng jr(53);
  for (auto& t : p.tensors()) {
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) t.tensor->data()[i] += static_cast<float>(jr.normal(0, 0.02));
  }
  Rng rng(54);
  double worst = 0.0, head_norm = 0.0;
  for (int b = 0; b < 10; ++b) {
    std::vector<WorkItem<float>> items;
    for (int k = 0; k < 3; ++k) {
      WorkItem<float> it;
      it.task = Task::gen;
      it.gen = &c.gen[rng.below(c.gen.size())];
      it.draw = draw_gen<float>(rng);
      items.push_back(std::move(it));
    }
    ObjectiveOptions<float> opt;
    opt.l_max = p.cfg.l_max;
    opt.use_ar = false;
    opt.use_rf = false;
    opt.und_encoder_grads = true;  // the encoder is trainable; only the stop-gradient protects it
    auto g = zeros_like(p);
    batch_objective(p, items, opt, &g);
    for (const auto& t : std::as_const(g).tensors()) {
      if (group_of(t.name) == ParamGroup::f_enc) worst = std::max(worst, static_cast<double>(t.tensor->cwiseAbs().maxCoeff()));
      if (group_of(t.name) == ParamGroup::align) head_norm += t.tensor->squaredNorm();
    }
  }
  return {worst == 0.0 && head_norm > 0.0,
          fmt("10 batches: max |dL_align/d f_enc| = %g, alignment-head grad norm %.3g", worst,
              std::sqrt(head_norm))};
}

// ---- 6: packing isolation ---------------------------------------------------

Outcome packing_isolation() {
  const Corpus c = make_corpus(61, 100, 100, 100);
  auto p = init_model<float>(ModelConfig{}, 62);
  Rng jr(63);
  for (auto& t : p.tensors()) {
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) t.tensor->data()[i] += static_cast<float>(jr.normal(0, 0.02));
  }
  Rng rng(64);
  double worst = 0.0;
  int pairs = 0;
  while (pairs < 50) {
    const auto items = random_items(c, rng, 2, true);
    const Sample<float> a = build_sample(items[0]);
    const Sample<float> b = build_sample(items[1]);
    const int la = expanded_length(a), lb = expanded_length(b);
    if (la + lb > p.cfg.l_max) continue;
    ++pairs;
    const auto alone = forward(pack(std::vector<Sample<float>>{a}, p, p.cfg.l_max)[0], p);
    const auto first = forward(pack(std::vector<Sample<float>>{a, b}, p, p.cfg.l_max)[0], p);
    const auto after = forward(pack(std::vector<Sample<float>>{b, a}, p, p.cfg.l_max)[0], p);
    const Mat<float> ref = alone.logits.topRows(la);
    worst = std::max(worst, static_cast<double>((first.logits.topRows(la) - ref).cwiseAbs().maxCoeff()));
    worst = std::max(worst, static_cast<double>((after.logits.middleRows(lb, la) - ref).cwiseAbs().maxCoeff()));
  }
  return {worst <= 1e-6, fmt("%d pairings (A packed first and after B), max |logit difference| %.3g (<= 1e-6, float32)", pairs, worst)};
}

// ---- 7 / 8: the trained toy model -------------------------------------------

struct TrainedModel {
  TrainState state;
  StageResult stage3;
  LossReport stage2_first;
  double cpu_seconds = 0.0;
  size_t params = 0;
  EvalReport report;
};

const TrainedModel& trained() {
  static std::optional<TrainedModel> cached;
  if (cached) return *cached;
  TrainedModel m;
  const TrainConfig cfg;  // defaults
  const Corpus corpus = default_corpus();
  const double t0 = cpu_seconds();
  m.state = make_train_state(cfg.model, derive_seed(cfg.seed, {1}));
  m.params = parameter_count(m.state.params);
  const std::uint64_t seed = derive_seed(cfg.seed, {2});
  fs::create_directories(g_work);
  std::ofstream csv(g_work / "train_log.csv");
  csv << kLogHeader << "\n";
  RunOptions opt;
  opt.csv = &csv;
  for (const StageConfig& s : cfg.stages) {
    std::cerr << "  training stage " << s.stage << " (" << s.total_steps << " steps)" << std::endl;
    StageResult r = run_stage(s, corpus, m.state, seed, opt);
    if (s.stage == 2) m.stage2_first = r.first;
    if (s.stage == 3) m.stage3 = std::move(r);
  }
  m.cpu_seconds = cpu_seconds() - t0;
  save_checkpoint({m.state.params, m.state.ema, m.state.opt, 3}, g_work / "ckpt");
  EvalOptions eo;  // 500 prompts at w = 2, 30 steps; 360 held-out QA pairs
  eo.sampler = cfg.sampler(0);
  m.report = evaluate(m.state.ema, eo);
  cached = std::move(m);
  return *cached;
}

Outcome end_to_end() {
  const TrainedModel& m = trained();
  const auto& e = m.report;
  const auto ans = answer(render_shape({Shape::circle, Color::red, Position::top_left}),
                          tokenize("what color"), m.state.ema, 4);
  const bool red = detokenize(ans) == "red |EOS|";
  // Training-loss sanity: stage-3 AR below uniform, RF below its first value.
  const double ar_last = m.stage3.last.ar, rf_last = m.stage3.last.rf;
  const bool sanity = ar_last < std::log(32.0) && rf_last < m.stage2_first.rf;
  Outcome o;
  o.pass = e.und_accuracy >= 0.90 && e.semantic_accuracy >= 0.70 && m.params <= 2'000'000 &&
           m.cpu_seconds <= 3 * 3600.0 && red && sanity;
  o.detail = fmt("und exact-match %.4f (>= 0.90, 360 held-out QA), semantic %.4f (>= 0.70, 500 "
                 "prompts, w=2, 30 steps), fmd %.4g, %zu params, %.0fs CPU training, "
                 "answer(red circle top-left, what color) = \"%s\", final AR %.3g, RF %.3g",
                 e.und_accuracy, e.semantic_accuracy, e.fmd, m.params, m.cpu_seconds,
                 detokenize(ans).c_str(), ar_last, rf_last);
  return o;
}

Outcome cfg_direction() {
  const TrainedModel& m = trained();
  const auto specs = eval_specs(500);
  double acc1 = 0.0, acc2 = 0.0;
  std::string per_seed;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const std::uint64_t base = k * 1'000'000;
    const double a1 = semantic_accuracy(m.state.ema, specs, SamplerConfig{1.0, 30, 0}, base).accuracy;
    const double a2 = semantic_accuracy(m.state.ema, specs, SamplerConfig{2.0, 30, 0}, base).accuracy;
    acc1 += a1 / 3;
    acc2 += a2 / 3;
    per_seed += fmt("seed %d: w1 %.3f w2 %.3f; ", static_cast<int>(k), a1, a2);
  }
  const auto rows = sweep(m.state.ema, {1, 2, 3, 6}, {30}, 500);
  std::ofstream csv(g_work / "sweep.csv");
  write_sweep_csv(rows, csv);
  std::string curve;
  for (const auto& r : rows) curve += fmt("w=%g fmd %.3g, ", r.w, r.fmd);
  return {acc2 >= acc1, fmt("mean over 3 seeds x 500 prompts: w=2 %.4f vs w=1 %.4f, need w=2 >= w=1 (%s) recorded: "
                            "%s-> sweep.csv",
                            acc2, acc1, per_seed.c_str(), curve.c_str())};
}

// ---- 9: encoder ablation -----------------------------------------------------

Outcome ablation() {
  const TrainConfig cfg = load_config(fs::path(UNIFLOW_CONFIG_DIR) / "ablation.cfg");
  AblationOptions opt;
  opt.reps = 3;
  opt.progress = [](const std::string& s) { std::cerr << "  ablation " << s << std::endl; };
  const AblationReport r = ablate_encoders(default_corpus(), cfg, opt);
  std::ofstream csv(g_work / "ablation.csv");
  write_ablation_csv(r, csv);
  std::string runs;
  for (const auto& run : r.runs) {
    runs += fmt("rep %d: decoupled %.4f vs shared %.4f; ", run.rep, run.decoupled.und_accuracy,
                run.shared.und_accuracy);
  }
  const int wins = r.decoupled_wins();
  return {2 * wins > static_cast<int>(r.runs.size()),
          fmt("%sdecoupled >= shared in %d/3 (%d steps each)", runs.c_str(), wins, r.runs[0].steps)};
}

// ---- 10: reproducibility & formats ------------------------------------------

struct PipelineOutput {
  std::string manifest, weights, ppm;
};

PipelineOutput pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_corpus(make_corpus(0, 2000, 2000, 500), dir / "corpus");
  const Corpus corpus = load_corpus(dir / "corpus");
  const TrainConfig cfg = load_config(fs::path(UNIFLOW_CONFIG_DIR) / "repro.cfg");
  TrainState st = run_training(cfg, corpus);
  save_checkpoint({st.params, st.ema, st.opt, 3}, dir / "ckpt");
  const Checkpoint ck = load_checkpoint(dir / "ckpt");
  write_ppm(generate_image(tokenize("red circle top-left"), ck.ema, cfg.sampler(7)), dir / "out.ppm");
  return {read_file(dir / "ckpt" / "manifest.txt"), read_file(dir / "ckpt" / "weights.bin"),
          read_file(dir / "out.ppm")};
}

Outcome reproducibility() {
  const PipelineOutput a = pipeline(g_work / "repro_a");
  const PipelineOutput b = pipeline(g_work / "repro_b");
  const bool same = a.manifest == b.manifest && a.weights == b.weights && a.ppm == b.ppm &&
                    !a.weights.empty() && !a.ppm.empty();

  // checkpoint round trip
  const Checkpoint ck = load_checkpoint(g_work / "repro_a" / "ckpt");
  save_checkpoint(ck, g_work / "repro_rt");
  const Checkpoint back = load_checkpoint(g_work / "repro_rt");
  const bool round_trip = params_bit_equal(ck.params, back.params) &&
                          params_bit_equal(ck.ema, back.ema) && ck.opt && back.opt &&
                          params_bit_equal(ck.opt->m, back.opt->m) &&
                          params_bit_equal(ck.opt->v, back.opt->v) &&
                          read_file(g_work / "repro_rt" / "weights.bin") == a.weights;

  // logit-normal moments at N = 1e5
  Rng rng(1001);
  const int n = 100000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double t = sample_time(rng);
    const double l = std::log(t / (1 - t));
    sum += l;
    sq += l * l;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  const double mean_tol = 3.0 / std::sqrt(static_cast<double>(n));
  const double var_tol = 3.0 * std::sqrt(2.0 / n);
  const bool moments = std::abs(mean) <= mean_tol && std::abs(var - 1.0) <= var_tol;

  // EMA recursion identity over 1000 synthetic updates
  ModelConfig small;
  small.d_emb = 16, small.n_blocks = 1, small.n_heads = 2, small.repa_block = 1, small.d_enc = 8, small.c_gen = 8;
  auto target = init_model<double>(small, 5);
  auto ema = zeros_like(target);
  Rng er(6);
  for (auto& t : ema.tensors()) {
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) t.tensor->data()[i] = er.normal();
  }
  const auto ema0 = ema;
  for (int k = 0; k < 1000; ++k) ema_update(ema, target);
  const double decay = std::pow(kEmaRatio, 1000);
  double ema_err = 0.0;
  const auto te = std::as_const(ema).tensors(), t0 = ema0.tensors(), tp = std::as_const(target).tensors();
  for (size_t i = 0; i < te.size(); ++i) {
    const Mat<double> want = *tp[i].tensor + decay * (*t0[i].tensor - *tp[i].tensor);
    ema_err = std::max(ema_err, (*te[i].tensor - want).cwiseAbs().maxCoeff());
  }

  Outcome o;
  o.pass = same && round_trip && moments && ema_err <= 1e-7;
  o.detail = fmt("two data->train->sample runs bit-identical: %s; checkpoint round trip "
                 "bit-exact: %s; logit(t) mean %.4f (|.| <= %.4f), var %.4f (1 +- %.4f); EMA "
                 "identity max error %.2e (<= 1e-7)",
                 same ? "yes" : "no", round_trip ? "yes" : "no", mean, mean_tol, var, var_tol,
                 ema_err);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::temp_directory_path() / "uniflow_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: uniflow_acceptance [--work DIR] [--only N[,N...]]\n";
      return 2;
    }
  }
  fs::create_directories(g_work);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite (AR, RF, alignment losses)", gradient_suite},
      {"analytic flow oracle", flow_oracle},
      {"CFG identities", cfg_identities},
      {"AR masking invariance", masking_invariance},
      {"alignment stop-gradient", stop_gradient},
      {"packing isolation", packing_isolation},
      {"end-to-end toy run", end_to_end},
      {"CFG direction", cfg_direction},
      {"encoder ablation direction", ablation},
      {"reproducibility and formats", reproducibility},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s [%.0fs]\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str(), sec);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
