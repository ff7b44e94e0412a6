#include "uniflow/evalkit.hpp"

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace uniflow {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw Error("invalid number \"" + s + "\"");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

// ---- generation accuracy ----------------------------------------------------

SemanticReport score_images(const std::vector<Image>& images, const std::vector<ShapeSpec>& specs) {
  if (images.size() != specs.size()) throw Error("score_images: image/spec count mismatch");
  if (images.empty()) throw Error("score_images: no images");
  SemanticReport r;
  r.n = static_cast<int>(images.size());
  int exact = 0, shape = 0, color = 0, pos = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    const auto label = oracle_classify(images[i]);
    if (!label) ++r.rejected;
    if (label && *label == specs[i]) ++exact;
    if (!all_finite(Eigen::Map<const Eigen::VectorXf>(images[i].pixels.data(), Image::kSize))) {
      continue;
    }
    const ShapeSpec near = nearest_template(images[i]).spec;
    shape += near.shape == specs[i].shape;
    color += near.color == specs[i].color;
    pos += near.position == specs[i].position;
  }
  const double n = r.n;
  r.accuracy = exact / n;
  r.shape = shape / n;
  r.color = color / n;
  r.position = pos / n;
  return r;
}

std::vector<Image> generate_for_specs(const ModelParams<float>& p,
                                      const std::vector<ShapeSpec>& specs,
                                      const SamplerConfig& cfg, std::uint64_t seed_base) {
  std::vector<Image> out;
  out.reserve(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) {
    SamplerConfig c = cfg;
    c.seed = seed_base + i;
    out.push_back(generate_image(full_caption(specs[i]), p, c));
  }
  return out;
}

SemanticReport semantic_accuracy(const ModelParams<float>& p, const std::vector<ShapeSpec>& specs,
                                 const SamplerConfig& cfg, std::uint64_t seed_base) {
  if (specs.empty()) throw Error("semantic_accuracy: no prompts");
  return score_images(generate_for_specs(p, specs, cfg, seed_base), specs);
}

std::vector<ShapeSpec> eval_specs(int n) {
  std::vector<ShapeSpec> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(ShapeSpec::from_index(i % kNumSpecs));
  return out;
}

// ---- Frechet distance -------------------------------------------------------

namespace {

struct FeatureNet {
  ConvParams<double> c1, c2, c3;

  FeatureNet() {
    Rng rng(0);
    auto init = [&](ConvParams<double>& p, int cin, int cout) {
      const double sd = std::sqrt(2.0 / (9.0 * cin));
      p.w = Mat<double>(9 * cin, cout);
      for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w.data()[i] = rng.normal(0.0, sd);
      p.b = Mat<double>(1, cout);
      for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b.data()[i] = rng.normal(0.0, 0.1);
    };
    init(c1, 3, 16);
    init(c2, 16, 32);
    init(c3, 32, kFeatureDim);
  }

  Eigen::VectorXd operator()(const Image& img) const {
    Mat<double> x = img.grid<double>();
    x = conv3x3_fwd<double>(x, 16, 16, c1, 1, nullptr).cwiseMax(0.0);
    x = conv3x3_fwd<double>(x, 16, 16, c2, 2, nullptr).cwiseMax(0.0);
    x = conv3x3_fwd<double>(x, 8, 8, c3, 2, nullptr).cwiseMax(0.0);
    return x.colwise().mean().transpose();
  }
};

void moments(const Eigen::MatrixXd& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  mu = f.colwise().mean().transpose();
  const Eigen::MatrixXd c = f.rowwise() - mu.transpose();
  cov = (c.transpose() * c) / static_cast<double>(f.rows() - 1);
}

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd s = psd_sqrt(a);
  const Eigen::MatrixXd m = s * b * s;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd conv_features(const std::vector<Image>& images) {
  static const FeatureNet net;
  Eigen::MatrixXd f(static_cast<Eigen::Index>(images.size()), kFeatureDim);
  for (size_t i = 0; i < images.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = net(images[i]);
  return f;
}

double frechet_distance(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a,
                        const Eigen::VectorXd& mu_b, const Eigen::MatrixXd& cov_b) {
  // tr((A^1/2 B A^1/2)^1/2) equals its (B, A) counterpart in exact arithmetic;
  // averaging both orders makes the estimate symmetric in floating point too.
  const double cross = 0.5 * (trace_sqrt_product(cov_a, cov_b) + trace_sqrt_product(cov_b, cov_a));
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

double feature_frechet(const std::vector<Image>& a, const std::vector<Image>& b) {
  if (static_cast<int>(a.size()) < kMinFrechetSet || static_cast<int>(b.size()) < kMinFrechetSet) {
    throw Error("feature_frechet: each set needs at least " + std::to_string(kMinFrechetSet) +
                " images (got " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                ")");
  }
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(conv_features(a), mu_a, cov_a);
  moments(conv_features(b), mu_b, cov_b);
  return frechet_distance(mu_a, cov_a, mu_b, cov_b);
}

// ---- understanding ----------------------------------------------------------

double und_accuracy(const ModelParams<float>& p, const std::vector<UndSample>& samples) {
  if (samples.empty()) throw Error("und_accuracy: no samples");
  int hits = 0;
  for (const auto& s : samples) {
    const auto got = answer(s.image, s.question, p, static_cast<int>(s.answer.size()) + 2);
    hits += got == s.answer;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// ---- reports ----------------------------------------------------------------

EvalReport evaluate(const ModelParams<float>& ema, const EvalOptions& opt) {
  EvalReport r;
  if (opt.n_qa > 0) r.und_accuracy = und_accuracy(ema, make_qa_eval_set(opt.qa_seed, opt.n_qa));
  if (opt.n_prompts > 0) {
    const auto specs = eval_specs(opt.n_prompts);
    const auto images = generate_for_specs(ema, specs, opt.sampler, 0);
    const SemanticReport s = score_images(images, specs);
    r.semantic_accuracy = s.accuracy;
    r.shape_accuracy = s.shape;
    r.color_accuracy = s.color;
    r.position_accuracy = s.position;
    if (opt.n_prompts >= kMinFrechetSet) {
      std::vector<Image> refs = opt.reference;
      if (refs.empty()) {
        refs.reserve(specs.size());
        for (const auto& sp : specs) refs.push_back(render_shape(sp));
      }
      r.fmd = feature_frechet(images, refs);
    }
  }
  return r;
}

namespace {

std::vector<std::pair<const char*, double EvalReport::*>> report_fields() {
  return {{"semantic_accuracy", &EvalReport::semantic_accuracy},
          {"und_accuracy", &EvalReport::und_accuracy},
          {"fmd", &EvalReport::fmd},
          {"shape_accuracy", &EvalReport::shape_accuracy},
          {"color_accuracy", &EvalReport::color_accuracy},
          {"position_accuracy", &EvalReport::position_accuracy}};
}

}  // namespace

void write_report_csv(const EvalReport& r, std::ostream& os) {
  os << "metric,value\n";
  for (const auto& [name, field] : report_fields()) os << name << "," << fmt(r.*field) << "\n";
}

EvalReport read_report_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "metric,value") throw Error("report: bad header");
  std::map<std::string, double> kv;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto parts = split(line, ',');
    if (parts.size() != 2) throw Error("report: malformed row \"" + line + "\"");
    kv[parts[0]] = parse_double(parts[1]);
  }
  EvalReport r;
  for (const auto& [name, field] : report_fields()) {
    auto it = kv.find(name);
    if (it == kv.end()) throw Error(std::string("report: missing metric ") + name);
    r.*field = it->second;
  }
  return r;
}

// ---- sweep ------------------------------------------------------------------

std::vector<SweepRow> sweep(const ModelParams<float>& ema, const std::vector<double>& w_list,
                            const std::vector<int>& steps_list, int n_prompts) {
  if (w_list.empty() || steps_list.empty()) throw Error("sweep: empty w or steps list");
  const auto specs = eval_specs(n_prompts);
  std::vector<Image> refs;
  for (const auto& sp : specs) refs.push_back(render_shape(sp));
  std::vector<SweepRow> rows;
  for (double w : w_list) {
    for (int steps : steps_list) {
      SamplerConfig c{w, steps, 0};
      const auto images = generate_for_specs(ema, specs, c, 0);
      SweepRow row{w, steps, score_images(images, specs).accuracy, 0.0};
      if (n_prompts >= kMinFrechetSet) row.fmd = feature_frechet(images, refs);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
  os << "w,steps,semantic_accuracy,fmd\n";
  for (const auto& r : rows) {
    os << fmt(r.w) << "," << r.steps << "," << fmt(r.semantic_accuracy) << "," << fmt(r.fmd)
       << "\n";
  }
}

// ---- training and ablation --------------------------------------------------

TrainState run_training(const TrainConfig& cfg, const Corpus& corpus, const RunOptions& opt) {
  cfg.validate();
  TrainState state = make_train_state(cfg.model, derive_seed(cfg.seed, {1}));
  const std::uint64_t train_seed = derive_seed(cfg.seed, {2});
  for (const StageConfig& s : cfg.stages) run_stage(s, corpus, state, train_seed, opt);
  return state;
}

int AblationReport::decoupled_wins() const {
  int n = 0;
  for (const auto& r : runs) n += r.decoupled.und_accuracy >= r.shared.und_accuracy;
  return n;
}

AblationReport ablate_encoders(const Corpus& corpus, const TrainConfig& cfg,
                               const AblationOptions& opt) {
  AblationReport rep;
  EvalOptions eo = opt.eval;
  if (!opt.evaluate_generation) eo.n_prompts = 0;
  int steps = 0;
  for (const auto& s : cfg.stages) steps += s.total_steps;
  for (int k = 0; k < opt.reps; ++k) {
    AblationRun run;
    run.rep = k;
    run.seed = cfg.seed + static_cast<std::uint64_t>(k);
    run.steps = steps;
    for (bool shared : {false, true}) {
      TrainConfig c = cfg;
      c.seed = run.seed;
      c.model.shared_encoder = shared;
      if (shared) c.model.c_gen = c.model.d_enc;
      if (opt.progress) {
        opt.progress("rep " + std::to_string(k + 1) + "/" + std::to_string(opt.reps) +
                     (shared ? " shared" : " decoupled"));
      }
      const TrainState st = run_training(c, corpus);
      (shared ? run.shared : run.decoupled) = evaluate(st.ema, eo);
    }
    rep.runs.push_back(run);
  }
  return rep;
}

namespace {
constexpr const char* kAblationHeader =
    "rep,seed,steps,variant,semantic_accuracy,und_accuracy,fmd,shape_accuracy,color_accuracy,"
    "position_accuracy";
}

void write_ablation_csv(const AblationReport& r, std::ostream& os) {
  os << kAblationHeader << "\n";
  for (const auto& run : r.runs) {
    for (bool shared : {false, true}) {
      const EvalReport& e = shared ? run.shared : run.decoupled;
      os << run.rep << "," << run.seed << "," << run.steps << ","
         << (shared ? "shared" : "decoupled");
      for (const auto& [name, field] : report_fields()) os << "," << fmt(e.*field);
      os << "\n";
    }
  }
}

AblationReport read_ablation_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kAblationHeader) throw Error("ablation report: bad header");
  AblationReport r;
  const auto fields = report_fields();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto parts = split(line, ',');
    if (parts.size() != 4 + fields.size()) {
      throw Error("ablation report: malformed row \"" + line + "\"");
    }
    const int rep = std::stoi(parts[0]);
    if (r.runs.empty() || r.runs.back().rep != rep) {
      r.runs.push_back({});
      r.runs.back().rep = rep;
      r.runs.back().seed = std::stoull(parts[1]);
      r.runs.back().steps = std::stoi(parts[2]);
    }
    EvalReport e;
    for (size_t i = 0; i < fields.size(); ++i) e.*(fields[i].second) = parse_double(parts[4 + i]);
    if (parts[3] == "decoupled") {
      r.runs.back().decoupled = e;
    } else if (parts[3] == "shared") {
      r.runs.back().shared = e;
    } else {
      throw Error("ablation report: unknown variant " + parts[3]);
    }
  }
  return r;
}

}  // namespace uniflow
