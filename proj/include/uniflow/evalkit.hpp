#pragma once

// Evaluation: oracle-scored generation accuracy, a Frechet distance between
// feature moments of a fixed random conv net, exact-match QA accuracy, CFG /
// step sweeps, and the decoupled-vs-shared encoder ablation.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "uniflow/config.hpp"

namespace uniflow {

struct SemanticReport {
  int n = 0;
  double accuracy = 0.0;  // oracle_classify(output) == prompt spec
  // Attribute agreement with the nearest template (rejections included), so
  // each is >= accuracy.
  double shape = 0.0;
  double color = 0.0;
  double position = 0.0;
  int rejected = 0;  // outputs the oracle refused to classify
};

// Scores a list of generated images against the specs they were asked for.
SemanticReport score_images(const std::vector<Image>& images, const std::vector<ShapeSpec>& specs);

// Prompt i is the full caption of specs[i], sampled with seed seed_base + i.
std::vector<Image> generate_for_specs(const ModelParams<float>& p,
                                      const std::vector<ShapeSpec>& specs,
                                      const SamplerConfig& cfg, std::uint64_t seed_base = 0);

SemanticReport semantic_accuracy(const ModelParams<float>& p, const std::vector<ShapeSpec>& specs,
                                 const SamplerConfig& cfg, std::uint64_t seed_base = 0);

// n prompts cycling through all 36 specs.
std::vector<ShapeSpec> eval_specs(int n);

// ---- Frechet distance on random conv features ------------------------------

inline constexpr int kFeatureDim = 32;
inline constexpr int kMinFrechetSet = 50;

// 3 conv layers (ReLU) with fixed seed-0 weights, then a global average pool.
Eigen::MatrixXd conv_features(const std::vector<Image>& images);

double frechet_distance(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a,
                        const Eigen::VectorXd& mu_b, const Eigen::MatrixXd& cov_b);

// Throws when either set has fewer than 50 images.
double feature_frechet(const std::vector<Image>& a, const std::vector<Image>& b);

// Symmetric PSD square root; negative eigenvalues are clamped to 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

// ---- understanding --------------------------------------------------------

// Exact match of the greedy answer (including |EOS|) against the reference.
double und_accuracy(const ModelParams<float>& p, const std::vector<UndSample>& samples);

// ---- reports --------------------------------------------------------------

struct EvalReport {
  double semantic_accuracy = 0.0;
  double und_accuracy = 0.0;
  double fmd = 0.0;
  double shape_accuracy = 0.0;
  double color_accuracy = 0.0;
  double position_accuracy = 0.0;

  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  int n_prompts = 500;
  int n_qa = 360;
  std::uint64_t qa_seed = 1000003;  // held-out QA draw, disjoint from corpus seeds
  SamplerConfig sampler;            // seed field unused; prompt i uses seed i
  // Frechet reference set; empty means the rendered templates of the prompts.
  std::vector<Image> reference;
};

EvalReport evaluate(const ModelParams<float>& ema, const EvalOptions& opt);

// `metric,value` rows.
void write_report_csv(const EvalReport& r, std::ostream& os);
EvalReport read_report_csv(std::istream& is);

// ---- sweep ----------------------------------------------------------------

struct SweepRow {
  double w = 0.0;
  int steps = 0;
  double semantic_accuracy = 0.0;
  double fmd = 0.0;
};

std::vector<SweepRow> sweep(const ModelParams<float>& ema, const std::vector<double>& w_list,
                            const std::vector<int>& steps_list, int n_prompts = 500);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os);

// ---- training pipeline and encoder ablation -------------------------------

// All three stages from a fresh init; per-step rows go to opt.csv.
TrainState run_training(const TrainConfig& cfg, const Corpus& corpus, const RunOptions& opt = {});

struct AblationRun {
  int rep = 0;
  std::uint64_t seed = 0;
  int steps = 0;  // total optimizer steps, identical for both variants
  EvalReport decoupled;
  EvalReport shared;

  bool operator==(const AblationRun&) const = default;
};

struct AblationReport {
  std::vector<AblationRun> runs;
  int decoupled_wins() const;  // runs with decoupled und_accuracy >= shared
  bool operator==(const AblationReport&) const = default;
};

struct AblationOptions {
  int reps = 3;
  EvalOptions eval;
  bool evaluate_generation = false;  // semantic accuracy / fmd are optional
  std::function<void(const std::string&)> progress;
};

// Both variants share config, corpus and seeds; the shared variant feeds
// understanding images through the generation encoder trunk.
AblationReport ablate_encoders(const Corpus& corpus, const TrainConfig& cfg,
                               const AblationOptions& opt = {});

void write_ablation_csv(const AblationReport& r, std::ostream& os);
AblationReport read_ablation_csv(std::istream& is);

}  // namespace uniflow
