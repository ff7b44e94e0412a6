// uniflow command-line tool. Exit codes: 0 success, 1 runtime failure, 2 usage.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "uniflow/checkpoint.hpp"
#include "uniflow/evalkit.hpp"
#include "uniflow/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace uniflow;

namespace {

// Bad flag values (unknown prompt words, malformed lists) count as usage
// errors rather than runtime failures.
struct UsageError : Error {
  using Error::Error;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

void log(const std::string& msg) { std::cerr << msg << std::endl; }

int cmd_data(std::uint64_t seed, const fs::path& out, int n_und, int n_gen, int n_text) {
  const Corpus c = make_corpus(seed, n_und, n_gen, n_text);
  save_corpus(c, out);
  log("wrote corpus (" + std::to_string(c.und.size()) + " und, " + std::to_string(c.gen.size()) +
      " gen, " + std::to_string(c.text.size()) + " text) to " + out.string());
  return 0;
}

int cmd_train(const fs::path& config, const fs::path& corpus_dir, const fs::path& out,
              int log_every) {
  const TrainConfig cfg = load_config(config);
  const Corpus corpus = load_corpus(corpus_dir);
  fs::create_directories(out);
  std::ofstream csv = open_out(out / "log.csv");
  csv << kLogHeader << "\n";
  open_out(out / "config.txt") << format_config(cfg);

  TrainState state = make_train_state(cfg.model, derive_seed(cfg.seed, {1}));
  const std::uint64_t train_seed = derive_seed(cfg.seed, {2});
  log("parameters: " + std::to_string(parameter_count(state.params)));
  const auto t0 = std::chrono::steady_clock::now();
  for (const StageConfig& s : cfg.stages) {
    RunOptions opt;
    opt.csv = &csv;
    opt.progress = [&](int step, const LossReport& r) {
      if (log_every <= 0 || (step % log_every != 0 && step != s.total_steps)) return;
      const double sec =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream os;
      os << "stage " << s.stage << " step " << step << "/" << s.total_steps << " loss "
         << r.total << " (und " << r.und << " text " << r.text << " rf " << r.rf << " repa "
         << r.repa << ") " << static_cast<int>(sec) << "s";
      log(os.str());
    };
    run_stage(s, corpus, state, train_seed, opt);
    save_checkpoint({state.params, state.ema, state.opt, s.stage}, out);
  }
  return 0;
}

int cmd_sample(const fs::path& ckpt, const std::string& prompt, double w, int steps,
               std::uint64_t seed, const fs::path& out) {
  std::vector<int> ids;
  try {
    ids = tokenize(prompt);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const Checkpoint ck = load_checkpoint(ckpt);
  const Image img = generate_image(ids, ck.ema, SamplerConfig{w, steps, seed});
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_ppm(img, out);
  const auto cls = oracle_classify(img);
  log("oracle: " + (cls ? describe(*cls) : std::string("(rejected)")));
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& corpus_dir, const fs::path& report,
             int n_prompts, int n_qa) {
  const Checkpoint ck = load_checkpoint(ckpt);
  EvalOptions opt;
  opt.n_prompts = n_prompts;
  opt.n_qa = n_qa;
  if (!corpus_dir.empty()) {
    const Corpus c = load_corpus(corpus_dir);
    for (const auto& g : c.gen) opt.reference.push_back(g.image);
  }
  const EvalReport r = evaluate(ck.ema, opt);
  std::ofstream os = open_out(report);
  write_report_csv(r, os);
  write_report_csv(r, std::cout);
  return 0;
}

int cmd_sweep(const fs::path& ckpt, const std::vector<double>& ws, const std::vector<int>& steps,
              int n_prompts, const fs::path& out) {
  for (double w : ws) {
    if (!(w >= 1.0)) throw UsageError("--w values must be >= 1");
  }
  for (int s : steps) {
    if (s < 1) throw UsageError("--steps values must be >= 1");
  }
  const Checkpoint ck = load_checkpoint(ckpt);
  const auto rows = sweep(ck.ema, ws, steps, n_prompts);
  std::ofstream os = open_out(out);
  write_sweep_csv(rows, os);
  write_sweep_csv(rows, std::cout);
  return 0;
}

int cmd_gradcheck(int coords) {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite(coords)) {
    std::printf("%-4s %-20s max_rel_error %.3e  worst %s  %.1fs\n", c.passed() ? "ok" : "FAIL",
                c.name.c_str(), c.result.max_rel_error, c.result.worst.c_str(), c.seconds);
    ok = ok && c.passed();
  }
  return ok ? 0 : 1;
}

int cmd_ablate(const fs::path& config, const fs::path& corpus_dir, const fs::path& out, int reps,
               bool with_gen) {
  const TrainConfig cfg = load_config(config);
  const Corpus corpus = load_corpus(corpus_dir);
  AblationOptions opt;
  opt.reps = reps;
  opt.evaluate_generation = with_gen;
  opt.progress = log;
  const AblationReport r = ablate_encoders(corpus, cfg, opt);
  std::ofstream os = open_out(out);
  write_ablation_csv(r, os);
  write_ablation_csv(r, std::cout);
  log("decoupled >= shared in " + std::to_string(r.decoupled_wins()) + "/" +
      std::to_string(r.runs.size()) + " repetitions");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified understanding/generation toy model"};
  app.require_subcommand(1);

  auto* data = app.add_subcommand("data", "Generate a ShapesWorld corpus");
  std::uint64_t data_seed = 0;
  fs::path data_out;
  int n_und = 2000, n_gen = 2000, n_text = 500;
  data->add_option("--seed", data_seed, "Corpus seed")->required();
  data->add_option("--out", data_out, "Output directory")->required();
  data->add_option("--und", n_und, "Understanding samples")->check(CLI::NonNegativeNumber);
  data->add_option("--gen", n_gen, "Generation samples")->check(CLI::NonNegativeNumber);
  data->add_option("--text", n_text, "Text-only samples")->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "Run the three training stages");
  fs::path train_config, train_corpus, train_out;
  int log_every = 100;
  train->add_option("--config", train_config, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--corpus", train_corpus, "Corpus directory")->required();
  train->add_option("--out", train_out, "Checkpoint directory")->required();
  train->add_option("--log-every", log_every, "Progress interval in steps (0 = quiet)");

  auto* sample = app.add_subcommand("sample", "Generate one image from a prompt");
  fs::path sample_ckpt, sample_out;
  std::string prompt;
  double sample_w = 2.0;
  int sample_steps = 30;
  std::uint64_t sample_seed = 0;
  sample->add_option("--ckpt", sample_ckpt, "Checkpoint directory")->required();
  sample->add_option("--prompt", prompt, "Caption, e.g. \"red circle top-left\"")->required();
  sample->add_option("--w", sample_w, "CFG factor")->check(CLI::Range(1.0, 1e6));
  sample->add_option("--steps", sample_steps, "Euler steps")->check(CLI::PositiveNumber);
  sample->add_option("--seed", sample_seed, "Noise seed");
  sample->add_option("--out", sample_out, "Output PPM")->required();

  auto* eval = app.add_subcommand("eval", "Score a checkpoint");
  fs::path eval_ckpt, eval_corpus, eval_report;
  int eval_prompts = 500, eval_qa = 360;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--corpus", eval_corpus, "Corpus whose images are the Frechet reference");
  eval->add_option("--report", eval_report, "Output CSV")->required();
  eval->add_option("--prompts", eval_prompts, "Generation prompts")->check(CLI::NonNegativeNumber);
  eval->add_option("--qa", eval_qa, "Held-out QA pairs")->check(CLI::NonNegativeNumber);

  auto* sw = app.add_subcommand("sweep", "Semantic accuracy and fmd over CFG factors and steps");
  fs::path sweep_ckpt, sweep_out;
  std::vector<double> sweep_w{1, 2, 3, 6};
  std::vector<int> sweep_steps{10, 30, 50};
  int sweep_prompts = 500;
  sw->add_option("--ckpt", sweep_ckpt, "Checkpoint directory")->required();
  sw->add_option("--w", sweep_w, "Comma-separated CFG factors")->delimiter(',');
  sw->add_option("--steps", sweep_steps, "Comma-separated step counts")->delimiter(',');
  sw->add_option("--prompts", sweep_prompts, "Prompts per cell")->check(CLI::PositiveNumber);
  sw->add_option("--out", sweep_out, "Output CSV")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  int gc_coords = kGradCheckCoords;
  gc->add_option("--coords", gc_coords, "Max coordinates per tensor")->check(CLI::PositiveNumber);

  auto* ab = app.add_subcommand("ablate", "Decoupled vs shared encoder ablation");
  fs::path ab_config, ab_corpus, ab_out;
  int ab_reps = 3;
  bool ab_gen = false;
  ab->add_option("--config", ab_config, "Config file")->required()->check(CLI::ExistingFile);
  ab->add_option("--corpus", ab_corpus, "Corpus directory")->required();
  ab->add_option("--out", ab_out, "Output CSV")->required();
  ab->add_option("--reps", ab_reps, "Repetitions")->check(CLI::PositiveNumber);
  ab->add_flag("--with-generation", ab_gen, "Also score generation for each variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*data) return cmd_data(data_seed, data_out, n_und, n_gen, n_text);
    if (*train) return cmd_train(train_config, train_corpus, train_out, log_every);
    if (*sample) return cmd_sample(sample_ckpt, prompt, sample_w, sample_steps, sample_seed, sample_out);
    if (*eval) return cmd_eval(eval_ckpt, eval_corpus, eval_report, eval_prompts, eval_qa);
    if (*sw) return cmd_sweep(sweep_ckpt, sweep_w, sweep_steps, sweep_prompts, sweep_out);
    if (*gc) return cmd_gradcheck(gc_coords);
    if (*ab) return cmd_ablate(ab_config, ab_corpus, ab_out, ab_reps, ab_gen);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
