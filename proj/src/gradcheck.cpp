#include "uniflow/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "uniflow/objective.hpp"

namespace uniflow {

GradCheckResult finite_diff_check(const std::function<double()>& loss,
                                  const std::vector<NamedTensor<double>>& params,
                                  const std::vector<ConstNamedTensor<double>>& grads, double eps,
                                  int max_coords, std::uint64_t seed) {
  if (params.size() != grads.size()) throw Error("finite_diff_check: params/grads mismatch");
  GradCheckResult res;
  Rng rng(seed);
  for (size_t ti = 0; ti < params.size(); ++ti) {
    Mat<double>& p = *params[ti].tensor;
    const Mat<double>& g = *grads[ti].tensor;
    check_same_shape(p, g, ("finite_diff_check " + params[ti].name).c_str());
    std::vector<Eigen::Index> idx(static_cast<size_t>(p.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (static_cast<int>(idx.size()) > max_coords) {
      // partial Fisher-Yates: the first max_coords entries are a uniform subset
      for (int k = 0; k < max_coords; ++k) {
        const auto j = k + static_cast<Eigen::Index>(rng.below(idx.size() - k));
        std::swap(idx[k], idx[j]);
      }
      idx.resize(max_coords);
    }
    TensorCheck tc{params[ti].name, static_cast<int>(idx.size()), 0.0};
    for (Eigen::Index i : idx) {
      const double orig = p.data()[i];
      p.data()[i] = orig + eps;
      const double lp = loss();
      p.data()[i] = orig - eps;
      const double lm = loss();
      p.data()[i] = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        throw Error("finite_diff_check: non-finite loss perturbing " + params[ti].name);
      }
      const double num = (lp - lm) / (2.0 * eps);
      tc.max_rel_error = std::max(tc.max_rel_error, relative_error(g.data()[i], num));
    }
    if (res.worst.empty() || tc.max_rel_error > res.max_rel_error) {
      res.max_rel_error = tc.max_rel_error;
      res.worst = tc.name;
    }
    res.tensors.push_back(tc);
  }
  return res;
}

namespace {

using Clock = std::chrono::steady_clock;

Mat<double> random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

// Checks a layer through the scalar probe loss sum(r .* y). `fwd` computes
// y from the current tensors; `bwd` maps dy (= r) to gradients stored in
// `grads` (parallel to `tensors`).
GradCheckCase layer_case(const std::string& name, const std::vector<NamedTensor<double>>& tensors,
                         const std::function<Mat<double>()>& fwd,
                         const std::function<void(const Mat<double>&)>& bwd,
                         const std::vector<ConstNamedTensor<double>>& grads, int max_coords,
                         std::uint64_t seed) {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(seed, {99}));
  const Mat<double> y0 = fwd();
  const Mat<double> r = random_mat(rng, y0.rows(), y0.cols());
  bwd(r);
  auto loss = [&]() { return (fwd().array() * r.array()).sum(); };
  GradCheckCase c{name, finite_diff_check(loss, tensors, grads, kGradCheckEps, max_coords, seed), 0};
  c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return c;
}

constexpr double kPerturbSd = 0.3;

void perturb(ModelParams<double>& p, Rng& rng) {
  for (auto& t : p.tensors()) {
    const bool gamma = t.name.size() >= 6 && t.name.compare(t.name.size() - 6, 6, ".gamma") == 0;
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) {
      double& v = t.tensor->data()[i];
      v = gamma ? 1.0 + rng.normal(0.0, 0.2) : v + rng.normal(0.0, kPerturbSd);
    }
  }
}

struct LossFixture {
  ModelParams<double> model;
  ModelParams<double> frozen;  // alignment-target copy
  Corpus corpus;
  std::vector<WorkItem<double>> und_items;
  std::vector<WorkItem<double>> gen_items;
};

LossFixture make_fixture() {
  LossFixture f;
  f.model = gradcheck_model();
  f.frozen = f.model;
  f.corpus = make_corpus(11, 4, 4, 4);
  // one understanding sample and one text-only sample in a single pack
  WorkItem<double> u;
  u.task = Task::und;
  u.und = &f.corpus.und[0];
  WorkItem<double> t;
  t.task = Task::text;
  t.text = &f.corpus.text[0];
  f.und_items = {u, t};
  Rng rng(derive_seed(5, {1}));
  for (int i = 0; i < 2; ++i) {
    WorkItem<double> g;
    g.task = Task::gen;
    g.gen = &f.corpus.gen[i];
    g.draw.t = i == 0 ? 0.3 : 0.7;
    g.draw.z0 = standard_normal_grid<double>(rng);
    g.draw.drop = false;
    f.gen_items.push_back(std::move(g));
  }
  return f;
}

GradCheckCase loss_case(const std::string& name, LossFixture& f,
                        const std::vector<WorkItem<double>>& items,
                        const ObjectiveOptions<double>& opt, int max_coords) {
  const auto t0 = Clock::now();
  ModelParams<double> grads = zeros_like(f.model);
  batch_objective(f.model, items, opt, &grads);
  auto loss = [&]() { return batch_objective(f.model, items, opt, nullptr).total; };
  std::vector<ConstNamedTensor<double>> g;
  for (const auto& t : std::as_const(grads).tensors()) g.push_back(t);
  GradCheckCase c{name, finite_diff_check(loss, f.model.tensors(), g, kGradCheckEps, max_coords, 17),
                  0};
  c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return c;
}

}  // namespace

ModelConfig gradcheck_config() {
  ModelConfig c;
  c.d_emb = 16;
  c.n_blocks = 2;
  c.n_heads = 2;
  c.l_max = 144;  // fits the two-image generation pack (138 rows)
  c.repa_block = 1;
  c.d_enc = 8;
  c.c_gen = 8;
  c.time_freqs = 4;
  return c;
}

ModelParams<double> gradcheck_model(std::uint64_t seed) {
  ModelParams<double> p = init_model<double>(gradcheck_config(), seed);
  Rng rng(derive_seed(seed, {77}));
  perturb(p, rng);
  return p;
}

std::vector<GradCheckCase> run_layer_gradchecks(int max_coords) {
  std::vector<GradCheckCase> out;
  Rng rng(123);

  {
    LinearParams<double> p{random_mat(rng, 6, 5, 0.5), random_mat(rng, 1, 5, 0.5)};
    LinearParams<double> g{Mat<double>::Zero(6, 5), Mat<double>::Zero(1, 5)};
    Mat<double> x = random_mat(rng, 4, 6), dx;
    out.push_back(layer_case(
        "linear", {{"x", &x}, {"w", &p.w}, {"b", &p.b}}, [&] { return linear_fwd(x, p); },
        [&](const Mat<double>& dy) { dx = linear_bwd(x, dy, p, &g); },
        {{"x", &dx}, {"w", &g.w}, {"b", &g.b}}, max_coords, 1));
  }
  {
    NormParams<double> p{random_mat(rng, 1, 7, 0.3).array() + 1.0, random_mat(rng, 1, 7, 0.3)};
    NormParams<double> g{Mat<double>::Zero(1, 7), Mat<double>::Zero(1, 7)};
    Mat<double> x = random_mat(rng, 5, 7), dx;
    out.push_back(layer_case(
        "layernorm", {{"x", &x}, {"gamma", &p.gamma}, {"beta", &p.beta}},
        [&] { return layernorm_fwd(x, p, nullptr); },
        [&](const Mat<double>& dy) {
          NormCache<double> c;
          layernorm_fwd(x, p, &c);
          dx = layernorm_bwd(dy, p, c, &g);
        },
        {{"x", &dx}, {"gamma", &g.gamma}, {"beta", &g.beta}}, max_coords, 2));
  }
  {
    Mat<double> x = random_mat(rng, 6, 6, 2.0), dx;
    out.push_back(layer_case(
        "gelu", {{"x", &x}}, [&] { return gelu_fwd(x); },
        [&](const Mat<double>& dy) { dx = gelu_bwd(x, dy); }, {{"x", &dx}}, max_coords, 3));
  }
  for (int stride : {1, 2}) {
    const int h = 5, w = 6, cin = 3, cout = 4;
    ConvParams<double> p{random_mat(rng, 9 * cin, cout, 0.3), random_mat(rng, 1, cout, 0.3)};
    ConvParams<double> g{Mat<double>::Zero(9 * cin, cout), Mat<double>::Zero(1, cout)};
    Mat<double> x = random_mat(rng, h * w, cin), dx;
    out.push_back(layer_case(
        "conv3x3/stride" + std::to_string(stride), {{"x", &x}, {"w", &p.w}, {"b", &p.b}},
        [&] { return conv3x3_fwd<double>(x, h, w, p, stride, nullptr); },
        [&](const Mat<double>& dy) {
          Mat<double> cols;
          conv3x3_fwd<double>(x, h, w, p, stride, &cols);
          dx = conv3x3_bwd(cols, dy, h, w, cin, p, stride, &g);
        },
        {{"x", &dx}, {"w", &g.w}, {"b", &g.b}}, max_coords, 4));
  }
  {
    const int h = 4, w = 5, c = 3;
    DepthwiseParams<double> p{random_mat(rng, 9, c, 0.3), random_mat(rng, 1, c, 0.3)};
    DepthwiseParams<double> g{Mat<double>::Zero(9, c), Mat<double>::Zero(1, c)};
    Mat<double> x = random_mat(rng, h * w, c), dx;
    out.push_back(layer_case(
        "depthwise3x3", {{"x", &x}, {"w", &p.w}, {"b", &p.b}},
        [&] { return depthwise3x3_fwd(x, h, w, p); },
        [&](const Mat<double>& dy) { dx = depthwise3x3_bwd(x, dy, h, w, p, &g); },
        {{"x", &dx}, {"w", &g.w}, {"b", &g.b}}, max_coords, 5));
  }
  {
    const int h = 4, w = 4, c = 4;
    ConvNeXtParams<double> p;
    init_convnext(p, c, rng);
    for (Mat<double>* t : {&p.dw.w, &p.dw.b, &p.norm.beta, &p.fc1.w, &p.fc1.b, &p.fc2.w, &p.fc2.b}) {
      *t = random_mat(rng, t->rows(), t->cols(), 0.3);
    }
    p.norm.gamma = random_mat(rng, 1, c, 0.2).array() + 1.0;
    ConvNeXtParams<double> g = p;
    for (Mat<double>* t : {&g.dw.w, &g.dw.b, &g.norm.gamma, &g.norm.beta, &g.fc1.w, &g.fc1.b,
                           &g.fc2.w, &g.fc2.b}) {
      t->setZero();
    }
    Mat<double> x = random_mat(rng, h * w, c), dx;
    out.push_back(layer_case(
        "convnext",
        {{"x", &x}, {"dw.w", &p.dw.w}, {"dw.b", &p.dw.b}, {"norm.gamma", &p.norm.gamma},
         {"norm.beta", &p.norm.beta}, {"fc1.w", &p.fc1.w}, {"fc1.b", &p.fc1.b},
         {"fc2.w", &p.fc2.w}, {"fc2.b", &p.fc2.b}},
        [&] { return convnext_fwd(x, h, w, p, nullptr); },
        [&](const Mat<double>& dy) {
          ConvNeXtCache<double> cache;
          convnext_fwd(x, h, w, p, &cache);
          dx = convnext_bwd(dy, h, w, p, cache, &g);
        },
        {{"x", &dx}, {"dw.w", &g.dw.w}, {"dw.b", &g.dw.b}, {"norm.gamma", &g.norm.gamma},
         {"norm.beta", &g.norm.beta}, {"fc1.w", &g.fc1.w}, {"fc1.b", &g.fc1.b},
         {"fc2.w", &g.fc2.w}, {"fc2.b", &g.fc2.b}},
        max_coords, 6));
  }
  {
    const int n = 5, d = 8, heads = 2;
    AttentionParams<double> p{random_mat(rng, d, d, 0.4), random_mat(rng, d, d, 0.4),
                              random_mat(rng, d, d, 0.4), random_mat(rng, d, d, 0.4)};
    AttentionParams<double> g{Mat<double>::Zero(d, d), Mat<double>::Zero(d, d),
                              Mat<double>::Zero(d, d), Mat<double>::Zero(d, d)};
    // two packed blocks: [0, 3) and [3, 5)
    AttnMask mask(n);
    mask.add_causal_block(0, 3);
    mask.add_causal_block(3, 2);
    Mat<double> x = random_mat(rng, n, d), dx;
    out.push_back(layer_case(
        "causal_attention",
        {{"x", &x}, {"wq", &p.wq}, {"wk", &p.wk}, {"wv", &p.wv}, {"wo", &p.wo}},
        [&] { return causal_attention_fwd(x, p, heads, mask, nullptr); },
        [&](const Mat<double>& dy) {
          AttentionCache<double> c;
          causal_attention_fwd(x, p, heads, mask, &c);
          dx = causal_attention_bwd(dy, p, heads, mask, c, &g);
        },
        {{"x", &dx}, {"wq", &g.wq}, {"wk", &g.wk}, {"wv", &g.wv}, {"wo", &g.wo}}, max_coords, 7));
  }
  {
    // ‖p‖²/2 has gradient p
    Mat<double> x = random_mat(rng, 3, 4), gx = x;
    const auto t0 = Clock::now();
    GradCheckCase c{"quadratic",
                    finite_diff_check([&] { return 0.5 * x.squaredNorm(); }, {{"p", &x}},
                                      {{"p", &gx}}, kGradCheckEps, max_coords, 8),
                    0};
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    out.push_back(c);
  }
  return out;
}

std::vector<GradCheckCase> run_loss_gradchecks(int max_coords) {
  LossFixture f = make_fixture();
  std::vector<GradCheckCase> out;
  ObjectiveOptions<double> base;
  base.l_max = f.model.cfg.l_max;
  base.target_params = &f.frozen;

  ObjectiveOptions<double> ar = base;
  ar.use_rf = ar.use_repa = false;
  out.push_back(loss_case("loss/ar", f, f.und_items, ar, max_coords));

  ObjectiveOptions<double> rf = base;
  rf.use_ar = rf.use_repa = false;
  out.push_back(loss_case("loss/rf", f, f.gen_items, rf, max_coords));

  ObjectiveOptions<double> repa = base;
  repa.use_ar = repa.use_rf = false;
  out.push_back(loss_case("loss/repa", f, f.gen_items, repa, max_coords));
  return out;
}

std::vector<GradCheckCase> run_gradcheck_suite(int max_coords) {
  auto out = run_layer_gradchecks(max_coords);
  auto losses = run_loss_gradchecks(max_coords);
  out.insert(out.end(), losses.begin(), losses.end());
  return out;
}

}  // namespace uniflow
