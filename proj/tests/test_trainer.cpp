#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "uniflow/trainer.hpp"

using namespace uniflow;
using test::bit_equal;
using test::params_bit_equal;

TEST_CASE("task ratios parse, print and validate") {
  const TaskRatio r = TaskRatio::parse("14:80:6");
  CHECK(r == TaskRatio{14, 80, 6});
  CHECK(r.str() == "14:80:6");
  CHECK_THROWS_AS(TaskRatio::parse("14:80"), Error);
  CHECK_THROWS_AS(TaskRatio::parse("50:50:1"), Error);
  CHECK_THROWS_AS(TaskRatio::parse("14:80:6x"), Error);
  CHECK_THROWS_AS(TaskRatio::parse("-10:100:10"), Error);
}

TEST_CASE("full-scale stage table") {
  const StageConfig s1 = full_scale_stage(1), s2 = full_scale_stage(2), s3 = full_scale_stage(3);
  CHECK(s1.lr == 1e-4);
  CHECK(s2.lr == 1e-4);
  CHECK(s3.lr == 2e-5);
  CHECK(s1.warmup_steps == 2000);
  CHECK(s2.warmup_steps == 2000);
  CHECK(s3.warmup_steps == 1000);
  CHECK(s1.total_steps == 10000);
  CHECK(s2.total_steps == 390000);
  CHECK(s3.total_steps == 26000);
  CHECK(s1.batch_size == 512);
  CHECK(s2.batch_size == 512);
  CHECK(s3.batch_size == 256);
  CHECK(s1.ratio == TaskRatio{50, 50, 0});
  CHECK(s2.ratio == TaskRatio{14, 80, 6});
  CHECK(s2.early_ratio == TaskRatio{30, 50, 20});
  CHECK(s2.early_steps == 10000);
  CHECK(s3.ratio == TaskRatio{21, 70, 9});
  CHECK_THROWS_AS(full_scale_stage(4), Error);
}

TEST_CASE("desk schedule scales warmup and the early phase") {
  const StageConfig s2 = desk_stage(2, 0.01);
  CHECK(s2.total_steps == 4000);
  CHECK(s2.early_steps == 100);
  CHECK(s2.warmup_steps == 20);
  CHECK(s2.ratio_at(1) == TaskRatio{30, 50, 20});
  CHECK(s2.ratio_at(100) == TaskRatio{30, 50, 20});
  CHECK(s2.ratio_at(101) == TaskRatio{14, 80, 6});
  CHECK(s2.lr_at(1) == doctest::Approx(s2.lr / 20));
  CHECK(s2.lr_at(20) == s2.lr);
  CHECK(s2.lr_at(500) == s2.lr);
  int total = 0;
  for (int s = 1; s <= 3; ++s) total += desk_stage(s, 0.01).total_steps;
  CHECK(total == 4800);
}

TEST_CASE("freezing schedule") {
  CHECK_FALSE(trainable(1, ParamGroup::backbone));
  CHECK_FALSE(trainable(1, ParamGroup::f_enc));
  CHECK(trainable(1, ParamGroup::und_proj));
  CHECK(trainable(1, ParamGroup::g_enc));
  CHECK(trainable(1, ParamGroup::g_dec));
  CHECK(trainable(2, ParamGroup::backbone));
  CHECK_FALSE(trainable(2, ParamGroup::f_enc));
  CHECK(trainable(3, ParamGroup::f_enc));
}

TEST_CASE("batch mixing") {
  const Corpus c = make_corpus(1, 10, 10, 10);
  Rng rng(2);
  for (const auto& s : mix_batch(c, {100, 0, 0}, 64, rng)) CHECK(s.task == Task::und);

  Rng big(3);
  const auto slots = mix_batch(c, {14, 80, 6}, 100000, big);
  int gen = 0;
  for (const auto& s : slots) {
    gen += s.task == Task::gen;
    CHECK(s.index >= 0);
    CHECK(s.index < 10);
  }
  const double frac = gen / 100000.0;
  CHECK(frac >= 0.796);
  CHECK(frac <= 0.804);

  Rng a(4), b(4);
  const auto x = mix_batch(c, {30, 50, 20}, 32, a);
  const auto y = mix_batch(c, {30, 50, 20}, 32, b);
  for (size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].task == y[i].task);
    CHECK(x[i].index == y[i].index);
  }
  Corpus no_text = c;
  no_text.text.clear();
  Rng r(5);
  CHECK_THROWS_AS(mix_batch(no_text, {14, 80, 6}, 4, r), Error);
}

TEST_CASE("adamw: clipping halves a norm-2 gradient before the moments") {
  auto p = init_model<double>(test::tiny_config(), 1);
  auto g = zeros_like(p);
  g.backbone.tok(0, 0) = 1.2;
  g.backbone.tok(1, 3) = -1.6;  // global norm 2
  CHECK(global_norm(g) == doctest::Approx(2.0));
  auto st = make_optimizer_state(p);
  const double norm = adamw_step(p, g, st, 1e-3);
  CHECK(norm == doctest::Approx(2.0));
  CHECK(g.backbone.tok(0, 0) == doctest::Approx(0.6));
  CHECK(st.m.backbone.tok(0, 0) == doctest::Approx(0.1 * 0.6));
  CHECK(st.v.backbone.tok(1, 3) == doctest::Approx(0.05 * 0.64));
}

TEST_CASE("adamw: zero gradients leave parameters unchanged") {
  auto p = init_model<double>(test::tiny_config(), 2);
  const auto before = p;
  auto g = zeros_like(p);
  auto st = make_optimizer_state(p);
  adamw_step(p, g, st, 1e-3);
  CHECK(params_bit_equal(p, before));
  CHECK(st.step == 1);
}

TEST_CASE("adamw: first step with unit gradient moves by lr") {
  auto p = init_model<double>(test::tiny_config(), 3);
  const auto before = p;
  auto g = zeros_like(p);
  for (auto& t : g.tensors()) t.tensor->setOnes();
  auto st = make_optimizer_state(p);
  AdamWConfig cfg;
  cfg.clip = 0.0;  // unclipped
  const double lr = 1e-3;
  adamw_step(p, g, st, lr, cfg);
  const auto pa = p.tensors();
  const auto pb = before.tensors();
  for (size_t i = 0; i < pa.size(); ++i) {
    const Mat<double> d = *pa[i].tensor - *pb[i].tensor;
    CHECK(d.maxCoeff() == doctest::Approx(-lr / (1 + 1e-8)).epsilon(1e-9));
    CHECK(d.minCoeff() == doctest::Approx(-lr / (1 + 1e-8)).epsilon(1e-9));
  }
}

TEST_CASE("adamw refuses non-finite gradients without side effects") {
  auto p = init_model<double>(test::tiny_config(), 4);
  const auto before = p;
  auto g = zeros_like(p);
  g.backbone.tok(0, 0) = std::nan("");
  auto st = make_optimizer_state(p);
  CHECK_THROWS_AS(adamw_step(p, g, st, 1e-3), Error);
  CHECK(params_bit_equal(p, before));
  CHECK(st.step == 0);
}

TEST_CASE("ema identities") {
  auto p = init_model<double>(test::tiny_config(), 5);
  test::jitter(p, 6);
  auto ema = p;
  ema_update(ema, p);
  CHECK(params_bit_equal(ema, p));

  auto zero = zeros_like(p);
  auto ones = zeros_like(p);
  for (auto& t : ones.tensors()) t.tensor->setOnes();
  ema_update(zero, ones);
  for (const auto& t : zero.tensors()) {
    CHECK(t.tensor->maxCoeff() == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(t.tensor->minCoeff() == doctest::Approx(0.01).epsilon(1e-12));
  }

  auto e = zeros_like(p);
  test::jitter(e, 7, 1.0);
  const auto e0 = e;
  for (int k = 1; k <= 200; ++k) ema_update(e, p);
  const double decay = std::pow(0.99, 200);
  const auto te = std::as_const(e).tensors(), t0 = e0.tensors(), tp = std::as_const(p).tensors();
  double worst = 0.0;
  for (size_t i = 0; i < te.size(); ++i) {
    const Mat<double> want = *tp[i].tensor + decay * (*t0[i].tensor - *tp[i].tensor);
    worst = std::max(worst, (*te[i].tensor - want).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("stage 1 leaves the backbone and understanding encoder untouched") {
  const Corpus corpus = make_corpus(8, 16, 16, 4);
  TrainState st = make_train_state(test::tiny_config(), 9);
  const TrainState before = st;
  StageConfig s = desk_stage(1, 0.01);
  s.total_steps = 3;
  s.batch_size = 4;
  std::ostringstream csv;
  RunOptions opt;
  opt.csv = &csv;
  const StageResult r = run_stage(s, corpus, st, 10, opt);
  CHECK(st.opt.step == 3);
  const auto now = std::as_const(st.params).tensors(), was = before.params.tensors(),
             ema = std::as_const(st.ema).tensors();
  bool trained_something = false;
  for (size_t i = 0; i < now.size(); ++i) {
    const ParamGroup g = group_of(now[i].name);
    if (g == ParamGroup::backbone || g == ParamGroup::f_enc) {
      INFO(now[i].name);
      CHECK(bit_equal(*now[i].tensor, *was[i].tensor));
      CHECK(bit_equal(*ema[i].tensor, *was[i].tensor));
    } else {
      trained_something |= !bit_equal(*now[i].tensor, *was[i].tensor);
    }
  }
  CHECK(trained_something);
  CHECK(r.log.back().task == "total");
  CHECK(r.log.back().step == 3);
  CHECK(csv.str().find("3,1,total,") != std::string::npos);
}

TEST_CASE("stages are reproducible from their inputs") {
  const Corpus corpus = make_corpus(11, 16, 16, 4);
  StageConfig s = desk_stage(2, 0.01);
  s.total_steps = 3;
  s.batch_size = 6;
  TrainState a = make_train_state(test::tiny_config(), 12);
  TrainState b = make_train_state(test::tiny_config(), 12);
  run_stage(s, corpus, a, 13);
  run_stage(s, corpus, b, 13);
  CHECK(params_bit_equal(a.params, b.params));
  CHECK(params_bit_equal(a.ema, b.ema));
  TrainState c = make_train_state(test::tiny_config(), 12);
  run_stage(s, corpus, c, 14);
  CHECK_FALSE(params_bit_equal(a.params, c.params));
}
