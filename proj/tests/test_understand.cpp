#include <doctest.h>

#include "helpers.hpp"
#include "uniflow/understand.hpp"

using namespace uniflow;
using test::bit_equal;

TEST_CASE("understanding features are 8x8 x d_enc, finite and distinct per spec") {
  const auto p = init_model<float>(ModelConfig{}, 0);
  std::vector<Mat<float>> feats;
  for (const ShapeSpec& s : ShapeSpec::all()) {
    feats.push_back(f_enc(render_shape(s), p));
    CHECK(feats.back().rows() == 64);
    CHECK(feats.back().cols() == 32);
    CHECK(all_finite(feats.back()));
  }
  double min_gap = 1e300;
  for (size_t i = 0; i < feats.size(); ++i) {
    for (size_t j = i + 1; j < feats.size(); ++j) {
      min_gap = std::min(min_gap, static_cast<double>((feats[i] - feats[j]).norm()));
    }
  }
  CHECK(min_gap > 0.0);
  const Image img = render_shape(ShapeSpec::from_index(5));
  CHECK(bit_equal(f_enc(img, p), f_enc(img, p)));
}

TEST_CASE("projection output has d_emb columns") {
  const auto p = init_model<float>(ModelConfig{}, 0);
  const Mat<float> f = f_enc(render_shape(ShapeSpec::from_index(0)), p);
  CHECK(linear_fwd(f, p.und_proj).cols() == p.cfg.d_emb);
}

TEST_CASE("hand-set logits with p(correct) = 1/2 give log 2") {
  const Image img = render_shape({Shape::circle, Color::red, Position::top_left});
  const int red = Vocab::instance().id("red");
  std::vector<Sample<double>> samples{qa_sample<double>(img, tokenize("what color"), {red, tok::kEos})};
  const PackLayout L = plan_packs(samples, 256)[0];
  REQUIRE(L.response_tokens() == 2);
  LinearParams<double> head{Mat<double>::Zero(8, kVocabSize), Mat<double>::Constant(1, kVocabSize, -1e4)};
  head.b(0, red) = 0.0;
  head.b(0, tok::kEos) = 0.0;
  const Mat<double> final = Mat<double>::Ones(L.length, 8);
  const ArSum s = ar_terms<double>(final, L, head, 1.0, nullptr, nullptr);
  CHECK(s.count == 2);
  CHECK(s.nll / s.count == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("targets outside the loss mask do not affect the loss") {
  ModelConfig c = test::tiny_config();
  c.l_max = 256;
  auto p = init_model<float>(c, 2);
  test::jitter(p, 3, 0.05);
  const Corpus corpus = make_corpus(4, 4, 0, 4);
  std::vector<Sample<float>> samples;
  for (const auto& u : corpus.und) samples.push_back(qa_sample<float>(u.image, u.question, u.answer));
  for (const auto& t : corpus.text) samples.push_back(text_sample<float>(t));
  auto batches = pack(samples, p, 256);
  Rng rng(5);
  for (auto& b : batches) {
    const auto out = forward(b, p);
    const ArSum ref = ar_terms<float>(out.final, b.layout, p.backbone.head, 1.0, nullptr, nullptr);
    for (int q = 0; q < b.layout.length; ++q) {
      if (!b.layout.loss_mask[q]) b.layout.targets[q] = static_cast<int>(rng.below(kVocabSize));
    }
    const ArSum mutated = ar_terms<float>(out.final, b.layout, p.backbone.head, 1.0, nullptr, nullptr);
    CHECK(mutated.nll == ref.nll);
    CHECK(mutated.count == ref.count);
    CHECK(ref.nll >= 0.0);
  }
}

TEST_CASE("ar_loss rejects batches without responses") {
  const auto p = init_model<float>(test::tiny_config(), 0);
  std::vector<Sample<float>> samples{text_sample<float>({5})};
  CHECK_THROWS_AS(ar_loss(pack(samples, p, 160), p), Error);
}

TEST_CASE("greedy answering is deterministic and honours max_len") {
  auto p = init_model<float>(test::tiny_config(), 6);
  test::jitter(p, 7, 0.05);
  const Image img = render_shape({Shape::circle, Color::red, Position::top_left});
  const auto q = tokenize("what color");
  const auto a = answer(img, q, p, 4);
  CHECK(a == answer(img, q, p, 4));
  CHECK(a.size() <= 4u);
  CHECK(answer(img, q, p, 1).size() == 1u);
  // Stops right after |EOS| when the head always prefers it.
  p.backbone.head.w.setZero();
  p.backbone.head.b.setZero();
  p.backbone.head.b(0, tok::kEos) = 5.0f;
  CHECK(answer(img, q, p, 4) == std::vector<int>{tok::kEos});
}
