#include <doctest.h>

#include "helpers.hpp"
#include "uniflow/understand.hpp"

using namespace uniflow;
using test::bit_equal;

namespace {

Sample<float> tokens_sample(int n, int first_id = 5) {
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) ids.push_back(first_id + i % 20);
  return text_sample<float>(ids);
}

ModelParams<float> tiny_model(std::uint64_t seed = 1) {
  ModelConfig c = test::tiny_config();
  c.l_max = 256;
  auto p = init_model<float>(c, seed);
  test::jitter(p, seed + 100, 0.05);
  return p;
}

}  // namespace

TEST_CASE("single token embeds as table row plus position 0") {
  const auto p = tiny_model();
  Sample<float> s{SequenceElement<float>::text(7, Role::condition)};
  const Mat<float> e = embed(s, p);
  REQUIRE(e.rows() == 1);
  const Mat<float> want = p.backbone.tok.row(7) + p.backbone.pos.row(0);
  CHECK(bit_equal(e, want));
}

TEST_CASE("understanding image expands to 64 rows; offsets only shift positions") {
  const auto p = tiny_model();
  const Image img = render_shape({Shape::square, Color::green, Position::top_right});
  const auto s = qa_sample<float>(img, tokenize("what color"), {tok::kEos});
  // question (2) + BOI + 64 + EOI + answer (1)
  CHECK(expanded_length(s) == 2 + 1 + 64 + 1 + 1);
  const Mat<float> a = embed(s, p, 0);
  const Mat<float> b = embed(s, p, 9);
  const int n = static_cast<int>(a.rows());
  const Mat<float> da = a - p.backbone.pos.middleRows(0, n);
  const Mat<float> db = b - p.backbone.pos.middleRows(9, n);
  CHECK((da - db).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("first-fit packing of 100 and 150 into 256") {
  const auto packs = first_fit({100, 150}, 256);
  REQUIRE(packs.size() == 1u);
  std::vector<Sample<float>> samples{tokens_sample(100), tokens_sample(150)};
  const auto layouts = plan_packs(samples, 256);
  REQUIRE(layouts.size() == 1u);
  const PackLayout& L = layouts[0];
  CHECK(L.used == 250);
  CHECK(L.length - L.used == 6);
  REQUIRE(L.spans.size() == 2u);
  CHECK(L.spans[0].length == 100);
  CHECK(L.spans[1].start == 100);
  L.mask.validate();
  int blocks = 0;
  for (auto [start, len] : L.mask.segments()) blocks += len > 1;
  CHECK(blocks == 2);
  CHECK_FALSE(L.mask.allowed(100, 99));
  CHECK(L.mask.allowed(249, 100));
  for (int q = 250; q < 256; ++q) {
    CHECK(L.roles[q] == Role::pad);
    CHECK(L.loss_mask[q] == 0);
  }
  // positions restart at each block
  CHECK(L.position_ids[100] == 0);
  CHECK(L.position_ids[249] == 149);
}

TEST_CASE("first-fit opens new packs and rejects oversize samples") {
  const auto packs = first_fit({200, 100, 50, 150}, 256);
  REQUIRE(packs.size() == 2u);
  CHECK(packs[0] == std::vector<int>{0, 2});
  CHECK(packs[1] == std::vector<int>{1, 3});
  CHECK_THROWS_AS(first_fit({300}, 256), Error);
}

TEST_CASE("loss mask covers exactly the response tokens") {
  const Image img = render_shape({Shape::circle, Color::blue, Position::bottom_left});
  std::vector<Sample<float>> samples{
      qa_sample<float>(img, tokenize("what shape"), {tokenize("circle")[0], tok::kEos}),
      text_sample<float>(tokenize("a red circle |EOS|"))};
  const PackLayout L = plan_packs(samples, 256)[0];
  int responses = 0;
  for (int q = 0; q < L.length; ++q) {
    if (L.roles[q] != Role::response || L.tokens[q] < 0) {
      CHECK(L.loss_mask[q] == 0);
    } else {
      CHECK(L.loss_mask[q] == 1);
      CHECK(L.targets[q] == L.tokens[q]);
      ++responses;
    }
  }
  CHECK(responses == 2 + 3);
  CHECK(L.response_tokens() == responses);
}

TEST_CASE("malformed samples are rejected") {
  const Image img = render_shape({Shape::circle, Color::blue, Position::bottom_left});
  Sample<float> no_boi{SequenceElement<float>::und_image(img),
                       SequenceElement<float>::text(tok::kEoi, Role::condition)};
  CHECK_THROWS_AS(validate_sample(no_boi), Error);
  Sample<float> no_eoi{SequenceElement<float>::text(tok::kBoi, Role::condition),
                       SequenceElement<float>::und_image(img)};
  CHECK_THROWS_AS(validate_sample(no_eoi), Error);
}

TEST_CASE("forward: shapes, determinism, causality") {
  const auto p = tiny_model();
  std::vector<Sample<float>> samples{tokens_sample(40), tokens_sample(30, 9)};
  const auto batches = pack(samples, p, 256);
  REQUIRE(batches.size() == 1u);
  const auto out = forward(batches[0], p);
  REQUIRE(out.hidden.size() == static_cast<size_t>(p.cfg.n_blocks + 1));
  for (const auto& h : out.hidden) {
    CHECK(h.rows() == 256);
    CHECK(h.cols() == p.cfg.d_emb);
  }
  CHECK(out.logits.rows() == 256);
  CHECK(out.logits.cols() == kVocabSize);
  CHECK(bit_equal(out.logits, forward(batches[0], p).logits));

  // Perturbing an embedding row changes nothing before it in its block and
  // nothing in the other block.
  for (int j : {5, 39, 45}) {
    PackedBatch<float> b = batches[0];
    b.embeddings.row(j).array() += 1.0f;
    const auto o2 = forward(b, p);
    const int block_start = j < 40 ? 0 : 40;
    const int block_end = j < 40 ? 40 : 70;
    for (int i = 0; i < 70; ++i) {
      const bool may_change = i >= j && i < block_end && i >= block_start;
      if (!may_change) CHECK(bit_equal<float>(o2.logits.row(i), out.logits.row(i)));
    }
    CHECK_FALSE(bit_equal<float>(o2.logits.row(j), out.logits.row(j)));
  }
}

TEST_CASE("packed logits equal unpacked logits") {
  const auto p = tiny_model(4);
  const Image img = render_shape({Shape::triangle, Color::red, Position::top_left});
  const auto a = qa_sample<float>(img, tokenize("where"), {tokenize("top-left")[0], tok::kEos});
  const auto b = tokens_sample(60, 6);
  const auto alone = forward(pack(std::vector<Sample<float>>{a}, p, 256)[0], p);
  const auto both = forward(pack(std::vector<Sample<float>>{b, a}, p, 256)[0], p);
  const int n = expanded_length(a);
  const double diff = (both.logits.middleRows(60, n) - alone.logits.topRows(n)).cwiseAbs().maxCoeff();
  CHECK(diff <= 1e-6);
}

TEST_CASE("zero head gives uniform predictions") {
  auto p = tiny_model();
  p.backbone.head.w.setZero();
  p.backbone.head.b.setZero();
  std::vector<Sample<float>> samples{tokens_sample(12)};
  const auto batches = pack(samples, p, 256);
  CHECK(ar_loss(batches, p) == doctest::Approx(std::log(32.0)).epsilon(1e-6));
}
