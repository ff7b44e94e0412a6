#include <doctest.h>

#include <filesystem>
#include <set>

#include "helpers.hpp"
#include "uniflow/toydata.hpp"

using namespace uniflow;

TEST_CASE("red circle top-left occupies the top-left quadrant, red channel only") {
  const Image img = render_shape({Shape::circle, Color::red, Position::top_left});
  int lit = 0;
  for (int r = 0; r < Image::kSide; ++r) {
    for (int c = 0; c < Image::kSide; ++c) {
      for (int ch = 0; ch < Image::kChannels; ++ch) {
        if (img.at(r, c, ch) == 0.0f) continue;
        ++lit;
        CHECK(r < 8);
        CHECK(c < 8);
        CHECK(ch == 0);
      }
    }
  }
  CHECK(lit > 0);
}

TEST_CASE("rendering is deterministic and the oracle inverts it on all 36 specs") {
  for (const ShapeSpec& s : ShapeSpec::all()) {
    CHECK(render_shape(s) == render_shape(s));
    const auto got = oracle_classify(render_shape(s));
    REQUIRE(got.has_value());
    CHECK(*got == s);
  }
  const auto sq = oracle_classify(render_shape({Shape::square, Color::blue, Position::bottom_right}));
  REQUIRE(sq);
  CHECK(*sq == ShapeSpec{Shape::square, Color::blue, Position::bottom_right});
}

TEST_CASE("spec index round-trips") {
  std::set<int> seen;
  for (int i = 0; i < kNumSpecs; ++i) {
    CHECK(ShapeSpec::from_index(i).index() == i);
    seen.insert(ShapeSpec::from_index(i).index());
  }
  CHECK(seen.size() == 36u);
  CHECK_THROWS_AS(ShapeSpec::from_index(36), Error);
}

TEST_CASE("all-zero image is rejected") { CHECK_FALSE(oracle_classify(Image{}).has_value()); }

TEST_CASE("threshold is half the minimum template gap") {
  // Independent recomputation of the pairwise gap.
  double gap = 1e300;
  const auto specs = ShapeSpec::all();
  for (size_t i = 0; i < specs.size(); ++i) {
    for (size_t j = i + 1; j < specs.size(); ++j) {
      gap = std::min(gap, l2_distance(render_shape(specs[i]), render_shape(specs[j])));
    }
  }
  CHECK(min_template_gap() == doctest::Approx(gap).epsilon(1e-12));
  CHECK(classification_threshold() == doctest::Approx(gap / 2).epsilon(1e-12));
  // Amplitude-0.05 noise on all 768 values has L2 norm at most 0.05 * sqrt(768).
  CHECK(0.05 * std::sqrt(768.0) < gap / 2);
}

TEST_CASE("amplitude-0.05 uniform noise never flips the oracle") {
  Rng rng(99);
  for (int rep = 0; rep < 5; ++rep) {
    for (const ShapeSpec& s : ShapeSpec::all()) {
      Image img = render_shape(s);
      for (float& v : img.pixels) v += static_cast<float>((rng.uniform() * 2.0 - 1.0) * 0.05);
      const auto got = oracle_classify(img);
      REQUIRE(got);
      CHECK(*got == s);
    }
  }
}

TEST_CASE("tokenizer") {
  const Vocab& v = Vocab::instance();
  CHECK(v.size() == kVocabSize);
  const auto ids = tokenize("red circle top-left");
  REQUIRE(ids.size() == 3u);
  CHECK(ids[0] == v.id("red"));
  CHECK(ids[1] == v.id("circle"));
  CHECK(ids[2] == v.id("top-left"));
  CHECK(detokenize(ids) == "red circle top-left");
  CHECK(tokenize("").empty());
  CHECK(detokenize({}).empty());

  try {
    tokenize("purple circle");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("purple") != std::string::npos);
  }
}

TEST_CASE("tokenizer is a bijection on captions and questions") {
  for (const ShapeSpec& s : ShapeSpec::all()) {
    const auto cap = full_caption(s);
    CHECK(tokenize(detokenize(cap)) == cap);
    CHECK(detokenize(cap) == describe(s));
    for (auto kind : {QuestionKind::shape, QuestionKind::color, QuestionKind::where}) {
      const UndSample q = make_qa(s, kind);
      CHECK(tokenize(detokenize(q.question)) == q.question);
      CHECK(tokenize(detokenize(q.answer)) == q.answer);
      CHECK(q.answer.back() == tok::kEos);
    }
  }
}

TEST_CASE("corpus is deterministic and faithful") {
  const Corpus a = make_corpus(7, 50, 1000, 20);
  const Corpus b = make_corpus(7, 50, 1000, 20);
  CHECK(a == b);
  CHECK_FALSE(a == make_corpus(8, 50, 1000, 20));

  int short_caps = 0;
  for (const GenSample& g : a.gen) {
    short_caps += g.short_caption;
    const auto label = oracle_classify(g.image);
    REQUIRE(label);
    CHECK(*label == g.spec);
    CHECK(caption_matches(g.caption, *label));
    CHECK(g.caption.size() == (g.short_caption ? 2u : 3u));
  }
  // Binomial(1000, 0.25) 3-sigma band.
  CHECK(short_caps >= 200);
  CHECK(short_caps <= 300);

  for (const UndSample& u : a.und) {
    CHECK(*oracle_classify(u.image) == u.spec);
    CHECK(u.answer.back() == tok::kEos);
  }
  for (const auto& t : a.text) {
    REQUIRE(!t.empty());
    CHECK(t.back() == tok::kEos);
  }
}

TEST_CASE("caption parsing") {
  const ShapeSpec s{Shape::triangle, Color::green, Position::bottom_left};
  const CaptionParse p = parse_caption(full_caption(s));
  CHECK(p.shape == Shape::triangle);
  CHECK(p.color == Color::green);
  CHECK(p.position == Position::bottom_left);
  auto short_cap = full_caption(s);
  short_cap.pop_back();
  CHECK_FALSE(parse_caption(short_cap).position.has_value());
  CHECK(caption_matches(short_cap, s));
  CHECK_FALSE(caption_matches(full_caption({Shape::triangle, Color::red, Position::bottom_left}), s));
}

TEST_CASE("held-out QA set cycles question kinds") {
  const auto qa = make_qa_eval_set(1000003, 9);
  REQUIRE(qa.size() == 9u);
  for (size_t i = 0; i < qa.size(); ++i) {
    CHECK(static_cast<int>(qa[i].kind) == static_cast<int>(i % 3));
  }
}

TEST_CASE("corpus directory round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "uniflow_test_corpus";
  std::filesystem::remove_all(dir);
  const Corpus c = make_corpus(3, 10, 12, 5);
  save_corpus(c, dir);
  CHECK(load_corpus(dir) == c);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_corpus(dir), Error);
}
