#include "uniflow/toydata.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "uniflow/rng.hpp"

namespace uniflow {

ShapeSpec ShapeSpec::from_index(int i) {
  if (i < 0 || i >= kNumSpecs) throw Error("ShapeSpec index out of range: " + std::to_string(i));
  ShapeSpec s;
  s.position = static_cast<Position>(i % kNumPositions);
  i /= kNumPositions;
  s.color = static_cast<Color>(i % kNumColors);
  s.shape = static_cast<Shape>(i / kNumColors);
  return s;
}

std::vector<ShapeSpec> ShapeSpec::all() {
  std::vector<ShapeSpec> out;
  for (int i = 0; i < kNumSpecs; ++i) out.push_back(from_index(i));
  return out;
}

std::string describe(const ShapeSpec& spec) {
  const Vocab& v = Vocab::instance();
  return v.word(v.color_id(spec.color)) + " " + v.word(v.shape_id(spec.shape)) +
         " " + v.word(v.position_id(spec.position));
}

double l2_distance(const Image& a, const Image& b) {
  double s = 0.0;
  for (int i = 0; i < Image::kSize; ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

// 6x6 footprints; each shape covers a distinct pixel set.
bool covers(Shape shape, int r, int c) {
  switch (shape) {
    case Shape::square:
      return true;
    case Shape::circle: {
      const double dr = r - 2.5, dc = c - 2.5;
      return dr * dr + dc * dc <= 6.5;
    }
    case Shape::triangle: {
      const int half = r / 2 + 1;
      return c >= 3 - half && c <= 2 + half;
    }
  }
  return false;
}

struct TemplateBank {
  std::vector<Image> images;
  double min_gap = 0.0;

  TemplateBank() {
    for (const ShapeSpec& s : ShapeSpec::all()) images.push_back(render_shape(s));
    min_gap = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < images.size(); ++i) {
      for (size_t j = i + 1; j < images.size(); ++j) {
        min_gap = std::min(min_gap, l2_distance(images[i], images[j]));
      }
    }
  }

  static const TemplateBank& get() {
    static const TemplateBank bank;
    return bank;
  }
};

}  // namespace

Image render_shape(const ShapeSpec& spec) {
  Image img;
  const int pos = static_cast<int>(spec.position);
  const int r0 = (pos / 2) * 8 + 1;
  const int c0 = (pos % 2) * 8 + 1;
  const int ch = static_cast<int>(spec.color);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      if (covers(spec.shape, r, c)) img.at(r0 + r, c0 + c, ch) = 1.0f;
    }
  }
  return img;
}

TemplateMatch nearest_template(const Image& img) {
  const auto& bank = TemplateBank::get();
  TemplateMatch best{ShapeSpec::from_index(0), std::numeric_limits<double>::infinity()};
  for (int i = 0; i < kNumSpecs; ++i) {
    const double d = l2_distance(img, bank.images[i]);
    if (d < best.distance) best = {ShapeSpec::from_index(i), d};
  }
  return best;
}

double min_template_gap() { return TemplateBank::get().min_gap; }

double classification_threshold() { return 0.5 * min_template_gap(); }

std::optional<ShapeSpec> oracle_classify(const Image& img) {
  for (float p : img.pixels) {
    if (!std::isfinite(p)) return std::nullopt;
  }
  const TemplateMatch m = nearest_template(img);
  if (m.distance > classification_threshold()) return std::nullopt;
  return m.spec;
}

// ---- vocabulary -----------------------------------------------------------

Vocab::Vocab()
    : tokens_{"|PAD|",     "|BOI|",      "|EOI|",       "|EOS|",        "|NULL|",
              "circle",    "square",     "triangle",    "red",          "green",
              "blue",      "top-left",   "top-right",   "bottom-left",  "bottom-right",
              "what",      "shape",      "color",       "where",        "is",
              "the",       "a",          "at",          "in",           "image",
              "of",        "this",       "describe",    "and",          "object",
              "picture",   "it"} {}

const Vocab& Vocab::instance() {
  static const Vocab v;
  return v;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

std::optional<int> Vocab::find(std::string_view word) const {
  for (int i = 0; i < size(); ++i) {
    if (tokens_[i] == word) return i;
  }
  return std::nullopt;
}

int Vocab::id(std::string_view word) const {
  if (auto i = find(word)) return *i;
  throw Error("unknown word \"" + std::string(word) + "\"");
}

int Vocab::shape_id(Shape s) const { return 5 + static_cast<int>(s); }
int Vocab::color_id(Color c) const { return 8 + static_cast<int>(c); }
int Vocab::position_id(Position p) const { return 11 + static_cast<int>(p); }

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> ids;
  if (text.empty()) return ids;
  const Vocab& v = Vocab::instance();
  size_t start = 0;
  while (true) {
    const size_t sp = text.find(' ', start);
    const std::string_view w = text.substr(start, sp == std::string_view::npos ? std::string_view::npos : sp - start);
    if (w.empty()) throw Error("empty word in \"" + std::string(text) + "\"");
    ids.push_back(v.id(w));
    if (sp == std::string_view::npos) break;
    start = sp + 1;
  }
  return ids;
}

std::string detokenize(const std::vector<int>& ids) {
  const Vocab& v = Vocab::instance();
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += v.word(ids[i]);
  }
  return out;
}

// ---- corpus ---------------------------------------------------------------

bool Corpus::operator==(const Corpus& o) const {
  auto und_eq = [](const UndSample& a, const UndSample& b) {
    return a.image == b.image && a.spec == b.spec && a.kind == b.kind &&
           a.question == b.question && a.answer == b.answer;
  };
  auto gen_eq = [](const GenSample& a, const GenSample& b) {
    return a.caption == b.caption && a.image == b.image && a.spec == b.spec &&
           a.short_caption == b.short_caption;
  };
  return seed == o.seed && text == o.text &&
         std::equal(und.begin(), und.end(), o.und.begin(), o.und.end(), und_eq) &&
         std::equal(gen.begin(), gen.end(), o.gen.begin(), o.gen.end(), gen_eq);
}

UndSample make_qa(const ShapeSpec& spec, QuestionKind kind) {
  const Vocab& v = Vocab::instance();
  UndSample s;
  s.image = render_shape(spec);
  s.spec = spec;
  s.kind = kind;
  switch (kind) {
    case QuestionKind::shape:
      s.question = tokenize("what shape");
      s.answer = {v.shape_id(spec.shape), tok::kEos};
      break;
    case QuestionKind::color:
      s.question = tokenize("what color");
      s.answer = {v.color_id(spec.color), tok::kEos};
      break;
    case QuestionKind::where:
      s.question = tokenize("where");
      s.answer = {v.position_id(spec.position), tok::kEos};
      break;
  }
  return s;
}

std::vector<int> full_caption(const ShapeSpec& spec) {
  const Vocab& v = Vocab::instance();
  return {v.color_id(spec.color), v.shape_id(spec.shape), v.position_id(spec.position)};
}

namespace {

ShapeSpec random_spec(Rng& rng) {
  return ShapeSpec::from_index(static_cast<int>(rng.below(kNumSpecs)));
}

std::vector<int> random_sentence(const ShapeSpec& s, Rng& rng) {
  const Vocab& v = Vocab::instance();
  const std::string color = v.word(v.color_id(s.color));
  const std::string shape = v.word(v.shape_id(s.shape));
  const std::string pos = v.word(v.position_id(s.position));
  std::string text;
  switch (rng.below(4)) {
    case 0: text = "the " + color + " " + shape + " is at " + pos; break;
    case 1: text = "a " + color + " " + shape + " in the " + pos; break;
    case 2: text = "this image of a " + color + " " + shape; break;
    default: text = "the object is a " + shape + " and it is " + color; break;
  }
  std::vector<int> ids = tokenize(text);
  ids.push_back(tok::kEos);
  return ids;
}

}  // namespace

Corpus make_corpus(std::uint64_t seed, int n_und, int n_gen, int n_text) {
  if (n_und < 0 || n_gen < 0 || n_text < 0) throw Error("make_corpus: negative count");
  Corpus c;
  c.seed = seed;
  Rng und_rng(derive_seed(seed, {1}));
  Rng gen_rng(derive_seed(seed, {2}));
  Rng text_rng(derive_seed(seed, {3}));
  c.und.reserve(n_und);
  for (int i = 0; i < n_und; ++i) {
    const ShapeSpec spec = random_spec(und_rng);
    const auto kind = static_cast<QuestionKind>(und_rng.below(3));
    c.und.push_back(make_qa(spec, kind));
  }
  c.gen.reserve(n_gen);
  for (int i = 0; i < n_gen; ++i) {
    GenSample g;
    g.spec = random_spec(gen_rng);
    g.image = render_shape(g.spec);
    g.caption = full_caption(g.spec);
    g.short_caption = gen_rng.bernoulli(kShortCaptionRate);
    if (g.short_caption) g.caption.pop_back();
    c.gen.push_back(std::move(g));
  }
  c.text.reserve(n_text);
  for (int i = 0; i < n_text; ++i) {
    c.text.push_back(random_sentence(random_spec(text_rng), text_rng));
  }
  return c;
}

std::vector<UndSample> make_qa_eval_set(std::uint64_t seed, int n) {
  Rng rng(derive_seed(seed, {4}));
  std::vector<UndSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(make_qa(random_spec(rng), static_cast<QuestionKind>(i % 3)));
  }
  return out;
}

CaptionParse parse_caption(const std::vector<int>& ids) {
  CaptionParse p;
  for (int id : ids) {
    if (id >= 5 && id < 8) p.shape = static_cast<Shape>(id - 5);
    else if (id >= 8 && id < 11) p.color = static_cast<Color>(id - 8);
    else if (id >= 11 && id < 15) p.position = static_cast<Position>(id - 11);
  }
  return p;
}

bool caption_matches(const std::vector<int>& ids, const ShapeSpec& spec) {
  const CaptionParse p = parse_caption(ids);
  return (!p.shape || *p.shape == spec.shape) &&
         (!p.color || *p.color == spec.color) &&
         (!p.position || *p.position == spec.position);
}

// ---- IO -------------------------------------------------------------------

void write_f32_le(std::ostream& os, const float* data, size_t n) {
  std::vector<unsigned char> buf(n * 4);
  for (size_t i = 0; i < n; ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_f32_le(std::istream& is, float* data, size_t n) {
  std::vector<unsigned char> buf(n * 4);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<size_t>(is.gcount()) != buf.size()) throw Error("truncated float32 payload");
  for (size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[i * 4 + b]) << (8 * b);
    data[i] = std::bit_cast<float>(bits);
  }
}

namespace {

void write_ids(std::ostream& os, const std::vector<int>& ids) {
  for (int id : ids) os << ' ' << id;
}

std::vector<int> parse_ids(std::istringstream& is, bool stop_at_bar, bool* saw_bar) {
  std::vector<int> ids;
  std::string w;
  while (is >> w) {
    if (w == "|") {
      if (!stop_at_bar) throw Error("unexpected '|' in sequence line");
      if (saw_bar) *saw_bar = true;
      return ids;
    }
    ids.push_back(std::stoi(w));
  }
  return ids;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.txt");
    if (!m) throw Error("cannot write " + (dir / "manifest.txt").string());
    m << "seed " << corpus.seed << "\n";
    m << "n_und " << corpus.und.size() << "\n";
    m << "n_gen " << corpus.gen.size() << "\n";
    m << "n_text " << corpus.text.size() << "\n";
    m << "image_shape " << Image::kSide << " " << Image::kSide << " " << Image::kChannels << "\n";
    m << "vocab " << Vocab::instance().size() << "\n";
    for (const auto& t : Vocab::instance().tokens()) m << t << "\n";
  }
  {
    std::ofstream im(dir / "images.f32", std::ios::binary);
    if (!im) throw Error("cannot write " + (dir / "images.f32").string());
    for (const auto& u : corpus.und) write_f32_le(im, u.image.pixels.data(), Image::kSize);
    for (const auto& g : corpus.gen) write_f32_le(im, g.image.pixels.data(), Image::kSize);
  }
  {
    std::ofstream sq(dir / "sequences.txt");
    if (!sq) throw Error("cannot write " + (dir / "sequences.txt").string());
    for (const auto& u : corpus.und) {
      sq << "U";
      write_ids(sq, u.question);
      sq << " |";
      write_ids(sq, u.answer);
      sq << "\n";
    }
    for (const auto& g : corpus.gen) {
      sq << "G";
      write_ids(sq, g.caption);
      sq << "\n";
    }
    for (const auto& t : corpus.text) {
      sq << "T";
      write_ids(sq, t);
      sq << "\n";
    }
  }
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus c;
  size_t n_und = 0, n_gen = 0, n_text = 0;
  {
    std::ifstream m(dir / "manifest.txt");
    if (!m) throw Error("cannot read " + (dir / "manifest.txt").string());
    std::string key;
    int vocab = 0;
    while (m >> key) {
      if (key == "seed") m >> c.seed;
      else if (key == "n_und") m >> n_und;
      else if (key == "n_gen") m >> n_gen;
      else if (key == "n_text") m >> n_text;
      else if (key == "image_shape") {
        int h, w, ch;
        m >> h >> w >> ch;
        if (h != Image::kSide || w != Image::kSide || ch != Image::kChannels) {
          throw Error("corpus image shape mismatch");
        }
      } else if (key == "vocab") {
        m >> vocab;
        const auto& tokens = Vocab::instance().tokens();
        if (vocab != static_cast<int>(tokens.size())) throw Error("corpus vocab size mismatch");
        for (int i = 0; i < vocab; ++i) {
          std::string t;
          m >> t;
          if (t != tokens[i]) throw Error("corpus vocab mismatch at id " + std::to_string(i) + ": " + t);
        }
      } else {
        throw Error("unknown manifest key: " + key);
      }
    }
  }
  std::ifstream im(dir / "images.f32", std::ios::binary);
  if (!im) throw Error("cannot read " + (dir / "images.f32").string());
  std::ifstream sq(dir / "sequences.txt");
  if (!sq) throw Error("cannot read " + (dir / "sequences.txt").string());

  auto read_image = [&] {
    Image img;
    read_f32_le(im, img.pixels.data(), Image::kSize);
    return img;
  };
  auto label = [](const Image& img) {
    auto s = oracle_classify(img);
    if (!s) throw Error("corpus image does not match any template");
    return *s;
  };

  std::string line;
  while (std::getline(sq, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line.substr(1));
    switch (line[0]) {
      case 'U': {
        UndSample u;
        bool bar = false;
        u.question = parse_ids(ls, true, &bar);
        if (!bar) throw Error("understanding line lacks '|' separator");
        u.answer = parse_ids(ls, false, nullptr);
        c.und.push_back(std::move(u));
        break;
      }
      case 'G': {
        GenSample g;
        g.caption = parse_ids(ls, false, nullptr);
        c.gen.push_back(std::move(g));
        break;
      }
      case 'T':
        c.text.push_back(parse_ids(ls, false, nullptr));
        break;
      default:
        throw Error("bad sequence line prefix: " + line.substr(0, 1));
    }
  }
  if (c.und.size() != n_und || c.gen.size() != n_gen || c.text.size() != n_text) {
    throw Error("corpus sequence counts disagree with manifest");
  }
  for (auto& u : c.und) {
    u.image = read_image();
    u.spec = label(u.image);
    const std::string q = detokenize(u.question);
    u.kind = q == "what shape" ? QuestionKind::shape
             : q == "what color" ? QuestionKind::color
                                 : QuestionKind::where;
  }
  for (auto& g : c.gen) {
    g.image = read_image();
    g.spec = label(g.image);
    g.short_caption = !parse_caption(g.caption).position.has_value();
  }
  return c;
}

}  // namespace uniflow
