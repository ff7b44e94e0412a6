#pragma once

// ShapesWorld: a closed synthetic corpus of 16x16 single-shape images with
// exact captions, QA pairs, and a programmatic classifier used as the
// semantic oracle for both tasks.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uniflow/common.hpp"

namespace uniflow {

enum class Shape : std::uint8_t { circle, square, triangle };
enum class Color : std::uint8_t { red, green, blue };
enum class Position : std::uint8_t { top_left, top_right, bottom_left, bottom_right };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 3;
inline constexpr int kNumPositions = 4;
inline constexpr int kNumSpecs = kNumShapes * kNumColors * kNumPositions;

struct ShapeSpec {
  Shape shape = Shape::circle;
  Color color = Color::red;
  Position position = Position::top_left;

  int index() const {
    return (static_cast<int>(shape) * kNumColors + static_cast<int>(color)) *
               kNumPositions +
           static_cast<int>(position);
  }
  static ShapeSpec from_index(int i);
  static std::vector<ShapeSpec> all();

  bool operator==(const ShapeSpec&) const = default;
};

// "red circle top-left"
std::string describe(const ShapeSpec& spec);

struct Image {
  static constexpr int kSide = 16;
  static constexpr int kChannels = 3;
  static constexpr int kSize = kSide * kSide * kChannels;

  std::vector<float> pixels = std::vector<float>(kSize, 0.0f);  // HxWxC row-major

  float& at(int r, int c, int ch) { return pixels[(r * kSide + c) * kChannels + ch]; }
  float at(int r, int c, int ch) const {
    return pixels[(r * kSide + c) * kChannels + ch];
  }

  // (H*W) x C grid view in the model's layout.
  template <class T>
  Mat<T> grid() const {
    Mat<T> m(kSide * kSide, kChannels);
    for (int i = 0; i < kSize; ++i) m.data()[i] = static_cast<T>(pixels[i]);
    return m;
  }
  template <class T>
  static Image from_grid(const Mat<T>& m) {
    check_shape(m, kSide * kSide, kChannels, "Image::from_grid");
    Image img;
    for (int i = 0; i < kSize; ++i) img.pixels[i] = static_cast<float>(m.data()[i]);
    return img;
  }

  bool operator==(const Image&) const = default;
};

double l2_distance(const Image& a, const Image& b);

Image render_shape(const ShapeSpec& spec);

struct TemplateMatch {
  ShapeSpec spec;
  double distance = 0.0;
};

// Nearest rendered template under L2, ignoring the rejection threshold.
TemplateMatch nearest_template(const Image& img);

// Half the minimum pairwise L2 distance between the 36 templates.
double classification_threshold();
double min_template_gap();

// Nearest template, or nullopt when the best distance exceeds the threshold.
std::optional<ShapeSpec> oracle_classify(const Image& img);

// ---- vocabulary -----------------------------------------------------------

namespace tok {
inline constexpr int kPad = 0;
inline constexpr int kBoi = 1;
inline constexpr int kEoi = 2;
inline constexpr int kEos = 3;
inline constexpr int kNull = 4;
}  // namespace tok

class Vocab {
 public:
  static const Vocab& instance();

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& word(int id) const;
  // Throws Error naming the word when it is not in the vocabulary.
  int id(std::string_view word) const;
  std::optional<int> find(std::string_view word) const;

  int shape_id(Shape s) const;
  int color_id(Color c) const;
  int position_id(Position p) const;

 private:
  Vocab();
  std::vector<std::string> tokens_;
};

inline constexpr int kVocabSize = 32;

std::vector<int> tokenize(std::string_view text);
std::string detokenize(const std::vector<int>& ids);

// ---- corpus ---------------------------------------------------------------

enum class QuestionKind : std::uint8_t { shape, color, where };

struct UndSample {
  Image image;
  ShapeSpec spec;
  QuestionKind kind = QuestionKind::shape;
  std::vector<int> question;
  std::vector<int> answer;  // ends with |EOS|
};

struct GenSample {
  std::vector<int> caption;  // may be emptied by prompt dropout at train time
  Image image;
  ShapeSpec spec;
  bool short_caption = false;  // position word omitted
};

struct Corpus {
  std::uint64_t seed = 0;
  std::vector<UndSample> und;
  std::vector<GenSample> gen;
  std::vector<std::vector<int>> text;  // each ends with |EOS|

  bool operator==(const Corpus& o) const;
};

inline constexpr double kShortCaptionRate = 0.25;

UndSample make_qa(const ShapeSpec& spec, QuestionKind kind);
std::vector<int> full_caption(const ShapeSpec& spec);

Corpus make_corpus(std::uint64_t seed, int n_und, int n_gen, int n_text);

// n QA pairs with question kinds cycling shape/color/where and specs drawn
// from `seed`.
std::vector<UndSample> make_qa_eval_set(std::uint64_t seed, int n);

// Parses a caption (full or short) back to the attributes it names.
struct CaptionParse {
  std::optional<Shape> shape;
  std::optional<Color> color;
  std::optional<Position> position;
};
CaptionParse parse_caption(const std::vector<int>& ids);
bool caption_matches(const std::vector<int>& ids, const ShapeSpec& spec);

// Directory format: manifest.txt + images.f32 + sequences.txt.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

// Little-endian float32 IO shared with the checkpoint format.
void write_f32_le(std::ostream& os, const float* data, size_t n);
void read_f32_le(std::istream& is, float* data, size_t n);

}  // namespace uniflow
