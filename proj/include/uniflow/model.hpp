#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uniflow/layers.hpp"
#include "uniflow/toydata.hpp"

namespace uniflow {

struct ModelConfig {
  int d_emb = 64;
  int n_blocks = 6;
  int n_heads = 4;
  int l_max = 256;
  int vocab = kVocabSize;
  int repa_block = 3;  // 1-based block whose output feeds the alignment head
  int d_enc = 32;      // understanding feature width
  int c_gen = 32;      // generation trunk / skip width
  int time_freqs = 16; // sinusoid pairs for the time embedding
  bool shared_encoder = false;  // ablation: understanding reuses the gen trunk

  static constexpr int kImageSide = Image::kSide;
  static constexpr int kGridSide = Image::kSide / 2;  // H_im = W_im = H_gen = W_gen
  static constexpr int kGridCells = kGridSide * kGridSide;
  static constexpr int kLatentChannels = Image::kChannels;

  // Width of the features an understanding image contributes before projection.
  int und_feature_dim() const { return shared_encoder ? c_gen : d_enc; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct BlockParams {
  NormParams<T> ln1;
  AttentionParams<T> attn;
  NormParams<T> ln2;
  LinearParams<T> fc1;
  LinearParams<T> fc2;
};

template <class T>
struct BackboneParams {
  Mat<T> tok;  // V x D
  Mat<T> pos;  // L_max x D
  std::vector<BlockParams<T>> blocks;
  NormParams<T> ln_f;
  LinearParams<T> head;  // D -> V
};

template <class T>
struct UndEncoderParams {
  ConvParams<T> stem;  // 3x3 stride 2, 3 -> d_enc
  std::vector<ConvNeXtParams<T>> blocks;
  NormParams<T> norm;
};

template <class T>
struct GenEncoderParams {
  LinearParams<T> patch;  // 4*3 -> c_gen on 2x2 patches
  std::vector<ConvNeXtParams<T>> blocks;
  LinearParams<T> out;    // c_gen -> d_emb
};

template <class T>
struct GenDecoderParams {
  LinearParams<T> in;     // d_emb -> c_gen
  std::vector<ConvNeXtParams<T>> blocks;  // on 2*c_gen (skip concatenated)
  LinearParams<T> out;    // 2*c_gen/4 -> 3 after pixel shuffle
};

template <class T>
struct TimeEmbedParams {
  LinearParams<T> fc1;  // 2*time_freqs -> d_emb
  LinearParams<T> fc2;  // d_emb -> d_emb
};

template <class T>
struct AlignHeadParams {
  LinearParams<T> fc1, fc2, fc3;  // d_emb -> d_emb -> d_emb -> d_enc
};

template <class T>
struct NamedTensor {
  std::string name;
  Mat<T>* tensor;
};

template <class T>
struct ConstNamedTensor {
  std::string name;
  const Mat<T>* tensor;
};

template <class T>
struct ModelParams {
  ModelConfig cfg;
  BackboneParams<T> backbone;
  LinearParams<T> und_proj;
  UndEncoderParams<T> f_enc;
  GenEncoderParams<T> g_enc;
  GenDecoderParams<T> g_dec;
  TimeEmbedParams<T> time;
  AlignHeadParams<T> align;

  // Every trainable tensor exactly once, in a fixed order.
  std::vector<NamedTensor<T>> tensors();
  std::vector<ConstNamedTensor<T>> tensors() const;
};

template <class T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint64_t seed);

template <class T>
ModelParams<T> zeros_like(const ModelParams<T>& p);

template <class To, class From>
ModelParams<To> cast_model(const ModelParams<From>& p);

template <class T>
size_t parameter_count(const ModelParams<T>& p);

template <class T>
void set_zero(ModelParams<T>& p);

// dst += src
template <class T>
void accumulate(ModelParams<T>& dst, const ModelParams<T>& src);

enum class ParamGroup { backbone, und_proj, f_enc, g_enc, g_dec, time, align };

ParamGroup group_of(const std::string& tensor_name);
const char* group_name(ParamGroup g);

}  // namespace uniflow
