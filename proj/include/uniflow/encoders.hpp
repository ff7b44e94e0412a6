#pragma once

// Image and time towers around the backbone: the understanding encoder, the
// generation encoder/decoder pair with its long skip connection, the time
// embedding MLP, and the alignment head that projects backbone states into
// understanding-feature space.

#include <utility>
#include <vector>

#include "uniflow/model.hpp"

namespace uniflow {

// ---- understanding encoder: 16x16x3 -> 8x8 x d_enc ------------------------

template <class T>
struct UndEncoderCache {
  Mat<T> cols;
  std::vector<ConvNeXtCache<T>> blocks;
  NormCache<T> norm;
};

// stride-2 conv stem -> 2 ConvNeXt blocks -> channel layernorm.
template <class T>
Mat<T> und_encoder_fwd(const Mat<T>& image, const UndEncoderParams<T>& p,
                       NoDeduce<UndEncoderCache<T>>* cache);
template <class T>
void und_encoder_bwd(const Mat<T>& d_features, const UndEncoderParams<T>& p,
                     const UndEncoderCache<T>& cache, UndEncoderParams<T>* grads);

// ---- generation encoder ---------------------------------------------------

template <class T>
struct GenEncoderCache {
  Mat<T> patches;
  Mat<T> stem_out;
  std::vector<ConvNeXtCache<T>> blocks;
  Mat<T> trunk;
};

template <class T>
struct GenEncoderOutput {
  Mat<T> rows;  // 64 x d_emb
  Mat<T> skip;  // 64 x c_gen, pre-linear trunk features
};

// 2x2 patchify -> linear -> 2 ConvNeXt blocks -> linear to d_emb.
template <class T>
GenEncoderOutput<T> gen_encoder_fwd(const Mat<T>& latent, const GenEncoderParams<T>& p,
                                    NoDeduce<GenEncoderCache<T>>* cache);
// Returns d_latent.
template <class T>
Mat<T> gen_encoder_bwd(const Mat<T>& d_rows, const Mat<T>* d_skip,
                       const GenEncoderParams<T>& p, const GenEncoderCache<T>& cache,
                       GenEncoderParams<T>* grads);

// Trunk only (no output linear); the shared-encoder ablation feeds
// understanding images through this.
template <class T>
Mat<T> gen_trunk_fwd(const Mat<T>& latent, const GenEncoderParams<T>& p,
                     NoDeduce<GenEncoderCache<T>>* cache);
template <class T>
Mat<T> gen_trunk_bwd(const Mat<T>& d_trunk, const GenEncoderParams<T>& p,
                     const GenEncoderCache<T>& cache, GenEncoderParams<T>* grads);

// ---- generation decoder ---------------------------------------------------

template <class T>
struct GenDecoderCache {
  Mat<T> rows;
  Mat<T> concat;
  std::vector<ConvNeXtCache<T>> blocks;
  Mat<T> shuffled;
};

// linear -> concat skip -> 2 ConvNeXt blocks -> pixel shuffle -> linear.
// Returns a 256 x 3 velocity grid.
template <class T>
Mat<T> gen_decoder_fwd(const Mat<T>& rows, const Mat<T>& skip, const GenDecoderParams<T>& p,
                       NoDeduce<GenDecoderCache<T>>* cache);
// Returns (d_rows, d_skip).
template <class T>
std::pair<Mat<T>, Mat<T>> gen_decoder_bwd(const Mat<T>& d_velocity,
                                          const GenDecoderParams<T>& p,
                                          const GenDecoderCache<T>& cache,
                                          GenDecoderParams<T>* grads);

// ---- time embedding -------------------------------------------------------

template <class T>
Mat<T> time_features(double t, int n_freqs);

template <class T>
struct TimeCache {
  Mat<T> feats;
  Mat<T> pre;
  Mat<T> act;
};

template <class T>
Mat<T> time_embed_fwd(double t, const TimeEmbedParams<T>& p, int n_freqs, NoDeduce<TimeCache<T>>* cache);
template <class T>
void time_embed_bwd(const Mat<T>& d_out, const TimeEmbedParams<T>& p,
                    const TimeCache<T>& cache, TimeEmbedParams<T>* grads);

// ---- alignment head -------------------------------------------------------

template <class T>
struct AlignCache {
  Mat<T> x, pre1, act1, pre2, act2;
};

// Three linears with GELU between: d_emb -> d_emb -> d_emb -> d_enc.
template <class T>
Mat<T> align_head_fwd(const Mat<T>& x, const AlignHeadParams<T>& p, NoDeduce<AlignCache<T>>* cache);
template <class T>
Mat<T> align_head_bwd(const Mat<T>& dy, const AlignHeadParams<T>& p,
                      const AlignCache<T>& cache, AlignHeadParams<T>* grads);

}  // namespace uniflow
