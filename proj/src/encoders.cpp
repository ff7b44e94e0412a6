#include "uniflow/encoders.hpp"

#include <cmath>

namespace uniflow {

namespace {
constexpr int kSide = ModelConfig::kImageSide;
constexpr int kGrid = ModelConfig::kGridSide;
}  // namespace

// ---- understanding encoder ------------------------------------------------

template <class T>
Mat<T> und_encoder_fwd(const Mat<T>& image, const UndEncoderParams<T>& p,
                       NoDeduce<UndEncoderCache<T>>* cache) {
  check_shape(image, kSide * kSide, ModelConfig::kLatentChannels, "und_encoder");
  Mat<T> h = conv3x3_fwd(image, kSide, kSide, p.stem, 2, cache ? &cache->cols : nullptr);
  if (cache) cache->blocks.resize(p.blocks.size());
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    h = convnext_fwd(h, kGrid, kGrid, p.blocks[i], cache ? &cache->blocks[i] : nullptr);
  }
  return layernorm_fwd(h, p.norm, cache ? &cache->norm : nullptr);
}

template <class T>
void und_encoder_bwd(const Mat<T>& d_features, const UndEncoderParams<T>& p,
                     const UndEncoderCache<T>& cache, UndEncoderParams<T>* grads) {
  Mat<T> d = layernorm_bwd(d_features, p.norm, cache.norm, grads ? &grads->norm : nullptr);
  for (size_t i = p.blocks.size(); i-- > 0;) {
    d = convnext_bwd(d, kGrid, kGrid, p.blocks[i], cache.blocks[i],
                     grads ? &grads->blocks[i] : nullptr);
  }
  conv3x3_bwd(cache.cols, d, kSide, kSide, ModelConfig::kLatentChannels, p.stem, 2,
              grads ? &grads->stem : nullptr);
}

// ---- generation encoder ---------------------------------------------------

template <class T>
Mat<T> gen_trunk_fwd(const Mat<T>& latent, const GenEncoderParams<T>& p,
                     NoDeduce<GenEncoderCache<T>>* cache) {
  check_shape(latent, kSide * kSide, ModelConfig::kLatentChannels, "gen_encoder");
  Mat<T> patches = patchify2x2(latent, kSide, kSide);
  Mat<T> h = linear_fwd(patches, p.patch);
  if (cache) {
    cache->patches = std::move(patches);
    cache->stem_out = h;
    cache->blocks.resize(p.blocks.size());
  }
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    h = convnext_fwd(h, kGrid, kGrid, p.blocks[i], cache ? &cache->blocks[i] : nullptr);
  }
  if (cache) cache->trunk = h;
  return h;
}

template <class T>
Mat<T> gen_trunk_bwd(const Mat<T>& d_trunk, const GenEncoderParams<T>& p,
                     const GenEncoderCache<T>& cache, GenEncoderParams<T>* grads) {
  Mat<T> d = d_trunk;
  for (size_t i = p.blocks.size(); i-- > 0;) {
    d = convnext_bwd(d, kGrid, kGrid, p.blocks[i], cache.blocks[i],
                     grads ? &grads->blocks[i] : nullptr);
  }
  Mat<T> d_patches = linear_bwd(cache.patches, d, p.patch, grads ? &grads->patch : nullptr);
  return pixel_shuffle2(d_patches, kGrid, kGrid);
}

template <class T>
GenEncoderOutput<T> gen_encoder_fwd(const Mat<T>& latent, const GenEncoderParams<T>& p,
                                    NoDeduce<GenEncoderCache<T>>* cache) {
  GenEncoderOutput<T> out;
  out.skip = gen_trunk_fwd(latent, p, cache);
  out.rows = linear_fwd(out.skip, p.out);
  return out;
}

template <class T>
Mat<T> gen_encoder_bwd(const Mat<T>& d_rows, const Mat<T>* d_skip,
                       const GenEncoderParams<T>& p, const GenEncoderCache<T>& cache,
                       GenEncoderParams<T>* grads) {
  Mat<T> d_trunk = linear_bwd(cache.trunk, d_rows, p.out, grads ? &grads->out : nullptr);
  if (d_skip) d_trunk += *d_skip;
  return gen_trunk_bwd(d_trunk, p, cache, grads);
}

// ---- generation decoder ---------------------------------------------------

template <class T>
Mat<T> gen_decoder_fwd(const Mat<T>& rows, const Mat<T>& skip, const GenDecoderParams<T>& p,
                       NoDeduce<GenDecoderCache<T>>* cache) {
  if (rows.rows() != ModelConfig::kGridCells) {
    throw Error("gen_decoder: expected " + std::to_string(ModelConfig::kGridCells) +
                " rows, got " + std::to_string(rows.rows()));
  }
  Mat<T> h = linear_fwd(rows, p.in);
  check_same_shape(h, skip, "gen_decoder skip");
  Mat<T> cat(h.rows(), h.cols() + skip.cols());
  cat << h, skip;
  if (cache) {
    cache->rows = rows;
    cache->concat = cat;
    cache->blocks.resize(p.blocks.size());
  }
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    cat = convnext_fwd(cat, kGrid, kGrid, p.blocks[i], cache ? &cache->blocks[i] : nullptr);
  }
  Mat<T> up = pixel_shuffle2(cat, kGrid, kGrid);
  Mat<T> v = linear_fwd(up, p.out);
  if (cache) cache->shuffled = std::move(up);
  return v;
}

template <class T>
std::pair<Mat<T>, Mat<T>> gen_decoder_bwd(const Mat<T>& d_velocity,
                                          const GenDecoderParams<T>& p,
                                          const GenDecoderCache<T>& cache,
                                          GenDecoderParams<T>* grads) {
  Mat<T> d_up = linear_bwd(cache.shuffled, d_velocity, p.out, grads ? &grads->out : nullptr);
  Mat<T> d = patchify2x2(d_up, kSide, kSide);
  for (size_t i = p.blocks.size(); i-- > 0;) {
    d = convnext_bwd(d, kGrid, kGrid, p.blocks[i], cache.blocks[i],
                     grads ? &grads->blocks[i] : nullptr);
  }
  const auto c = p.in.w.cols();
  Mat<T> d_h = d.leftCols(c);
  Mat<T> d_skip = d.rightCols(d.cols() - c);
  Mat<T> d_rows = linear_bwd(cache.rows, d_h, p.in, grads ? &grads->in : nullptr);
  return {std::move(d_rows), std::move(d_skip)};
}

// ---- time embedding -------------------------------------------------------

template <class T>
Mat<T> time_features(double t, int n_freqs) {
  Mat<T> f(1, 2 * n_freqs);
  const double scaled = 1000.0 * t;
  for (int k = 0; k < n_freqs; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / n_freqs);
    f(0, k) = static_cast<T>(std::sin(scaled * freq));
    f(0, n_freqs + k) = static_cast<T>(std::cos(scaled * freq));
  }
  return f;
}

template <class T>
Mat<T> time_embed_fwd(double t, const TimeEmbedParams<T>& p, int n_freqs, NoDeduce<TimeCache<T>>* cache) {
  Mat<T> feats = time_features<T>(t, n_freqs);
  Mat<T> pre = linear_fwd(feats, p.fc1);
  Mat<T> act = gelu_fwd(pre);
  Mat<T> out = linear_fwd(act, p.fc2);
  if (cache) {
    cache->feats = std::move(feats);
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

template <class T>
void time_embed_bwd(const Mat<T>& d_out, const TimeEmbedParams<T>& p,
                    const TimeCache<T>& cache, TimeEmbedParams<T>* grads) {
  Mat<T> d_act = linear_bwd(cache.act, d_out, p.fc2, grads ? &grads->fc2 : nullptr);
  Mat<T> d_pre = gelu_bwd(cache.pre, d_act);
  linear_bwd(cache.feats, d_pre, p.fc1, grads ? &grads->fc1 : nullptr);
}

// ---- alignment head -------------------------------------------------------

template <class T>
Mat<T> align_head_fwd(const Mat<T>& x, const AlignHeadParams<T>& p, NoDeduce<AlignCache<T>>* cache) {
  Mat<T> pre1 = linear_fwd(x, p.fc1);
  Mat<T> act1 = gelu_fwd(pre1);
  Mat<T> pre2 = linear_fwd(act1, p.fc2);
  Mat<T> act2 = gelu_fwd(pre2);
  Mat<T> y = linear_fwd(act2, p.fc3);
  if (cache) {
    cache->x = x;
    cache->pre1 = std::move(pre1);
    cache->act1 = std::move(act1);
    cache->pre2 = std::move(pre2);
    cache->act2 = std::move(act2);
  }
  return y;
}

template <class T>
Mat<T> align_head_bwd(const Mat<T>& dy, const AlignHeadParams<T>& p,
                      const AlignCache<T>& c, AlignHeadParams<T>* grads) {
  Mat<T> d_act2 = linear_bwd(c.act2, dy, p.fc3, grads ? &grads->fc3 : nullptr);
  Mat<T> d_pre2 = gelu_bwd(c.pre2, d_act2);
  Mat<T> d_act1 = linear_bwd(c.act1, d_pre2, p.fc2, grads ? &grads->fc2 : nullptr);
  Mat<T> d_pre1 = gelu_bwd(c.pre1, d_act1);
  return linear_bwd(c.x, d_pre1, p.fc1, grads ? &grads->fc1 : nullptr);
}

#define UNIFLOW_INSTANTIATE_ENCODERS(T)                                                     \
  template Mat<T> und_encoder_fwd<T>(const Mat<T>&, const UndEncoderParams<T>&,             \
                                     UndEncoderCache<T>*);                                  \
  template void und_encoder_bwd<T>(const Mat<T>&, const UndEncoderParams<T>&,               \
                                   const UndEncoderCache<T>&, UndEncoderParams<T>*);        \
  template Mat<T> gen_trunk_fwd<T>(const Mat<T>&, const GenEncoderParams<T>&,               \
                                   GenEncoderCache<T>*);                                    \
  template Mat<T> gen_trunk_bwd<T>(const Mat<T>&, const GenEncoderParams<T>&,               \
                                   const GenEncoderCache<T>&, GenEncoderParams<T>*);        \
  template GenEncoderOutput<T> gen_encoder_fwd<T>(const Mat<T>&, const GenEncoderParams<T>&, \
                                                  GenEncoderCache<T>*);                     \
  template Mat<T> gen_encoder_bwd<T>(const Mat<T>&, const Mat<T>*, const GenEncoderParams<T>&, \
                                     const GenEncoderCache<T>&, GenEncoderParams<T>*);      \
  template Mat<T> gen_decoder_fwd<T>(const Mat<T>&, const Mat<T>&, const GenDecoderParams<T>&, \
                                     GenDecoderCache<T>*);                                  \
  template std::pair<Mat<T>, Mat<T>> gen_decoder_bwd<T>(                                    \
      const Mat<T>&, const GenDecoderParams<T>&, const GenDecoderCache<T>&, GenDecoderParams<T>*); \
  template Mat<T> time_features<T>(double, int);                                            \
  template Mat<T> time_embed_fwd<T>(double, const TimeEmbedParams<T>&, int, TimeCache<T>*); \
  template void time_embed_bwd<T>(const Mat<T>&, const TimeEmbedParams<T>&,                 \
                                  const TimeCache<T>&, TimeEmbedParams<T>*);                \
  template Mat<T> align_head_fwd<T>(const Mat<T>&, const AlignHeadParams<T>&, AlignCache<T>*); \
  template Mat<T> align_head_bwd<T>(const Mat<T>&, const AlignHeadParams<T>&,               \
                                    const AlignCache<T>&, AlignHeadParams<T>*);

UNIFLOW_INSTANTIATE_ENCODERS(float)
UNIFLOW_INSTANTIATE_ENCODERS(double)

#undef UNIFLOW_INSTANTIATE_ENCODERS

}  // namespace uniflow
