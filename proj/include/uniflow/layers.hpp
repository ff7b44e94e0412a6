#pragma once

// Numeric substrate: the closed set of layers the model uses, each with a
// hand-written backward pass. Backward functions accumulate (+=) parameter
// gradients into the `grads` argument when it is non-null and return the
// gradient with respect to the layer input.

#include <utility>
#include <vector>

#include "uniflow/common.hpp"
#include "uniflow/rng.hpp"

namespace uniflow {

template <class T>
struct LinearParams {
  Mat<T> w;  // in x out
  Mat<T> b;  // 1 x out
};

template <class T>
struct NormParams {
  Mat<T> gamma;  // 1 x C
  Mat<T> beta;   // 1 x C
};

// Full 3x3 convolution, zero padding 1. Weight rows are ordered
// (ky * 3 + kx) * cin + ci.
template <class T>
struct ConvParams {
  Mat<T> w;  // 9*cin x cout
  Mat<T> b;  // 1 x cout
};

template <class T>
struct DepthwiseParams {
  Mat<T> w;  // 9 x C, row ky * 3 + kx
  Mat<T> b;  // 1 x C
};

template <class T>
struct ConvNeXtParams {
  DepthwiseParams<T> dw;
  NormParams<T> norm;
  LinearParams<T> fc1;  // C -> 4C
  LinearParams<T> fc2;  // 4C -> C
};

template <class T>
struct AttentionParams {
  Mat<T> wq, wk, wv, wo;  // D x D each, no biases
};

inline constexpr double kLayerNormEps = 1e-5;

// ---- initialization -------------------------------------------------------

inline constexpr double kInitStd = 0.02;

template <class T>
void init_linear(LinearParams<T>& p, int in, int out, Rng& rng,
                 bool zero_weight = false);
template <class T>
void init_norm(NormParams<T>& p, int channels);
template <class T>
void init_conv(ConvParams<T>& p, int cin, int cout, Rng& rng);
template <class T>
void init_depthwise(DepthwiseParams<T>& p, int channels, Rng& rng);
// The final pointwise layer starts at zero, so a fresh block is the identity.
template <class T>
void init_convnext(ConvNeXtParams<T>& p, int channels, Rng& rng);
template <class T>
void init_attention(AttentionParams<T>& p, int dim, Rng& rng);

// ---- linear ---------------------------------------------------------------

template <class T>
Mat<T> linear_fwd(const Mat<T>& x, const LinearParams<T>& p);
template <class T>
Mat<T> linear_bwd(const Mat<T>& x, const Mat<T>& dy, const LinearParams<T>& p,
                  LinearParams<T>* grads);

// ---- layernorm (per row, over columns) ------------------------------------

template <class T>
struct NormCache {
  Mat<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <class T>
Mat<T> layernorm_fwd(const Mat<T>& x, const NormParams<T>& p,
                     NoDeduce<NormCache<T>>* cache);
template <class T>
Mat<T> layernorm_bwd(const Mat<T>& dy, const NormParams<T>& p,
                     const NormCache<T>& cache, NormParams<T>* grads);

// ---- GELU (tanh approximation) -------------------------------------------

template <class T>
Mat<T> gelu_fwd(const Mat<T>& x);
template <class T>
Mat<T> gelu_bwd(const Mat<T>& x, const Mat<T>& dy);

// ---- convolutions ---------------------------------------------------------

inline int conv_out_size(int n, int stride) { return (n - 1) / stride + 1; }

// x: (h*w) x cin. Returns (ho*wo) x cout. When `cols` is non-null the im2col
// matrix is stored there for the backward pass.
template <class T>
Mat<T> conv3x3_fwd(const Mat<T>& x, int h, int w, const ConvParams<T>& p,
                   int stride, Mat<T>* cols);
template <class T>
Mat<T> conv3x3_bwd(const Mat<T>& cols, const Mat<T>& dy, int h, int w, int cin,
                   const ConvParams<T>& p, int stride, ConvParams<T>* grads);

template <class T>
Mat<T> depthwise3x3_fwd(const Mat<T>& x, int h, int w,
                        const DepthwiseParams<T>& p);
template <class T>
Mat<T> depthwise3x3_bwd(const Mat<T>& x, const Mat<T>& dy, int h, int w,
                        const DepthwiseParams<T>& p,
                        DepthwiseParams<T>* grads);

// ---- patchify / pixel shuffle ---------------------------------------------

// (h*w) x C -> (h/2 * w/2) x 4C; channel block order (r0c0, r0c1, r1c0, r1c1).
template <class T>
Mat<T> patchify2x2(const Mat<T>& x, int h, int w);
// (h*w) x 4C -> (2h * 2w) x C. Exact inverse of patchify2x2.
template <class T>
Mat<T> pixel_shuffle2(const Mat<T>& x, int h, int w);

// ---- ConvNeXt block -------------------------------------------------------

template <class T>
struct ConvNeXtCache {
  Mat<T> x;
  NormCache<T> norm;
  Mat<T> normed;
  Mat<T> pre_act;
  Mat<T> act;
};

// depthwise 3x3 -> layernorm -> fc (4x) -> GELU -> fc -> residual add.
template <class T>
Mat<T> convnext_fwd(const Mat<T>& x, int h, int w, const ConvNeXtParams<T>& p,
                    NoDeduce<ConvNeXtCache<T>>* cache);
template <class T>
Mat<T> convnext_bwd(const Mat<T>& dy, int h, int w, const ConvNeXtParams<T>& p,
                    const ConvNeXtCache<T>& cache, ConvNeXtParams<T>* grads);

// ---- causal attention -----------------------------------------------------

// Boolean attention mask; allowed(i, j) means query i may attend key j.
class AttnMask {
 public:
  AttnMask() = default;
  explicit AttnMask(int n) : n_(n), bits_(static_cast<size_t>(n) * n, 0) {}

  static AttnMask causal(int n);

  int size() const { return n_; }
  bool allowed(int i, int j) const {
    return bits_[static_cast<size_t>(i) * n_ + j] != 0;
  }
  void set(int i, int j, bool v) {
    bits_[static_cast<size_t>(i) * n_ + j] = v ? 1 : 0;
    checked_ = false;
    segments_.clear();
  }
  // Marks [start, start+len) as one lower-triangular block.
  void add_causal_block(int start, int len);

  // Throws unless every allowed entry has j <= i and every row allows itself.
  void validate() const;

  // Maximal independent segments: no allowed entry crosses a boundary.
  std::vector<std::pair<int, int>> segments() const;

  bool operator==(const AttnMask& o) const { return n_ == o.n_ && bits_ == o.bits_; }

 private:
  int n_ = 0;
  std::vector<unsigned char> bits_;
  // memoized by validate() / segments(); reset on mutation
  mutable bool checked_ = false;
  mutable std::vector<std::pair<int, int>> segments_;
};

template <class T>
struct AttentionCache {
  Mat<T> x, q, k, v, o;
  std::vector<std::pair<int, int>> segments;
  std::vector<Mat<T>> probs;  // [segment * n_heads + head]
};

template <class T>
Mat<T> causal_attention_fwd(const Mat<T>& x, const AttentionParams<T>& p,
                            int n_heads, const AttnMask& mask,
                            NoDeduce<AttentionCache<T>>* cache);
template <class T>
Mat<T> causal_attention_bwd(const Mat<T>& dy, const AttentionParams<T>& p,
                            int n_heads, const AttnMask& mask,
                            const AttentionCache<T>& cache,
                            AttentionParams<T>* grads);

}  // namespace uniflow
