#include "uniflow/layers.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace uniflow {

// ---- initialization -------------------------------------------------------

namespace {

template <class T>
void fill_trunc_normal(Mat<T>& m, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>(rng.truncated_normal(kInitStd));
  }
}

}  // namespace

template <class T>
void init_linear(LinearParams<T>& p, int in, int out, Rng& rng,
                 bool zero_weight) {
  p.w = Mat<T>::Zero(in, out);
  if (!zero_weight) fill_trunc_normal(p.w, rng);
  p.b = Mat<T>::Zero(1, out);
}

template <class T>
void init_norm(NormParams<T>& p, int channels) {
  p.gamma = Mat<T>::Ones(1, channels);
  p.beta = Mat<T>::Zero(1, channels);
}

template <class T>
void init_conv(ConvParams<T>& p, int cin, int cout, Rng& rng) {
  p.w = Mat<T>::Zero(9 * cin, cout);
  fill_trunc_normal(p.w, rng);
  p.b = Mat<T>::Zero(1, cout);
}

template <class T>
void init_depthwise(DepthwiseParams<T>& p, int channels, Rng& rng) {
  p.w = Mat<T>::Zero(9, channels);
  fill_trunc_normal(p.w, rng);
  p.b = Mat<T>::Zero(1, channels);
}

template <class T>
void init_convnext(ConvNeXtParams<T>& p, int channels, Rng& rng) {
  init_depthwise(p.dw, channels, rng);
  init_norm(p.norm, channels);
  init_linear(p.fc1, channels, 4 * channels, rng);
  init_linear(p.fc2, 4 * channels, channels, rng, /*zero_weight=*/true);
}

template <class T>
void init_attention(AttentionParams<T>& p, int dim, Rng& rng) {
  for (Mat<T>* m : {&p.wq, &p.wk, &p.wv, &p.wo}) {
    *m = Mat<T>::Zero(dim, dim);
    fill_trunc_normal(*m, rng);
  }
}

// ---- linear ---------------------------------------------------------------

template <class T>
Mat<T> linear_fwd(const Mat<T>& x, const LinearParams<T>& p) {
  if (x.cols() != p.w.rows()) {
    throw Error("linear: input " + shape_str(x.rows(), x.cols()) +
                " incompatible with weight " +
                shape_str(p.w.rows(), p.w.cols()));
  }
  Mat<T> y = x * p.w;
  y.rowwise() += p.b.row(0);
  return y;
}

template <class T>
Mat<T> linear_bwd(const Mat<T>& x, const Mat<T>& dy, const LinearParams<T>& p,
                  LinearParams<T>* grads) {
  check_shape(dy, x.rows(), p.w.cols(), "linear_bwd");
  if (grads) {
    grads->w.noalias() += x.transpose() * dy;
    grads->b += dy.colwise().sum();
  }
  return dy * p.w.transpose();
}

// ---- layernorm ------------------------------------------------------------

template <class T>
Mat<T> layernorm_fwd(const Mat<T>& x, const NormParams<T>& p,
                     NoDeduce<NormCache<T>>* cache) {
  if (x.cols() != p.gamma.cols()) {
    throw Error("layernorm: input " + shape_str(x.rows(), x.cols()) +
                " incompatible with gamma " +
                shape_str(p.gamma.rows(), p.gamma.cols()));
  }
  const Eigen::Index n = x.rows();
  const T inv_c = T(1) / static_cast<T>(x.cols());
  Mat<T> xhat(n, x.cols());
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mu = x.row(i).sum() * inv_c;
    auto centered = (x.row(i).array() - mu);
    const T var = centered.square().sum() * inv_c;
    rstd(i) = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    xhat.row(i) = centered * rstd(i);
  }
  Mat<T> y(n, x.cols());
  y = (xhat.array().rowwise() * p.gamma.row(0).array()).matrix();
  y.rowwise() += p.beta.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <class T>
Mat<T> layernorm_bwd(const Mat<T>& dy, const NormParams<T>& p,
                     const NormCache<T>& cache, NormParams<T>* grads) {
  check_same_shape(dy, cache.xhat, "layernorm_bwd");
  if (grads) {
    grads->gamma += (dy.array() * cache.xhat.array()).matrix().colwise().sum();
    grads->beta += dy.colwise().sum();
  }
  const T inv_c = T(1) / static_cast<T>(dy.cols());
  Mat<T> dxhat = (dy.array().rowwise() * p.gamma.row(0).array()).matrix();
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T m1 = dxhat.row(i).sum() * inv_c;
    const T m2 = dxhat.row(i).dot(cache.xhat.row(i)) * inv_c;
    dx.row(i) = cache.rstd(i) *
                (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2)
                    .matrix();
  }
  return dx;
}

// ---- GELU -----------------------------------------------------------------

namespace {
constexpr double kGeluC = 0.044715;

}  // namespace

template <class T>
Mat<T> gelu_fwd(const Mat<T>& x) {
  const T k = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T c = static_cast<T>(kGeluC);
  auto a = x.array();
  Mat<T> y = (T(0.5) * a * (T(1) + (k * (a + c * a * a * a)).tanh())).matrix();
  return y;
}

template <class T>
Mat<T> gelu_bwd(const Mat<T>& x, const Mat<T>& dy) {
  check_same_shape(x, dy, "gelu_bwd");
  const T k = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T c = static_cast<T>(kGeluC);
  auto a = x.array();
  Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> th =
      (k * (a + c * a * a * a)).tanh();
  auto deriv = T(0.5) * (T(1) + th) +
               T(0.5) * a * (T(1) - th * th) * k * (T(1) + T(3) * c * a * a);
  return (dy.array() * deriv).matrix();
}

// ---- conv3x3 --------------------------------------------------------------

template <class T>
Mat<T> conv3x3_fwd(const Mat<T>& x, int h, int w, const ConvParams<T>& p,
                   int stride, Mat<T>* cols_out) {
  const int cin = static_cast<int>(x.cols());
  if (x.rows() != static_cast<Eigen::Index>(h) * w) {
    throw Error("conv3x3: input rows " + std::to_string(x.rows()) +
                " do not match grid " + std::to_string(h) + "x" +
                std::to_string(w));
  }
  if (p.w.rows() != 9 * cin) {
    throw Error("conv3x3: input " + shape_str(x.rows(), x.cols()) +
                " incompatible with kernel " +
                shape_str(p.w.rows(), p.w.cols()));
  }
  const int ho = conv_out_size(h, stride);
  const int wo = conv_out_size(w, stride);
  Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(ho) * wo, 9 * cin);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const int r = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= w) continue;
          cols.block(r, (ky * 3 + kx) * cin, 1, cin) = x.row(iy * w + ix);
        }
      }
    }
  }
  Mat<T> y = cols * p.w;
  y.rowwise() += p.b.row(0);
  if (cols_out) *cols_out = std::move(cols);
  return y;
}

template <class T>
Mat<T> conv3x3_bwd(const Mat<T>& cols, const Mat<T>& dy, int h, int w, int cin,
                   const ConvParams<T>& p, int stride, ConvParams<T>* grads) {
  const int ho = conv_out_size(h, stride);
  const int wo = conv_out_size(w, stride);
  check_shape(dy, static_cast<Eigen::Index>(ho) * wo, p.w.cols(), "conv3x3_bwd");
  if (grads) {
    grads->w.noalias() += cols.transpose() * dy;
    grads->b += dy.colwise().sum();
  }
  Mat<T> dcols = dy * p.w.transpose();
  Mat<T> dx = Mat<T>::Zero(static_cast<Eigen::Index>(h) * w, cin);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const int r = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= w) continue;
          dx.row(iy * w + ix) += dcols.block(r, (ky * 3 + kx) * cin, 1, cin);
        }
      }
    }
  }
  return dx;
}

// ---- depthwise ------------------------------------------------------------

template <class T>
Mat<T> depthwise3x3_fwd(const Mat<T>& x, int h, int w,
                        const DepthwiseParams<T>& p) {
  if (x.rows() != static_cast<Eigen::Index>(h) * w || x.cols() != p.w.cols()) {
    throw Error("depthwise3x3: input " + shape_str(x.rows(), x.cols()) +
                " incompatible with grid " + std::to_string(h) + "x" +
                std::to_string(w) + " and kernel " +
                shape_str(p.w.rows(), p.w.cols()));
  }
  Mat<T> y(x.rows(), x.cols());
  y.rowwise() = p.b.row(0);
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      const int r = oy * w + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox + kx - 1;
          if (ix < 0 || ix >= w) continue;
          y.row(r) += x.row(iy * w + ix).cwiseProduct(p.w.row(ky * 3 + kx));
        }
      }
    }
  }
  return y;
}

template <class T>
Mat<T> depthwise3x3_bwd(const Mat<T>& x, const Mat<T>& dy, int h, int w,
                        const DepthwiseParams<T>& p,
                        DepthwiseParams<T>* grads) {
  check_same_shape(x, dy, "depthwise3x3_bwd");
  Mat<T> dx = Mat<T>::Zero(x.rows(), x.cols());
  if (grads) grads->b += dy.colwise().sum();
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      const int r = oy * w + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox + kx - 1;
          if (ix < 0 || ix >= w) continue;
          const int q = iy * w + ix;
          const int tap = ky * 3 + kx;
          if (grads) grads->w.row(tap) += x.row(q).cwiseProduct(dy.row(r));
          dx.row(q) += dy.row(r).cwiseProduct(p.w.row(tap));
        }
      }
    }
  }
  return dx;
}

// ---- patchify / pixel shuffle ---------------------------------------------

template <class T>
Mat<T> patchify2x2(const Mat<T>& x, int h, int w) {
  if (h % 2 != 0 || w % 2 != 0) {
    throw Error("patchify2x2: grid " + std::to_string(h) + "x" +
                std::to_string(w) + " has odd dimensions");
  }
  if (x.rows() != static_cast<Eigen::Index>(h) * w) {
    throw Error("patchify2x2: rows " + std::to_string(x.rows()) +
                " do not match grid");
  }
  const auto c = x.cols();
  const int ho = h / 2, wo = w / 2;
  Mat<T> y(static_cast<Eigen::Index>(ho) * wo, 4 * c);
  for (int i = 0; i < ho; ++i) {
    for (int j = 0; j < wo; ++j) {
      for (int k = 0; k < 4; ++k) {
        const int dy = k / 2, dx = k % 2;
        y.block(i * wo + j, k * c, 1, c) = x.row((2 * i + dy) * w + 2 * j + dx);
      }
    }
  }
  return y;
}

template <class T>
Mat<T> pixel_shuffle2(const Mat<T>& x, int h, int w) {
  if (x.cols() % 4 != 0 || x.rows() != static_cast<Eigen::Index>(h) * w) {
    throw Error("pixel_shuffle2: input " + shape_str(x.rows(), x.cols()) +
                " incompatible with grid " + std::to_string(h) + "x" +
                std::to_string(w));
  }
  const auto c = x.cols() / 4;
  const int wo = 2 * w;
  Mat<T> y(static_cast<Eigen::Index>(4) * h * w, c);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int k = 0; k < 4; ++k) {
        const int dy = k / 2, dx = k % 2;
        y.row((2 * i + dy) * wo + 2 * j + dx) = x.block(i * w + j, k * c, 1, c);
      }
    }
  }
  return y;
}

// ---- ConvNeXt -------------------------------------------------------------

template <class T>
Mat<T> convnext_fwd(const Mat<T>& x, int h, int w, const ConvNeXtParams<T>& p,
                    NoDeduce<ConvNeXtCache<T>>* cache) {
  Mat<T> d = depthwise3x3_fwd(x, h, w, p.dw);
  NormCache<T> nc;
  Mat<T> n = layernorm_fwd(d, p.norm, cache ? &nc : nullptr);
  Mat<T> a = linear_fwd(n, p.fc1);
  Mat<T> g = gelu_fwd(a);
  Mat<T> y = x + linear_fwd(g, p.fc2);
  if (cache) {
    cache->x = x;
    cache->norm = std::move(nc);
    cache->normed = std::move(n);
    cache->pre_act = std::move(a);
    cache->act = std::move(g);
  }
  return y;
}

template <class T>
Mat<T> convnext_bwd(const Mat<T>& dy, int h, int w, const ConvNeXtParams<T>& p,
                    const ConvNeXtCache<T>& cache, ConvNeXtParams<T>* grads) {
  Mat<T> dg = linear_bwd(cache.act, dy, p.fc2, grads ? &grads->fc2 : nullptr);
  Mat<T> da = gelu_bwd(cache.pre_act, dg);
  Mat<T> dn = linear_bwd(cache.normed, da, p.fc1, grads ? &grads->fc1 : nullptr);
  Mat<T> dd = layernorm_bwd(dn, p.norm, cache.norm, grads ? &grads->norm : nullptr);
  Mat<T> dx = depthwise3x3_bwd(cache.x, dd, h, w, p.dw, grads ? &grads->dw : nullptr);
  dx += dy;
  return dx;
}

// ---- attention ------------------------------------------------------------

AttnMask AttnMask::causal(int n) {
  AttnMask m(n);
  m.add_causal_block(0, n);
  return m;
}

void AttnMask::add_causal_block(int start, int len) {
  for (int i = start; i < start + len; ++i) {
    for (int j = start; j <= i; ++j) set(i, j, true);
  }
}

void AttnMask::validate() const {
  if (checked_) return;
  for (int i = 0; i < n_; ++i) {
    if (!allowed(i, i)) {
      throw Error("attention mask: position " + std::to_string(i) +
                  " cannot attend to itself");
    }
    for (int j = i + 1; j < n_; ++j) {
      if (allowed(i, j)) {
        throw Error("attention mask is not causal: query " + std::to_string(i) +
                    " attends to later key " + std::to_string(j));
      }
    }
  }
  checked_ = true;
}

std::vector<std::pair<int, int>> AttnMask::segments() const {
  if (!segments_.empty() || n_ == 0) return segments_;
  std::vector<int> suffix_min(static_cast<size_t>(n_) + 1, n_);
  for (int i = n_ - 1; i >= 0; --i) {
    int lo = i;
    for (int j = 0; j < i; ++j) {
      if (allowed(i, j)) {
        lo = j;
        break;
      }
    }
    suffix_min[i] = std::min(lo, suffix_min[i + 1]);
  }
  std::vector<std::pair<int, int>> segs;
  int start = 0;
  for (int s = 1; s <= n_; ++s) {
    if (s == n_ || suffix_min[s] >= s) {
      segs.emplace_back(start, s - start);
      start = s;
    }
  }
  segments_ = segs;
  return segs;
}

template <class T>
Mat<T> causal_attention_fwd(const Mat<T>& x, const AttentionParams<T>& p,
                            int n_heads, const AttnMask& mask,
                            NoDeduce<AttentionCache<T>>* cache) {
  const auto L = x.rows();
  const auto D = x.cols();
  if (p.wq.rows() != D) {
    throw Error("attention: input " + shape_str(L, D) +
                " incompatible with W_q " + shape_str(p.wq.rows(), p.wq.cols()));
  }
  if (mask.size() != L) {
    throw Error("attention: mask size " + std::to_string(mask.size()) +
                " does not match sequence length " + std::to_string(L));
  }
  if (D % n_heads != 0) throw Error("attention: dim not divisible by heads");
  mask.validate();
  const Eigen::Index dh = D / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Mat<T> q = x * p.wq;
  Mat<T> k = x * p.wk;
  Mat<T> v = x * p.wv;
  Mat<T> o = Mat<T>::Zero(L, D);
  auto segs = mask.segments();
  std::vector<Mat<T>> probs;
  if (cache) probs.reserve(segs.size() * n_heads);

  for (auto [s, len] : segs) {
    for (int hd = 0; hd < n_heads; ++hd) {
      Mat<T> scores = q.block(s, hd * dh, len, dh) *
                      k.block(s, hd * dh, len, dh).transpose();
      for (int i = 0; i < len; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < len; ++j) {
          if (mask.allowed(s + i, s + j)) {
            scores(i, j) *= scale;
            mx = std::max(mx, scores(i, j));
          }
        }
        T sum = 0;
        for (int j = 0; j < len; ++j) {
          if (mask.allowed(s + i, s + j)) {
            scores(i, j) = std::exp(scores(i, j) - mx);
            sum += scores(i, j);
          } else {
            scores(i, j) = 0;
          }
        }
        scores.row(i) /= sum;
      }
      o.block(s, hd * dh, len, dh).noalias() =
          scores * v.block(s, hd * dh, len, dh);
      if (cache) probs.push_back(std::move(scores));
    }
  }
  Mat<T> y = o * p.wo;
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
    cache->segments = std::move(segs);
    cache->probs = std::move(probs);
  }
  return y;
}

template <class T>
Mat<T> causal_attention_bwd(const Mat<T>& dy, const AttentionParams<T>& p,
                            int n_heads, const AttnMask& /*mask*/,
                            const AttentionCache<T>& c,
                            AttentionParams<T>* grads) {
  const auto L = c.x.rows();
  const auto D = c.x.cols();
  check_shape(dy, L, D, "attention_bwd");
  const Eigen::Index dh = D / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  if (grads) grads->wo.noalias() += c.o.transpose() * dy;
  Mat<T> d_o = dy * p.wo.transpose();
  Mat<T> dq = Mat<T>::Zero(L, D);
  Mat<T> dk = Mat<T>::Zero(L, D);
  Mat<T> dv = Mat<T>::Zero(L, D);

  size_t idx = 0;
  for (auto [s, len] : c.segments) {
    for (int hd = 0; hd < n_heads; ++hd, ++idx) {
      const Mat<T>& P = c.probs[idx];
      auto dOh = d_o.block(s, hd * dh, len, dh);
      Mat<T> dP = dOh * c.v.block(s, hd * dh, len, dh).transpose();
      dv.block(s, hd * dh, len, dh).noalias() += P.transpose() * dOh;
      Eigen::Matrix<T, Eigen::Dynamic, 1> rs =
          (dP.array() * P.array()).rowwise().sum();
      Mat<T> dS = (P.array() * (dP.array().colwise() - rs.array())).matrix();
      dS *= scale;
      dq.block(s, hd * dh, len, dh).noalias() +=
          dS * c.k.block(s, hd * dh, len, dh);
      dk.block(s, hd * dh, len, dh).noalias() +=
          dS.transpose() * c.q.block(s, hd * dh, len, dh);
    }
  }
  if (grads) {
    grads->wq.noalias() += c.x.transpose() * dq;
    grads->wk.noalias() += c.x.transpose() * dk;
    grads->wv.noalias() += c.x.transpose() * dv;
  }
  Mat<T> dx = dq * p.wq.transpose();
  dx.noalias() += dk * p.wk.transpose();
  dx.noalias() += dv * p.wv.transpose();
  return dx;
}

// ---- explicit instantiations ----------------------------------------------

#define UNIFLOW_INSTANTIATE_LAYERS(T)                                          \
  template void init_linear<T>(LinearParams<T>&, int, int, Rng&, bool);        \
  template void init_norm<T>(NormParams<T>&, int);                             \
  template void init_conv<T>(ConvParams<T>&, int, int, Rng&);                  \
  template void init_depthwise<T>(DepthwiseParams<T>&, int, Rng&);             \
  template void init_convnext<T>(ConvNeXtParams<T>&, int, Rng&);               \
  template void init_attention<T>(AttentionParams<T>&, int, Rng&);             \
  template Mat<T> linear_fwd<T>(const Mat<T>&, const LinearParams<T>&);        \
  template Mat<T> linear_bwd<T>(const Mat<T>&, const Mat<T>&,                  \
                                const LinearParams<T>&, LinearParams<T>*);     \
  template Mat<T> layernorm_fwd<T>(const Mat<T>&, const NormParams<T>&,        \
                                   NormCache<T>*);                             \
  template Mat<T> layernorm_bwd<T>(const Mat<T>&, const NormParams<T>&,        \
                                   const NormCache<T>&, NormParams<T>*);       \
  template Mat<T> gelu_fwd<T>(const Mat<T>&);                                  \
  template Mat<T> gelu_bwd<T>(const Mat<T>&, const Mat<T>&);                   \
  template Mat<T> conv3x3_fwd<T>(const Mat<T>&, int, int, const ConvParams<T>&, \
                                 int, Mat<T>*);                                \
  template Mat<T> conv3x3_bwd<T>(const Mat<T>&, const Mat<T>&, int, int, int,  \
                                 const ConvParams<T>&, int, ConvParams<T>*);   \
  template Mat<T> depthwise3x3_fwd<T>(const Mat<T>&, int, int,                 \
                                      const DepthwiseParams<T>&);              \
  template Mat<T> depthwise3x3_bwd<T>(const Mat<T>&, const Mat<T>&, int, int,  \
                                      const DepthwiseParams<T>&,               \
                                      DepthwiseParams<T>*);                    \
  template Mat<T> patchify2x2<T>(const Mat<T>&, int, int);                     \
  template Mat<T> pixel_shuffle2<T>(const Mat<T>&, int, int);                  \
  template Mat<T> convnext_fwd<T>(const Mat<T>&, int, int,                     \
                                  const ConvNeXtParams<T>&, ConvNeXtCache<T>*); \
  template Mat<T> convnext_bwd<T>(const Mat<T>&, int, int,                     \
                                  const ConvNeXtParams<T>&,                    \
                                  const ConvNeXtCache<T>&, ConvNeXtParams<T>*); \
  template Mat<T> causal_attention_fwd<T>(const Mat<T>&,                       \
                                          const AttentionParams<T>&, int,      \
                                          const AttnMask&, AttentionCache<T>*); \
  template Mat<T> causal_attention_bwd<T>(                                     \
      const Mat<T>&, const AttentionParams<T>&, int, const AttnMask&,          \
      const AttentionCache<T>&, AttentionParams<T>*);

UNIFLOW_INSTANTIATE_LAYERS(float)
UNIFLOW_INSTANTIATE_LAYERS(double)

#undef UNIFLOW_INSTANTIATE_LAYERS

}  // namespace uniflow
