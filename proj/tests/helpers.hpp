#pragma once

#include <doctest.h>

#include "uniflow/objective.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::test {

template <class T>
Mat<T> random_mat(int rows, int cols, Rng& rng, double sd = 1.0) {
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal(0.0, sd));
  return m;
}

template <class T>
bool bit_equal(const Mat<T>& a, const Mat<T>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

template <class T>
bool params_bit_equal(const ModelParams<T>& a, const ModelParams<T>& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (size_t i = 0; i < ta.size(); ++i) {
    if (!bit_equal(*ta[i].tensor, *tb[i].tensor)) return false;
  }
  return true;
}

// Small model for fast unit tests.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d_emb = 16;
  c.n_blocks = 2;
  c.n_heads = 2;
  c.l_max = 160;
  c.repa_block = 1;
  c.d_enc = 8;
  c.c_gen = 8;
  c.time_freqs = 4;
  return c;
}

// Moves every tensor (including zero-initialized ones) away from its init so
// that all paths carry signal.
template <class T>
void jitter(ModelParams<T>& p, std::uint64_t seed, double sd = 0.1) {
  Rng rng(seed);
  for (auto& t : p.tensors()) {
    for (Eigen::Index i = 0; i < t.tensor->size(); ++i) {
      t.tensor->data()[i] += static_cast<T>(rng.normal(0.0, sd));
    }
  }
}

}  // namespace uniflow::test
