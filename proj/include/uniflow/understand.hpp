#pragma once

// Understanding path: encoder features, the response-masked autoregressive
// loss, and greedy question answering.

#include <vector>

#include "uniflow/backbone.hpp"

namespace uniflow {

// Understanding features for an image: 64 x d_enc (64 x c_gen when the
// model shares the generation trunk).
template <class T>
Mat<T> f_enc(const Image& img, const ModelParams<T>& p);

// [question][|BOI|][image][|EOI|][answer]; only answer tokens are responses.
template <class T>
Sample<T> qa_sample(const Image& img, const std::vector<int>& question,
                    const std::vector<int>& answer);

// First token is the condition, the rest are responses.
template <class T>
Sample<T> text_sample(const std::vector<int>& ids);

struct ArSum {
  double nll = 0.0;
  int count = 0;
  std::vector<double> nll_at;  // per packed position; 0 off the loss mask
};

// Negative log-likelihood summed over the response positions of one pack.
// When d_final is non-null, adds grad_scale * d(nll)/d(final) into it and
// head gradients into head_grads.
template <class T>
ArSum ar_terms(const Mat<T>& final, const PackLayout& layout, const LinearParams<T>& head,
               double grad_scale, NoDeduce<Mat<T>>* d_final, NoDeduce<LinearParams<T>>* head_grads);

// Mean over response tokens of -log p(target). Throws on a batch without
// response positions.
template <class T>
double ar_loss(const PackedBatch<T>& batch, const ModelParams<T>& p);
template <class T>
double ar_loss(const std::vector<PackedBatch<T>>& batches, const ModelParams<T>& p);

// Greedy decoding until |EOS| or max_len tokens; ties go to the lowest id.
template <class T>
std::vector<int> answer(const Image& img, const std::vector<int>& question,
                        const ModelParams<T>& p, int max_len);

}  // namespace uniflow
