#pragma once

// Representation alignment: mid-backbone states at the generation-latent
// positions, projected by the alignment head, are pulled toward the
// understanding features of the clean image. The target side carries no
// gradient.

#include <functional>

#include "uniflow/encoders.hpp"

namespace uniflow {

inline constexpr double kCosineEps = 1e-8;

// -mean over rows of cos(target[i], pred[i]). When d_pred is non-null,
// writes scale * d(loss)/d(pred) into it.
template <class T>
double alignment_loss(const Mat<T>& target, const Mat<T>& pred, Mat<T>* d_pred = nullptr,
                      double scale = 1.0);

// Understanding features of the clean image, treated as a constant.
template <class T>
Mat<T> alignment_target(const Image& clean, const ModelParams<T>& p);

// `hidden_rows` are the 64 latent-position rows of hidden[repa_block].
// `pred_hook` may overwrite the projected prediction (test hook).
template <class T>
double repa_loss(const Mat<T>& hidden_rows, const Image& clean, const ModelParams<T>& p,
                 const std::function<void(Mat<T>&)>& pred_hook = {});

}  // namespace uniflow
