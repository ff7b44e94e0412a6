#include "uniflow/repa.hpp"

#include <algorithm>
#include <cmath>

#include "uniflow/understand.hpp"

namespace uniflow {

template <class T>
double alignment_loss(const Mat<T>& target, const Mat<T>& pred, Mat<T>* d_pred, double scale) {
  check_same_shape(target, pred, "alignment_loss");
  const Eigen::Index n = pred.rows();
  if (d_pred) *d_pred = Mat<T>::Zero(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nu = static_cast<double>(target.row(i).norm());
    const double np = static_cast<double>(pred.row(i).norm());
    const double dot = static_cast<double>(target.row(i).dot(pred.row(i)));
    const double denom = std::max(nu * np, kCosineEps);
    const double cos = dot / denom;
    sum += cos;
    if (d_pred) {
      // d(-cos/n)/d(pred)
      const double g = -scale / static_cast<double>(n);
      if (nu * np > kCosineEps) {
        d_pred->row(i) = (static_cast<T>(g / denom) * target.row(i)) -
                         (static_cast<T>(g * cos / (np * np)) * pred.row(i));
      } else {
        d_pred->row(i) = static_cast<T>(g / denom) * target.row(i);
      }
    }
  }
  return -sum / static_cast<double>(n);
}

template <class T>
Mat<T> alignment_target(const Image& clean, const ModelParams<T>& p) {
  return f_enc<T>(clean, p);
}

template <class T>
double repa_loss(const Mat<T>& hidden_rows, const Image& clean, const ModelParams<T>& p,
                 const std::function<void(Mat<T>&)>& pred_hook) {
  check_shape(hidden_rows, ModelConfig::kGridCells, p.cfg.d_emb, "repa_loss hidden rows");
  Mat<T> pred = align_head_fwd(hidden_rows, p.align, nullptr);
  if (pred_hook) pred_hook(pred);
  return alignment_loss(alignment_target(clean, p), pred);
}

#define UNIFLOW_INSTANTIATE_REPA(T)                                                          \
  template double alignment_loss<T>(const Mat<T>&, const Mat<T>&, Mat<T>*, double);          \
  template Mat<T> alignment_target<T>(const Image&, const ModelParams<T>&);                  \
  template double repa_loss<T>(const Mat<T>&, const Image&, const ModelParams<T>&,           \
                               const std::function<void(Mat<T>&)>&);

UNIFLOW_INSTANTIATE_REPA(float)
UNIFLOW_INSTANTIATE_REPA(double)

#undef UNIFLOW_INSTANTIATE_REPA

}  // namespace uniflow
