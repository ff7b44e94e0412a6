#include "uniflow/understand.hpp"

#include <cmath>

namespace uniflow {

template <class T>
Mat<T> f_enc(const Image& img, const ModelParams<T>& p) {
  const Mat<T> grid = img.grid<T>();
  if (p.cfg.shared_encoder) return gen_trunk_fwd(grid, p.g_enc, nullptr);
  return und_encoder_fwd(grid, p.f_enc, nullptr);
}

template <class T>
Sample<T> qa_sample(const Image& img, const std::vector<int>& question,
                    const std::vector<int>& answer) {
  using E = SequenceElement<T>;
  Sample<T> s;
  for (int id : question) s.push_back(E::text(id, Role::condition));
  s.push_back(E::text(tok::kBoi, Role::condition));
  s.push_back(E::und_image(img));
  s.push_back(E::text(tok::kEoi, Role::condition));
  for (int id : answer) s.push_back(E::text(id, Role::response));
  return s;
}

template <class T>
Sample<T> text_sample(const std::vector<int>& ids) {
  using E = SequenceElement<T>;
  Sample<T> s;
  for (size_t i = 0; i < ids.size(); ++i) {
    s.push_back(E::text(ids[i], i == 0 ? Role::condition : Role::response));
  }
  return s;
}

template <class T>
ArSum ar_terms(const Mat<T>& final, const PackLayout& layout, const LinearParams<T>& head,
               double grad_scale, NoDeduce<Mat<T>>* d_final, NoDeduce<LinearParams<T>>* head_grads) {
  std::vector<int> positions;
  for (int q = 0; q < layout.length; ++q) {
    if (layout.loss_mask[q]) positions.push_back(q);
  }
  ArSum out;
  out.nll_at.assign(layout.length, 0.0);
  if (positions.empty()) return out;
  const auto n = static_cast<Eigen::Index>(positions.size());
  Mat<T> rows(n, final.cols());
  for (Eigen::Index i = 0; i < n; ++i) rows.row(i) = final.row(positions[i] - 1);
  Mat<T> logits = linear_fwd(rows, head);
  Mat<T> d_logits(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mx = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - mx).exp();
    const T z = e.sum();
    const int target = layout.targets[positions[i]];
    const double logp = static_cast<double>(logits(i, target) - mx) - std::log(static_cast<double>(z));
    out.nll -= logp;
    out.nll_at[positions[i]] = -logp;
    if (d_final) {
      d_logits.row(i) = (e / z).matrix();
      d_logits(i, target) -= T(1);
    }
  }
  out.count = static_cast<int>(n);
  if (d_final) {
    d_logits *= static_cast<T>(grad_scale);
    Mat<T> d_rows = linear_bwd(rows, d_logits, head, head_grads);
    for (Eigen::Index i = 0; i < n; ++i) d_final->row(positions[i] - 1) += d_rows.row(i);
  }
  return out;
}

template <class T>
double ar_loss(const std::vector<PackedBatch<T>>& batches, const ModelParams<T>& p) {
  ArSum total;
  for (const auto& b : batches) {
    BackboneOutput<T> out = forward(b, p, nullptr, /*compute_logits=*/false);
    ArSum s = ar_terms(out.final, b.layout, p.backbone.head, 0.0, nullptr, nullptr);
    total.nll += s.nll;
    total.count += s.count;
  }
  if (total.count == 0) throw Error("ar_loss: batch has no response positions");
  return total.nll / total.count;
}

template <class T>
double ar_loss(const PackedBatch<T>& batch, const ModelParams<T>& p) {
  // single-pack view of the same computation
  BackboneOutput<T> out = forward(batch, p, nullptr, false);
  ArSum s = ar_terms(out.final, batch.layout, p.backbone.head, 0.0, nullptr, nullptr);
  if (s.count == 0) throw Error("ar_loss: batch has no response positions");
  return s.nll / s.count;
}

template <class T>
std::vector<int> answer(const Image& img, const std::vector<int>& question,
                        const ModelParams<T>& p, int max_len) {
  std::vector<int> generated;
  for (int step = 0; step < max_len; ++step) {
    std::vector<Sample<T>> samples{qa_sample<T>(img, question, {})};
    for (int id : generated) samples[0].push_back(SequenceElement<T>::text(id, Role::condition));
    const int len = expanded_length(samples[0]);
    if (len > p.cfg.l_max) break;
    PackLayout layout = layout_pack(samples, {0}, len);
    PackedBatch<T> b = embed_layout(layout, samples, p, false);
    BackboneOutput<T> out = forward(b, p, nullptr, false);
    Mat<T> last = out.final.row(len - 1);
    Mat<T> logits = linear_fwd(last, p.backbone.head);
    int best = 0;
    for (int v = 1; v < logits.cols(); ++v) {
      if (logits(0, v) > logits(0, best)) best = v;
    }
    generated.push_back(best);
    if (best == tok::kEos) break;
  }
  return generated;
}

#define UNIFLOW_INSTANTIATE_UND(T)                                                          \
  template Mat<T> f_enc<T>(const Image&, const ModelParams<T>&);                            \
  template Sample<T> qa_sample<T>(const Image&, const std::vector<int>&, const std::vector<int>&); \
  template Sample<T> text_sample<T>(const std::vector<int>&);                               \
  template ArSum ar_terms<T>(const Mat<T>&, const PackLayout&, const LinearParams<T>&, double, \
                             Mat<T>*, LinearParams<T>*);                                    \
  template double ar_loss<T>(const PackedBatch<T>&, const ModelParams<T>&);                 \
  template double ar_loss<T>(const std::vector<PackedBatch<T>>&, const ModelParams<T>&);    \
  template std::vector<int> answer<T>(const Image&, const std::vector<int>&,                \
                                      const ModelParams<T>&, int);

UNIFLOW_INSTANTIATE_UND(float)
UNIFLOW_INSTANTIATE_UND(double)

#undef UNIFLOW_INSTANTIATE_UND

}  // namespace uniflow
