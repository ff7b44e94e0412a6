#include "uniflow/generate.hpp"

#include <cmath>

namespace uniflow {

double sample_time(Rng& rng, const TimeDistribution& dist) {
  const double n = rng.normal(dist.m, dist.s);
  double t = 1.0 / (1.0 + std::exp(-n));
  // |n| beyond ~37 would round to exactly 0 or 1
  if (t <= 0.0) t = std::nextafter(0.0, 1.0);
  if (t >= 1.0) t = std::nextafter(1.0, 0.0);
  return t;
}

template <class T>
Mat<T> interpolate(const Mat<T>& x, const Mat<T>& z0, double t) {
  check_same_shape(x, z0, "interpolate");
  return static_cast<T>(t) * x + static_cast<T>(1.0 - t) * z0;
}

template <class T>
Mat<T> standard_normal_grid(Rng& rng) {
  Mat<T> z(Image::kSide * Image::kSide, Image::kChannels);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<T>(rng.normal());
  return z;
}

template <class T>
Sample<T> gen_sample(const std::vector<int>& condition, const Mat<T>& z_t, double t) {
  using E = SequenceElement<T>;
  Sample<T> s;
  for (int id : condition) s.push_back(E::text(id, Role::condition));
  s.push_back(E::text(tok::kBoi, Role::condition));
  s.push_back(E::time_step(t));
  s.push_back(E::gen_image(z_t));
  return s;
}

template <class T>
GenDraw<T> draw_gen(Rng& rng, double drop_rate, const TimeDistribution& dist) {
  GenDraw<T> d;
  d.t = sample_time(rng, dist);
  d.z0 = standard_normal_grid<T>(rng);
  d.drop = rng.bernoulli(drop_rate);
  return d;
}

template <class T>
Mat<T> velocity(const FlowState<T>& state, const std::vector<int>& condition,
                const ModelParams<T>& p) {
  std::vector<Sample<T>> samples{gen_sample<T>(condition, state.z, state.t)};
  const int len = expanded_length(samples[0]);
  PackLayout layout = layout_pack(samples, {0}, len);
  PackedBatch<T> b = embed_layout(layout, samples, p, false);
  BackboneOutput<T> out = forward(b, p, nullptr, false);
  const PlacedElement& latent = b.layout.elements.back();
  const Mat<T> rows = out.final.block(latent.start, 0, latent.rows, out.final.cols());
  return gen_decoder_fwd(rows, b.cache.gen_skip.back(), p.g_dec, nullptr);
}

#define UNIFLOW_INSTANTIATE_GEN(T)                                                          \
  template Mat<T> interpolate<T>(const Mat<T>&, const Mat<T>&, double);                     \
  template Mat<T> standard_normal_grid<T>(Rng&);                                            \
  template Sample<T> gen_sample<T>(const std::vector<int>&, const Mat<T>&, double);         \
  template GenDraw<T> draw_gen<T>(Rng&, double, const TimeDistribution&);                   \
  template Mat<T> velocity<T>(const FlowState<T>&, const std::vector<int>&, const ModelParams<T>&);

UNIFLOW_INSTANTIATE_GEN(float)
UNIFLOW_INSTANTIATE_GEN(double)

#undef UNIFLOW_INSTANTIATE_GEN

}  // namespace uniflow
