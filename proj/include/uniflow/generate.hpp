#pragma once

// Generation path: flow states, logit-normal time sampling, the conditional
// velocity field v(z_t, t | condition), and training-time draws.

#include <vector>

#include "uniflow/backbone.hpp"
#include "uniflow/rng.hpp"

namespace uniflow {

template <class T>
struct FlowState {
  Mat<T> z;  // 256 x 3
  double t = 0.0;
};

struct TimeDistribution {
  double m = 0.0;
  double s = 1.0;
};

// t = sigmoid(n), n ~ N(m, s^2); strictly inside (0, 1).
double sample_time(Rng& rng, const TimeDistribution& dist = {});

inline constexpr double kPromptDropRate = 0.1;

// z_t = t * x + (1 - t) * z_0
template <class T>
Mat<T> interpolate(const Mat<T>& x, const Mat<T>& z0, double t);

template <class T>
Mat<T> standard_normal_grid(Rng& rng);

// [condition][|BOI|][time][latent rows]. An empty condition is the
// unconditional branch.
template <class T>
Sample<T> gen_sample(const std::vector<int>& condition, const Mat<T>& z_t, double t);

// Per-sample stochastic choices of the flow objective.
template <class T>
struct GenDraw {
  double t = 0.5;
  Mat<T> z0;
  bool drop = false;
};

template <class T>
GenDraw<T> draw_gen(Rng& rng, double drop_rate = kPromptDropRate,
                    const TimeDistribution& dist = {});

template <class T>
Mat<T> velocity(const FlowState<T>& state, const std::vector<int>& condition,
                const ModelParams<T>& p);

}  // namespace uniflow
