#pragma once

// Central finite differences against the analytic backward passes, in
// double precision with all stochastic draws frozen.

#include <functional>
#include <string>
#include <vector>

#include "uniflow/model.hpp"

namespace uniflow {

inline constexpr double kGradCheckEps = 1e-5;
inline constexpr double kGradCheckTol = 1e-4;
inline constexpr int kGradCheckCoords = 256;

struct TensorCheck {
  std::string name;
  int coords = 0;
  double max_rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // tensor holding the worst coordinate
  std::vector<TensorCheck> tensors;
};

// |a - n| / (|a| + |n| + 1e-12)
inline double relative_error(double a, double n) {
  return std::abs(a - n) / (std::abs(a) + std::abs(n) + 1e-12);
}

// `loss` re-evaluates the scalar objective from the current contents of
// `params` (perturbed in place and restored). `grads[i]` is the analytic
// gradient for `params[i]`. At most `max_coords` coordinates per tensor are
// checked, chosen by a fixed-seed shuffle.
GradCheckResult finite_diff_check(const std::function<double()>& loss,
                                  const std::vector<NamedTensor<double>>& params,
                                  const std::vector<ConstNamedTensor<double>>& grads,
                                  double eps = kGradCheckEps, int max_coords = kGradCheckCoords,
                                  std::uint64_t seed = 0);

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  double seconds = 0.0;
  bool passed() const { return result.max_rel_error <= kGradCheckTol; }
};

// Per-layer checks (linear, layernorm, gelu, conv, depthwise, ConvNeXt,
// attention, patchify round trip) and full-model checks for the AR, RF and
// alignment losses on a D_emb = 16, 2-block model.
std::vector<GradCheckCase> run_layer_gradchecks(int max_coords = kGradCheckCoords);
std::vector<GradCheckCase> run_loss_gradchecks(int max_coords = kGradCheckCoords);
std::vector<GradCheckCase> run_gradcheck_suite(int max_coords = kGradCheckCoords);

// Small model used by the loss checks, with all tensors (including the
// zero-initialized ConvNeXt outputs) moved to generic random values so that
// every path carries gradient.
ModelConfig gradcheck_config();
ModelParams<double> gradcheck_model(std::uint64_t seed = 3);

}  // namespace uniflow
