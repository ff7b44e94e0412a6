#pragma once

// Euler integration of the learned velocity field from noise (t = 0) to data
// (t = 1), with classifier-free guidance.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uniflow/generate.hpp"

namespace uniflow {

struct SamplerConfig {
  double w = 2.0;
  int n_steps = 30;
  std::uint64_t seed = 0;
};

// w * v_cond + (1 - w) * v_uncond; returns v_cond itself when w == 1.
template <class T>
Mat<T> cfg_velocity(const Mat<T>& v_cond, const Mat<T>& v_uncond, double w);

inline constexpr double kTimeOvershootTol = 1e-9;

// z += v * dt, t += dt. Throws when t + dt would pass 1 by more than 1e-9.
template <class T>
FlowState<T> euler_step(const FlowState<T>& state, const Mat<T>& v, double dt);

struct SamplerStats {
  int network_calls = 0;
  std::vector<int> calls_per_step;
  std::vector<double> times;  // t at the start of each step, then the final t
};

// Final latent before clamping (exposed for the Euler/ODE tests).
template <class T>
Mat<T> integrate(const std::vector<int>& prompt, const ModelParams<T>& p,
                 const SamplerConfig& cfg, SamplerStats* stats = nullptr);

// Integrates, clamps to [0, 1] and returns the image. Pass the EMA weights.
template <class T>
Image generate_image(const std::vector<int>& prompt, const ModelParams<T>& p,
                     const SamplerConfig& cfg, SamplerStats* stats = nullptr);

// Binary P6, 8-bit, round(255 * pixel).
void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

}  // namespace uniflow
