#include "uniflow/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace uniflow {

template <class T>
Mat<T> cfg_velocity(const Mat<T>& v_cond, const Mat<T>& v_uncond, double w) {
  check_same_shape(v_cond, v_uncond, "cfg_velocity");
  if (w == 1.0) return v_cond;
  // v_u + w (v_c - v_u): same affine map, exact when v_c == v_u
  return v_uncond + static_cast<T>(w) * (v_cond - v_uncond);
}

template <class T>
FlowState<T> euler_step(const FlowState<T>& state, const Mat<T>& v, double dt) {
  check_same_shape(state.z, v, "euler_step");
  if (state.t + dt > 1.0 + kTimeOvershootTol) {
    throw Error("euler_step: t + dt = " + std::to_string(state.t + dt) + " overshoots 1");
  }
  FlowState<T> next;
  next.z = state.z + static_cast<T>(dt) * v;
  next.t = state.t + dt;
  return next;
}

template <class T>
Mat<T> integrate(const std::vector<int>& prompt, const ModelParams<T>& p,
                 const SamplerConfig& cfg, SamplerStats* stats) {
  if (cfg.n_steps < 1) throw Error("sampler: n_steps must be >= 1");
  if (cfg.w < 1.0) throw Error("sampler: CFG factor must be >= 1");
  Rng rng(derive_seed(cfg.seed, {0x5a}));
  FlowState<T> s{standard_normal_grid<T>(rng), 0.0};
  const double dt = 1.0 / cfg.n_steps;
  const std::vector<int> none;
  for (int k = 0; k < cfg.n_steps; ++k) {
    // exact grid point rather than accumulated increments
    s.t = static_cast<double>(k) / cfg.n_steps;
    if (stats) stats->times.push_back(s.t);
    int calls = 1;
    Mat<T> v = velocity(s, prompt, p);
    if (cfg.w != 1.0) {
      v = cfg_velocity(v, velocity(s, none, p), cfg.w);
      ++calls;
    }
    if (stats) {
      stats->network_calls += calls;
      stats->calls_per_step.push_back(calls);
    }
    s = euler_step(s, v, dt);
    if (!all_finite(s.z)) {
      throw Error("sampler: non-finite state at step " + std::to_string(k + 1));
    }
  }
  if (stats) stats->times.push_back(s.t);
  return s.z;
}

template <class T>
Image generate_image(const std::vector<int>& prompt, const ModelParams<T>& p,
                     const SamplerConfig& cfg, SamplerStats* stats) {
  Mat<T> z = integrate(prompt, p, cfg, stats);
  z = z.cwiseMax(T(0)).cwiseMin(T(1));
  return Image::from_grid(z);
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << "P6\n" << Image::kSide << " " << Image::kSide << "\n255\n";
  std::vector<unsigned char> bytes(Image::kSize);
  for (int i = 0; i < Image::kSize; ++i) {
    const double v = std::clamp(static_cast<double>(img.pixels[i]), 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(255.0 * v));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  is >> magic >> w >> h >> maxv;
  if (magic != "P6" || w != Image::kSide || h != Image::kSide || maxv != 255) {
    throw Error(path.string() + ": expected a 16x16 8-bit P6 image");
  }
  is.get();  // single whitespace before the raster
  std::vector<unsigned char> bytes(Image::kSize);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != Image::kSize) throw Error(path.string() + ": truncated raster");
  Image img;
  for (int i = 0; i < Image::kSize; ++i) img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

#define UNIFLOW_INSTANTIATE_SAMPLER(T)                                                      \
  template Mat<T> cfg_velocity<T>(const Mat<T>&, const Mat<T>&, double);                    \
  template FlowState<T> euler_step<T>(const FlowState<T>&, const Mat<T>&, double);          \
  template Mat<T> integrate<T>(const std::vector<int>&, const ModelParams<T>&,              \
                               const SamplerConfig&, SamplerStats*);                        \
  template Image generate_image<T>(const std::vector<int>&, const ModelParams<T>&,          \
                                   const SamplerConfig&, SamplerStats*);

UNIFLOW_INSTANTIATE_SAMPLER(float)
UNIFLOW_INSTANTIATE_SAMPLER(double)

#undef UNIFLOW_INSTANTIATE_SAMPLER

}  // namespace uniflow
