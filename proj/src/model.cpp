#include "uniflow/model.hpp"

namespace uniflow {

void ModelConfig::validate() const {
  if (d_emb <= 0 || n_blocks <= 0 || n_heads <= 0 || l_max <= 0) {
    throw Error("model config: dimensions must be positive");
  }
  if (d_emb % n_heads != 0) {
    throw Error("model config: d_emb " + std::to_string(d_emb) +
                " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (repa_block < 1 || repa_block > n_blocks) {
    throw Error("model config: repa_block " + std::to_string(repa_block) +
                " outside [1, " + std::to_string(n_blocks) + "]");
  }
  if (vocab != kVocabSize) throw Error("model config: vocab must be 32");
  if ((2 * c_gen) % 4 != 0) throw Error("model config: 2*c_gen must be divisible by 4");
  if (shared_encoder && c_gen != d_enc) {
    throw Error("model config: shared encoder requires c_gen == d_enc");
  }
}

namespace {

template <class P, class F>
void visit_linear(P& p, const std::string& name, F&& f) {
  f(name + ".w", p.w);
  f(name + ".b", p.b);
}

template <class P, class F>
void visit_norm(P& p, const std::string& name, F&& f) {
  f(name + ".gamma", p.gamma);
  f(name + ".beta", p.beta);
}

template <class P, class F>
void visit_convnext(P& p, const std::string& name, F&& f) {
  f(name + ".dw.w", p.dw.w);
  f(name + ".dw.b", p.dw.b);
  visit_norm(p.norm, name + ".norm", f);
  visit_linear(p.fc1, name + ".fc1", f);
  visit_linear(p.fc2, name + ".fc2", f);
}

template <class M, class F>
void visit_model(M& m, F&& f) {
  auto& bb = m.backbone;
  f(std::string("backbone.tok"), bb.tok);
  f(std::string("backbone.pos"), bb.pos);
  for (size_t i = 0; i < bb.blocks.size(); ++i) {
    auto& b = bb.blocks[i];
    const std::string n = "backbone.blocks." + std::to_string(i);
    visit_norm(b.ln1, n + ".ln1", f);
    f(n + ".attn.wq", b.attn.wq);
    f(n + ".attn.wk", b.attn.wk);
    f(n + ".attn.wv", b.attn.wv);
    f(n + ".attn.wo", b.attn.wo);
    visit_norm(b.ln2, n + ".ln2", f);
    visit_linear(b.fc1, n + ".fc1", f);
    visit_linear(b.fc2, n + ".fc2", f);
  }
  visit_norm(bb.ln_f, "backbone.ln_f", f);
  visit_linear(bb.head, "backbone.head", f);

  visit_linear(m.und_proj, "und_proj", f);

  f(std::string("f_enc.stem.w"), m.f_enc.stem.w);
  f(std::string("f_enc.stem.b"), m.f_enc.stem.b);
  for (size_t i = 0; i < m.f_enc.blocks.size(); ++i) {
    visit_convnext(m.f_enc.blocks[i], "f_enc.blocks." + std::to_string(i), f);
  }
  visit_norm(m.f_enc.norm, "f_enc.norm", f);

  visit_linear(m.g_enc.patch, "g_enc.patch", f);
  for (size_t i = 0; i < m.g_enc.blocks.size(); ++i) {
    visit_convnext(m.g_enc.blocks[i], "g_enc.blocks." + std::to_string(i), f);
  }
  visit_linear(m.g_enc.out, "g_enc.out", f);

  visit_linear(m.g_dec.in, "g_dec.in", f);
  for (size_t i = 0; i < m.g_dec.blocks.size(); ++i) {
    visit_convnext(m.g_dec.blocks[i], "g_dec.blocks." + std::to_string(i), f);
  }
  visit_linear(m.g_dec.out, "g_dec.out", f);

  visit_linear(m.time.fc1, "time.fc1", f);
  visit_linear(m.time.fc2, "time.fc2", f);

  visit_linear(m.align.fc1, "align.fc1", f);
  visit_linear(m.align.fc2, "align.fc2", f);
  visit_linear(m.align.fc3, "align.fc3", f);
}

}  // namespace

template <class T>
std::vector<NamedTensor<T>> ModelParams<T>::tensors() {
  std::vector<NamedTensor<T>> out;
  visit_model(*this, [&](const std::string& n, Mat<T>& t) { out.push_back({n, &t}); });
  return out;
}

template <class T>
std::vector<ConstNamedTensor<T>> ModelParams<T>::tensors() const {
  std::vector<ConstNamedTensor<T>> out;
  visit_model(*this, [&](const std::string& n, const Mat<T>& t) { out.push_back({n, &t}); });
  return out;
}

template <class T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<T> m;
  m.cfg = cfg;
  const int D = cfg.d_emb;
  // Separate substreams per submodule so that adding a component does not
  // perturb the others' initialization.
  Rng bb_rng(derive_seed(seed, {10}));
  auto& bb = m.backbone;
  bb.tok = Mat<T>(cfg.vocab, D);
  bb.pos = Mat<T>(cfg.l_max, D);
  for (Mat<T>* t : {&bb.tok, &bb.pos}) {
    for (Eigen::Index i = 0; i < t->size(); ++i) {
      t->data()[i] = static_cast<T>(bb_rng.truncated_normal(kInitStd));
    }
  }
  bb.blocks.resize(cfg.n_blocks);
  for (auto& b : bb.blocks) {
    init_norm(b.ln1, D);
    init_attention(b.attn, D, bb_rng);
    init_norm(b.ln2, D);
    init_linear(b.fc1, D, 4 * D, bb_rng);
    init_linear(b.fc2, 4 * D, D, bb_rng);
  }
  init_norm(bb.ln_f, D);
  init_linear(bb.head, D, cfg.vocab, bb_rng);

  Rng proj_rng(derive_seed(seed, {11}));
  init_linear(m.und_proj, cfg.und_feature_dim(), D, proj_rng);

  Rng fenc_rng(derive_seed(seed, {12}));
  init_conv(m.f_enc.stem, ModelConfig::kLatentChannels, cfg.d_enc, fenc_rng);
  m.f_enc.blocks.resize(2);
  for (auto& b : m.f_enc.blocks) init_convnext(b, cfg.d_enc, fenc_rng);
  init_norm(m.f_enc.norm, cfg.d_enc);

  Rng genc_rng(derive_seed(seed, {13}));
  init_linear(m.g_enc.patch, 4 * ModelConfig::kLatentChannels, cfg.c_gen, genc_rng);
  m.g_enc.blocks.resize(2);
  for (auto& b : m.g_enc.blocks) init_convnext(b, cfg.c_gen, genc_rng);
  init_linear(m.g_enc.out, cfg.c_gen, D, genc_rng);

  Rng gdec_rng(derive_seed(seed, {14}));
  init_linear(m.g_dec.in, D, cfg.c_gen, gdec_rng);
  m.g_dec.blocks.resize(2);
  for (auto& b : m.g_dec.blocks) init_convnext(b, 2 * cfg.c_gen, gdec_rng);
  init_linear(m.g_dec.out, 2 * cfg.c_gen / 4, ModelConfig::kLatentChannels, gdec_rng);

  Rng time_rng(derive_seed(seed, {15}));
  init_linear(m.time.fc1, 2 * cfg.time_freqs, D, time_rng);
  init_linear(m.time.fc2, D, D, time_rng);

  Rng align_rng(derive_seed(seed, {16}));
  init_linear(m.align.fc1, D, D, align_rng);
  init_linear(m.align.fc2, D, D, align_rng);
  init_linear(m.align.fc3, D, cfg.d_enc, align_rng);
  return m;
}

template <class T>
void set_zero(ModelParams<T>& p) {
  for (auto& t : p.tensors()) t.tensor->setZero();
}

template <class T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
  ModelParams<T> z = p;
  set_zero(z);
  return z;
}

template <class To, class From>
ModelParams<To> cast_model(const ModelParams<From>& p) {
  ModelParams<To> out = init_model<To>(p.cfg, 0);
  auto src = p.tensors();
  auto dst = out.tensors();
  for (size_t i = 0; i < src.size(); ++i) {
    *dst[i].tensor = src[i].tensor->template cast<To>();
  }
  return out;
}

template <class T>
size_t parameter_count(const ModelParams<T>& p) {
  size_t n = 0;
  for (const auto& t : p.tensors()) n += static_cast<size_t>(t.tensor->size());
  return n;
}

template <class T>
void accumulate(ModelParams<T>& dst, const ModelParams<T>& src) {
  auto d = dst.tensors();
  auto s = src.tensors();
  for (size_t i = 0; i < d.size(); ++i) *d[i].tensor += *s[i].tensor;
}

ParamGroup group_of(const std::string& n) {
  auto starts = [&](const char* p) { return n.rfind(p, 0) == 0; };
  if (starts("backbone.")) return ParamGroup::backbone;
  if (starts("und_proj.")) return ParamGroup::und_proj;
  if (starts("f_enc.")) return ParamGroup::f_enc;
  if (starts("g_enc.")) return ParamGroup::g_enc;
  if (starts("g_dec.")) return ParamGroup::g_dec;
  if (starts("time.")) return ParamGroup::time;
  if (starts("align.")) return ParamGroup::align;
  throw Error("tensor name without a known group: " + n);
}

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::backbone: return "backbone";
    case ParamGroup::und_proj: return "und_proj";
    case ParamGroup::f_enc: return "f_enc";
    case ParamGroup::g_enc: return "g_enc";
    case ParamGroup::g_dec: return "g_dec";
    case ParamGroup::time: return "time";
    case ParamGroup::align: return "align";
  }
  return "?";
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_model<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_model<double>(const ModelConfig&, std::uint64_t);
template ModelParams<float> zeros_like<float>(const ModelParams<float>&);
template ModelParams<double> zeros_like<double>(const ModelParams<double>&);
template ModelParams<float> cast_model<float, double>(const ModelParams<double>&);
template ModelParams<double> cast_model<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_model<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_model<double, double>(const ModelParams<double>&);
template size_t parameter_count<float>(const ModelParams<float>&);
template size_t parameter_count<double>(const ModelParams<double>&);
template void set_zero<float>(ModelParams<float>&);
template void set_zero<double>(ModelParams<double>&);
template void accumulate<float>(ModelParams<float>&, const ModelParams<float>&);
template void accumulate<double>(ModelParams<double>&, const ModelParams<double>&);

}  // namespace uniflow
