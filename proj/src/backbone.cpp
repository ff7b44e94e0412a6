#include "uniflow/backbone.hpp"

#include <algorithm>

namespace uniflow {

template <class T>
int expanded_length(const Sample<T>& s) {
  int n = 0;
  for (const auto& e : s) n += e.rows();
  return n;
}

template <class T>
void validate_sample(const Sample<T>& s) {
  auto is_token = [&](size_t i, int id) {
    return s[i].kind == ElementKind::token && s[i].token == id;
  };
  for (size_t i = 0; i < s.size(); ++i) {
    const auto& e = s[i];
    if (e.kind == ElementKind::token && (e.token < 0 || e.token >= kVocabSize)) {
      throw Error("token id out of range: " + std::to_string(e.token));
    }
    if (e.kind == ElementKind::image_und) {
      if (i == 0 || !is_token(i - 1, tok::kBoi)) {
        throw Error("missing |BOI| before an understanding image block");
      }
      if (i + 1 >= s.size() || !is_token(i + 1, tok::kEoi)) {
        throw Error("missing |EOI| after an understanding image block");
      }
      if (!e.image) throw Error("understanding image element without an image");
    }
    if (e.kind == ElementKind::image_gen) {
      const bool direct = i >= 1 && is_token(i - 1, tok::kBoi);
      const bool timed = i >= 2 && s[i - 1].kind == ElementKind::time && is_token(i - 2, tok::kBoi);
      if (!direct && !timed) throw Error("missing |BOI| before a generation image block");
      check_shape(e.latent, Image::kSide * Image::kSide, Image::kChannels, "generation latent");
    }
  }
}

int PackLayout::response_tokens() const {
  int n = 0;
  for (unsigned char m : loss_mask) n += m;
  return n;
}

std::vector<std::vector<int>> first_fit(const std::vector<int>& lengths, int l_max) {
  std::vector<std::vector<int>> packs;
  std::vector<int> remaining;
  for (size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] > l_max) {
      throw Error("sample " + std::to_string(i) + " of expanded length " +
                  std::to_string(lengths[i]) + " exceeds packed length " + std::to_string(l_max));
    }
    size_t k = 0;
    while (k < packs.size() && remaining[k] < lengths[i]) ++k;
    if (k == packs.size()) {
      packs.emplace_back();
      remaining.push_back(l_max);
    }
    packs[k].push_back(static_cast<int>(i));
    remaining[k] -= lengths[i];
  }
  return packs;
}

template <class T>
PackLayout layout_pack(const std::vector<Sample<T>>& samples, const std::vector<int>& order,
                       int l_max) {
  PackLayout L;
  L.length = l_max;
  L.mask = AttnMask(l_max);
  L.tokens.assign(l_max, tok::kPad);
  L.position_ids.assign(l_max, 0);
  L.roles.assign(l_max, Role::pad);
  L.targets.assign(l_max, -1);
  L.loss_mask.assign(l_max, 0);

  int cursor = 0;
  for (int si : order) {
    const Sample<T>& s = samples[si];
    validate_sample(s);
    const int len = expanded_length(s);
    if (cursor + len > l_max) {
      throw Error("sample " + std::to_string(si) + " of expanded length " + std::to_string(len) +
                  " does not fit in packed length " + std::to_string(l_max));
    }
    const int start = cursor;
    for (size_t ei = 0; ei < s.size(); ++ei) {
      const auto& e = s[ei];
      const int rows = e.rows();
      L.elements.push_back({si, static_cast<int>(ei), cursor, rows, e.kind});
      for (int r = 0; r < rows; ++r) {
        const int p = cursor + r;
        L.position_ids[p] = p - start;
        L.roles[p] = e.role;
        L.tokens[p] = e.kind == ElementKind::token ? e.token : -1;
      }
      if (e.kind == ElementKind::token && e.role == Role::response) {
        if (cursor == start) {
          throw Error("response token at the first position of sample " + std::to_string(si));
        }
        L.loss_mask[cursor] = 1;
        L.targets[cursor] = e.token;
      }
      cursor += rows;
    }
    L.spans.push_back({si, start, len});
    L.mask.add_causal_block(start, len);
  }
  L.used = cursor;
  for (int p = cursor; p < l_max; ++p) L.mask.set(p, p, true);
  return L;
}

template <class T>
std::vector<PackLayout> plan_packs(const std::vector<Sample<T>>& samples, int l_max) {
  std::vector<int> lengths;
  lengths.reserve(samples.size());
  for (const auto& s : samples) lengths.push_back(expanded_length(s));
  std::vector<PackLayout> out;
  for (const auto& order : first_fit(lengths, l_max)) {
    out.push_back(layout_pack(samples, order, l_max));
  }
  return out;
}

namespace {

// Computes the embedding rows (without positions) of one element, filling
// the corresponding cache slot when `cache` is non-null.
template <class T>
Mat<T> element_rows(const SequenceElement<T>& e, const ModelParams<T>& p, NoDeduce<EmbedCache<T>>* cache,
                    int* slot, bool keep_cache) {
  switch (e.kind) {
    case ElementKind::token:
      return p.backbone.tok.row(e.token);
    case ElementKind::image_und: {
      const Mat<T> img = e.image->template grid<T>();
      Mat<T> feats;
      if (p.cfg.shared_encoder) {
        GenEncoderCache<T> gc;
        feats = gen_trunk_fwd(img, p.g_enc, keep_cache ? &gc : nullptr);
        if (cache && keep_cache) {
          *slot = static_cast<int>(cache->shared_und.size());
          cache->shared_und.push_back(std::move(gc));
        }
      } else {
        UndEncoderCache<T> uc;
        feats = und_encoder_fwd(img, p.f_enc, keep_cache ? &uc : nullptr);
        if (cache && keep_cache) {
          *slot = static_cast<int>(cache->und.size());
          cache->und.push_back(std::move(uc));
        }
      }
      Mat<T> rows = linear_fwd(feats, p.und_proj);
      if (cache && keep_cache) cache->und_features.push_back(std::move(feats));
      return rows;
    }
    case ElementKind::image_gen: {
      GenEncoderCache<T> gc;
      GenEncoderOutput<T> out = gen_encoder_fwd(e.latent, p.g_enc, keep_cache ? &gc : nullptr);
      if (cache) {
        *slot = static_cast<int>(cache->gen_skip.size());
        cache->gen_skip.push_back(std::move(out.skip));
        if (keep_cache) cache->gen.push_back(std::move(gc));
      }
      return std::move(out.rows);
    }
    case ElementKind::time: {
      TimeCache<T> tc;
      Mat<T> row = time_embed_fwd(e.t, p.time, p.cfg.time_freqs, keep_cache ? &tc : nullptr);
      if (cache && keep_cache) {
        *slot = static_cast<int>(cache->time.size());
        cache->time.push_back(std::move(tc));
      }
      return row;
    }
  }
  throw Error("unknown element kind");
}

}  // namespace

template <class T>
PackedBatch<T> embed_layout(const PackLayout& layout, const std::vector<Sample<T>>& samples,
                            const ModelParams<T>& p, bool keep_cache) {
  if (layout.length > p.cfg.l_max) {
    throw Error("packed length " + std::to_string(layout.length) +
                " exceeds positional table size " + std::to_string(p.cfg.l_max));
  }
  PackedBatch<T> b;
  b.layout = layout;
  const int D = p.cfg.d_emb;
  b.embeddings = Mat<T>(layout.length, D);
  for (int q = layout.used; q < layout.length; ++q) {
    b.embeddings.row(q) = p.backbone.tok.row(tok::kPad) + p.backbone.pos.row(0);
  }
  b.cache.slot.assign(layout.elements.size(), -1);
  for (size_t k = 0; k < layout.elements.size(); ++k) {
    const PlacedElement& pe = layout.elements[k];
    const auto& e = samples[pe.sample][pe.element];
    Mat<T> rows = element_rows(e, p, &b.cache, &b.cache.slot[k], keep_cache);
    for (int r = 0; r < pe.rows; ++r) {
      const int q = pe.start + r;
      b.embeddings.row(q) = rows.row(r) + p.backbone.pos.row(layout.position_ids[q]);
    }
  }
  return b;
}

template <class T>
std::vector<PackedBatch<T>> pack(const std::vector<Sample<T>>& samples, const ModelParams<T>& p,
                                 int l_max, bool keep_cache) {
  std::vector<PackedBatch<T>> out;
  for (const auto& layout : plan_packs(samples, l_max)) {
    out.push_back(embed_layout(layout, samples, p, keep_cache));
  }
  return out;
}

template <class T>
Mat<T> embed(const Sample<T>& sample, const ModelParams<T>& p, int offset) {
  validate_sample(sample);
  const int len = expanded_length(sample);
  if (offset + len > p.cfg.l_max) throw Error("embed: sample does not fit positional table");
  Mat<T> out(len, p.cfg.d_emb);
  int cursor = 0;
  for (const auto& e : sample) {
    int slot = -1;
    Mat<T> rows = element_rows<T>(e, p, nullptr, &slot, false);
    for (int r = 0; r < e.rows(); ++r, ++cursor) {
      out.row(cursor) = rows.row(r) + p.backbone.pos.row(offset + cursor);
    }
  }
  return out;
}

template <class T>
void embed_bwd(const PackedBatch<T>& b, const std::vector<Sample<T>>& samples,
               const Mat<T>& dX, const std::vector<Mat<T>>& d_skip, const ModelParams<T>& p,
               ModelParams<T>* grads, const EmbedGradOptions& opt) {
  const PackLayout& L = b.layout;
  check_same_shape(dX, b.embeddings, "embed_bwd");
  for (int q = 0; q < L.length; ++q) {
    grads->backbone.pos.row(L.position_ids[q]) += dX.row(q);
    if (L.tokens[q] >= 0) grads->backbone.tok.row(L.tokens[q]) += dX.row(q);
  }
  for (size_t k = 0; k < L.elements.size(); ++k) {
    const PlacedElement& pe = L.elements[k];
    const int slot = b.cache.slot[k];
    const Mat<T> d_rows = dX.block(pe.start, 0, pe.rows, dX.cols());
    switch (pe.kind) {
      case ElementKind::token:
        break;
      case ElementKind::image_und: {
        Mat<T> d_feat = linear_bwd(b.cache.und_features[slot], d_rows, p.und_proj, &grads->und_proj);
        if (!opt.und_encoder) break;
        if (p.cfg.shared_encoder) {
          gen_trunk_bwd(d_feat, p.g_enc, b.cache.shared_und[slot], &grads->g_enc);
        } else {
          und_encoder_bwd(d_feat, p.f_enc, b.cache.und[slot], &grads->f_enc);
        }
        break;
      }
      case ElementKind::image_gen: {
        const Mat<T>* ds = (slot < static_cast<int>(d_skip.size()) && d_skip[slot].size() > 0)
                               ? &d_skip[slot]
                               : nullptr;
        gen_encoder_bwd(d_rows, ds, p.g_enc, b.cache.gen[slot], &grads->g_enc);
        break;
      }
      case ElementKind::time:
        time_embed_bwd(d_rows, p.time, b.cache.time[slot], &grads->time);
        break;
    }
  }
  (void)samples;
}

// ---- transformer -----------------------------------------------------------

template <class T>
BackboneOutput<T> forward(const PackedBatch<T>& batch, const ModelParams<T>& p,
                          NoDeduce<BackboneCache<T>>* cache, bool compute_logits) {
  const auto& bb = p.backbone;
  const int heads = p.cfg.n_heads;
  BackboneOutput<T> out;
  out.hidden.reserve(bb.blocks.size() + 1);
  out.hidden.push_back(batch.embeddings);
  if (cache) cache->blocks.resize(bb.blocks.size());
  for (size_t bi = 0; bi < bb.blocks.size(); ++bi) {
    const auto& blk = bb.blocks[bi];
    BlockCache<T> local;
    BlockCache<T>& c = cache ? cache->blocks[bi] : local;
    const Mat<T>& x = out.hidden.back();
    c.n1 = layernorm_fwd(x, blk.ln1, &c.ln1);
    Mat<T> h = x + causal_attention_fwd(c.n1, blk.attn, heads, batch.layout.mask,
                                        cache ? &c.attn : nullptr);
    c.n2 = layernorm_fwd(h, blk.ln2, &c.ln2);
    c.pre = linear_fwd(c.n2, blk.fc1);
    c.act = gelu_fwd(c.pre);
    Mat<T> y = h + linear_fwd(c.act, blk.fc2);
    if (!all_finite(y)) {
      throw Error("non-finite activation in block " + std::to_string(bi + 1));
    }
    out.hidden.push_back(std::move(y));
  }
  out.final = layernorm_fwd(out.hidden.back(), bb.ln_f, cache ? &cache->ln_f : nullptr);
  if (compute_logits) out.logits = linear_fwd(out.final, bb.head);
  return out;
}

template <class T>
Mat<T> backbone_bwd(const BackboneOutput<T>& /*out*/, const BackboneCache<T>& cache,
                    const Mat<T>& d_final, const std::vector<Mat<T>>& d_hidden,
                    const ModelParams<T>& p, ModelParams<T>* grads) {
  const auto& bb = p.backbone;
  const int heads = p.cfg.n_heads;
  Mat<T> dx = layernorm_bwd(d_final, bb.ln_f, cache.ln_f, &grads->backbone.ln_f);
  for (size_t bi = bb.blocks.size(); bi-- > 0;) {
    const size_t level = bi + 1;
    if (level < d_hidden.size() && d_hidden[level].size() > 0) dx += d_hidden[level];
    const auto& blk = bb.blocks[bi];
    auto& g = grads->backbone.blocks[bi];
    const BlockCache<T>& c = cache.blocks[bi];
    Mat<T> d_act = linear_bwd(c.act, dx, blk.fc2, &g.fc2);
    Mat<T> d_pre = gelu_bwd(c.pre, d_act);
    Mat<T> d_n2 = linear_bwd(c.n2, d_pre, blk.fc1, &g.fc1);
    Mat<T> dh = dx + layernorm_bwd(d_n2, blk.ln2, c.ln2, &g.ln2);
    Mat<T> d_n1 = causal_attention_bwd(dh, blk.attn, heads, AttnMask(), c.attn, &g.attn);
    dx = dh + layernorm_bwd(d_n1, blk.ln1, c.ln1, &g.ln1);
  }
  if (!d_hidden.empty() && d_hidden[0].size() > 0) dx += d_hidden[0];
  return dx;
}

#define UNIFLOW_INSTANTIATE_BACKBONE(T)                                                        \
  template int expanded_length<T>(const Sample<T>&);                                          \
  template void validate_sample<T>(const Sample<T>&);                                         \
  template PackLayout layout_pack<T>(const std::vector<Sample<T>>&, const std::vector<int>&, int); \
  template std::vector<PackLayout> plan_packs<T>(const std::vector<Sample<T>>&, int);         \
  template PackedBatch<T> embed_layout<T>(const PackLayout&, const std::vector<Sample<T>>&,  \
                                          const ModelParams<T>&, bool);                       \
  template std::vector<PackedBatch<T>> pack<T>(const std::vector<Sample<T>>&,                 \
                                               const ModelParams<T>&, int, bool);             \
  template Mat<T> embed<T>(const Sample<T>&, const ModelParams<T>&, int);                     \
  template void embed_bwd<T>(const PackedBatch<T>&, const std::vector<Sample<T>>&,            \
                             const Mat<T>&, const std::vector<Mat<T>>&, const ModelParams<T>&, \
                             ModelParams<T>*, const EmbedGradOptions&);                       \
  template BackboneOutput<T> forward<T>(const PackedBatch<T>&, const ModelParams<T>&,         \
                                        BackboneCache<T>*, bool);                             \
  template Mat<T> backbone_bwd<T>(const BackboneOutput<T>&, const BackboneCache<T>&,          \
                                  const Mat<T>&, const std::vector<Mat<T>>&,                  \
                                  const ModelParams<T>&, ModelParams<T>*);

UNIFLOW_INSTANTIATE_BACKBONE(float)
UNIFLOW_INSTANTIATE_BACKBONE(double)

#undef UNIFLOW_INSTANTIATE_BACKBONE

}  // namespace uniflow
