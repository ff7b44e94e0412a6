#pragma once

// Shared causal transformer: sequence elements, packing into fixed-length
// block-isolated sequences, embedding, and the pre-norm transformer stack.

#include <vector>

#include "uniflow/encoders.hpp"

namespace uniflow {

enum class ElementKind : std::uint8_t { token, image_und, image_gen, time };
enum class Role : std::uint8_t { pad, condition, response };

template <class T>
struct SequenceElement {
  ElementKind kind = ElementKind::token;
  Role role = Role::condition;
  int token = -1;
  const Image* image = nullptr;  // image_und
  Mat<T> latent;                 // image_gen: 256 x 3 latent grid
  double t = 0.0;                // time

  static SequenceElement text(int id, Role role) {
    SequenceElement e;
    e.kind = ElementKind::token;
    e.token = id;
    e.role = role;
    return e;
  }
  static SequenceElement und_image(const Image& img) {
    SequenceElement e;
    e.kind = ElementKind::image_und;
    e.image = &img;
    return e;
  }
  static SequenceElement gen_image(Mat<T> z) {
    SequenceElement e;
    e.kind = ElementKind::image_gen;
    e.latent = std::move(z);
    e.role = Role::response;
    return e;
  }
  static SequenceElement time_step(double t) {
    SequenceElement e;
    e.kind = ElementKind::time;
    e.t = t;
    return e;
  }

  int rows() const {
    return (kind == ElementKind::image_und || kind == ElementKind::image_gen)
               ? ModelConfig::kGridCells
               : 1;
  }
};

template <class T>
using Sample = std::vector<SequenceElement<T>>;

template <class T>
int expanded_length(const Sample<T>& s);

// Image blocks must directly follow |BOI| (generation may have the time
// token between); understanding images must be followed by |EOI|.
template <class T>
void validate_sample(const Sample<T>& s);

struct BlockSpan {
  int sample = 0;
  int start = 0;
  int length = 0;
};

struct PlacedElement {
  int sample = 0;
  int element = 0;
  int start = 0;
  int rows = 0;
  ElementKind kind = ElementKind::token;
};

// Parameter-free layout of one packed sequence.
struct PackLayout {
  int length = 0;                 // L_max
  int used = 0;                   // positions occupied by samples
  std::vector<BlockSpan> spans;   // one per sample, in packing order
  AttnMask mask;                  // block-diagonal causal; pads see only themselves
  std::vector<int> tokens;        // token id per position, -1 for image/time rows
  std::vector<int> position_ids;  // offset within the owning block
  std::vector<Role> roles;
  // targets[p] is the token at p, predicted from position p-1; only
  // meaningful where loss_mask[p] is set (response token positions).
  std::vector<int> targets;
  std::vector<unsigned char> loss_mask;
  std::vector<PlacedElement> elements;

  int response_tokens() const;
};

// Greedy first-fit packing of expanded sample lengths. Returns, per pack,
// the sample indices in placement order.
std::vector<std::vector<int>> first_fit(const std::vector<int>& lengths, int l_max);

template <class T>
std::vector<PackLayout> plan_packs(const std::vector<Sample<T>>& samples, int l_max);

template <class T>
PackLayout layout_pack(const std::vector<Sample<T>>& samples, const std::vector<int>& order,
                       int l_max);

template <class T>
struct EmbedCache {
  // Indexed by PlacedElement order within the layout; -1 when not applicable.
  std::vector<int> slot;
  std::vector<UndEncoderCache<T>> und;
  std::vector<GenEncoderCache<T>> shared_und;  // shared-encoder ablation
  std::vector<Mat<T>> und_features;
  std::vector<GenEncoderCache<T>> gen;
  std::vector<Mat<T>> gen_skip;  // always kept (used by the decoder)
  std::vector<TimeCache<T>> time;
};

template <class T>
struct PackedBatch {
  PackLayout layout;
  Mat<T> embeddings;  // L_max x d_emb
  EmbedCache<T> cache;
};

template <class T>
PackedBatch<T> embed_layout(const PackLayout& layout, const std::vector<Sample<T>>& samples,
                            const ModelParams<T>& p, bool keep_cache);

template <class T>
std::vector<PackedBatch<T>> pack(const std::vector<Sample<T>>& samples, const ModelParams<T>& p,
                                 int l_max, bool keep_cache = false);

// Embedding rows of one sample placed at `offset` within its block.
template <class T>
Mat<T> embed(const Sample<T>& sample, const ModelParams<T>& p, int offset = 0);

struct EmbedGradOptions {
  bool und_encoder = true;
};

// Backpropagates d_embeddings into token/position tables and the towers.
// `d_skip` holds the decoder's skip gradient per gen-cache slot (may be
// empty entries).
template <class T>
void embed_bwd(const PackedBatch<T>& batch, const std::vector<Sample<T>>& samples,
               const Mat<T>& d_embeddings, const std::vector<Mat<T>>& d_skip,
               const ModelParams<T>& p, ModelParams<T>* grads, const EmbedGradOptions& opt);

// ---- transformer -----------------------------------------------------------

template <class T>
struct BlockCache {
  NormCache<T> ln1;
  Mat<T> n1;
  AttentionCache<T> attn;
  NormCache<T> ln2;
  Mat<T> n2;
  Mat<T> pre;
  Mat<T> act;
};

template <class T>
struct BackboneCache {
  std::vector<BlockCache<T>> blocks;
  NormCache<T> ln_f;
};

template <class T>
struct BackboneOutput {
  std::vector<Mat<T>> hidden;  // hidden[0] = embeddings, hidden[b] = after block b
  Mat<T> final;                // after the final layernorm
  Mat<T> logits;               // L x V (empty if not requested)
};

template <class T>
BackboneOutput<T> forward(const PackedBatch<T>& batch, const ModelParams<T>& p,
                          NoDeduce<BackboneCache<T>>* cache = nullptr, bool compute_logits = true);

// d_hidden[b] (b = 1..n_blocks) are extra gradients injected at block
// outputs; empty matrices are skipped. Returns d_embeddings.
template <class T>
Mat<T> backbone_bwd(const BackboneOutput<T>& out, const BackboneCache<T>& cache,
                    const Mat<T>& d_final, const std::vector<Mat<T>>& d_hidden,
                    const ModelParams<T>& p, ModelParams<T>* grads);

}  // namespace uniflow
