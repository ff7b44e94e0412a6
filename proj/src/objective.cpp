#include "uniflow/objective.hpp"

namespace uniflow {

const char* task_name(Task t) {
  switch (t) {
    case Task::und: return "und";
    case Task::gen: return "gen";
    case Task::text: return "text";
  }
  return "?";
}

template <class T>
Sample<T> build_sample(const WorkItem<T>& item) {
  switch (item.task) {
    case Task::und:
      if (!item.und) throw Error("understanding work item without a sample");
      return qa_sample<T>(item.und->image, item.und->question, item.und->answer);
    case Task::text:
      if (!item.text) throw Error("text work item without a sample");
      return text_sample<T>(*item.text);
    case Task::gen: {
      if (!item.gen) throw Error("generation work item without a sample");
      const Mat<T> x = item.gen->image.template grid<T>();
      const Mat<T> zt = interpolate(x, item.draw.z0, item.draw.t);
      static const std::vector<int> kEmpty;
      return gen_sample<T>(item.draw.drop ? kEmpty : item.gen->caption, zt, item.draw.t);
    }
  }
  throw Error("unknown task");
}

template <class T>
LossReport batch_objective(const ModelParams<T>& p, const std::vector<WorkItem<T>>& items,
                           const ObjectiveOptions<T>& opt, NoDeduce<ModelParams<T>>* grads) {
  if (items.empty()) throw Error("batch_objective: empty batch");
  LossReport rep;
  std::vector<Sample<T>> samples;
  samples.reserve(items.size());
  std::vector<int> gen_index(items.size(), -1);
  for (size_t i = 0; i < items.size(); ++i) {
    samples.push_back(build_sample(items[i]));
    switch (items[i].task) {
      case Task::und: ++rep.n_und; break;
      case Task::text: ++rep.n_text; break;
      case Task::gen: gen_index[i] = rep.n_gen++; break;
    }
  }
  const std::vector<PackLayout> layouts = plan_packs(samples, opt.l_max);
  for (const auto& L : layouts) rep.ar_tokens += L.response_tokens();

  const bool do_ar = opt.use_ar && rep.ar_tokens > 0;
  const bool do_rf = opt.use_rf && rep.n_gen > 0;
  const bool do_repa = opt.use_repa && rep.n_gen > 0;
  const double ar_scale = do_ar ? 1.0 / rep.ar_tokens : 0.0;
  const double gen_scale = rep.n_gen > 0 ? 1.0 / rep.n_gen : 0.0;
  const int rb = p.cfg.repa_block;
  const bool train = grads != nullptr;

  double und_nll = 0.0, text_nll = 0.0, ar_nll = 0.0, rf_sum = 0.0, repa_sum = 0.0;
  for (const PackLayout& L : layouts) {
    PackedBatch<T> b = embed_layout(L, samples, p, train);
    BackboneCache<T> cache;
    BackboneOutput<T> out = forward(b, p, train ? &cache : nullptr, false);

    Mat<T> d_final;
    std::vector<Mat<T>> d_hidden;
    std::vector<Mat<T>> d_skip(b.cache.gen_skip.size());
    if (train) {
      d_final = Mat<T>::Zero(out.final.rows(), out.final.cols());
      d_hidden.resize(p.cfg.n_blocks + 1);
    }

    if (do_ar) {
      ArSum s = ar_terms(out.final, L, p.backbone.head, ar_scale, train ? &d_final : nullptr,
                         train ? &grads->backbone.head : nullptr);
      ar_nll += s.nll;
      for (const BlockSpan& span : L.spans) {
        double nll = 0.0;
        int count = 0;
        for (int q = span.start; q < span.start + span.length; ++q) {
          if (!L.loss_mask[q]) continue;
          nll += s.nll_at[q];
          ++count;
        }
        if (items[span.sample].task == Task::und) {
          und_nll += nll;
          rep.und_tokens += count;
        } else if (items[span.sample].task == Task::text) {
          text_nll += nll;
          rep.text_tokens += count;
        }
      }
    }

    if (do_rf || do_repa) {
      for (size_t k = 0; k < L.elements.size(); ++k) {
        const PlacedElement& pe = L.elements[k];
        if (pe.kind != ElementKind::image_gen) continue;
        const WorkItem<T>& item = items[pe.sample];
        const int gi = gen_index[pe.sample];
        const int slot = b.cache.slot[k];
        const Mat<T> x = item.gen->image.template grid<T>();

        if (do_rf) {
          const Mat<T> rows = out.final.block(pe.start, 0, pe.rows, out.final.cols());
          GenDecoderCache<T> dc;
          Mat<T> v = gen_decoder_fwd(rows, b.cache.gen_skip[slot], p.g_dec, train ? &dc : nullptr);
          if (opt.velocity_hook) opt.velocity_hook(v, gi);
          const Mat<T> diff = v - (x - item.draw.z0);
          const double n = static_cast<double>(diff.size());
          rf_sum += static_cast<double>(diff.squaredNorm()) / n;
          if (train) {
            const Mat<T> dv = static_cast<T>(2.0 * gen_scale / n) * diff;
            auto [d_rows, ds] = gen_decoder_bwd(dv, p.g_dec, dc, &grads->g_dec);
            d_final.block(pe.start, 0, pe.rows, d_final.cols()) += d_rows;
            d_skip[slot] = std::move(ds);
          }
        }

        if (do_repa) {
          const Mat<T> h = out.hidden[rb].block(pe.start, 0, pe.rows, out.hidden[rb].cols());
          AlignCache<T> ac;
          Mat<T> pred = align_head_fwd(h, p.align, train ? &ac : nullptr);
          if (opt.align_hook) opt.align_hook(pred, gi);
          const ModelParams<T>& tp = opt.target_params ? *opt.target_params : p;
          const Mat<T> target = alignment_target(item.gen->image, tp);  // no gradient
          Mat<T> d_pred;
          repa_sum += alignment_loss(target, pred, train ? &d_pred : nullptr,
                                     opt.repa_weight * gen_scale);
          if (train) {
            Mat<T> dh = align_head_bwd(d_pred, p.align, ac, &grads->align);
            if (d_hidden[rb].size() == 0) {
              d_hidden[rb] = Mat<T>::Zero(out.final.rows(), out.final.cols());
            }
            d_hidden[rb].block(pe.start, 0, pe.rows, dh.cols()) += dh;
          }
        }
      }
    }

    if (train) {
      Mat<T> dX = backbone_bwd(out, cache, d_final, d_hidden, p, grads);
      embed_bwd(b, samples, dX, d_skip, p, grads, EmbedGradOptions{opt.und_encoder_grads});
    }
  }

  if (do_ar) rep.ar = ar_nll / rep.ar_tokens;
  if (rep.und_tokens > 0) rep.und = und_nll / rep.und_tokens;
  if (rep.text_tokens > 0) rep.text = text_nll / rep.text_tokens;
  if (do_rf) rep.rf = rf_sum * gen_scale;
  if (do_repa) rep.repa = repa_sum * gen_scale;
  rep.total = rep.ar + rep.rf + opt.repa_weight * rep.repa;
  return rep;
}

template <class T>
double rf_loss(const std::vector<GenSample>& batch, const ModelParams<T>& p, Rng& rng,
               double drop_rate, const std::function<void(Mat<T>&, int)>& velocity_hook) {
  if (batch.empty()) throw Error("rf_loss: empty batch");
  std::vector<WorkItem<T>> items;
  items.reserve(batch.size());
  for (const auto& g : batch) {
    WorkItem<T> it;
    it.task = Task::gen;
    it.gen = &g;
    it.draw = draw_gen<T>(rng, drop_rate);
    items.push_back(std::move(it));
  }
  ObjectiveOptions<T> opt;
  opt.l_max = p.cfg.l_max;
  opt.use_ar = false;
  opt.use_repa = false;
  opt.velocity_hook = velocity_hook;
  return batch_objective(p, items, opt, nullptr).rf;
}

#define UNIFLOW_INSTANTIATE_OBJECTIVE(T)                                                    \
  template Sample<T> build_sample<T>(const WorkItem<T>&);                                   \
  template LossReport batch_objective<T>(const ModelParams<T>&,                             \
                                         const std::vector<WorkItem<T>>&,                   \
                                         const ObjectiveOptions<T>&, ModelParams<T>*);      \
  template double rf_loss<T>(const std::vector<GenSample>&, const ModelParams<T>&, Rng&,    \
                             double, const std::function<void(Mat<T>&, int)>&);

UNIFLOW_INSTANTIATE_OBJECTIVE(float)
UNIFLOW_INSTANTIATE_OBJECTIVE(double)

#undef UNIFLOW_INSTANTIATE_OBJECTIVE

}  // namespace uniflow
