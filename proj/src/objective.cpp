#include "ctmos/objective.hpp"

namespace ctmos {

std::vector<int> time_major_targets(const CorpusBatch& batch) {
  std::vector<int> out(static_cast<std::size_t>(batch.batch_size) * batch.bptt);
  for (int t = 0; t < batch.bptt; ++t)
    for (int b = 0; b < batch.batch_size; ++b) out[t * batch.batch_size + b] = batch.target(b, t);
  return out;
}

Graph::NodeId cross_entropy(Graph& g, Graph::NodeId probs, const std::vector<int>& targets,
                            long* clamp_count) {
  return g.mean(g.neg_log_pick(probs, targets, kLogFloor, clamp_count));
}

Graph::NodeId total_loss(Graph& g, const ModelParams& p, const ParamIds& ids,
                         const ForwardOutputs& fwd, const CorpusBatch& batch,
                         const LossWeights& w, LossBreakdown* breakdown) {
  const int B = batch.batch_size, T = batch.bptt;
  long clamped = 0;
  const Graph::NodeId ce = cross_entropy(g, fwd.probs, time_major_targets(batch), &clamped);

  Graph::NodeId scaled_ce = ce;
  double ls_value = 1.0;
  if (w.ls_enabled) {
    if (fwd.tau >= 0) {
      const Graph::NodeId ls = g.mean(fwd.tau);
      ls_value = g.val(ls).v[0];
      scaled_ce = w.ls_detached ? g.scale(ce, ls_value) : g.mul(ce, ls);
    } else {
      ls_value = p.mos.constant_tau;
      scaled_ce = g.scale(ce, ls_value);
    }
  }

  const Graph::NodeId ar = g.mean_sq(fwd.h_dropped);
  Graph::NodeId tar;
  if (T > 1) {
    const Graph::NodeId before = g.slice_rows(fwd.h_raw, 0, (T - 1) * B);
    const Graph::NodeId after = g.slice_rows(fwd.h_raw, B, T * B);
    tar = g.mean_sq(g.sub(before, after));
  } else {
    tar = g.leaf(Tensor::scalar(0.0));
  }

  Graph::NodeId wd = -1;
  for (const auto& [name, id] : ids.id) {
    const Graph::NodeId sq = g.sum_sq(id);
    wd = wd < 0 ? sq : g.add(wd, sq);
  }

  Graph::NodeId total = g.add(scaled_ce, g.scale(ar, w.gamma_ar));
  total = g.add(total, g.scale(tar, w.gamma_tar));
  total = g.add(total, g.scale(wd, w.gamma_wd));

  if (breakdown != nullptr) {
    breakdown->total = g.val(total).v[0];
    breakdown->ce = g.val(ce).v[0];
    breakdown->ls_factor = w.ls_enabled ? ls_value : 1.0;
    breakdown->ar = g.val(ar).v[0];
    breakdown->tar = g.val(tar).v[0];
    breakdown->wd = g.val(wd).v[0];
    breakdown->ce_clamped = clamped;
  }
  return total;
}

}  // namespace ctmos
