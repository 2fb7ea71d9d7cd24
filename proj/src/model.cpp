#include "ctmos/model.hpp"

#include <cmath>

#include "ctmos/errors.hpp"
#include "ctmos/rng.hpp"

namespace ctmos {

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.numel();
  return n;
}

ModelParams init_params(const MoSConfig& mos, const TemperatureConfig& temp,
                        std::uint64_t seed) {
  if (mos.vocab < 1 || mos.emb_dim < 1 || mos.mixtures < 1 || mos.layer_sizes.empty())
    throw ConfigError("init_params: invalid model configuration");
  ModelParams p;
  p.mos = mos;
  p.temp = temp;
  if (p.temp.rank <= 0) p.temp.rank = mos.emb_dim;

  auto uni = [&](const std::string& name, std::vector<int> shape, double bound) {
    auto rng = named_stream(seed, "init." + name);
    p.tensors.emplace(name, Tensor::uniform(std::move(shape), -bound, bound, rng));
  };

  uni("emb", {mos.vocab, mos.emb_dim}, 0.1);
  int in = mos.emb_dim;
  for (int l = 0; l < mos.layers(); ++l) {
    const int hs = mos.layer_sizes[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(hs));
    const std::string pre = "lstm" + std::to_string(l) + ".";
    uni(pre + "Wx", {in, 4 * hs}, bound);
    uni(pre + "Wh", {hs, 4 * hs}, bound);
    p.tensors.emplace(pre + "b", Tensor({1, 4 * hs}, 0.0));
    in = hs;
  }
  const int h = mos.hidden(), d = mos.emb_dim, v = mos.vocab;
  uni("proj_g", {h, d}, 1.0 / std::sqrt(static_cast<double>(h)));
  for (int m = 0; m < mos.mixtures; ++m)
    uni("W_m" + std::to_string(m), {d, v}, 1.0 / std::sqrt(static_cast<double>(d)));
  uni("W_p", {h, mos.mixtures}, 1.0 / std::sqrt(static_cast<double>(h)));
  if (mos.temperature_head) {
    const int r = p.temp.rank;
    uni("W_tau1", {h, r}, 1.0 / std::sqrt(static_cast<double>(h)));
    uni("W_tau2", {r, v}, 1.0 / std::sqrt(static_cast<double>(r)));
  }
  return p;
}

HiddenState zero_state(const MoSConfig& mos, int batch) {
  HiddenState s;
  for (int hs : mos.layer_sizes) {
    s.h.emplace_back(std::vector<int>{batch, hs}, 0.0);
    s.c.emplace_back(std::vector<int>{batch, hs}, 0.0);
  }
  return s;
}

DropoutMasks sample_masks(const MoSConfig& mos, int n, std::mt19937_64& rng) {
  DropoutMasks m;
  auto draw = [&](double p, int cols) {
    Tensor t({n, cols}, 1.0);
    if (p > 0.0) {
      std::bernoulli_distribution keep(1.0 - p);
      const double scale = 1.0 / (1.0 - p);
      for (double& x : t.v) x = keep(rng) ? scale : 0.0;
    }
    return t;
  };
  m.emb = draw(mos.dropout_emb, mos.emb_dim);
  m.out = draw(mos.dropout_out, mos.hidden());
  return m;
}

DropoutMasks ones_masks(const MoSConfig& mos, int n) {
  DropoutMasks m;
  m.emb = Tensor({n, mos.emb_dim}, 1.0);
  m.out = Tensor({n, mos.hidden()}, 1.0);
  return m;
}

ParamIds register_params(Graph& g, const ModelParams& p) {
  ParamIds ids;
  for (const auto& [name, t] : p.tensors) ids.id.emplace(name, g.leaf(t));
  return ids;
}

BackboneOutputs forward_backbone(Graph& g, const ModelParams& p, const ParamIds& ids,
                                 const CorpusBatch& batch, const HiddenState& state,
                                 const DropoutMasks& masks) {
  const int B = batch.batch_size, T = batch.bptt;
  const int n = B * T;
  if (static_cast<int>(state.h.size()) != p.mos.layers())
    throw ShapeError("forward_backbone: hidden state layer count mismatch");
  for (int l = 0; l < p.mos.layers(); ++l)
    if (state.h[l].rows() != B || state.h[l].cols() != p.mos.layer_sizes[l])
      throw ShapeError("forward_backbone: hidden state shape mismatch");

  // Time-major token order: row t*B + b.
  std::vector<int> ids_tm(n);
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) ids_tm[t * B + b] = batch.input(b, t);

  Graph::NodeId x = g.gather_rows(ids.at("emb"), ids_tm);
  x = g.mul(x, g.leaf(masks.emb));

  BackboneOutputs out;
  Graph::NodeId layer_in = x;
  for (int l = 0; l < p.mos.layers(); ++l) {
    const int hs = p.mos.layer_sizes[l];
    const std::string pre = "lstm" + std::to_string(l) + ".";
    const Graph::NodeId wx = ids.at(pre + "Wx");
    const Graph::NodeId wh = ids.at(pre + "Wh");
    const Graph::NodeId bias = ids.at(pre + "b");
    Graph::NodeId h = g.leaf(state.h[l]);
    Graph::NodeId c = g.leaf(state.c[l]);
    std::vector<Graph::NodeId> steps;
    steps.reserve(T);
    for (int t = 0; t < T; ++t) {
      const Graph::NodeId xt = g.slice_rows(layer_in, t * B, (t + 1) * B);
      Graph::NodeId gates = g.add_row(g.add(g.matmul(xt, wx), g.matmul(h, wh)), bias);
      const Graph::NodeId gi = g.sigmoid_op(g.slice_cols(gates, 0, hs));
      const Graph::NodeId gf = g.sigmoid_op(g.slice_cols(gates, hs, 2 * hs));
      const Graph::NodeId go = g.sigmoid_op(g.slice_cols(gates, 2 * hs, 3 * hs));
      const Graph::NodeId gu = g.tanh_op(g.slice_cols(gates, 3 * hs, 4 * hs));
      c = g.add(g.mul(gf, c), g.mul(gi, gu));
      h = g.mul(go, g.tanh_op(c));
      steps.push_back(h);
    }
    layer_in = g.concat_rows(steps);
    out.final_state.h.push_back(g.val(h));  // detached copies
    out.final_state.c.push_back(g.val(c));
  }
  out.h_raw = layer_in;
  out.h_dropped = g.mul(out.h_raw, g.leaf(masks.out));
  return out;
}

MosHeadOutputs mos_head(Graph& g, const ModelParams& p, const ParamIds& ids,
                        Graph::NodeId hidden) {
  MosHeadOutputs out;
  const Graph::NodeId gproj = g.matmul(hidden, ids.at("proj_g"));
  for (int m = 0; m < p.mos.mixtures; ++m)
    out.component_logits.push_back(g.matmul(gproj, ids.at("W_m" + std::to_string(m))));
  out.pi = g.softmax(g.matmul(hidden, ids.at("W_p")), 1);
  return out;
}

Graph::NodeId contextual_temperature(Graph& g, const ModelParams& p, const ParamIds& ids,
                                     Graph::NodeId hidden) {
  if (p.temp.beta <= 0.0) throw ConfigError("contextual_temperature: beta must be positive");
  if (p.temp.variant != TempVariant::SoftmaxBounded)
    throw ConfigError("contextual_temperature: only the softmax-bounded variant is learned");
  const Graph::NodeId mu =
      g.matmul(g.matmul(hidden, ids.at("W_tau1")), ids.at("W_tau2"));
  return g.add_const(g.scale(g.softmax(mu, 1), 1.0 / p.temp.beta),
                     p.temp.alpha / p.temp.beta);
}

Graph::NodeId temperature_with_variant(Graph& g, const ModelParams& p, const ParamIds& ids,
                                       Graph::NodeId hidden) {
  if (p.temp.variant == TempVariant::SoftmaxBounded)
    return contextual_temperature(g, p, ids, hidden);
  if (p.temp.lambda <= 1.0)
    throw ConfigError("temperature variant requires lambda > 1");
  const Graph::NodeId mu =
      g.matmul(g.matmul(hidden, ids.at("W_tau1")), ids.at("W_tau2"));
  if (p.temp.variant == TempVariant::PowTanh)
    return g.exp_op(g.scale(g.tanh_op(mu), std::log(p.temp.lambda)));
  return g.add_const(g.tanh_op(mu), p.temp.lambda);  // TanhShift
}

Graph::NodeId ct_mos_distribution(Graph& g, const std::vector<Graph::NodeId>& z,
                                  Graph::NodeId pi, Graph::NodeId tau) {
  if (z.empty()) throw ShapeError("ct_mos_distribution: no components");
  for (double t : g.val(tau).v)
    if (t <= 0.0) throw ValidationError("ct_mos_distribution: non-positive temperature");
  Graph::NodeId probs = -1;
  for (std::size_t m = 0; m < z.size(); ++m) {
    const Graph::NodeId sm = g.softmax(g.div(z[m], tau), 1);
    const Graph::NodeId weighted =
        g.scale_rows(sm, g.slice_cols(pi, static_cast<int>(m), static_cast<int>(m) + 1));
    probs = m == 0 ? weighted : g.add(probs, weighted);
  }
  return probs;
}

Graph::NodeId mos_distribution(Graph& g, const std::vector<Graph::NodeId>& z,
                               Graph::NodeId pi, double constant_tau) {
  if (z.empty()) throw ShapeError("mos_distribution: no components");
  if (constant_tau <= 0.0) throw ConfigError("mos_distribution: non-positive temperature");
  Graph::NodeId probs = -1;
  for (std::size_t m = 0; m < z.size(); ++m) {
    Graph::NodeId logits = z[m];
    if (constant_tau != 1.0) logits = g.scale(logits, 1.0 / constant_tau);
    const Graph::NodeId sm = g.softmax(logits, 1);
    const Graph::NodeId weighted =
        g.scale_rows(sm, g.slice_cols(pi, static_cast<int>(m), static_cast<int>(m) + 1));
    probs = m == 0 ? weighted : g.add(probs, weighted);
  }
  return probs;
}

ForwardOutputs forward(Graph& g, const ModelParams& p, const ParamIds& ids,
                       const CorpusBatch& batch, const HiddenState& state,
                       const DropoutMasks& masks) {
  ForwardOutputs out;
  BackboneOutputs bb = forward_backbone(g, p, ids, batch, state, masks);
  out.h_raw = bb.h_raw;
  out.h_dropped = bb.h_dropped;
  out.final_state = std::move(bb.final_state);
  MosHeadOutputs head = mos_head(g, p, ids, out.h_dropped);
  if (p.mos.temperature_head) {
    out.tau = temperature_with_variant(g, p, ids, out.h_dropped);
    out.probs = ct_mos_distribution(g, head.component_logits, head.pi, out.tau);
  } else {
    out.probs = mos_distribution(g, head.component_logits, head.pi, p.mos.constant_tau);
  }
  return out;
}

}  // namespace ctmos
