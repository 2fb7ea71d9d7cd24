#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctmos/autodiff.hpp"
#include "ctmos/corpus.hpp"
#include "ctmos/tensor.hpp"

namespace ctmos {

enum class TempVariant { SoftmaxBounded, PowTanh, TanhShift };

struct TemperatureConfig {
  double alpha = 1.0;
  double beta = 0.5;
  TempVariant variant = TempVariant::SoftmaxBounded;
  double lambda = 4.0;  // ablation variants only
  int rank = 0;         // 0 -> use embedding size d

  double tau_lo() const { return alpha / beta; }
  double tau_hi() const { return (1.0 + alpha) / beta; }
};

struct MoSConfig {
  int vocab = 0;
  int emb_dim = 64;                          // d
  std::vector<int> layer_sizes = {128, 128}; // LSTM hidden sizes; back() is h
  int mixtures = 3;                          // M
  double dropout_emb = 0.0;
  double dropout_out = 0.0;
  bool temperature_head = true;  // false -> constant-tau MoS (tau = constant_tau)
  double constant_tau = 1.0;

  int hidden() const { return layer_sizes.back(); }
  int layers() const { return static_cast<int>(layer_sizes.size()); }
};

/// The full parameter set: embedding, stacked LSTM weights, mixture
/// projections {W_m}, mixture-weight matrix W_p and the factorized
/// temperature matrices W_tau1, W_tau2 (when the head is enabled).
struct ModelParams {
  MoSConfig mos;
  TemperatureConfig temp;
  std::map<std::string, Tensor> tensors;

  Tensor& at(const std::string& name) { return tensors.at(name); }
  const Tensor& at(const std::string& name) const { return tensors.at(name); }
  std::size_t total_size() const;
};

/// Uniform [-0.1, 0.1] embeddings, scaled-uniform everything else; each
/// tensor draws from its own named stream of the seed.
ModelParams init_params(const MoSConfig& mos, const TemperatureConfig& temp,
                        std::uint64_t seed);

struct HiddenState {
  std::vector<Tensor> h, c;  // per layer, batch x layer size
};
HiddenState zero_state(const MoSConfig& mos, int batch);

/// Inverted-dropout masks with entries in {0, 1/(1-p)}, sampled outside
/// the graph so gradient checks can freeze them.
struct DropoutMasks {
  Tensor emb;  // n x d
  Tensor out;  // n x h
};
DropoutMasks sample_masks(const MoSConfig& mos, int n, std::mt19937_64& rng);
DropoutMasks ones_masks(const MoSConfig& mos, int n);

/// Parameter tensors registered as graph leaves, by name.
struct ParamIds {
  std::map<std::string, Graph::NodeId> id;
  Graph::NodeId at(const std::string& name) const { return id.at(name); }
};
ParamIds register_params(Graph& g, const ModelParams& p);

struct MosHeadOutputs {
  std::vector<Graph::NodeId> component_logits;  // z_m, each n x V
  Graph::NodeId pi;                             // n x M mixture weights
};

/// Backbone: embedding lookup + stacked LSTM. Rows of the outputs are
/// time-major (row t*B + b). Returned state is detached.
struct BackboneOutputs {
  Graph::NodeId h_raw;      // n x h, pre-dropout final layer
  Graph::NodeId h_dropped;  // n x h, h_raw masked by masks.out
  HiddenState final_state;
};
BackboneOutputs forward_backbone(Graph& g, const ModelParams& p, const ParamIds& ids,
                                 const CorpusBatch& batch, const HiddenState& state,
                                 const DropoutMasks& masks);

MosHeadOutputs mos_head(Graph& g, const ModelParams& p, const ParamIds& ids,
                        Graph::NodeId hidden);

/// tau = (softmax(h W_tau1 W_tau2) + alpha) / beta, element-wise in
/// [alpha/beta, (1+alpha)/beta].
Graph::NodeId contextual_temperature(Graph& g, const ModelParams& p, const ParamIds& ids,
                                     Graph::NodeId hidden);

/// Temperature head under any normalization variant: softmax-bounded,
/// lambda^tanh(mu) with range (1/lambda, lambda), or tanh(mu) + lambda with
/// range (lambda-1, lambda+1).
Graph::NodeId temperature_with_variant(Graph& g, const ModelParams& p, const ParamIds& ids,
                                       Graph::NodeId hidden);

/// P = sum_m pi_m * softmax(z_m ./ tau).
Graph::NodeId ct_mos_distribution(Graph& g, const std::vector<Graph::NodeId>& z,
                                  Graph::NodeId pi, Graph::NodeId tau);
/// Constant-temperature variant: softmax(z_m / c).
Graph::NodeId mos_distribution(Graph& g, const std::vector<Graph::NodeId>& z,
                               Graph::NodeId pi, double constant_tau);

struct ForwardOutputs {
  Graph::NodeId probs = -1;      // n x V
  Graph::NodeId tau = -1;        // n x V; -1 when the head is disabled
  Graph::NodeId h_raw = -1;      // for TAR
  Graph::NodeId h_dropped = -1;  // for AR
  HiddenState final_state;
};
ForwardOutputs forward(Graph& g, const ModelParams& p, const ParamIds& ids,
                       const CorpusBatch& batch, const HiddenState& state,
                       const DropoutMasks& masks);

}  // namespace ctmos
