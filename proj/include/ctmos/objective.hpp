#pragma once

#include <vector>

#include "ctmos/autodiff.hpp"
#include "ctmos/model.hpp"

namespace ctmos {

struct LossWeights {
  double gamma_ar = 2.0;
  double gamma_tar = 1.0;
  double gamma_wd = 1.2e-6;
  bool ls_enabled = true;
  // When set (default) the LS factor enters as a per-step constant, so
  // gradients do not flow through it.
  bool ls_detached = true;
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double ls_factor = 1.0;
  double ar = 0.0;
  double tar = 0.0;
  double wd = 0.0;
  long ce_clamped = 0;  // positions whose target probability hit the log floor
};

inline constexpr double kLogFloor = 1e-12;

/// Targets of a batch in the row order the model emits (row t*B + b).
std::vector<int> time_major_targets(const CorpusBatch& batch);

/// Mean over positions of -ln P[target], log floored at kLogFloor.
Graph::NodeId cross_entropy(Graph& g, Graph::NodeId probs, const std::vector<int>& targets,
                            long* clamp_count = nullptr);

/// LS * CE + gamma1 * AR + gamma2 * TAR + gamma3 * WD. AR is the mean
/// square of the masked final-layer output, TAR the mean square of its
/// difference between consecutive timesteps, WD the sum of squares of
/// every parameter tensor.
Graph::NodeId total_loss(Graph& g, const ModelParams& p, const ParamIds& ids,
                         const ForwardOutputs& fwd, const CorpusBatch& batch,
                         const LossWeights& w, LossBreakdown* breakdown = nullptr);

}  // namespace ctmos
