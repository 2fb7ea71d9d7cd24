#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ctmos/corpus.hpp"
#include "ctmos/model.hpp"
#include "ctmos/objective.hpp"

namespace ctmos {

struct TrainConfig {
  double lr = 5.0;
  double clip = 0.25;
  int epochs = 10;
  int batch_size = 16;
  int bptt = 16;
  std::uint64_t seed = 1;
  LossWeights weights;
  double lr_decay = 0.5;     // applied after plateau_patience evals without improvement
  int plateau_patience = 2;
};

struct OptimizerState {
  double lr = 5.0;
  int epochs_done = 0;
  double best_valid_ppl = std::numeric_limits<double>::infinity();
  int evals_since_improvement = 0;
};

struct EpochMetrics {
  double mean_total = 0.0;
  double mean_ce = 0.0;
  long ce_clamped = 0;
};

/// One full forward/backward over a batch; gradients keyed by parameter name.
struct StepResult {
  std::map<std::string, Tensor> grads;
  LossBreakdown breakdown;
  HiddenState final_state;
};
StepResult forward_backward(const ModelParams& p, const CorpusBatch& batch,
                            const HiddenState& state, const DropoutMasks& masks,
                            const LossWeights& w);

double global_norm(const std::map<std::string, Tensor>& grads);
/// SGD step with global-norm clipping; clipping rescales, never reorients.
void clip_and_step(ModelParams& p, std::map<std::string, Tensor>& grads, double lr,
                   double clip);

/// Forward, total loss, backward, clip, SGD step per batch. Hidden state is
/// detached between batches. Aborts with a diagnostic on non-finite loss.
EpochMetrics train_epoch(ModelParams& p, const std::vector<CorpusBatch>& batches,
                         const TrainConfig& cfg, OptimizerState& opt);

/// exp(mean ce) over all target positions, dropout disabled, hidden state
/// carried across batches. Never mutates parameters.
double evaluate_perplexity(const ModelParams& p, const std::vector<CorpusBatch>& batches);

struct TrainRunResult {
  std::vector<EpochMetrics> epochs;
  std::vector<double> valid_ppl;  // one entry per epoch
  OptimizerState opt;
};

/// Full training run: per epoch train_epoch + validation perplexity, with
/// x lr_decay on plateau (plateau_patience evals without improvement).
TrainRunResult train_model(ModelParams& p, const std::vector<CorpusBatch>& train,
                           const std::vector<CorpusBatch>& valid, const TrainConfig& cfg);

struct Checkpoint {
  std::uint32_t version = 1;
  ModelParams params;  // serialized as 32-bit little-endian values
  OptimizerState opt;
  int epoch = 0;
  double best_valid_ppl = std::numeric_limits<double>::infinity();
  std::uint64_t vocab_digest = 0;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
/// Throws CheckpointError with a distinct kind on bad magic, version
/// mismatch, truncation, or (when expected_digest is nonzero) digest mismatch.
Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_digest = 0);

}  // namespace ctmos
