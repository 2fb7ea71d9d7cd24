#pragma once

#include <string>
#include <vector>

#include "ctmos/corpus.hpp"
#include "ctmos/model.hpp"
#include "ctmos/trainer.hpp"

namespace ctmos {

struct TrajectoryRecord {
  int token = 0;
  int epoch = 0;
  double temperature = 0.0;  // token's tau entry averaged over probe positions
};

/// One record per (token, checkpoint). Checkpoints must share a vocabulary
/// digest; temperatures are measured on a fixed probe batch set so the
/// trajectory reflects parameters, not sampling.
std::vector<TrajectoryRecord> temperature_trajectories(
    const std::vector<Checkpoint>& series, const std::vector<CorpusBatch>& probe,
    const std::vector<int>& token_set);

struct PositionStats {
  int slot = 0;  // 0..14 normalized position
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation half interval
  long count = 0;
};

/// Per-position mean temperature source; per sentence returns one scalar
/// per word (the mean of the tau vector at that position).
class TauProvider {
 public:
  virtual ~TauProvider() = default;
  virtual std::vector<double> sentence_tau(const std::vector<int>& sentence) = 0;
};

class ModelTauProvider : public TauProvider {
 public:
  explicit ModelTauProvider(const ModelParams& p) : p_(p) {}
  std::vector<double> sentence_tau(const std::vector<int>& sentence) override;

 private:
  const ModelParams& p_;
};

/// Sentences with min_len < length < max_len, reduced to 15 slots: first 5
/// words, middle 5 anchored at floor((L-5)/2), last 5 words.
std::vector<PositionStats> position_statistics(TauProvider& provider,
                                               const std::vector<int>& stream, int eos_id,
                                               int min_len = 15, int max_len = 25);

struct TopkEntry {
  int token = 0;
  double prob = 0.0;
};

struct CaseStudyRecord {
  int position = 0;
  int input_token = 0;
  int target_token = -1;
  std::vector<TopkEntry> top_a;          // non-increasing probabilities
  std::vector<TopkEntry> top_b;
  std::vector<TopkEntry> tau_a;          // model A's tau for the union of shown tokens
};

/// Side-by-side next-token predictions of two models over a shared context.
std::vector<CaseStudyRecord> case_study_topk(const ModelParams& a, const ModelParams& b,
                                             const std::vector<int>& context, int k);

struct AblationRecipe {
  MoSConfig mos;  // temperature_head flag is overridden per run
  TemperatureConfig temp;
  TrainConfig train;
  std::vector<int> train_stream, valid_stream, test_stream;
  int eos_id = 0;
};

struct AblationRow {
  std::string label;
  double valid_ppl = 0.0;
  double test_ppl = 0.0;
  std::vector<double> train_total_trajectory;  // per-epoch mean total loss
};

/// One constant-temperature MoS run per tau value plus a CT run, all under
/// the shared seed and recipe.
std::vector<AblationRow> run_constant_tau_ablation(const std::vector<double>& taus,
                                                   const AblationRecipe& recipe);

/// Closed-form evaluation of the three normalization methods on raw
/// temperature logits. Softmax variant normalizes over the last axis.
Tensor normalize_temperature_variant(const Tensor& mu, TempVariant variant, double lambda,
                                     double alpha, double beta);

void write_trajectories_tsv(const std::vector<TrajectoryRecord>& recs,
                            const std::string& path);
void write_position_stats_tsv(const std::vector<PositionStats>& stats,
                              const std::string& path);
void write_case_study_tsv(const std::vector<CaseStudyRecord>& recs, const Vocabulary& vocab,
                          const std::string& path);
void write_ablation_tsv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace ctmos
