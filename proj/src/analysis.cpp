#include "ctmos/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "ctmos/errors.hpp"

namespace ctmos {

namespace {

// Forward over batches with dropout off, collecting the tau matrix rows.
std::vector<Tensor> collect_tau(const ModelParams& p, const std::vector<CorpusBatch>& batches) {
  if (!p.mos.temperature_head)
    throw ConfigError("temperature analysis requires a model with a temperature head");
  std::vector<Tensor> out;
  HiddenState state = zero_state(p.mos, batches.front().batch_size);
  for (const auto& batch : batches) {
    Graph g;
    const ParamIds ids = register_params(g, p);
    const int n = batch.batch_size * batch.bptt;
    const ForwardOutputs fwd = forward(g, p, ids, batch, state, ones_masks(p.mos, n));
    out.push_back(g.val(fwd.tau));
    state = fwd.final_state;
  }
  return out;
}

CorpusBatch sentence_batch(const std::vector<int>& sentence) {
  CorpusBatch b;
  b.batch_size = 1;
  b.bptt = static_cast<int>(sentence.size());
  b.inputs = sentence;
  b.targets.assign(sentence.size(), 0);
  b.positions.resize(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i) b.positions[i] = static_cast<int>(i);
  return b;
}

std::vector<TopkEntry> topk_row(const Tensor& probs, int row, int k) {
  const int v = probs.cols();
  std::vector<int> order(v);
  for (int i = 0; i < v; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs.at(row, a) != probs.at(row, b)) return probs.at(row, a) > probs.at(row, b);
    return a < b;
  });
  std::vector<TopkEntry> out;
  for (int i = 0; i < std::min(k, v); ++i)
    out.push_back({order[i], probs.at(row, order[i])});
  return out;
}

}  // namespace

std::vector<TrajectoryRecord> temperature_trajectories(
    const std::vector<Checkpoint>& series, const std::vector<CorpusBatch>& probe,
    const std::vector<int>& token_set) {
  if (series.empty() || token_set.empty())
    throw ConfigError("temperature_trajectories: empty checkpoint series or token set");
  for (const auto& c : series)
    if (c.vocab_digest != series.front().vocab_digest)
      throw ConfigError("temperature_trajectories: checkpoints disagree on vocabulary");
  std::vector<TrajectoryRecord> recs;
  for (const auto& c : series) {
    const std::vector<Tensor> taus = collect_tau(c.params, probe);
    for (int tok : token_set) {
      double sum = 0.0;
      long n = 0;
      for (const auto& t : taus) {
        for (int r = 0; r < t.rows(); ++r) sum += t.at(r, tok);
        n += t.rows();
      }
      recs.push_back({tok, c.epoch, sum / static_cast<double>(n)});
    }
  }
  return recs;
}

std::vector<double> ModelTauProvider::sentence_tau(const std::vector<int>& sentence) {
  Graph g;
  const ParamIds ids = register_params(g, p_);
  const CorpusBatch batch = sentence_batch(sentence);
  const HiddenState state = zero_state(p_.mos, 1);
  const ForwardOutputs fwd =
      forward(g, p_, ids, batch, state, ones_masks(p_.mos, batch.bptt));
  const Tensor& tau = g.val(fwd.tau);
  std::vector<double> out(sentence.size());
  for (int r = 0; r < tau.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < tau.cols(); ++c) s += tau.at(r, c);
    out[r] = s / tau.cols();
  }
  return out;
}

std::vector<PositionStats> position_statistics(TauProvider& provider,
                                               const std::vector<int>& stream, int eos_id,
                                               int min_len, int max_len) {
  std::vector<std::vector<double>> slot_values(15);
  std::vector<int> sentence;
  auto flush = [&]() {
    const int len = static_cast<int>(sentence.size());
    if (len > min_len && len < max_len) {
      const std::vector<double> tau = provider.sentence_tau(sentence);
      const int mid = (len - 5) / 2;
      const int anchors[3] = {0, mid, len - 5};
      for (int seg = 0; seg < 3; ++seg)
        for (int j = 0; j < 5; ++j) slot_values[seg * 5 + j].push_back(tau[anchors[seg] + j]);
    }
    sentence.clear();
  };
  for (int id : stream) {
    if (id == eos_id) flush();
    else sentence.push_back(id);
  }
  flush();

  std::vector<PositionStats> out;
  for (int s = 0; s < 15; ++s) {
    const auto& vals = slot_values[s];
    if (vals.empty()) continue;  // caller warns; empty result is not an error
    PositionStats ps;
    ps.slot = s;
    ps.count = static_cast<long>(vals.size());
    double sum = 0.0;
    for (double x : vals) sum += x;
    ps.mean = sum / static_cast<double>(vals.size());
    if (vals.size() > 1) {
      double sq = 0.0;
      for (double x : vals) sq += (x - ps.mean) * (x - ps.mean);
      const double sd = std::sqrt(sq / static_cast<double>(vals.size() - 1));
      ps.half_width = 1.959963985 * sd / std::sqrt(static_cast<double>(vals.size()));
    }
    out.push_back(ps);
  }
  return out;
}

std::vector<CaseStudyRecord> case_study_topk(const ModelParams& a, const ModelParams& b,
                                             const std::vector<int>& context, int k) {
  if (k < 1) throw ConfigError("case_study_topk: k must be >= 1");
  if (context.empty()) throw ConfigError("case_study_topk: empty context");
  const CorpusBatch batch = sentence_batch(context);
  auto probs_of = [&](const ModelParams& p) {
    Graph g;
    const ParamIds ids = register_params(g, p);
    const ForwardOutputs fwd = forward(g, p, ids, batch, zero_state(p.mos, 1),
                                       ones_masks(p.mos, batch.bptt));
    return std::pair<Tensor, Tensor>(g.val(fwd.probs),
                                     fwd.tau >= 0 ? g.val(fwd.tau) : Tensor());
  };
  const auto [pa, tau_a] = probs_of(a);
  const auto [pb, tau_b] = probs_of(b);

  std::vector<CaseStudyRecord> recs;
  for (std::size_t t = 0; t < context.size(); ++t) {
    CaseStudyRecord r;
    r.position = static_cast<int>(t);
    r.input_token = context[t];
    if (t + 1 < context.size()) r.target_token = context[t + 1];
    r.top_a = topk_row(pa, static_cast<int>(t), k);
    r.top_b = topk_row(pb, static_cast<int>(t), k);
    if (tau_a.numel() > 0) {
      std::set<int> shown;
      for (const auto& e : r.top_a) shown.insert(e.token);
      for (const auto& e : r.top_b) shown.insert(e.token);
      for (int tok : shown) r.tau_a.push_back({tok, tau_a.at(static_cast<int>(t), tok)});
    }
    recs.push_back(std::move(r));
  }
  return recs;
}

std::vector<AblationRow> run_constant_tau_ablation(const std::vector<double>& taus,
                                                   const AblationRecipe& recipe) {
  for (double t : taus)
    if (t <= 0.0) throw ConfigError("run_constant_tau_ablation: non-positive tau");
  const auto train_b = make_batches(recipe.train_stream, recipe.train.batch_size,
                                    recipe.train.bptt, recipe.eos_id);
  const auto valid_b = make_batches(recipe.valid_stream, recipe.train.batch_size,
                                    recipe.train.bptt, recipe.eos_id);
  const auto test_b = make_batches(recipe.test_stream, recipe.train.batch_size,
                                   recipe.train.bptt, recipe.eos_id);

  std::vector<AblationRow> rows;
  auto run = [&](MoSConfig mos, const std::string& label) {
    ModelParams p = init_params(mos, recipe.temp, recipe.train.seed);
    const TrainRunResult res = train_model(p, train_b, valid_b, recipe.train);
    AblationRow row;
    row.label = label;
    row.valid_ppl = evaluate_perplexity(p, valid_b);
    row.test_ppl = evaluate_perplexity(p, test_b);
    for (const auto& e : res.epochs) row.train_total_trajectory.push_back(e.mean_total);
    rows.push_back(std::move(row));
  };

  for (double t : taus) {
    MoSConfig mos = recipe.mos;
    mos.temperature_head = false;
    mos.constant_tau = t;
    run(mos, "MoS(tau=" + std::to_string(t) + ")");
  }
  MoSConfig ct = recipe.mos;
  ct.temperature_head = true;
  run(ct, "CT-MoS");
  return rows;
}

Tensor normalize_temperature_variant(const Tensor& mu, TempVariant variant, double lambda,
                                     double alpha, double beta) {
  Tensor out = mu;
  switch (variant) {
    case TempVariant::PowTanh:
      if (lambda <= 1.0) throw ConfigError("pow-tanh variant requires lambda > 1");
      for (double& x : out.v) x = std::pow(lambda, std::tanh(x));
      return out;
    case TempVariant::TanhShift:
      if (lambda <= 1.0) throw ConfigError("tanh-shift variant requires lambda > 1");
      for (double& x : out.v) x = std::tanh(x) + lambda;
      return out;
    case TempVariant::SoftmaxBounded: {
      if (beta <= 0.0) throw ConfigError("softmax-bounded variant requires beta > 0");
      const int len = mu.shape.back();
      const std::size_t slices = mu.numel() / len;
      for (std::size_t s = 0; s < slices; ++s) {
        double* row = &out.v[s * len];
        double mx = row[0];
        for (int i = 1; i < len; ++i) mx = std::max(mx, row[i]);
        double z = 0.0;
        for (int i = 0; i < len; ++i) {
          row[i] = std::exp(row[i] - mx);
          z += row[i];
        }
        for (int i = 0; i < len; ++i) row[i] = (row[i] / z + alpha) / beta;
      }
      return out;
    }
  }
  throw ConfigError("unknown temperature variant");
}

void write_trajectories_tsv(const std::vector<TrajectoryRecord>& recs,
                            const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f.precision(12);
  f << "token\tepoch\ttemperature\n";
  for (const auto& r : recs) f << r.token << '\t' << r.epoch << '\t' << r.temperature << '\n';
}

void write_position_stats_tsv(const std::vector<PositionStats>& stats,
                              const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f.precision(12);
  f << "slot\tmean\thalf_width\tcount\n";
  for (const auto& s : stats)
    f << s.slot << '\t' << s.mean << '\t' << s.half_width << '\t' << s.count << '\n';
}

void write_case_study_tsv(const std::vector<CaseStudyRecord>& recs, const Vocabulary& vocab,
                          const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f.precision(6);
  f << "position\tinput\ttarget\ttop_a\ttop_b\ttau_a\n";
  auto fmt = [&](const std::vector<TopkEntry>& es) {
    std::string s;
    for (const auto& e : es) {
      if (!s.empty()) s += ' ';
      s += vocab.decode(e.token) + ":" + std::to_string(e.prob);
    }
    return s;
  };
  for (const auto& r : recs) {
    f << r.position << '\t' << vocab.decode(r.input_token) << '\t'
      << (r.target_token >= 0 ? vocab.decode(r.target_token) : "-") << '\t' << fmt(r.top_a)
      << '\t' << fmt(r.top_b) << '\t' << fmt(r.tau_a) << '\n';
  }
}

void write_ablation_tsv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f.precision(12);
  f << "model\tvalid_ppl\ttest_ppl\n";
  for (const auto& r : rows) f << r.label << '\t' << r.valid_ppl << '\t' << r.test_ppl << '\n';
}

}  // namespace ctmos
