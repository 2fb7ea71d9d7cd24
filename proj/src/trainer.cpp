#include "ctmos/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ctmos/errors.hpp"
#include "ctmos/rng.hpp"

namespace ctmos {

StepResult forward_backward(const ModelParams& p, const CorpusBatch& batch,
                            const HiddenState& state, const DropoutMasks& masks,
                            const LossWeights& w) {
  Graph g;
  const ParamIds ids = register_params(g, p);
  const ForwardOutputs fwd = forward(g, p, ids, batch, state, masks);
  StepResult r;
  const Graph::NodeId loss = total_loss(g, p, ids, fwd, batch, w, &r.breakdown);
  g.backward(loss);
  for (const auto& [name, id] : ids.id) r.grads.emplace(name, g.grad(id));
  r.final_state = fwd.final_state;
  return r;
}

double global_norm(const std::map<std::string, Tensor>& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.v) sq += x * x;
  return std::sqrt(sq);
}

void clip_and_step(ModelParams& p, std::map<std::string, Tensor>& grads, double lr,
                   double clip) {
  const double norm = global_norm(grads);
  const double scale = norm > clip ? clip / norm : 1.0;
  for (auto& [name, g] : grads) {
    Tensor& t = p.at(name);
    for (std::size_t i = 0; i < g.v.size(); ++i) t.v[i] -= lr * scale * g.v[i];
  }
}

EpochMetrics train_epoch(ModelParams& p, const std::vector<CorpusBatch>& batches,
                         const TrainConfig& cfg, OptimizerState& opt) {
  if (batches.empty()) throw ConfigError("train_epoch: no batches");
  if (cfg.lr <= 0.0 || cfg.clip <= 0.0 || cfg.epochs < 1)
    throw ConfigError("train_epoch: invalid training configuration");
  EpochMetrics m;
  HiddenState state = zero_state(p.mos, batches.front().batch_size);
  for (std::size_t i = 0; i < batches.size(); ++i) {
    auto rng = named_stream(cfg.seed, "dropout.e" + std::to_string(opt.epochs_done) +
                                          ".b" + std::to_string(i));
    const int n = batches[i].batch_size * batches[i].bptt;
    const DropoutMasks masks = sample_masks(p.mos, n, rng);
    StepResult step = forward_backward(p, batches[i], state, masks, cfg.weights);
    if (!std::isfinite(step.breakdown.total)) {
      std::ostringstream os;
      os << "train_epoch: non-finite loss at epoch " << opt.epochs_done << " batch " << i
         << " (ce=" << step.breakdown.ce << " ar=" << step.breakdown.ar
         << " tar=" << step.breakdown.tar << " wd=" << step.breakdown.wd << ")";
      throw ValidationError(os.str());
    }
    clip_and_step(p, step.grads, opt.lr, cfg.clip);
    state = std::move(step.final_state);
    m.mean_total += step.breakdown.total;
    m.mean_ce += step.breakdown.ce;
    m.ce_clamped += step.breakdown.ce_clamped;
  }
  m.mean_total /= static_cast<double>(batches.size());
  m.mean_ce /= static_cast<double>(batches.size());
  ++opt.epochs_done;
  return m;
}

double evaluate_perplexity(const ModelParams& p, const std::vector<CorpusBatch>& batches) {
  if (batches.empty()) throw ConfigError("evaluate_perplexity: no batches");
  HiddenState state = zero_state(p.mos, batches.front().batch_size);
  double nll = 0.0;
  long positions = 0;
  for (const auto& batch : batches) {
    Graph g;
    const ParamIds ids = register_params(g, p);
    const int n = batch.batch_size * batch.bptt;
    const ForwardOutputs fwd = forward(g, p, ids, batch, state, ones_masks(p.mos, n));
    const Graph::NodeId picks =
        g.neg_log_pick(fwd.probs, time_major_targets(batch), kLogFloor);
    for (double x : g.val(picks).v) nll += x;
    positions += n;
    state = fwd.final_state;
  }
  return std::exp(nll / static_cast<double>(positions));
}

TrainRunResult train_model(ModelParams& p, const std::vector<CorpusBatch>& train,
                           const std::vector<CorpusBatch>& valid, const TrainConfig& cfg) {
  TrainRunResult r;
  r.opt.lr = cfg.lr;
  for (int e = 0; e < cfg.epochs; ++e) {
    r.epochs.push_back(train_epoch(p, train, cfg, r.opt));
    const double ppl = valid.empty() ? r.epochs.back().mean_ce
                                     : evaluate_perplexity(p, valid);
    r.valid_ppl.push_back(ppl);
    if (ppl < r.opt.best_valid_ppl) {
      r.opt.best_valid_ppl = ppl;
      r.opt.evals_since_improvement = 0;
    } else if (++r.opt.evals_since_improvement >= cfg.plateau_patience) {
      r.opt.lr *= cfg.lr_decay;
      r.opt.evals_since_improvement = 0;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint format: "CTMS", u32 version, config block, optimizer state,
// epoch metadata, vocabulary digest, shape-prefixed float32 LE tensors.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'T', 'M', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is) {
  T x{};
  is.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!is) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint truncated");
  return x;
}

std::string get_string(std::istream& is) {
  const auto len = get<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "cannot write " + path);
  f.write(kMagic, 4);
  put(f, kVersion);

  const MoSConfig& m = c.params.mos;
  put<std::int32_t>(f, m.vocab);
  put<std::int32_t>(f, m.emb_dim);
  put<std::uint32_t>(f, static_cast<std::uint32_t>(m.layer_sizes.size()));
  for (int hs : m.layer_sizes) put<std::int32_t>(f, hs);
  put<std::int32_t>(f, m.mixtures);
  put<double>(f, m.dropout_emb);
  put<double>(f, m.dropout_out);
  put<std::uint8_t>(f, m.temperature_head ? 1 : 0);
  put<double>(f, m.constant_tau);

  const TemperatureConfig& t = c.params.temp;
  put<double>(f, t.alpha);
  put<double>(f, t.beta);
  put<std::int32_t>(f, static_cast<std::int32_t>(t.variant));
  put<double>(f, t.lambda);
  put<std::int32_t>(f, t.rank);

  put<double>(f, c.opt.lr);
  put<std::int32_t>(f, c.opt.epochs_done);
  put<double>(f, c.opt.best_valid_ppl);
  put<std::int32_t>(f, c.opt.evals_since_improvement);
  put<std::int32_t>(f, c.epoch);
  put<double>(f, c.best_valid_ppl);
  put<std::uint64_t>(f, c.vocab_digest);

  put<std::uint32_t>(f, static_cast<std::uint32_t>(c.params.tensors.size()));
  for (const auto& [name, tensor] : c.params.tensors) {
    put_string(f, name);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(tensor.shape.size()));
    for (int d : tensor.shape) put<std::int32_t>(f, d);
    for (double x : tensor.v) put<float>(f, static_cast<float>(x));
  }
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_digest) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "cannot read " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::BadMagic, "not a checkpoint file");
  const auto version = get<std::uint32_t>(f);
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::Version,
                          "unsupported checkpoint version " + std::to_string(version));

  Checkpoint c;
  c.version = version;
  MoSConfig& m = c.params.mos;
  m.vocab = get<std::int32_t>(f);
  m.emb_dim = get<std::int32_t>(f);
  m.layer_sizes.resize(get<std::uint32_t>(f));
  for (int& hs : m.layer_sizes) hs = get<std::int32_t>(f);
  m.mixtures = get<std::int32_t>(f);
  m.dropout_emb = get<double>(f);
  m.dropout_out = get<double>(f);
  m.temperature_head = get<std::uint8_t>(f) != 0;
  m.constant_tau = get<double>(f);

  TemperatureConfig& t = c.params.temp;
  t.alpha = get<double>(f);
  t.beta = get<double>(f);
  t.variant = static_cast<TempVariant>(get<std::int32_t>(f));
  t.lambda = get<double>(f);
  t.rank = get<std::int32_t>(f);

  c.opt.lr = get<double>(f);
  c.opt.epochs_done = get<std::int32_t>(f);
  c.opt.best_valid_ppl = get<double>(f);
  c.opt.evals_since_improvement = get<std::int32_t>(f);
  c.epoch = get<std::int32_t>(f);
  c.best_valid_ppl = get<double>(f);
  c.vocab_digest = get<std::uint64_t>(f);
  if (expected_digest != 0 && c.vocab_digest != expected_digest)
    throw CheckpointError(CheckpointError::Kind::Digest,
                          "checkpoint was trained on a different vocabulary");

  const auto count = get<std::uint32_t>(f);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(f);
    std::vector<int> shape(get<std::uint32_t>(f));
    for (int& d : shape) d = get<std::int32_t>(f);
    Tensor tensor(shape);
    for (double& x : tensor.v) x = static_cast<double>(get<float>(f));
    c.params.tensors.emplace(name, std::move(tensor));
  }
  return c;
}

}  // namespace ctmos
