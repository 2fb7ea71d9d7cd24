// Command-line front end: preprocessing, training, evaluation, the
// closed-form gradient surfaces, ablations and the temperature analyses.
// Every run writes a JSON manifest of its resolved configuration before
// doing any work, so any output can be regenerated from the manifest alone.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ctmos/analysis.hpp"
#include "ctmos/corpus.hpp"
#include "ctmos/errors.hpp"
#include "ctmos/oracle.hpp"
#include "ctmos/rng.hpp"
#include "ctmos/trainer.hpp"

using nlohmann::json;
using namespace ctmos;

namespace {

struct ModelFlags {
  int emb = 64;
  std::string layers = "128,128";
  int mixtures = 3;
  double dropout_emb = 0.0;
  double dropout_out = 0.0;
  bool no_temperature = false;
  double constant_tau = 1.0;
  double alpha = 1.0;
  double beta = 0.5;
  std::string variant = "softmax";
  double lambda = 4.0;
  int rank = 0;
};

struct TrainFlags {
  double lr = 5.0;
  double clip = 0.25;
  int epochs = 10;
  int batch = 16;
  int bptt = 16;
  std::uint64_t seed = 1;
  double gamma_ar = 2.0;
  double gamma_tar = 1.0;
  double gamma_wd = 1.2e-6;
};

std::vector<int> parse_layer_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ConfigError("empty layer list");
  for (int h : out)
    if (h < 1) throw ConfigError("layer sizes must be positive");
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

std::vector<std::string> parse_string_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

TempVariant variant_from_name(const std::string& name) {
  if (name == "softmax") return TempVariant::SoftmaxBounded;
  if (name == "pow-tanh") return TempVariant::PowTanh;
  if (name == "tanh-shift") return TempVariant::TanhShift;
  throw ConfigError("unknown temperature variant: " + name);
}

MoSConfig mos_from_flags(const ModelFlags& mf, int vocab) {
  MoSConfig mos;
  mos.vocab = vocab;
  mos.emb_dim = mf.emb;
  mos.layer_sizes = parse_layer_list(mf.layers);
  mos.mixtures = mf.mixtures;
  mos.dropout_emb = mf.dropout_emb;
  mos.dropout_out = mf.dropout_out;
  mos.temperature_head = !mf.no_temperature;
  mos.constant_tau = mf.constant_tau;
  return mos;
}

TemperatureConfig temp_from_flags(const ModelFlags& mf) {
  TemperatureConfig t;
  t.alpha = mf.alpha;
  t.beta = mf.beta;
  t.variant = variant_from_name(mf.variant);
  t.lambda = mf.lambda;
  t.rank = mf.rank;
  return t;
}

TrainConfig train_from_flags(const TrainFlags& tf) {
  TrainConfig cfg;
  cfg.lr = tf.lr;
  cfg.clip = tf.clip;
  cfg.epochs = tf.epochs;
  cfg.batch_size = tf.batch;
  cfg.bptt = tf.bptt;
  cfg.seed = tf.seed;
  cfg.weights.gamma_ar = tf.gamma_ar;
  cfg.weights.gamma_tar = tf.gamma_tar;
  cfg.weights.gamma_wd = tf.gamma_wd;
  return cfg;
}

void add_model_flags(CLI::App* cmd, ModelFlags& mf) {
  cmd->add_option("--emb", mf.emb, "embedding size");
  cmd->add_option("--layers", mf.layers, "comma-separated LSTM layer sizes");
  cmd->add_option("--mixtures", mf.mixtures, "number of mixture components");
  cmd->add_option("--dropout-emb", mf.dropout_emb, "embedding dropout rate");
  cmd->add_option("--dropout-out", mf.dropout_out, "output dropout rate");
  cmd->add_flag("--no-temperature", mf.no_temperature,
                "disable the temperature head (constant-temperature baseline)");
  cmd->add_option("--constant-tau", mf.constant_tau,
                  "temperature used when the head is disabled");
  cmd->add_option("--alpha", mf.alpha, "temperature shift");
  cmd->add_option("--beta", mf.beta, "temperature scale");
  cmd->add_option("--variant", mf.variant,
                  "temperature normalization: softmax | pow-tanh | tanh-shift");
  cmd->add_option("--lambda", mf.lambda, "range parameter for the ablation variants");
  cmd->add_option("--rank", mf.rank, "temperature factorization rank (0 = embedding size)");
}

void add_train_flags(CLI::App* cmd, TrainFlags& tf) {
  cmd->add_option("--lr", tf.lr, "learning rate");
  cmd->add_option("--clip", tf.clip, "gradient clipping norm");
  cmd->add_option("--epochs", tf.epochs, "training epochs");
  cmd->add_option("--batch", tf.batch, "batch size");
  cmd->add_option("--bptt", tf.bptt, "truncation length");
  cmd->add_option("--seed", tf.seed, "random seed");
  cmd->add_option("--gamma-ar", tf.gamma_ar, "activation penalty weight");
  cmd->add_option("--gamma-tar", tf.gamma_tar, "activation smoothness weight");
  cmd->add_option("--gamma-wd", tf.gamma_wd, "weight decay coefficient");
}

std::uint64_t file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return 0;
  const std::string bytes((std::istreambuf_iterator<char>(f)), {});
  return fnv1a64(bytes);
}

// Written before any real work; --manifest overrides the default location.
void write_manifest(const std::string& explicit_path, const std::string& subcommand,
                    const json& options, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  std::string path = explicit_path;
  if (path.empty()) {
    std::string stem = subcommand;
    for (char& c : stem)
      if (c == ' ') c = '-';
    path = outputs.empty() ? stem + ".manifest.json" : outputs.front() + ".manifest.json";
  }
  json m;
  m["subcommand"] = subcommand;
  m["options"] = options;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  json digests = json::object();
  for (const auto& in : inputs) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(file_digest(in)));
    digests[in] = buf;
  }
  m["input_digests"] = digests;
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write manifest: " + path);
  f << m.dump(2) << '\n';
}

json model_options_json(const ModelFlags& mf) {
  return json{{"emb", mf.emb},
              {"layers", mf.layers},
              {"mixtures", mf.mixtures},
              {"dropout_emb", mf.dropout_emb},
              {"dropout_out", mf.dropout_out},
              {"no_temperature", mf.no_temperature},
              {"constant_tau", mf.constant_tau},
              {"alpha", mf.alpha},
              {"beta", mf.beta},
              {"variant", mf.variant},
              {"lambda", mf.lambda},
              {"rank", mf.rank}};
}

json train_options_json(const TrainFlags& tf) {
  return json{{"lr", tf.lr},         {"clip", tf.clip},
              {"epochs", tf.epochs}, {"batch", tf.batch},
              {"bptt", tf.bptt},     {"seed", tf.seed},
              {"gamma_ar", tf.gamma_ar}, {"gamma_tar", tf.gamma_tar},
              {"gamma_wd", tf.gamma_wd}};
}

std::vector<int> load_id_stream(const std::string& path, const Vocabulary& vocab) {
  return vocab.encode_stream(load_tokens(path));
}

// Training loop shared by `train`: mirrors the library run but prints one
// line per epoch and can drop a checkpoint series for trajectory analysis.
void run_training(ModelParams& p, const std::vector<CorpusBatch>& train_b,
                  const std::vector<CorpusBatch>& valid_b, const TrainConfig& cfg,
                  std::uint64_t vocab_digest, const std::string& series_out) {
  OptimizerState opt;
  opt.lr = cfg.lr;
  for (int e = 0; e < cfg.epochs; ++e) {
    const EpochMetrics m = train_epoch(p, train_b, cfg, opt);
    const double ppl =
        valid_b.empty() ? std::exp(m.mean_ce) : evaluate_perplexity(p, valid_b);
    std::cout << "epoch " << (e + 1) << " total " << m.mean_total << " ce " << m.mean_ce
              << " valid_ppl " << ppl << " lr " << opt.lr << '\n';
    if (ppl < opt.best_valid_ppl) {
      opt.best_valid_ppl = ppl;
      opt.evals_since_improvement = 0;
    } else if (++opt.evals_since_improvement >= cfg.plateau_patience) {
      opt.lr *= 0.5;
      opt.evals_since_improvement = 0;
    }
    if (!series_out.empty()) {
      Checkpoint c;
      c.params = p;
      c.opt = opt;
      c.epoch = e + 1;
      c.best_valid_ppl = opt.best_valid_ppl;
      c.vocab_digest = vocab_digest;
      save_checkpoint(c, series_out + ".epoch" + std::to_string(e + 1) + ".ckpt");
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{"contextual-temperature language modeling lab"};
  app.require_subcommand(1);

  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "manifest output path")
      ->configurable(false);
  // Flat key=value file; keys are dotted option paths (train.epochs=10).
  // Values given as flags always win. Must precede the subcommand.
  app.set_config("--config", "", "key=value configuration file");

  // preprocess ------------------------------------------------------------
  auto* cmd_pre = app.add_subcommand("preprocess", "tokenize raw text, build a vocabulary");
  std::string pre_in, pre_out = "corpus";
  int pre_cap = 10000;
  cmd_pre->add_option("--in", pre_in, "raw text file")->required();
  cmd_pre->add_option("--out", pre_out, "output directory");
  cmd_pre->add_option("--cap", pre_cap, "vocabulary size cap");

  // train -----------------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train", "train a model on a token file");
  std::string tr_in, tr_valid, tr_vocab, tr_out = "model.ckpt", tr_series;
  ModelFlags tr_mf;
  TrainFlags tr_tf;
  cmd_train->add_option("--in", tr_in, "training token file")->required();
  cmd_train->add_option("--valid", tr_valid, "validation token file");
  cmd_train->add_option("--vocab", tr_vocab, "vocabulary file")->required();
  cmd_train->add_option("--out", tr_out, "checkpoint output path");
  cmd_train->add_option("--series-out", tr_series,
                        "also write <prefix>.epochN.ckpt after every epoch");
  add_model_flags(cmd_train, tr_mf);
  add_train_flags(cmd_train, tr_tf);

  // eval ------------------------------------------------------------------
  auto* cmd_eval = app.add_subcommand("eval", "perplexity of a checkpoint on a token file");
  std::string ev_in, ev_vocab, ev_ckpt;
  int ev_batch = 16, ev_bptt = 16;
  cmd_eval->add_option("--in", ev_in, "token file")->required();
  cmd_eval->add_option("--vocab", ev_vocab, "vocabulary file")->required();
  cmd_eval->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  cmd_eval->add_option("--batch", ev_batch, "batch size");
  cmd_eval->add_option("--bptt", ev_bptt, "truncation length");

  // oracle ----------------------------------------------------------------
  auto* cmd_oracle = app.add_subcommand("oracle", "closed-form gradient reference");
  cmd_oracle->require_subcommand(1);
  auto* cmd_ocheck = cmd_oracle->add_subcommand(
      "check", "closed forms vs the autodiff tape on random two-class points");
  int oc_samples = 1000;
  std::uint64_t oc_seed = 7;
  cmd_ocheck->add_option("--samples", oc_samples, "sample count");
  cmd_ocheck->add_option("--seed", oc_seed, "random seed");

  auto* cmd_omesh = cmd_oracle->add_subcommand("mesh", "gradient surface CSV over (p, tau)");
  std::string om_kind = "logit", om_out = "mesh.csv";
  int om_index = 1, om_sign = 1, om_np = 40, om_ntau = 40;
  cmd_omesh->add_option("--kind", om_kind, "logit | temperature");
  cmd_omesh->add_option("--index", om_index, "class index (0 or 1)");
  cmd_omesh->add_option("--sign", om_sign, "sign of z0 for temperature meshes");
  cmd_omesh->add_option("--np", om_np, "probability grid resolution");
  cmd_omesh->add_option("--ntau", om_ntau, "temperature grid resolution");
  cmd_omesh->add_option("--out", om_out, "CSV output path");

  // ablate ----------------------------------------------------------------
  auto* cmd_ablate = app.add_subcommand("ablate", "controlled component comparisons");
  cmd_ablate->require_subcommand(1);
  auto* cmd_ct = cmd_ablate->add_subcommand(
      "constant-tau", "constant-temperature baselines vs the learned head");
  std::string ct_train, ct_valid, ct_test, ct_vocab, ct_taus = "1.0,2.0,3.0";
  std::string ct_out = "constant_tau.tsv";
  ModelFlags ct_mf;
  TrainFlags ct_tf;
  cmd_ct->add_option("--in", ct_train, "training token file")->required();
  cmd_ct->add_option("--valid", ct_valid, "validation token file")->required();
  cmd_ct->add_option("--test", ct_test, "test token file")->required();
  cmd_ct->add_option("--vocab", ct_vocab, "vocabulary file")->required();
  cmd_ct->add_option("--taus", ct_taus, "comma-separated constant temperatures");
  cmd_ct->add_option("--out", ct_out, "TSV output path");
  add_model_flags(cmd_ct, ct_mf);
  add_train_flags(cmd_ct, ct_tf);

  auto* cmd_norm = cmd_ablate->add_subcommand(
      "normalization", "compare the three temperature normalizations");
  std::string nm_train, nm_valid, nm_test, nm_vocab, nm_out = "normalization.tsv";
  ModelFlags nm_mf;
  TrainFlags nm_tf;
  cmd_norm->add_option("--in", nm_train, "training token file")->required();
  cmd_norm->add_option("--valid", nm_valid, "validation token file")->required();
  cmd_norm->add_option("--test", nm_test, "test token file")->required();
  cmd_norm->add_option("--vocab", nm_vocab, "vocabulary file")->required();
  cmd_norm->add_option("--out", nm_out, "TSV output path");
  add_model_flags(cmd_norm, nm_mf);
  add_train_flags(cmd_norm, nm_tf);

  // analyze ---------------------------------------------------------------
  auto* cmd_an = app.add_subcommand("analyze", "temperature behavior reports");
  cmd_an->require_subcommand(1);
  auto* cmd_traj = cmd_an->add_subcommand(
      "trajectories", "per-token mean temperature across a checkpoint series");
  std::string tj_ckpts, tj_probe, tj_vocab, tj_tokens, tj_out = "trajectories.tsv";
  int tj_batch = 4, tj_bptt = 16;
  cmd_traj->add_option("--ckpts", tj_ckpts, "comma-separated checkpoint paths")->required();
  cmd_traj->add_option("--probe", tj_probe, "probe token file")->required();
  cmd_traj->add_option("--vocab", tj_vocab, "vocabulary file")->required();
  cmd_traj->add_option("--tokens", tj_tokens, "comma-separated tokens to trace")->required();
  cmd_traj->add_option("--batch", tj_batch, "probe batch size");
  cmd_traj->add_option("--bptt", tj_bptt, "probe truncation length");
  cmd_traj->add_option("--out", tj_out, "TSV output path");

  auto* cmd_pos = cmd_an->add_subcommand(
      "positions", "mean temperature by normalized sentence position");
  std::string ps_ckpt, ps_in, ps_vocab, ps_out = "positions.tsv";
  cmd_pos->add_option("--ckpt", ps_ckpt, "checkpoint path")->required();
  cmd_pos->add_option("--in", ps_in, "token file")->required();
  cmd_pos->add_option("--vocab", ps_vocab, "vocabulary file")->required();
  cmd_pos->add_option("--out", ps_out, "TSV output path");

  auto* cmd_case = cmd_an->add_subcommand(
      "case-study", "side-by-side next-token predictions of two checkpoints");
  std::string cs_a, cs_b, cs_vocab, cs_context, cs_out = "case_study.tsv";
  int cs_topk = 5;
  cmd_case->add_option("--ckpt-a", cs_a, "first checkpoint")->required();
  cmd_case->add_option("--ckpt-b", cs_b, "second checkpoint")->required();
  cmd_case->add_option("--vocab", cs_vocab, "vocabulary file")->required();
  cmd_case->add_option("--context", cs_context, "space-separated context words")->required();
  cmd_case->add_option("--topk", cs_topk, "entries per model per position");
  cmd_case->add_option("--out", cs_out, "TSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  if (cmd_pre->parsed()) {
    write_manifest(manifest_path, "preprocess",
                   json{{"in", pre_in}, {"out", pre_out}, {"cap", pre_cap}}, {pre_in},
                   {pre_out + "/tokens.txt", pre_out + "/vocab.tsv"});
    std::ifstream f(pre_in, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + pre_in);
    const std::string raw((std::istreambuf_iterator<char>(f)), {});
    const auto tokens = preprocess(raw);
    const auto vocab = build_vocabulary(tokens, pre_cap);
    std::filesystem::create_directories(pre_out);
    save_tokens(pre_out + "/tokens.txt", tokens);
    vocab.save(pre_out + "/vocab.tsv");
    std::cout << "tokens " << tokens.size() << " vocab " << vocab.size() << '\n';
    return 0;
  }

  if (cmd_train->parsed()) {
    json opts = model_options_json(tr_mf);
    opts.update(train_options_json(tr_tf));
    opts["in"] = tr_in;
    opts["valid"] = tr_valid;
    opts["vocab"] = tr_vocab;
    opts["series_out"] = tr_series;
    write_manifest(manifest_path, "train", opts, {tr_in, tr_valid, tr_vocab}, {tr_out});
    const auto vocab = Vocabulary::load(tr_vocab);
    const TrainConfig cfg = train_from_flags(tr_tf);
    const auto train_b =
        make_batches(load_id_stream(tr_in, vocab), cfg.batch_size, cfg.bptt, vocab.eos_id);
    std::vector<CorpusBatch> valid_b;
    if (!tr_valid.empty())
      valid_b = make_batches(load_id_stream(tr_valid, vocab), cfg.batch_size, cfg.bptt,
                             vocab.eos_id);
    ModelParams p =
        init_params(mos_from_flags(tr_mf, vocab.size()), temp_from_flags(tr_mf), cfg.seed);
    run_training(p, train_b, valid_b, cfg, vocab.digest(), tr_series);
    Checkpoint c;
    c.params = std::move(p);
    c.epoch = cfg.epochs;
    c.vocab_digest = vocab.digest();
    save_checkpoint(c, tr_out);
    std::cout << "checkpoint " << tr_out << '\n';
    return 0;
  }

  if (cmd_eval->parsed()) {
    write_manifest(manifest_path, "eval",
                   json{{"in", ev_in},
                        {"vocab", ev_vocab},
                        {"ckpt", ev_ckpt},
                        {"batch", ev_batch},
                        {"bptt", ev_bptt}},
                   {ev_in, ev_vocab, ev_ckpt}, {});
    const auto vocab = Vocabulary::load(ev_vocab);
    const Checkpoint c = load_checkpoint(ev_ckpt, vocab.digest());
    const auto batches =
        make_batches(load_id_stream(ev_in, vocab), ev_batch, ev_bptt, vocab.eos_id);
    std::cout << "perplexity " << evaluate_perplexity(c.params, batches) << '\n';
    return 0;
  }

  if (cmd_ocheck->parsed()) {
    write_manifest(manifest_path, "oracle check",
                   json{{"samples", oc_samples}, {"seed", oc_seed}}, {}, {});
    const auto res = oracle_check(oc_samples, oc_seed);
    std::cout << "max_rel_error " << res.max_rel_error() << '\n';
    return res.max_rel_error() < 1e-8 ? 0 : 1;
  }

  if (cmd_omesh->parsed()) {
    write_manifest(manifest_path, "oracle mesh",
                   json{{"kind", om_kind},
                        {"index", om_index},
                        {"sign", om_sign},
                        {"np", om_np},
                        {"ntau", om_ntau}},
                   {}, {om_out});
    MeshSpec spec;
    spec.np = om_np;
    spec.ntau = om_ntau;
    GradientMesh mesh;
    if (om_kind == "logit") mesh = logit_mesh(spec, om_index);
    else if (om_kind == "temperature") mesh = temperature_mesh(spec, om_index, om_sign);
    else throw ConfigError("unknown mesh kind: " + om_kind);
    write_mesh_csv(mesh, om_out);
    std::cout << "mesh " << om_out << " points " << mesh.points.size() << '\n';
    return 0;
  }

  if (cmd_ct->parsed()) {
    json opts = model_options_json(ct_mf);
    opts.update(train_options_json(ct_tf));
    opts["taus"] = ct_taus;
    write_manifest(manifest_path, "ablate constant-tau", opts,
                   {ct_train, ct_valid, ct_test, ct_vocab}, {ct_out});
    const auto vocab = Vocabulary::load(ct_vocab);
    AblationRecipe recipe;
    recipe.mos = mos_from_flags(ct_mf, vocab.size());
    recipe.temp = temp_from_flags(ct_mf);
    recipe.train = train_from_flags(ct_tf);
    recipe.train_stream = load_id_stream(ct_train, vocab);
    recipe.valid_stream = load_id_stream(ct_valid, vocab);
    recipe.test_stream = load_id_stream(ct_test, vocab);
    recipe.eos_id = vocab.eos_id;
    const auto rows = run_constant_tau_ablation(parse_double_list(ct_taus), recipe);
    write_ablation_tsv(rows, ct_out);
    for (const auto& r : rows)
      std::cout << r.label << " valid_ppl " << r.valid_ppl << " test_ppl " << r.test_ppl
                << '\n';
    return 0;
  }

  if (cmd_norm->parsed()) {
    json opts = model_options_json(nm_mf);
    opts.update(train_options_json(nm_tf));
    write_manifest(manifest_path, "ablate normalization", opts,
                   {nm_train, nm_valid, nm_test, nm_vocab}, {nm_out});
    const auto vocab = Vocabulary::load(nm_vocab);
    const TrainConfig cfg = train_from_flags(nm_tf);
    const auto train_b = make_batches(load_id_stream(nm_train, vocab), cfg.batch_size,
                                      cfg.bptt, vocab.eos_id);
    const auto valid_b = make_batches(load_id_stream(nm_valid, vocab), cfg.batch_size,
                                      cfg.bptt, vocab.eos_id);
    const auto test_b = make_batches(load_id_stream(nm_test, vocab), cfg.batch_size,
                                     cfg.bptt, vocab.eos_id);
    std::vector<AblationRow> rows;
    for (const std::string name : {"softmax", "pow-tanh", "tanh-shift"}) {
      ModelFlags mf = nm_mf;
      mf.variant = name;
      ModelParams p =
          init_params(mos_from_flags(mf, vocab.size()), temp_from_flags(mf), cfg.seed);
      const auto res = train_model(p, train_b, valid_b, cfg);
      AblationRow row;
      row.label = name;
      row.valid_ppl = evaluate_perplexity(p, valid_b);
      row.test_ppl = evaluate_perplexity(p, test_b);
      for (const auto& e : res.epochs) row.train_total_trajectory.push_back(e.mean_total);
      std::cout << name << " valid_ppl " << row.valid_ppl << " test_ppl " << row.test_ppl
                << '\n';
      rows.push_back(std::move(row));
    }
    write_ablation_tsv(rows, nm_out);
    return 0;
  }

  if (cmd_traj->parsed()) {
    write_manifest(manifest_path, "analyze trajectories",
                   json{{"ckpts", tj_ckpts},
                        {"probe", tj_probe},
                        {"vocab", tj_vocab},
                        {"tokens", tj_tokens},
                        {"batch", tj_batch},
                        {"bptt", tj_bptt}},
                   {tj_probe, tj_vocab}, {tj_out});
    const auto vocab = Vocabulary::load(tj_vocab);
    std::vector<Checkpoint> series;
    for (const auto& path : parse_string_list(tj_ckpts))
      series.push_back(load_checkpoint(path, vocab.digest()));
    const auto probe =
        make_batches(load_id_stream(tj_probe, vocab), tj_batch, tj_bptt, vocab.eos_id);
    std::vector<int> token_set;
    for (const auto& tok : parse_string_list(tj_tokens)) {
      const int id = vocab.encode(tok);
      if (id == vocab.unk_id && tok != kUnkToken)
        throw ConfigError("token not in vocabulary: " + tok);
      token_set.push_back(id);
    }
    write_trajectories_tsv(temperature_trajectories(series, probe, token_set), tj_out);
    std::cout << "trajectories " << tj_out << '\n';
    return 0;
  }

  if (cmd_pos->parsed()) {
    write_manifest(manifest_path, "analyze positions",
                   json{{"ckpt", ps_ckpt}, {"in", ps_in}, {"vocab", ps_vocab}},
                   {ps_ckpt, ps_in, ps_vocab}, {ps_out});
    const auto vocab = Vocabulary::load(ps_vocab);
    const Checkpoint c = load_checkpoint(ps_ckpt, vocab.digest());
    ModelTauProvider provider(c.params);
    const auto stats =
        position_statistics(provider, load_id_stream(ps_in, vocab), vocab.eos_id);
    if (stats.empty())
      std::cerr << "warning: no sentences matched the length filter\n";
    write_position_stats_tsv(stats, ps_out);
    std::cout << "positions " << ps_out << '\n';
    return 0;
  }

  if (cmd_case->parsed()) {
    write_manifest(manifest_path, "analyze case-study",
                   json{{"ckpt_a", cs_a},
                        {"ckpt_b", cs_b},
                        {"vocab", cs_vocab},
                        {"context", cs_context},
                        {"topk", cs_topk}},
                   {cs_a, cs_b, cs_vocab}, {cs_out});
    const auto vocab = Vocabulary::load(cs_vocab);
    const Checkpoint a = load_checkpoint(cs_a, vocab.digest());
    const Checkpoint b = load_checkpoint(cs_b, vocab.digest());
    std::vector<int> context;
    std::stringstream ss(cs_context);
    std::string word;
    while (ss >> word) context.push_back(vocab.encode(word));
    const auto recs = case_study_topk(a.params, b.params, context, cs_topk);
    write_case_study_tsv(recs, vocab, cs_out);
    std::cout << "case-study " << cs_out << '\n';
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CheckpointError& e) {
    std::cerr << "error: checkpoint: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: validation: " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: shape: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
