#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctmos/errors.hpp"
#include "ctmos/model.hpp"
#include "ctmos/rng.hpp"

using namespace ctmos;

namespace {

MoSConfig micro_config() {
  MoSConfig m;
  m.vocab = 7;
  m.emb_dim = 5;
  m.layer_sizes = {6, 5};
  m.mixtures = 3;
  return m;
}

CorpusBatch micro_batch(std::vector<int> inputs, int batch_size, int bptt) {
  CorpusBatch b;
  b.batch_size = batch_size;
  b.bptt = bptt;
  b.inputs = std::move(inputs);
  b.targets.assign(b.inputs.size(), 0);
  b.positions.assign(b.inputs.size(), 0);
  return b;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("init_params: deterministic per seed, declared shapes, bounds") {
  const MoSConfig mos = micro_config();
  TemperatureConfig temp;
  const auto a = init_params(mos, temp, 123);
  const auto b = init_params(mos, temp, 123);
  const auto c = init_params(mos, temp, 124);
  CHECK(a.tensors.size() == b.tensors.size());
  bool any_diff = false;
  for (const auto& [name, t] : a.tensors) {
    CHECK(t.v == b.at(name).v);  // bit-identical
    if (t.v != c.at(name).v) any_diff = true;
  }
  CHECK(any_diff);

  CHECK(a.at("emb").shape == std::vector<int>{7, 5});
  CHECK(a.at("lstm0.Wx").shape == std::vector<int>{5, 24});
  CHECK(a.at("lstm1.Wx").shape == std::vector<int>{6, 20});
  CHECK(a.at("proj_g").shape == std::vector<int>{5, 5});
  CHECK(a.at("W_m0").shape == std::vector<int>{5, 7});
  CHECK(a.at("W_p").shape == std::vector<int>{5, 3});
  CHECK(a.at("W_tau1").shape == std::vector<int>{5, 5});  // rank defaults to d
  CHECK(a.at("W_tau2").shape == std::vector<int>{5, 7});
  for (double x : a.at("emb").v) CHECK(std::abs(x) <= 0.1);
}

TEST_CASE("forward_backbone: zero weights and zero state give zero outputs") {
  MoSConfig mos = micro_config();
  auto p = init_params(mos, TemperatureConfig{}, 7);
  for (auto& [name, t] : p.tensors)
    if (name.rfind("lstm", 0) == 0 || name == "emb")
      for (double& x : t.v) x = 0.0;
  Graph g;
  const auto ids = register_params(g, p);
  const auto batch = micro_batch({1, 2, 3, 4}, 2, 2);
  const auto bb = forward_backbone(g, p, ids, batch, zero_state(mos, 2), ones_masks(mos, 4));
  for (double x : g.val(bb.h_raw).v) CHECK(x == 0.0);
}

TEST_CASE("forward_backbone: deterministic given identical inputs") {
  MoSConfig mos = micro_config();
  auto p = init_params(mos, TemperatureConfig{}, 7);
  const auto batch = micro_batch({1, 2, 3, 4, 5, 6}, 2, 3);
  auto run = [&]() {
    Graph g;
    const auto ids = register_params(g, p);
    const auto bb =
        forward_backbone(g, p, ids, batch, zero_state(mos, 2), ones_masks(mos, 6));
    return g.val(bb.h_raw);
  };
  CHECK(run().v == run().v);
}

TEST_CASE("forward_backbone: single step on a 2-unit cell matches hand arithmetic") {
  MoSConfig mos;
  mos.vocab = 3;
  mos.emb_dim = 2;
  mos.layer_sizes = {2};
  mos.mixtures = 1;
  auto p = init_params(mos, TemperatureConfig{}, 1);
  // hand-set: embedding row 1 = (0.5, -1), Wx picks fixed gate values
  Tensor& emb = p.at("emb");
  emb.at(1, 0) = 0.5;
  emb.at(1, 1) = -1.0;
  Tensor& wx = p.at("lstm0.Wx");
  for (double& x : wx.v) x = 0.0;
  // gates = x * Wx + h * Wh + b with h = 0, b hand-set below
  for (int j = 0; j < 8; ++j) wx.at(0, j) = 0.1 * (j + 1);
  for (int j = 0; j < 8; ++j) wx.at(1, j) = -0.05 * j;
  for (double& x : p.at("lstm0.Wh").v) x = 0.0;
  Tensor& bias = p.at("lstm0.b");
  for (int j = 0; j < 8; ++j) bias.at(0, j) = 0.01 * j;

  Graph g;
  const auto ids = register_params(g, p);
  const auto bb = forward_backbone(g, p, ids, micro_batch({1}, 1, 1), zero_state(mos, 1),
                                   ones_masks(mos, 1));
  const Tensor& h = g.val(bb.h_raw);

  const double x0 = 0.5, x1 = -1.0;
  for (int u = 0; u < 2; ++u) {
    const double gi = sigmoid(x0 * 0.1 * (u + 1) - x1 * 0.05 * u + 0.01 * u);
    const double gf =
        sigmoid(x0 * 0.1 * (u + 3) - x1 * 0.05 * (u + 2) + 0.01 * (u + 2));
    const double go =
        sigmoid(x0 * 0.1 * (u + 5) - x1 * 0.05 * (u + 4) + 0.01 * (u + 4));
    const double gu =
        std::tanh(x0 * 0.1 * (u + 7) - x1 * 0.05 * (u + 6) + 0.01 * (u + 6));
    const double c1 = gf * 0.0 + gi * gu;
    const double expect = go * std::tanh(c1);
    CHECK(h.v[u] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("mos_head: mixture weight properties") {
  MoSConfig mos = micro_config();

  SUBCASE("M = 1 gives pi = [1] exactly") {
    mos.mixtures = 1;
    auto p = init_params(mos, TemperatureConfig{}, 3);
    Graph g;
    const auto ids = register_params(g, p);
    const auto hidden = g.leaf(Tensor({4, 5}, 0.3));
    const auto head = mos_head(g, p, ids, hidden);
    for (double x : g.val(head.pi).v) CHECK(x == 1.0);
  }
  SUBCASE("W_p = 0 gives uniform pi") {
    auto p = init_params(mos, TemperatureConfig{}, 3);
    for (double& x : p.at("W_p").v) x = 0.0;
    Graph g;
    const auto ids = register_params(g, p);
    const auto head = mos_head(g, p, ids, g.leaf(Tensor({2, 5}, 0.7)));
    for (double x : g.val(head.pi).v) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("mixture distribution sums to 1 within 1e-12") {
    auto p = init_params(mos, TemperatureConfig{}, 4);
    auto rng = named_stream(5, "head");
    Graph g;
    const auto ids = register_params(g, p);
    const auto hidden = g.leaf(Tensor::uniform({6, 5}, -2.0, 2.0, rng));
    const auto head = mos_head(g, p, ids, hidden);
    const auto probs = g.val(mos_distribution(g, head.component_logits, head.pi, 1.0));
    for (int r = 0; r < 6; ++r) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) s += probs.at(r, c);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    // pi itself sums to 1 within 1e-12
    const auto& pi = g.val(head.pi);
    for (int r = 0; r < 6; ++r) {
      double s = 0.0;
      for (int c = 0; c < 3; ++c) s += pi.at(r, c);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("contextual_temperature: uniform case, paper bounds, mass identity") {
  MoSConfig mos = micro_config();
  TemperatureConfig temp;  // alpha=1, beta=0.5

  SUBCASE("W_tau = 0 gives tau_i = (1/V + alpha)/beta everywhere") {
    auto p = init_params(mos, temp, 9);
    for (double& x : p.at("W_tau2").v) x = 0.0;
    Graph g;
    const auto ids = register_params(g, p);
    const auto tau = g.val(contextual_temperature(g, p, ids, g.leaf(Tensor({3, 5}, 0.4))));
    const double expect = (1.0 / 7 + 1.0) / 0.5;
    for (double x : tau.v) CHECK(x == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("(alpha, beta) = (1, 0.5): all elements in [2, 4]; sums to (1+V*alpha)/beta") {
    auto p = init_params(mos, temp, 10);
    auto rng = named_stream(6, "ct-bounds");
    Graph g;
    const auto ids = register_params(g, p);
    const auto tau =
        g.val(contextual_temperature(g, p, ids, g.leaf(Tensor::uniform({5, 5}, -3, 3, rng))));
    for (double x : tau.v) {
      CHECK(x >= 2.0);
      CHECK(x <= 4.0);
    }
    for (int r = 0; r < 5; ++r) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) s += tau.at(r, c);
      CHECK(s == doctest::Approx((1.0 + 7 * 1.0) / 0.5).epsilon(1e-9));
    }
  }
  SUBCASE("beta <= 0 is a configuration error") {
    TemperatureConfig bad;
    bad.beta = 0.0;
    auto p = init_params(mos, bad, 11);
    Graph g;
    const auto ids = register_params(g, p);
    CHECK_THROWS_AS((void)contextual_temperature(g, p, ids, g.leaf(Tensor({1, 5}, 0.0))),
                    ConfigError);
  }
}

TEST_CASE("temperature bounds survive adversarially large hidden values") {
  MoSConfig mos = micro_config();
  auto rng = named_stream(77, "tau-huge");
  std::uniform_real_distribution<double> mag(-1e6, 1e6);

  TemperatureConfig soft;  // softmax-bounded
  auto p = init_params(mos, soft, 12);
  TemperatureConfig pow_cfg = soft;
  pow_cfg.variant = TempVariant::PowTanh;
  pow_cfg.lambda = 4.0;
  auto p_pow = init_params(mos, pow_cfg, 12);
  TemperatureConfig shift_cfg = soft;
  shift_cfg.variant = TempVariant::TanhShift;
  shift_cfg.lambda = 3.0;
  auto p_shift = init_params(mos, shift_cfg, 12);

  for (int rep = 0; rep < 100; ++rep) {
    Tensor hidden({1, 5});
    for (double& x : hidden.v) x = mag(rng);
    {
      Graph g;
      const auto ids = register_params(g, p);
      for (double x : g.val(temperature_with_variant(g, p, ids, g.leaf(hidden))).v) {
        CHECK(x >= 2.0);
        CHECK(x <= 4.0);
      }
    }
    {
      Graph g;
      const auto ids = register_params(g, p_pow);
      for (double x : g.val(temperature_with_variant(g, p_pow, ids, g.leaf(hidden))).v) {
        CHECK(x >= 0.25);
        CHECK(x <= 4.0);
      }
    }
    {
      Graph g;
      const auto ids = register_params(g, p_shift);
      for (double x : g.val(temperature_with_variant(g, p_shift, ids, g.leaf(hidden))).v) {
        CHECK(x >= 2.0);
        CHECK(x <= 4.0);
      }
    }
  }
}

TEST_CASE("ct_mos_distribution: identity temperature, reduction, oracle") {
  auto rng = named_stream(21, "ctmos-dist");

  SUBCASE("M = 1 with tau = 1 equals the plain softmax exactly") {
    Graph g;
    const auto z = g.leaf(Tensor::uniform({3, 5}, -2, 2, rng));
    const auto pi = g.leaf(Tensor({3, 1}, 1.0));
    const auto tau = g.leaf(Tensor({3, 5}, 1.0));
    const auto p = g.val(ct_mos_distribution(g, {z}, pi, tau));
    const auto ref = g.val(g.softmax(z, 1));
    CHECK(p.v == ref.v);
  }
  SUBCASE("tau = c*1 equals MoS on z_m / c within 1e-12") {
    const double c = 2.7;
    Graph g;
    const auto z0 = g.leaf(Tensor::uniform({4, 5}, -3, 3, rng));
    const auto z1 = g.leaf(Tensor::uniform({4, 5}, -3, 3, rng));
    const auto pi = g.softmax(g.leaf(Tensor::uniform({4, 2}, -1, 1, rng)), 1);
    const auto tau = g.leaf(Tensor({4, 5}, c));
    const auto ct = g.val(ct_mos_distribution(g, {z0, z1}, pi, tau));
    const auto mos = g.val(mos_distribution(g, {z0, z1}, pi, c));
    for (std::size_t i = 0; i < ct.v.size(); ++i) CHECK(std::abs(ct.v[i] - mos.v[i]) < 1e-12);
  }
  SUBCASE("random |V|=5, M=2 instance matches a straight-line oracle") {
    Tensor z0 = Tensor::uniform({2, 5}, -3, 3, rng);
    Tensor z1 = Tensor::uniform({2, 5}, -3, 3, rng);
    Tensor tau = Tensor::uniform({2, 5}, 0.5, 3.0, rng);
    Tensor pi_logits = Tensor::uniform({2, 2}, -1, 1, rng);
    Graph g;
    const auto pi = g.softmax(g.leaf(pi_logits), 1);
    const auto got = g.val(
        ct_mos_distribution(g, {g.leaf(z0), g.leaf(z1)}, pi, g.leaf(tau)));
    // independent straight-line evaluation
    for (int r = 0; r < 2; ++r) {
      double piv[2];
      const double e0 = std::exp(pi_logits.at(r, 0)), e1 = std::exp(pi_logits.at(r, 1));
      piv[0] = e0 / (e0 + e1);
      piv[1] = e1 / (e0 + e1);
      double expect[5] = {0, 0, 0, 0, 0};
      const Tensor* zs[2] = {&z0, &z1};
      for (int m = 0; m < 2; ++m) {
        double ex[5], zsum = 0.0;
        for (int c = 0; c < 5; ++c) {
          ex[c] = std::exp(zs[m]->at(r, c) / tau.at(r, c));
          zsum += ex[c];
        }
        for (int c = 0; c < 5; ++c) expect[c] += piv[m] * ex[c] / zsum;
      }
      double total = 0.0;
      for (int c = 0; c < 5; ++c) {
        CHECK(got.at(r, c) == doctest::Approx(expect[c]).epsilon(1e-12));
        total += got.at(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
  SUBCASE("non-positive temperature is rejected") {
    Graph g;
    const auto z = g.leaf(Tensor({1, 3}, 0.0));
    const auto pi = g.leaf(Tensor({1, 1}, 1.0));
    Tensor bad({1, 3}, 1.0);
    bad.v[2] = 0.0;
    CHECK_THROWS_AS((void)ct_mos_distribution(g, {z}, pi, g.leaf(bad)), ValidationError);
  }
}

TEST_CASE("forward: causality - tau at position t ignores later inputs") {
  MoSConfig mos = micro_config();
  auto p = init_params(mos, TemperatureConfig{}, 33);
  auto run = [&](std::vector<int> inputs) {
    Graph g;
    const auto ids = register_params(g, p);
    const auto fwd = forward(g, p, ids, micro_batch(std::move(inputs), 1, 4),
                             zero_state(mos, 1), ones_masks(mos, 4));
    return g.val(fwd.tau);
  };
  const auto a = run({1, 2, 3, 4});
  const auto b = run({1, 2, 3, 6});  // change only the last position
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 7; ++c) CHECK(a.at(t, c) == b.at(t, c));
}

TEST_CASE("forward: initial tau after init lies within the configured bounds") {
  MoSConfig mos = micro_config();
  auto p = init_params(mos, TemperatureConfig{}, 55);
  Graph g;
  const auto ids = register_params(g, p);
  const auto fwd = forward(g, p, ids, micro_batch({0, 1, 2, 3, 4, 5}, 2, 3),
                           zero_state(mos, 2), ones_masks(mos, 6));
  for (double x : g.val(fwd.tau).v) {
    CHECK(x > 2.0);
    CHECK(x < 4.0);
  }
}

TEST_CASE("forward: hidden state shape mismatch is a contract error") {
  MoSConfig mos = micro_config();
  auto p = init_params(mos, TemperatureConfig{}, 2);
  Graph g;
  const auto ids = register_params(g, p);
  CHECK_THROWS_AS((void)forward_backbone(g, p, ids, micro_batch({1, 2}, 2, 1),
                                         zero_state(mos, 3), ones_masks(mos, 2)),
                  ShapeError);
}
