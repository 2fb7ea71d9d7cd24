#include "ctmos/oracle.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "ctmos/autodiff.hpp"
#include "ctmos/errors.hpp"
#include "ctmos/finite_diff.hpp"
#include "ctmos/rng.hpp"

namespace ctmos {

namespace {

void softmax2(double a, double b, double& pa, double& pb) {
  const double mx = std::max(a, b);
  const double ea = std::exp(a - mx), eb = std::exp(b - mx);
  pa = ea / (ea + eb);
  pb = eb / (ea + eb);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TwoClassPoint TwoClassPoint::from_logits(double z0, double z1, double ztau0, double ztau1) {
  TwoClassPoint pt;
  pt.z0 = z0;
  pt.z1 = z1;
  pt.ztau0 = ztau0;
  pt.ztau1 = ztau1;
  softmax2(ztau0, ztau1, pt.tau0, pt.tau1);
  pt.u0 = z0 / pt.tau0;
  pt.u1 = z1 / pt.tau1;
  softmax2(pt.u0, pt.u1, pt.p0, pt.p1);
  return pt;
}

LogitGrads two_class_logit_grads(const TwoClassPoint& pt) {
  if (pt.tau0 <= 0.0 || pt.tau1 <= 0.0)
    throw ValidationError("two_class_logit_grads: non-positive temperature");
  return {(pt.p0 - 1.0) / pt.tau0, pt.p1 / pt.tau1};
}

TemperatureGrads two_class_temperature_grads(const TwoClassPoint& pt) {
  if (pt.tau0 <= 0.0 || pt.tau1 <= 0.0)
    throw ValidationError("two_class_temperature_grads: non-positive temperature");
  const double g =
      pt.p1 * pt.z0 * pt.tau1 / pt.tau0 + pt.p1 * pt.z1 * pt.tau0 / pt.tau1;
  return {g, -g};
}

double OracleCheckResult::max_rel_error() const {
  return std::max(max_rel_error_logits, max_rel_error_temperature);
}

OracleCheckResult oracle_check(int samples, std::uint64_t seed) {
  auto rng = named_stream(seed, "oracle-check");
  std::uniform_real_distribution<double> zdist(-3.0, 3.0);
  std::uniform_real_distribution<double> tdist(-2.0, 2.0);
  OracleCheckResult res;
  for (int s = 0; s < samples; ++s) {
    // Reject draws where the losing class has essentially no mass: there
    // the tape's softmax backward computes p0*(1 - 1/p0), whose absolute
    // rounding error (~1e-16) swamps the true gradient and the comparison
    // stops measuring anything about the derivation.
    TwoClassPoint pt;
    do {
      pt = TwoClassPoint::from_logits(zdist(rng), zdist(rng), tdist(rng), tdist(rng));
    } while (pt.p1 < 1e-6);

    Tensor zt({1, 2});
    zt.v = {pt.z0, pt.z1};
    Tensor ztt({1, 2});
    ztt.v = {pt.ztau0, pt.ztau1};
    Graph g2;
    const Graph::NodeId zz = g2.leaf(zt);
    const Graph::NodeId zztau = g2.leaf(ztt);
    const Graph::NodeId tau = g2.softmax(zztau, 1);
    const Graph::NodeId probs = g2.softmax(g2.div(zz, tau), 1);
    const Graph::NodeId loss = g2.mean(g2.neg_log_pick(probs, {0}, 1e-300));
    g2.backward(loss);

    const LogitGrads lg = two_class_logit_grads(pt);
    const TemperatureGrads tg = two_class_temperature_grads(pt);
    const Tensor& dz = g2.grad(zz);
    const Tensor& dzt = g2.grad(zztau);
    res.max_rel_error_logits = std::max(
        {res.max_rel_error_logits, relative_error(dz.v[0], lg.dz0, 1e-9),
         relative_error(dz.v[1], lg.dz1, 1e-9)});
    res.max_rel_error_temperature = std::max(
        {res.max_rel_error_temperature, relative_error(dzt.v[0], tg.dztau0, 1e-9),
         relative_error(dzt.v[1], tg.dztau1, 1e-9)});
  }
  return res;
}

GradientMesh logit_mesh(const MeshSpec& spec, int i) {
  if (spec.np < 2 || spec.ntau < 2) throw ConfigError("logit_mesh: grid resolution < 2");
  if (i != 0 && i != 1) throw ConfigError("logit_mesh: class index must be 0 or 1");
  GradientMesh mesh;
  mesh.spec = spec;
  mesh.has_baseline = true;
  for (int a = 0; a < spec.np; ++a) {
    const double p = spec.p_lo + (spec.p_hi - spec.p_lo) * a / (spec.np - 1);
    for (int b = 0; b < spec.ntau; ++b) {
      const double tau = spec.tau_lo + (spec.tau_hi - spec.tau_lo) * b / (spec.ntau - 1);
      MeshPoint pt;
      pt.p = p;
      pt.tau = tau;
      pt.grad = i == 0 ? (p - 1.0) / tau : p / tau;
      pt.baseline = i == 0 ? p - 1.0 : p;
      mesh.points.push_back(pt);
    }
  }
  return mesh;
}

GradientMesh temperature_mesh(const MeshSpec& spec, int i, int sign_z0) {
  if (spec.np < 2 || spec.ntau < 2) throw ConfigError("temperature_mesh: grid resolution < 2");
  if (i != 0 && i != 1) throw ConfigError("temperature_mesh: class index must be 0 or 1");
  if (sign_z0 != 1 && sign_z0 != -1)
    throw ConfigError("temperature_mesh: sign_z0 must be +1 or -1");
  GradientMesh mesh;
  mesh.spec = spec;
  for (int a = 0; a < spec.np; ++a) {
    const double p = spec.p_lo + (spec.p_hi - spec.p_lo) * a / (spec.np - 1);
    for (int b = 0; b < spec.ntau; ++b) {
      const double tau = spec.tau_lo + (spec.tau_hi - spec.tau_lo) * b / (spec.ntau - 1);
      MeshPoint pt;
      pt.p = p;
      pt.tau = tau;
      TwoClassPoint tc;
      if (i == 0) {
        // Free logit z0 solved from p0 at (tau0, tau1 = 1 - tau0); z1 = 0.
        tc.tau0 = tau;
        tc.tau1 = 1.0 - tau;
        tc.z1 = 0.0;
        tc.z0 = tau * logit(p);
        tc.p0 = p;
        tc.p1 = 1.0 - p;
        if (tc.z0 == 0.0 || (tc.z0 > 0.0) != (sign_z0 > 0)) pt.present = false;
      } else {
        // z0 pinned to the requested sign; z1 solved from p1.
        tc.tau1 = tau;
        tc.tau0 = 1.0 - tau;
        tc.z0 = static_cast<double>(sign_z0);
        tc.z1 = tau * (logit(p) + tc.z0 / tc.tau0);
        tc.p1 = p;
        tc.p0 = 1.0 - p;
      }
      if (pt.present) {
        const TemperatureGrads tg = two_class_temperature_grads(tc);
        pt.grad = i == 0 ? tg.dztau0 : tg.dztau1;
        if (!std::isfinite(pt.grad)) pt.present = false;
      }
      mesh.points.push_back(pt);
    }
  }
  return mesh;
}

void write_mesh_csv(const GradientMesh& mesh, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write mesh CSV: " + path);
  f << "p,tau,gradient,baseline-gradient\n";
  f.precision(12);
  for (const auto& pt : mesh.points) {
    f << pt.p << ',' << pt.tau << ',';
    if (pt.present) f << pt.grad;
    f << ',';
    if (pt.present && mesh.has_baseline) f << pt.baseline;
    f << '\n';
  }
}

}  // namespace ctmos
