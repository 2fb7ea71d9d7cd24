#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ctmos {

/// Two-class setting with ground-truth class 0, temperature produced by a
/// two-logit softmax (temperature range [0, 1]) and loss L = -ln p_0.
struct TwoClassPoint {
  double z0 = 0.0, z1 = 0.0;        // logits
  double ztau0 = 0.0, ztau1 = 0.0;  // temperature logits
  double tau0 = 0.5, tau1 = 0.5;    // sigma(ztau)
  double u0 = 0.0, u1 = 0.0;        // z ./ tau
  double p0 = 0.5, p1 = 0.5;        // sigma(u)

  static TwoClassPoint from_logits(double z0, double z1, double ztau0, double ztau1);
};

struct LogitGrads {
  double dz0 = 0.0, dz1 = 0.0;
};
/// dL/dz_0 = (p_0 - 1)/tau_0, dL/dz_1 = p_1/tau_1.
LogitGrads two_class_logit_grads(const TwoClassPoint& pt);

struct TemperatureGrads {
  double dztau0 = 0.0, dztau1 = 0.0;  // exact negations of each other
};
/// dL/dztau_0 = p_1 z_0 tau_1/tau_0 + p_1 z_1 tau_0/tau_1.
TemperatureGrads two_class_temperature_grads(const TwoClassPoint& pt);

/// Same loss differentiated through the autodiff tape, for agreement checks.
struct OracleCheckResult {
  double max_rel_error_logits = 0.0;
  double max_rel_error_temperature = 0.0;
  double max_rel_error() const;
};
OracleCheckResult oracle_check(int samples, std::uint64_t seed);

struct MeshSpec {
  int np = 40;
  int ntau = 40;
  double p_lo = 0.02, p_hi = 0.98;
  double tau_lo = 0.05, tau_hi = 0.95;
};

struct MeshPoint {
  double p = 0.0, tau = 0.0;
  bool present = true;
  double grad = 0.0;
  double baseline = 0.0;  // logit meshes only: the tau = 1 surface
};

struct GradientMesh {
  MeshSpec spec;
  bool has_baseline = false;
  std::vector<MeshPoint> points;  // row-major: p index outer, tau index inner
};

/// Surface of dL/dz_i over (p_i, tau_i), plus the no-temperature baseline.
GradientMesh logit_mesh(const MeshSpec& spec, int i);

/// Surface of dL/dztau_i over (p_i, tau_i). The free logit is solved from
/// p = sigma(z ./ tau); the other logit is fixed (0 for i = 0, sign_z0 for
/// i = 1). Grid points violating the requested sign of z_0 are absent.
GradientMesh temperature_mesh(const MeshSpec& spec, int i, int sign_z0);

/// Columns: p, tau, gradient, baseline-gradient (empty for absent points).
void write_mesh_csv(const GradientMesh& mesh, const std::string& path);

}  // namespace ctmos
