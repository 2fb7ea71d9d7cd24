#include "ctmos/finite_diff.hpp"

#include <cmath>

#include "ctmos/errors.hpp"

namespace ctmos {

std::map<std::string, Tensor> finite_difference_gradient(
    const std::function<double()>& f, std::map<std::string, Tensor>& params, double eps) {
  if (eps < 1e-7 || eps > 1e-3) throw ConfigError("finite differences: eps out of [1e-7, 1e-3]");
  std::map<std::string, Tensor> grads;
  for (auto& [name, t] : params) {
    Tensor g(t.shape, 0.0);
    for (std::size_t i = 0; i < t.v.size(); ++i) {
      const double orig = t.v[i];
      t.v[i] = orig + eps;
      const double fp = f();
      t.v[i] = orig - eps;
      const double fm = f();
      t.v[i] = orig;
      g.v[i] = (fp - fm) / (2.0 * eps);
    }
    grads.emplace(name, std::move(g));
  }
  return grads;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    worst = std::max(worst, relative_error(a.v[i], b.v[i], floor));
  return worst;
}

}  // namespace ctmos
