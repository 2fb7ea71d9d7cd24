#include "ctmos/tensor.hpp"

#include <cmath>

#include "ctmos/errors.hpp"

namespace ctmos {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  v.assign(shape_numel(shape), fill);
}

Tensor Tensor::scalar(double x) {
  Tensor t({1}, x);
  return t;
}

Tensor Tensor::uniform(std::vector<int> s, double lo, double hi, std::mt19937_64& rng) {
  Tensor t(std::move(s));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& x : t.v) x = d(rng);
  return t;
}

std::size_t Tensor::numel() const { return v.size(); }

int Tensor::rows() const {
  if (shape.size() > 2) throw ShapeError("rows() on tensor of rank > 2");
  return shape.size() == 2 ? shape[0] : 1;
}

int Tensor::cols() const {
  if (shape.size() > 2) throw ShapeError("cols() on tensor of rank > 2");
  return shape.size() == 2 ? shape[1] : (shape.empty() ? 1 : shape[0]);
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace ctmos
