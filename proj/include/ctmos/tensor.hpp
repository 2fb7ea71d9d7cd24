#pragma once

#include <cstddef>
#include <random>
#include <vector>

namespace ctmos {

/// Dense row-major real array. The differentiation core works in 64-bit
/// precision throughout; 32-bit floats appear only in checkpoint files.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<int> s, double fill = 0.0);
  static Tensor scalar(double x);
  static Tensor uniform(std::vector<int> s, double lo, double hi, std::mt19937_64& rng);

  std::size_t numel() const;
  bool is_scalar() const { return numel() == 1; }

  // 2-D accessors; rows()/cols() require rank <= 2.
  int rows() const;
  int cols() const;
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace ctmos
