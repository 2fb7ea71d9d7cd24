#pragma once

#include <functional>
#include <map>
#include <string>

#include "ctmos/tensor.hpp"

namespace ctmos {

/// Central-difference gradient of a deterministic scalar function over a
/// named set of parameter tensors. Perturbs every coordinate in place, so
/// f must re-read `params` on each call. eps must lie in [1e-7, 1e-3].
std::map<std::string, Tensor> finite_difference_gradient(
    const std::function<double()>& f, std::map<std::string, Tensor>& params, double eps);

/// max over coordinates of |a-b| / max(|a|, |b|, floor).
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

double relative_error(double a, double b, double floor = 1e-6);

}  // namespace ctmos
