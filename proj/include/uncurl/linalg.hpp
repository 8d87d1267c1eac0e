// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "uncurl/tensor.hpp"

namespace uncurl::linalg {

// Graph-free helpers on plain tensors.

std::vector<double> matvec(const Tensor& a, std::span<const double> x);             // A x
std::vector<double> matvec_transposed(const Tensor& a, std::span<const double> y);  // A^T y
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

}  // namespace uncurl::linalg
