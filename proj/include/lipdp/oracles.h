// Copyright 2026 The lipdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LIPDP_ORACLES_H_
#define LIPDP_ORACLES_H_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lipdp/kernels.h"
#include "lipdp/losses.h"
#include "lipdp/network.h"
#include "lipdp/tensor.h"

// Brute-force references. None of these reuse the code paths they check:
// loops are written out directly and reductions are independent.
namespace lipdp::oracles {

struct OracleReport {
  std::string quantity;
  double reference = 0.0;
  double implementation = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Compares on relative error, relative to max(|reference|, 1e-300).
OracleReport compare(std::string quantity, double reference,
                     double implementation, double rel_threshold);
std::string to_string(const OracleReport& report);

// Central differences, one coordinate at a time.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> point, double step = 1e-5);

// norms[d][i]: gradient norm of layer d's parameters for sample i alone, with
// no averaging. Parameterless layers get zeros.
std::vector<std::vector<double>> per_sample_gradient_norms(
    const Network& net, const Tensor& inputs, const Tensor& labels,
    const LossKind& loss);

struct SvdResult {
  std::vector<double> singular_values;  // descending
  bool converged = false;
  int sweeps = 0;
};
// One-sided Jacobi on the columns of the (transposed if wide) matrix.
SvdResult svd_reference(const Tensor& w, double tol = 1e-12, int max_sweeps = 60);

// Same-padding cross-correlation written as six nested loops.
Tensor naive_conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride,
                    Padding padding);

struct QuadratureResult {
  double value = 0.0;
  bool converged = false;
};
// Renyi divergence of order alpha between the subsampled Gaussian mixture
// (1-p) N(0, s^2) + p N(1, s^2) and N(0, s^2), maximized over both
// directions, by adaptive quadrature in log space.
QuadratureResult rdp_numerical_oracle(double sigma, double p, double alpha,
                                      double rel_tol = 1e-8);

}  // namespace lipdp::oracles

#endif  // LIPDP_ORACLES_H_
