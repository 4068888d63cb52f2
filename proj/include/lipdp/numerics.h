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

#ifndef LIPDP_NUMERICS_H_
#define LIPDP_NUMERICS_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lipdp/kernels.h"
#include "lipdp/tensor.h"

namespace lipdp {

// Cached right singular vector for warm-started power iteration. Owned by one
// layer; `u` is empty until the first estimate.
struct PowerIterationState {
  std::vector<double> u;
  double last_estimate = 0.0;
};

struct PowerIterationOptions {
  int max_iters = 100;
  double tol = 1e-9;
};

// Iteration caps; the loop usually stops far earlier on the residual test,
// ||W^T W u - sigma^2 u|| <= tol sigma^2.
inline constexpr PowerIterationOptions kColdPowerIteration{2000, 1e-10};
inline constexpr PowerIterationOptions kWarmPowerIteration{200, 1e-10};

// A linear operator R^n -> R^m given by its action and adjoint action.
struct LinearOperator {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::function<void(std::span<const double>, std::span<double>)> apply;
  std::function<void(std::span<const double>, std::span<double>)> apply_adjoint;
};

// Largest singular value by power iteration on A^T A. Stops when two
// successive estimates differ by less than tol * max(1, sigma) or after
// max_iters. The state is warm-started when its vector has the right size and
// updated in place. A zero operator yields 0 and leaves `state.u` untouched.
double spectral_norm(const LinearOperator& op, PowerIterationState& state,
                     const PowerIterationOptions& options = kColdPowerIteration);
double spectral_norm(const Tensor& w, PowerIterationState& state,
                     const PowerIterationOptions& options = kColdPowerIteration);
double spectral_norm(const Tensor& w);

LinearOperator matrix_operator(const Tensor& w);

struct BjorckResult {
  Tensor matrix;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // ||W^T W - I||_F (or ||W W^T - I||_F when wide)
};

// Björck orthonormalization, W <- W (3I - W^T W) / 2. The caller must
// spectral-normalize first; the iteration diverges for sigma_max > sqrt(3).
// Once the residual drops below tol one further step is taken, which squares
// the residual. On non-convergence the last iterate is returned, flagged.
BjorckResult bjorck_orthonormalize(const Tensor& w, int iters = 50,
                                   double tol = 1e-6);
double orthogonality_residual(const Tensor& w);

// W * min(1, target / sigma_max(W)).
Tensor project_spectral(const Tensor& w, double target,
                        PowerIterationState& state,
                        const PowerIterationOptions& options = kColdPowerIteration);

// b * min(1, bound / ||b||).
Tensor project_bias(const Tensor& b, double bound);
std::vector<double> project_ball(std::span<const double> v, double radius);

Tensor transpose(const Tensor& w);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matvec(const Tensor& w, const Tensor& x);
Tensor matvec_transposed(const Tensor& w, const Tensor& g);
double frobenius_norm(const Tensor& w);

// Cross-correlation of an HWC image with an h x w x C x F kernel.
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride = 1,
              Padding padding = Padding::kZero);

}  // namespace lipdp

#endif  // LIPDP_NUMERICS_H_
