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

#ifndef LIPDP_BOUND_ENGINE_H_
#define LIPDP_BOUND_ENGINE_H_

#include <cstddef>
#include <vector>

#include "lipdp/losses.h"
#include "lipdp/network.h"

namespace lipdp {

// Output of the bound backpropagation. Indexing follows the network layers:
// input_bounds[d] bounds the input of layer d (input_bounds.back() the
// output), backward_factors[d] bounds the cotangent arriving at the output of
// layer d, and sensitivities[d] is zero for parameterless layers.
struct SensitivityReport {
  std::vector<double> input_bounds;
  std::vector<double> backward_factors;
  std::vector<double> sensitivities;
  double global_sensitivity = 0.0;
  std::size_t batch_size = 1;
  double loss_constant = 0.0;
  double neighboring_factor = 2.0;

  // Bound on the norm of one sample's gradient for layer d:
  // b * Delta_d / factor.
  double per_sample_bound(std::size_t d) const;
};

inline constexpr double kReplaceOneFactor = 2.0;
inline constexpr double kAddRemoveFactor = 1.0;
// Networks whose constraints are violated by more than this are rejected.
inline constexpr double kProjectionTolerance = 1e-6;

// Forward pass of scalar input bounds, then backward pass of cotangent bounds
// starting from factor * L / b. Throws std::invalid_argument when the network
// is not projected.
SensitivityReport backpropagation_for_bounds(const Network& net, double x0,
                                             const LossKind& loss,
                                             std::size_t batch_size,
                                             double neighboring_factor = kReplaceOneFactor);
// Same, skipping the projection check (for callers that just projected).
SensitivityReport backpropagation_for_bounds_unchecked(
    const Network& net, double x0, const LossKind& loss, std::size_t batch_size,
    double neighboring_factor = kReplaceOneFactor);

// sqrt(sum_d Delta_d^2).
double global_sensitivity(const SensitivityReport& report);
double global_sensitivity(const std::vector<double>& sensitivities);

// Norm bound of the t-th activation of a chain h_t = S(U h_{t-1} + B),
// ||h_0|| <= X.
double activation_norm_bound(int t, double s, double u, double b, double x);

struct TheoremInputs {
  double s = 1.0;  // activation Lipschitz constant
  double u = 1.0;  // affine Lipschitz constant
  double b = 0.0;  // bias bound
  double x = 1.0;  // input bound
  int t = 1;       // depth
  double l = 1.0;  // loss Lipschitz constant

  double alpha() const { return s * u; }
};

// Closed-form bound K on the per-sample gradient norm of a dense Lipschitz
// chain, for the alpha = 1 and alpha != 1 regimes.
double theoretical_gradient_bound(const TheoremInputs& in);

// Tail bound exp(-(sqrt(b)/8)(u - 2/sqrt(b))^2) on the deviation of a
// minibatch gradient from its mean. Requires u >= 2/sqrt(b).
double concentration_tail(double u, std::size_t batch_size);

}  // namespace lipdp

#endif  // LIPDP_BOUND_ENGINE_H_
