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

#ifndef LIPDP_ACCOUNTANT_H_
#define LIPDP_ACCOUNTANT_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace lipdp {

enum class Strategy { kLocal, kGlobal };

std::string_view to_string(Strategy strategy);
std::optional<Strategy> strategy_from_string(std::string_view name);

// Printed with every accounting result: the loader shuffles without
// replacement while amplification assumes Poisson sampling.
inline constexpr std::string_view kSamplingNote =
    "epsilon assumes Poisson sampling with p = b/N; the data loader shuffles "
    "without replacement";

// Renyi orders used for accounting: the integers 2..256.
const std::vector<int>& rdp_orders();

// alpha / (2 sigma^2).
double rdp_gaussian(double sigma, double alpha);
// Integer-order bound for the Poisson-subsampled Gaussian mechanism:
// 1/(alpha-1) log sum_k C(alpha,k) (1-p)^(alpha-k) p^k exp(k(k-1)/(2 sigma^2)).
double rdp_subsampled_gaussian(double sigma, double p, int alpha);

struct RdpCurve {
  std::vector<int> orders;
  std::vector<double> values;
};

// Per-step curve on the default order grid.
RdpCurve rdp_curve(double sigma, double p);

// Noise multiplier the accountant sees: sigma for the global strategy,
// sigma / sqrt(D) for the local one.
double effective_noise_multiplier(double sigma, Strategy strategy,
                                  std::size_t num_layers);

class AccountantState {
 public:
  AccountantState(double sigma, double p, Strategy strategy,
                  std::size_t num_layers, double delta);

  double sigma() const { return sigma_; }
  double sampling_probability() const { return p_; }
  Strategy strategy() const { return strategy_; }
  std::size_t num_layers() const { return num_layers_; }
  double delta() const { return delta_; }
  std::uint64_t steps() const { return steps_; }
  const RdpCurve& per_step() const { return per_step_; }

  // steps x per-step curve.
  RdpCurve accumulated() const;
  void compose_step() { ++steps_; }
  void compose_steps(std::uint64_t n) { steps_ += n; }

 private:
  double sigma_;
  double p_;
  Strategy strategy_;
  std::size_t num_layers_;
  double delta_;
  std::uint64_t steps_ = 0;
  RdpCurve per_step_;
};

// Returns a copy with one more step composed.
AccountantState compose_step(AccountantState state);

struct EpsilonResult {
  double epsilon = 0.0;
  int order = 0;  // minimizing order, 0 when no step was taken
};

// min over orders of rho(alpha) + log(1/delta) / (alpha - 1).
EpsilonResult epsilon_at(const RdpCurve& curve, double delta);
EpsilonResult epsilon_at(const AccountantState& state, double delta);
EpsilonResult epsilon_at(const AccountantState& state);
// Epsilon after `steps` compositions of `per_step`.
EpsilonResult epsilon_after(const RdpCurve& per_step, std::uint64_t steps,
                            double delta);

// Largest T with epsilon(T) <= epsilon_max. Returns 0 when even one step
// exceeds the budget and kUnboundedSteps when steps are free (p = 0).
inline constexpr std::uint64_t kUnboundedSteps = std::uint64_t(1) << 62;
std::uint64_t max_steps_for_budget(double epsilon_max, double delta,
                                   double sigma, double p, Strategy strategy,
                                   std::size_t num_layers);

// sqrt(2 log(1.25/delta)) / epsilon.
double calibrate_gaussian_classic(double epsilon, double delta);

}  // namespace lipdp

#endif  // LIPDP_ACCOUNTANT_H_
