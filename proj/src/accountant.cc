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

#include "lipdp/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lipdp {
namespace {

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

void check_sampling(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("sampling probability must be in [0, 1]");
  }
}

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must be in (0, 1)");
  }
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  return strategy == Strategy::kLocal ? "local" : "global";
}

std::optional<Strategy> strategy_from_string(std::string_view name) {
  if (name == "local") return Strategy::kLocal;
  if (name == "global") return Strategy::kGlobal;
  return std::nullopt;
}

const std::vector<int>& rdp_orders() {
  static const std::vector<int> orders = [] {
    std::vector<int> o;
    for (int a = 2; a <= 256; ++a) o.push_back(a);
    return o;
  }();
  return orders;
}

double rdp_gaussian(double sigma, double alpha) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!(alpha > 1.0)) throw std::invalid_argument("order must exceed 1");
  if (std::isinf(sigma)) return 0.0;
  return alpha / (2.0 * sigma * sigma);
}

double rdp_subsampled_gaussian(double sigma, double p, int alpha) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  check_sampling(p);
  if (alpha < 2) throw std::invalid_argument("integer order must be >= 2");
  if (p == 0.0 || std::isinf(sigma)) return 0.0;
  if (p == 1.0) return rdp_gaussian(sigma, alpha);
  // A_alpha = sum_k C(alpha,k) q^{alpha-k} p^k e^{k(k-1)/(2 sigma^2)}. The
  // binomial weights sum to 1, so A_alpha - 1 is a sum of nonnegative terms
  // weighted by expm1; this keeps full relative accuracy when A_alpha ~ 1.
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> terms;
  terms.reserve(alpha - 1);
  double top = -std::numeric_limits<double>::infinity();
  for (int k = 2; k <= alpha; ++k) {
    const double x = double(k) * double(k - 1) * inv;
    const double log_expm1 = x > 30.0 ? x + std::log1p(-std::exp(-x)) : std::log(std::expm1(x));
    terms.push_back(log_binomial(alpha, k) + (alpha - k) * log_q + k * log_p + log_expm1);
    top = std::max(top, terms.back());
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  const double log_excess = top + std::log(sum);  // log(A_alpha - 1)
  const double log_a = log_excess < 0.0 ? std::log1p(std::exp(log_excess))
                                        : log_excess + std::log1p(std::exp(-log_excess));
  return std::max(0.0, log_a / double(alpha - 1));
}

RdpCurve rdp_curve(double sigma, double p) {
  RdpCurve c;
  c.orders = rdp_orders();
  c.values.reserve(c.orders.size());
  for (int a : c.orders) c.values.push_back(rdp_subsampled_gaussian(sigma, p, a));
  return c;
}

double effective_noise_multiplier(double sigma, Strategy strategy,
                                  std::size_t num_layers) {
  if (strategy == Strategy::kGlobal) return sigma;
  if (num_layers == 0) throw std::invalid_argument("local strategy needs D >= 1");
  return sigma / std::sqrt(double(num_layers));
}

AccountantState::AccountantState(double sigma, double p, Strategy strategy,
                                 std::size_t num_layers, double delta)
    : sigma_(sigma),
      p_(p),
      strategy_(strategy),
      num_layers_(num_layers),
      delta_(delta) {
  check_delta(delta);
  per_step_ = rdp_curve(effective_noise_multiplier(sigma, strategy, num_layers), p);
}

RdpCurve AccountantState::accumulated() const {
  RdpCurve c = per_step_;
  for (double& v : c.values) v *= double(steps_);
  return c;
}

AccountantState compose_step(AccountantState state) {
  state.compose_step();
  return state;
}

EpsilonResult epsilon_at(const RdpCurve& curve, double delta) {
  check_delta(delta);
  const double log_inv_delta = -std::log(delta);
  EpsilonResult best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const double e =
        curve.values[i] + log_inv_delta / double(curve.orders[i] - 1);
    if (e < best.epsilon) best = {e, curve.orders[i]};
  }
  return best;
}

EpsilonResult epsilon_after(const RdpCurve& per_step, std::uint64_t steps,
                            double delta) {
  check_delta(delta);
  if (steps == 0) return {0.0, 0};
  RdpCurve c = per_step;
  for (double& v : c.values) v *= double(steps);
  return epsilon_at(c, delta);
}

EpsilonResult epsilon_at(const AccountantState& state, double delta) {
  return epsilon_after(state.per_step(), state.steps(), delta);
}

EpsilonResult epsilon_at(const AccountantState& state) {
  return epsilon_at(state, state.delta());
}

std::uint64_t max_steps_for_budget(double epsilon_max, double delta,
                                   double sigma, double p, Strategy strategy,
                                   std::size_t num_layers) {
  if (!(epsilon_max > 0.0)) throw std::invalid_argument("epsilon_max must be > 0");
  const AccountantState state(sigma, p, strategy, num_layers, delta);
  const RdpCurve& curve = state.per_step();
  auto within = [&](std::uint64_t t) {
    return epsilon_after(curve, t, delta).epsilon <= epsilon_max;
  };
  if (!within(1)) return 0;
  if (within(kUnboundedSteps)) return kUnboundedSteps;
  std::uint64_t lo = 1;
  std::uint64_t hi = 2;
  while (within(hi)) {
    lo = hi;
    hi *= 2;
  }
  // Invariant: within(lo) and !within(hi).
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    (within(mid) ? lo : hi) = mid;
  }
  return lo;
}

double calibrate_gaussian_classic(double epsilon, double delta) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  check_delta(delta);
  return std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

}  // namespace lipdp
