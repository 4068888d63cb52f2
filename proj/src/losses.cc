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

#include "lipdp/losses.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "lipdp/tensor.h"

namespace lipdp {
namespace {

constexpr std::array<std::pair<LossType, std::string_view>, 6> kLossNames{{
    {LossType::kTauCategoricalCrossentropy, "tau_cce"},
    {LossType::kMulticlassHinge, "multiclass_hinge"},
    {LossType::kKantorovichRubinstein, "kr"},
    {LossType::kHingeKR, "hinge_kr"},
    {LossType::kKCosineSimilarity, "k_cosine_similarity"},
    {LossType::kBinaryCrossentropy, "binary_crossentropy"},
}};

std::size_t true_class(std::span<const double> y) {
  return static_cast<std::size_t>(
      std::max_element(y.begin(), y.end()) - y.begin());
}

double sign_for(std::span<const double> y, std::size_t i) {
  return y[i] > 0.5 ? 1.0 : -1.0;
}

// softplus(t) = log(1 + exp(t)), without overflow.
double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

}  // namespace

std::string_view to_string(LossType type) {
  for (const auto& [t, name] : kLossNames) {
    if (t == type) return name;
  }
  return "unknown";
}

std::optional<LossType> loss_type_from_string(std::string_view name) {
  for (const auto& [t, n] : kLossNames) {
    if (n == name) return t;
  }
  return std::nullopt;
}

LossKind LossKind::tau_cce(double tau) {
  LossKind k;
  k.type = LossType::kTauCategoricalCrossentropy;
  k.tau = tau;
  return k;
}

LossKind LossKind::multiclass_hinge(double margin) {
  LossKind k;
  k.type = LossType::kMulticlassHinge;
  k.margin = margin;
  return k;
}

LossKind LossKind::kantorovich_rubinstein() {
  LossKind k;
  k.type = LossType::kKantorovichRubinstein;
  return k;
}

LossKind LossKind::hinge_kr(double margin, double alpha) {
  LossKind k;
  k.type = LossType::kHingeKR;
  k.margin = margin;
  k.alpha = alpha;
  return k;
}

LossKind LossKind::k_cosine_similarity(double k_factor, double x_min) {
  LossKind k;
  k.type = LossType::kKCosineSimilarity;
  k.k = k_factor;
  k.x_min = x_min;
  return k;
}

LossKind LossKind::binary_crossentropy() {
  LossKind k;
  k.type = LossType::kBinaryCrossentropy;
  return k;
}

void validate(const LossKind& kind) {
  auto fail = [&kind](const char* what) {
    throw std::invalid_argument(std::string(to_string(kind.type)) + ": " + what);
  };
  switch (kind.type) {
    case LossType::kTauCategoricalCrossentropy:
      if (!(kind.tau > 0.0)) fail("tau must be positive");
      break;
    case LossType::kMulticlassHinge:
      if (!(kind.margin > 0.0)) fail("margin must be positive");
      break;
    case LossType::kHingeKR:
      if (!(kind.margin > 0.0)) fail("margin must be positive");
      if (!(kind.alpha >= 0.0)) fail("alpha must be nonnegative");
      break;
    case LossType::kKCosineSimilarity:
      if (!(kind.k > 0.0) || !(kind.x_min > 0.0)) fail("K and X_min must be positive");
      break;
    default:
      break;
  }
}

void validate_labels(const LossKind& kind, std::span<const double> y_hat,
                     std::span<const double> y) {
  if (y.size() != y_hat.size()) {
    throw ShapeError(std::string(to_string(kind.type)) + ": label length " +
                     std::to_string(y.size()) + " vs logits " +
                     std::to_string(y_hat.size()));
  }
  if (kind.type == LossType::kBinaryCrossentropy) {
    if (y.size() != 1 || (y[0] != 1.0 && y[0] != -1.0)) {
      throw std::invalid_argument(
          "binary_crossentropy: expects one logit and a label in {-1, +1}");
    }
    return;
  }
  std::size_t ones = 0;
  for (double v : y) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw std::invalid_argument("labels must be one-hot");
    }
  }
  if (ones != 1) throw std::invalid_argument("labels must be one-hot");
}

std::vector<double> per_class_values(const LossKind& kind,
                                     std::span<const double> y_hat,
                                     std::span<const double> y) {
  validate_labels(kind, y_hat, y);
  std::vector<double> v(y_hat.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = sign_for(y, i);
    const double hinge = std::max(0.0, kind.margin / 2.0 - s * y_hat[i]);
    const double kr = -s * y_hat[i];
    switch (kind.type) {
      case LossType::kMulticlassHinge:
        v[i] = hinge;
        break;
      case LossType::kKantorovichRubinstein:
        v[i] = kr;
        break;
      case LossType::kHingeKR:
        v[i] = kind.alpha * hinge + kr;
        break;
      default:
        throw std::invalid_argument(std::string(to_string(kind.type)) +
                                    " has no per-class form");
    }
  }
  return v;
}

double loss_value(const LossKind& kind, std::span<const double> y_hat,
                  std::span<const double> y) {
  validate_labels(kind, y_hat, y);
  switch (kind.type) {
    case LossType::kTauCategoricalCrossentropy: {
      const std::size_t j = true_class(y);
      double m = -INFINITY;
      for (double v : y_hat) m = std::max(m, v / kind.tau);
      double s = 0.0;
      for (double v : y_hat) s += std::exp(v / kind.tau - m);
      return m + std::log(s) - y_hat[j] / kind.tau;
    }
    case LossType::kMulticlassHinge:
    case LossType::kKantorovichRubinstein:
    case LossType::kHingeKR: {
      const std::vector<double> v = per_class_values(kind, y_hat, y);
      double s = 0.0;
      for (double t : v) s += t;
      return s / double(v.size());
    }
    case LossType::kKCosineSimilarity: {
      const std::size_t j = true_class(y);
      return -y_hat[j] / std::max(kind.k * kind.x_min, norm2(y_hat));
    }
    case LossType::kBinaryCrossentropy:
      return softplus(-y[0] * y_hat[0]);
  }
  throw std::logic_error("unhandled loss");
}

std::vector<double> loss_gradient(const LossKind& kind,
                                  std::span<const double> y_hat,
                                  std::span<const double> y) {
  validate_labels(kind, y_hat, y);
  const std::size_t n = y_hat.size();
  std::vector<double> g(n, 0.0);
  switch (kind.type) {
    case LossType::kTauCategoricalCrossentropy: {
      const std::size_t j = true_class(y);
      double m = -INFINITY;
      for (double v : y_hat) m = std::max(m, v / kind.tau);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        g[i] = std::exp(y_hat[i] / kind.tau - m);
        s += g[i];
      }
      for (std::size_t i = 0; i < n; ++i) g[i] /= s;
      g[j] -= 1.0;
      for (double& v : g) v /= kind.tau;
      return g;
    }
    case LossType::kMulticlassHinge:
    case LossType::kKantorovichRubinstein:
    case LossType::kHingeKR: {
      const bool with_hinge = kind.type != LossType::kKantorovichRubinstein;
      const bool with_kr = kind.type != LossType::kMulticlassHinge;
      const double hinge_weight =
          kind.type == LossType::kHingeKR ? kind.alpha : 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = sign_for(y, i);
        double d = 0.0;
        if (with_hinge && kind.margin / 2.0 - s * y_hat[i] > 0.0) {
          d -= hinge_weight * s;
        }
        if (with_kr) d -= s;
        g[i] = d / double(n);
      }
      return g;
    }
    case LossType::kKCosineSimilarity: {
      const std::size_t j = true_class(y);
      const double floor = kind.k * kind.x_min;
      const double nrm = norm2(y_hat);
      if (nrm <= floor) {
        g[j] = -1.0 / floor;
        return g;
      }
      // d/dyhat of -yhat_j / ||yhat||.
      for (std::size_t i = 0; i < n; ++i) {
        g[i] = y_hat[j] * y_hat[i] / (nrm * nrm * nrm);
      }
      g[j] -= 1.0 / nrm;
      return g;
    }
    case LossType::kBinaryCrossentropy: {
      const double z = y[0] * y_hat[0];
      // -y * sigmoid(-z)
      const double sig = z >= 0.0 ? std::exp(-z) / (1.0 + std::exp(-z))
                                  : 1.0 / (1.0 + std::exp(z));
      g[0] = -y[0] * sig;
      return g;
    }
  }
  throw std::logic_error("unhandled loss");
}

double lipschitz_constant(const LossKind& kind) {
  validate(kind);
  switch (kind.type) {
    case LossType::kTauCategoricalCrossentropy:
      return std::sqrt(2.0) / kind.tau;
    case LossType::kMulticlassHinge:
    case LossType::kKantorovichRubinstein:
    case LossType::kBinaryCrossentropy:
      return 1.0;
    case LossType::kHingeKR:
      return 1.0 + kind.alpha;
    case LossType::kKCosineSimilarity:
      return 1.0 / (kind.k * kind.x_min);
  }
  throw std::logic_error("unhandled loss");
}

std::size_t predicted_class(const LossKind& kind, std::span<const double> y_hat) {
  if (kind.type == LossType::kBinaryCrossentropy) return y_hat[0] >= 0.0 ? 1 : 0;
  return static_cast<std::size_t>(
      std::max_element(y_hat.begin(), y_hat.end()) - y_hat.begin());
}

std::size_t label_class(const LossKind& kind, std::span<const double> y) {
  if (kind.type == LossType::kBinaryCrossentropy) return y[0] > 0.0 ? 1 : 0;
  return true_class(y);
}

}  // namespace lipdp
