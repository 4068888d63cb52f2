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

#include "lipdp/bound_engine.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lipdp {

double SensitivityReport::per_sample_bound(std::size_t d) const {
  return double(batch_size) * sensitivities.at(d) / neighboring_factor;
}

SensitivityReport backpropagation_for_bounds(const Network& net, double x0,
                                             const LossKind& loss,
                                             std::size_t batch_size,
                                             double neighboring_factor) {
  for (std::size_t d = 0; d < net.depth(); ++d) {
    const double v = constraint_violation(net.layer(d));
    if (v > kProjectionTolerance) {
      throw std::invalid_argument(
          "layer " + std::to_string(d) + " (" +
          std::string(to_string(net.layer(d).desc.kind)) +
          ") violates its Lipschitz constraint by " + std::to_string(v) +
          "; project the network first");
    }
  }
  return backpropagation_for_bounds_unchecked(net, x0, loss, batch_size,
                                              neighboring_factor);
}

SensitivityReport backpropagation_for_bounds_unchecked(
    const Network& net, double x0, const LossKind& loss, std::size_t batch_size,
    double neighboring_factor) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (!(x0 >= 0.0)) throw std::invalid_argument("input bound must be >= 0");
  if (neighboring_factor != kReplaceOneFactor &&
      neighboring_factor != kAddRemoveFactor) {
    throw std::invalid_argument("neighboring factor must be 1 or 2");
  }
  const std::size_t depth = net.depth();
  SensitivityReport r;
  r.batch_size = batch_size;
  r.loss_constant = lipschitz_constant(loss);
  r.neighboring_factor = neighboring_factor;
  r.input_bounds.resize(depth + 1);
  r.backward_factors.assign(depth, 0.0);
  r.sensitivities.assign(depth, 0.0);

  // Forward: skip bounds are stacked at splits and folded in at merges.
  r.input_bounds[0] = x0;
  std::vector<double> skips;
  for (std::size_t d = 0; d < depth; ++d) {
    const LayerDescriptor& desc = net.layer(d).desc;
    const double x = r.input_bounds[d];
    double out = x;
    if (desc.kind == LayerKind::kResidualSplit) {
      skips.push_back(x);
    } else if (desc.kind == LayerKind::kResidualMerge) {
      out = jacobian_input_bound(desc) * (x + skips.back());
      skips.pop_back();
    } else {
      out = propagate_input_bound(desc, x);
    }
    r.input_bounds[d + 1] = out;
  }

  // Backward: the cotangent bound entering a merge is scaled per branch and
  // the skip share is stacked until the matching split adds it back.
  const double scale = neighboring_factor / double(batch_size);
  double g = scale * r.loss_constant;
  std::vector<double> skip_g;
  for (std::size_t d = depth; d-- > 0;) {
    const Layer& layer = net.layer(d);
    const LayerDescriptor& desc = layer.desc;
    if (desc.kind == LayerKind::kClipGradient) g = std::min(g, scale * desc.clip);
    r.backward_factors[d] = g;
    if (layer.has_params()) {
      r.sensitivities[d] = g * jacobian_param_bound(layer, r.input_bounds[d]);
    }
    if (desc.kind == LayerKind::kResidualMerge) {
      g *= jacobian_input_bound(desc);
      skip_g.push_back(g);
    } else if (desc.kind == LayerKind::kResidualSplit) {
      g += skip_g.back();
      skip_g.pop_back();
    } else {
      g *= jacobian_input_bound(desc);
    }
  }
  r.global_sensitivity = global_sensitivity(r.sensitivities);
  return r;
}

double global_sensitivity(const std::vector<double>& sensitivities) {
  double s = 0.0;
  for (double v : sensitivities) s += v * v;
  return std::sqrt(s);
}

double global_sensitivity(const SensitivityReport& report) {
  return global_sensitivity(report.sensitivities);
}

double activation_norm_bound(int t, double s, double u, double b, double x) {
  if (t < 1) throw std::invalid_argument("activation_norm_bound: t must be >= 1");
  const double su = s * u;
  if (std::abs(su - 1.0) < 1e-12) return s * x + double(t) * s * b;
  const double beta = s * b / (1.0 - su);
  return std::pow(su, t) * (x - beta) + beta;
}

double theoretical_gradient_bound(const TheoremInputs& in) {
  if (in.t < 1) throw std::invalid_argument("theorem bound: T must be >= 1");
  const double t = in.t;
  const double s2 = in.s * in.s;
  const double a = in.alpha();
  double q;
  if (std::abs(a - 1.0) < 1e-9) {
    q = 1.0 + in.x * in.x + t * (1.0 + s2 * in.x * in.x) +
        s2 * in.b * in.x * t * (t + 1.0) +
        s2 * in.b * in.b * t * (t + 1.0) * (2.0 * t + 1.0) / 6.0;
    return in.l * std::sqrt(q);
  }
  // The alpha != 1 closed form equals sum_{t=0}^{T} a^{2(T-t)} (1 + y_t^2)
  // with y_t = a^t X + S B (1 + a + ... + a^{t-1}). Summing directly avoids
  // the cancellation of beta^2 terms as a approaches 1.
  q = 0.0;
  double y = in.x, geometric = 0.0, power = 1.0;
  for (int k = 0; k <= in.t; ++k) {
    if (k > 0) {
      geometric += power;
      power *= a;
      y = power * in.x + in.s * in.b * geometric;
    }
    q += std::pow(a, 2.0 * (t - k)) * (1.0 + y * y);
  }
  return in.l * std::sqrt(q);
}

double concentration_tail(double u, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  const double rb = std::sqrt(double(batch_size));
  const double lo = 2.0 / rb;
  if (u < lo) {
    throw std::invalid_argument("concentration bound needs u >= 2/sqrt(b) = " +
                                std::to_string(lo));
  }
  const double d = u - lo;
  return std::exp(-(rb / 8.0) * d * d);
}

}  // namespace lipdp
