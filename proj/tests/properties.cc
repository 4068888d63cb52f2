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

#include "properties.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "frozen_values.h"
#include "json.hpp"
#include "lipdp/accountant.h"
#include "lipdp/bound_engine.h"
#include "lipdp/config.h"
#include "lipdp/network.h"
#include "lipdp/numerics.h"
#include "lipdp/oracles.h"
#include "lipdp/trainer.h"
#include "test_util.h"

namespace lipdp::properties {
namespace {

using testing::coin;
using testing::random_tensor;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

Verdict verdict(bool pass, std::string detail) {
  return {pass, false, std::move(detail)};
}

// Relative error of two gradient vectors; two (numerically) zero vectors agree.
double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale < 1e-12) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

// ---------------------------------------------------------------- soundness

}  // namespace

Verdict bound_soundness(std::size_t networks, std::size_t samples,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t violations = 0, checks = 0;
  double max_ratio = 0.0;
  std::string worst;
  for (std::size_t n = 0; n < networks; ++n) {
    const testing::RandomModel m = testing::random_model(rng);
    Network net = Network::build(m.spec, rng());
    testing::randomize_biases(net, rng);
    const Tensor x = testing::samples_in_ball(samples, m.spec.input_shape, m.x0, rng);
    const Tensor y = testing::random_labels(samples, m.classes, m.loss, rng);
    const SensitivityReport report =
        backpropagation_for_bounds(net, m.x0, m.loss, samples, kReplaceOneFactor);
    const auto norms = oracles::per_sample_gradient_norms(net, x, y, m.loss);
    for (std::size_t d = 0; d < net.depth(); ++d) {
      if (!net.layer(d).has_params()) continue;
      const double bound = report.per_sample_bound(d);
      for (std::size_t i = 0; i < samples; ++i) {
        ++checks;
        if (norms[d][i] > bound + 1e-9) ++violations;
        const double ratio = bound > 0.0 ? norms[d][i] / bound : 0.0;
        if (ratio > max_ratio) {
          max_ratio = ratio;
          worst = "network " + std::to_string(n) + " layer " + std::to_string(d) +
                  " (" + std::string(to_string(net.layer(d).desc.kind)) + ")";
        }
      }
    }
  }
  return verdict(violations == 0,
                 std::to_string(networks) + " networks, " + std::to_string(checks) +
                     " norm checks, " + std::to_string(violations) +
                     " violations, max observed/bound " + fmt(max_ratio) + " at " +
                     worst);
}

// --------------------------------------------------------- finite differences

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kKinkMargin = 1e-3;

// Cotangent arriving at the output of layer `stop` for a chain without
// residual spans after it.
Tensor cotangent_at(const Network& net, const ForwardTrace& trace,
                    const Tensor& output_cotangent, std::size_t stop) {
  Tensor g = output_cotangent;
  for (std::size_t d = net.depth(); d-- > stop + 1;) {
    g = vjp(net.layer(d), trace.inputs[d], g).input_cotangent;
  }
  return g;
}

// True when no activation, projection, clip or loss kink lies within
// kKinkMargin of the evaluation point.
bool away_from_kinks(const Network& net, const Tensor& x, const Tensor& y,
                     const LossKind& loss) {
  const ForwardTrace trace = net.forward_trace(x);
  const Tensor& out = trace.output();
  const std::vector<double> g = loss_gradient(loss, out.values(), y.values());
  for (std::size_t d = 0; d < net.depth(); ++d) {
    const Layer& l = net.layer(d);
    const Tensor& in = trace.inputs[d];
    switch (l.desc.kind) {
      case LayerKind::kReLU:
        for (double v : in.values()) {
          if (std::abs(v) < kKinkMargin) return false;
        }
        break;
      case LayerKind::kGroupSort2:
        for (std::size_t k = 0; k + 1 < in.size(); k += 2) {
          if (std::abs(in[k] - in[k + 1]) < kKinkMargin) return false;
        }
        break;
      case LayerKind::kBoundedInput:
        if (std::abs(in.norm() - l.desc.input_bound) < kKinkMargin) return false;
        break;
      case LayerKind::kScaledL2NormPooling2D: {
        const Tensor pooled = forward(l, in);
        for (double v : pooled.values()) {
          if (v < kKinkMargin) return false;
        }
        break;
      }
      case LayerKind::kClipGradient: {
        const Tensor ct = cotangent_at(net, trace, Tensor(out.shape(), g), d);
        if (std::abs(ct.norm() - l.desc.clip) < kKinkMargin * l.desc.clip) return false;
        break;
      }
      default:
        break;
    }
  }
  switch (loss.type) {
    case LossType::kMulticlassHinge:
    case LossType::kHingeKR:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double s = y[i] > 0.5 ? 1.0 : -1.0;
        if (std::abs(loss.margin / 2.0 - s * out[i]) < kKinkMargin) return false;
      }
      break;
    case LossType::kKCosineSimilarity:
      if (std::abs(out.norm() - loss.k * loss.x_min) < kKinkMargin) return false;
      break;
    default:
      break;
  }
  return true;
}

// ClipGradient rescales only the backward pass, so below a clip the analytic
// gradient is the true one times min(1, C / |cotangent|).
std::vector<double> clip_scales(const Network& net, const ForwardTrace& trace,
                                const Tensor& output_cotangent) {
  std::vector<double> scale(net.depth() + 1, 1.0);
  double s = 1.0;
  for (std::size_t d = net.depth(); d-- > 0;) {
    scale[d + 1] = s;
    const Layer& l = net.layer(d);
    if (l.desc.kind == LayerKind::kClipGradient) {
      const double n = cotangent_at(net, trace, output_cotangent, d).norm();
      if (n > l.desc.clip) s *= l.desc.clip / n;
    }
  }
  scale[0] = s;
  return scale;  // scale[d + 1] applies to layer d, scale[0] to the input
}

double loss_at(const Network& net, const Tensor& x, const Tensor& y,
               const LossKind& loss) {
  return loss_value(loss, net.forward(x).values(), y.values());
}

struct FdCase {
  std::string name;
  NetworkSpec spec;
};

std::vector<FdCase> fd_cases(std::size_t outputs) {
  std::vector<FdCase> cases;
  {
    FdCase c{"conv stack", {{8, 8, 2}, {}}};
    auto& L = c.spec.layers;
    L = {bounded_input(1.0),
         spectral_conv2d(2, 3, 3, 1.0, ConvMode::kPlain, Padding::kZero, 1),
         bias(0.5),
         group_sort2()};
    for (const auto& d : make_residual(
             {spectral_conv2d(2, 3, 3, 1.0, ConvMode::kRko, Padding::kCircular, 1),
              tanh_activation()},
             MergeRule::kLipschitzAdd)) {
      L.push_back(d);
    }
    L.push_back(spectral_conv2d(4, 3, 2, 1.0, ConvMode::kPlain, Padding::kCircular, 2));
    // ReLU here would often zero a whole pooling window, the norm's kink.
    L.push_back(group_sort2());
    L.push_back(scaled_l2_norm_pooling2d(2, 2));
    L.push_back(flatten());
    L.push_back(layer_centering());
    L.push_back(ortho_dense(16, 1.5));
    L.push_back(bias(0.5));
    for (const auto& d : make_residual({spectral_dense(16, 1.2), relu()}, MergeRule::kAdd)) {
      L.push_back(d);
    }
    L.push_back(clip_gradient(0.05));
    L.push_back(spectral_dense(outputs, 2.0));
    L.push_back(bias(0.3));
    cases.push_back(std::move(c));
  }
  {
    FdCase c{"dense chain", {{6}, {}}};
    c.spec.layers = {spectral_dense(8, 1.5), tanh_activation(), ortho_dense(8),
                     group_sort2(), clip_gradient(10.0), ortho_dense(outputs, 3.0)};
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

Verdict gradient_correctness(std::size_t trials_per_case, std::uint64_t seed) {
  const std::vector<LossKind> losses = {
      LossKind::tau_cce(1.0),
      LossKind::multiclass_hinge(1.0),
      LossKind::kantorovich_rubinstein(),
      LossKind::hinge_kr(1.0, 2.0),
      LossKind::k_cosine_similarity(1.0, 0.5),
      LossKind::binary_crossentropy(),
  };
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::string worst_at = "none";
  std::size_t evaluated = 0, rejected_points = 0;
  for (const LossKind& loss : losses) {
    const bool binary = loss.type == LossType::kBinaryCrossentropy;
    const std::size_t outputs = binary ? 1 : 3;
    for (const FdCase& c : fd_cases(outputs)) {
      for (std::size_t t = 0; t < trials_per_case; ++t) {
        Network net = Network::build(c.spec, rng());
        testing::randomize_biases(net, rng);
        // Nudge: redraw the point until it sits away from every kink.
        Tensor x, y;
        int tries = 0;
        do {
          const double radius = coin(rng) ? 0.7 : 1.4;
          x = testing::samples_in_ball(1, c.spec.input_shape, radius, rng)
                  .reshaped(c.spec.input_shape);
          y = testing::random_labels(1, outputs == 1 ? 2 : outputs, loss, rng)
                  .reshaped({outputs});
          ++tries;
        } while (!away_from_kinks(net, x, y, loss) && tries < 200);
        rejected_points += std::size_t(tries - 1);
        if (!away_from_kinks(net, x, y, loss)) {
          return verdict(false, "no kink-free point found for " + c.name);
        }
        const ForwardTrace trace = net.forward_trace(x);
        const auto g = loss_gradient(loss, trace.output().values(), y.values());
        const Tensor out_ct(trace.output().shape(), g);
        const Network::Gradients an = net.backward(trace, out_ct);
        const std::vector<double> scale = clip_scales(net, trace, out_ct);
        auto scaled = [](std::vector<double> v, double f) {
          for (double& e : v) e *= f;
          return v;
        };
        auto record = [&](double err, const std::string& where) {
          ++evaluated;
          if (err > worst) {
            worst = err;
            worst_at = std::string(to_string(loss.type)) + "/" + c.name + "/" + where;
          }
        };
        for (std::size_t d = 0; d < net.depth(); ++d) {
          if (!net.layer(d).has_params()) continue;
          Network probe = net;
          Tensor& param = probe.layer(d).param;
          const auto fd = oracles::finite_difference_gradient(
              [&](std::span<const double> p) {
                std::copy(p.begin(), p.end(), param.values().begin());
                return loss_at(probe, x, y, loss);
              },
              net.layer(d).param.values(), kFdStep);
          record(relative_error(scaled(fd, scale[d + 1]), an.params[d].values()),
                 "layer " + std::to_string(d) + " " +
                     std::string(to_string(net.layer(d).desc.kind)));
        }
        const auto fd_x = oracles::finite_difference_gradient(
            [&](std::span<const double> p) {
              return loss_at(net, Tensor(x.shape(), {p.begin(), p.end()}), y, loss);
            },
            x.values(), kFdStep);
        record(relative_error(scaled(fd_x, scale[0]), an.input_cotangent.values()), "input");
      }
    }
  }
  return verdict(worst <= 1e-6, std::to_string(evaluated) +
                                    " gradient blocks, max relative error " +
                                    fmt(worst) + " at " + worst_at + ", " +
                                    std::to_string(rejected_points) +
                                    " points redrawn near kinks");
}

// ------------------------------------------------------------------ spectral

Verdict spectral_machinery(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double power_err = 0.0, bjorck_res = 0.0, idem = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t r = testing::pick(rng, 1, 48), c = testing::pick(rng, 1, 48);
    const Tensor w = random_tensor({r, c}, rng, testing::uniform(rng, 0.1, 3.0));
    const auto svd = oracles::svd_reference(w);
    if (!svd.converged) return verdict(false, "Jacobi SVD did not converge");
    const double top = svd.singular_values.front();
    power_err = std::max(power_err, std::abs(spectral_norm(w) - top) / top);

    const BjorckResult b = bjorck_orthonormalize(w * (1.0 / top));
    bjorck_res = std::max(bjorck_res, orthogonality_residual(b.matrix));

    const double target = testing::uniform(rng, 0.2, 2.0);
    PowerIterationState s1, s2;
    const Tensor once = project_spectral(w, target, s1);
    const Tensor twice = project_spectral(once, target, s2);
    idem = std::max(idem, max_abs_diff(once, twice));
  }
  const bool pass = power_err <= 1e-8 && bjorck_res <= 1e-6 && idem <= 1e-12;
  return verdict(pass, "power iteration rel. error " + fmt(power_err) +
                           ", Bjorck residual " + fmt(bjorck_res) +
                           ", projection idempotence " + fmt(idem));
}

// ---------------------------------------------------------------- closed form

Verdict closed_form_consistency() {
  // GNP bias-free chains: every Delta_d is factor * L * X0 / b.
  const std::vector<LossKind> losses = {LossKind::tau_cce(0.25),
                                        LossKind::multiclass_hinge(1.0),
                                        LossKind::hinge_kr(1.0, 5.0),
                                        LossKind::kantorovich_rubinstein()};
  double gnp_err = 0.0;
  for (const LossKind& loss : losses) {
    for (double x0 : {0.5, 1.0, 3.7}) {
      for (std::size_t b : {1u, 32u, 250u}) {
        for (double factor : {kReplaceOneFactor, kAddRemoveFactor}) {
          const NetworkSpec spec{{12},
                                 {ortho_dense(16), group_sort2(), ortho_dense(16),
                                  group_sort2(), ortho_dense(8), group_sort2(),
                                  ortho_dense(4)}};
          const Network net = Network::build(spec, 17);
          const SensitivityReport r =
              backpropagation_for_bounds(net, x0, loss, b, factor);
          // Evaluated in the cascade's own order: G = factor L / b, then G X0.
          const double expected = factor * lipschitz_constant(loss) / double(b) * x0;
          for (std::size_t d : net.parameterized_layers()) {
            gnp_err = std::max(gnp_err,
                               std::abs(r.sensitivities[d] - expected) / expected);
          }
        }
      }
    }
  }

  // T blocks of dense(U) + bias(B) + GroupSort (S = 1), then a final
  // dense(U) + bias(B) head: T + 1 affine layers, alpha = U.
  double worst_ratio = 0.0;
  std::size_t cases = 0;
  for (double u : {0.5, 1.0, 2.0}) {
    for (int t : {1, 2, 3, 5}) {
      for (double bb : {0.0, 0.5}) {
        for (double x : {0.5, 1.0, 3.0}) {
          NetworkSpec spec{{8}, {}};
          for (int k = 0; k < t; ++k) {
            spec.layers.push_back(spectral_dense(8, u));
            spec.layers.push_back(bias(bb));
            spec.layers.push_back(group_sort2());
          }
          spec.layers.push_back(spectral_dense(8, u));
          spec.layers.push_back(bias(bb));
          const Network net = Network::build(spec, 5);
          const LossKind loss = LossKind::multiclass_hinge(1.0);
          const std::size_t b = 64;
          const SensitivityReport r = backpropagation_for_bounds(net, x, loss, b);
          TheoremInputs in;
          in.s = 1.0;
          in.u = u;
          in.b = bb;
          in.x = x;
          in.t = t;
          in.l = lipschitz_constant(loss);
          const double k = theoretical_gradient_bound(in) * kReplaceOneFactor / double(b);
          worst_ratio = std::max(worst_ratio, r.global_sensitivity / k);
          ++cases;
        }
      }
    }
  }
  const bool pass = gnp_err == 0.0 && worst_ratio <= 1.0 + 1e-12;
  return verdict(pass, "GNP chains max rel. deviation " + fmt(gnp_err) + "; " +
                           std::to_string(cases) +
                           " S,U,B chains over alpha in {0.5,1,2}, max Delta/bound " +
                           fmt(worst_ratio));
}

// ---------------------------------------------------------------- accountant

Verdict accountant_correctness(int max_order) {
  double worst_rel = 0.0, worst_below = 0.0;
  std::string worst_at;
  std::size_t points = 0;
  for (double sigma : {0.8, 1.2, 2.0}) {
    for (double p : {0.001, 0.01, 0.1}) {
      for (int alpha = 2; alpha <= max_order; ++alpha) {
        const double bound = rdp_subsampled_gaussian(sigma, p, alpha);
        const oracles::QuadratureResult q =
            oracles::rdp_numerical_oracle(sigma, p, double(alpha));
        if (!q.converged) {
          return verdict(false, "quadrature did not converge at sigma=" + fmt(sigma) +
                                    " p=" + fmt(p) + " alpha=" + std::to_string(alpha));
        }
        const double rel = (bound - q.value) / q.value;
        ++points;
        if (std::abs(rel) > std::abs(worst_rel)) {
          worst_rel = rel;
          worst_at = "sigma=" + fmt(sigma) + " p=" + fmt(p) + " alpha=" +
                     std::to_string(alpha);
        }
        // The bound may sit below the quadrature only by its tolerance.
        worst_below = std::max(worst_below, -rel);
      }
    }
  }
  AccountantState single(1.0, 1.0, Strategy::kGlobal, 1, 1e-5);
  single.compose_step();
  const EpsilonResult eps = epsilon_at(single);
  double curve_diff = 0.0;
  for (double p : {0.001, 0.02, 0.3, 1.0}) {
    const AccountantState local(2.4, p, Strategy::kLocal, 4, 1e-5);
    const AccountantState global(1.2, p, Strategy::kGlobal, 4, 1e-5);
    for (std::size_t i = 0; i < local.per_step().values.size(); ++i) {
      curve_diff = std::max(curve_diff, std::abs(local.per_step().values[i] -
                                                 global.per_step().values[i]));
    }
  }
  const bool pass = std::abs(worst_rel) <= 0.01 && worst_below <= 1e-8 &&
                    std::abs(eps.epsilon - 5.3026) <= 1e-3 && curve_diff <= 1e-12;
  return verdict(pass, std::to_string(points) + " grid points, max |bound/oracle - 1| " +
                           fmt(std::abs(worst_rel)) + " at " + worst_at +
                           ", max shortfall " + fmt(worst_below) +
                           "; unamplified epsilon " + fmt(eps.epsilon) + " at order " +
                           std::to_string(eps.order) + "; local/global curve diff " +
                           fmt(curve_diff));
}

// ------------------------------------------------------------ clipped BCE/KR

Verdict clipped_bce_kr_equivalence(std::uint64_t seed) {
  Dataset toy = synthetic_two_gaussians(32, 4, 3.0, seed);
  Batch batch;
  batch.x = toy.features;
  batch.y = Tensor({toy.size(), 1});
  for (std::size_t i = 0; i < toy.size(); ++i) {
    batch.y[i] = toy.labels.at(i, 1) > 0.5 ? 1.0 : -1.0;
  }
  NetworkSpec spec{{4}, {spectral_dense(16), bias(0.5), group_sort2(), ortho_dense(8),
                         group_sort2(), ortho_dense(1)}};
  const Network plain = Network::build(spec, seed);

  // Smallest per-sample |d BCE / d yhat| = sigmoid(-y yhat).
  const LossKind bce = LossKind::binary_crossentropy();
  double min_grad = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < toy.size(); ++i) {
    const Tensor out = plain.forward(batch.x.slice(i));
    const Tensor yi = batch.y.slice(i);
    min_grad = std::min(min_grad, std::abs(loss_gradient(bce, out.values(), yi.values())[0]));
  }
  const double clip = 0.5 * min_grad;

  NetworkSpec clipped_spec = spec;
  clipped_spec.layers.push_back(clip_gradient(clip));
  Network clipped = Network::build(clipped_spec, seed);
  for (std::size_t d = 0; d < plain.depth(); ++d) clipped.layer(d) = plain.layer(d);
  const BatchGradient g_bce = batch_gradient(clipped, batch, bce, ExecutionMode::kSerial);

  // Binary KR loss -y yhat: its output cotangent is -y.
  std::vector<Tensor> g_kr(plain.depth());
  for (std::size_t i = 0; i < toy.size(); ++i) {
    const ForwardTrace trace = plain.forward_trace(batch.x.slice(i));
    const Network::Gradients g =
        plain.backward(trace, Tensor::vector({-batch.y[i]}));
    for (std::size_t d = 0; d < plain.depth(); ++d) {
      if (g.params[d].empty()) continue;
      if (g_kr[d].empty()) g_kr[d] = Tensor(g.params[d].shape());
      g_kr[d] += g.params[d];
    }
  }
  double dot_ab = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < plain.depth(); ++d) {
    if (g_kr[d].empty()) continue;
    const Tensor a = g_bce.params[d];
    const Tensor b = g_kr[d] * (clip / double(toy.size()));
    dot_ab += dot(a.values(), b.values());
    na += squared_norm(a.values());
    nb += squared_norm(b.values());
  }
  const double cosine = dot_ab / std::sqrt(na * nb);
  const double norm_ratio = std::sqrt(na / nb);
  return verdict(cosine >= 1.0 - 1e-9,
                 "C = " + fmt(clip) + ", cosine " + fmt(cosine) + " (1 - cos = " +
                     fmt(1.0 - cosine) + "), norm ratio " + fmt(norm_ratio));
}

// -------------------------------------------------------------- CLI helpers

namespace {

int run(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
#ifdef WEXITSTATUS
  return WEXITSTATUS(status);
#else
  return status;
#endif
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

constexpr const char* kDeterminismConfig = R"({
  "model": {
    "input_shape": [4],
    "layers": [
      {"type": "bounded_input", "input_bound": 6.0},
      {"type": "spectral_dense", "units": 16},
      {"type": "bias", "bound": 0.5},
      {"type": "group_sort2"},
      {"type": "residual", "merge": "lip_add", "layers": [
        {"type": "ortho_dense", "units": 16},
        {"type": "group_sort2"}
      ]},
      {"type": "ortho_dense", "units": 2}
    ],
    "loss": {"type": "tau_cce", "tau": 0.5}
  },
  "data": {"dataset": "synthetic", "preprocess": "clip", "input_bound": 6.0,
           "synthetic": {"n_per_class": 200, "dim": 4, "separation": 4.0, "seed": 3}},
  "dp": {"noise_multiplier": 1.5, "delta": 1e-5, "strategy": "local"},
  "optimizer": {"learning_rate": 0.05, "momentum": 0.5, "batch_size": 32,
                "epochs": 3, "audit_every": 1},
  "seed": 11
}
)";

}  // namespace

Verdict determinism(const std::filesystem::path& cli,
                    const std::filesystem::path& work_dir) {
  std::filesystem::create_directories(work_dir);
  const auto config = work_dir / "determinism.json";
  std::ofstream(config) << kDeterminismConfig;
  std::string files[2][2];
  for (int r = 0; r < 2; ++r) {
    const auto out = work_dir / ("run" + std::to_string(r));
    std::filesystem::remove_all(out);
    const int code = run(quoted(cli) + " train --config " + quoted(config) +
                         " --data-dir " + quoted(work_dir) + " --out " + quoted(out) +
                         " > " + quoted(work_dir / "train.log") + " 2>&1");
    if (code != 0) return verdict(false, "train exited with " + std::to_string(code));
    files[r][0] = slurp(out / "metrics.jsonl");
    files[r][1] = slurp(out / "model.ldp");
  }
  const bool nonempty = !files[0][0].empty() && !files[0][1].empty();
  const bool same_metrics = files[0][0] == files[1][0];
  const bool same_checkpoint = files[0][1] == files[1][1];
  return verdict(nonempty && same_metrics && same_checkpoint,
                 std::string("metrics ") + (same_metrics ? "identical" : "differ") +
                     " (" + std::to_string(files[0][0].size()) + " bytes), checkpoint " +
                     (same_checkpoint ? "identical" : "differs") + " (" +
                     std::to_string(files[0][1].size()) + " bytes)");
}

Verdict mnist_end_to_end(const std::filesystem::path& cli,
                         const std::filesystem::path& config_path,
                         const std::filesystem::path& data_dir,
                         const std::filesystem::path& work_dir) {
  if (!std::filesystem::exists(data_dir / "train-images-idx3-ubyte")) {
    return {false, true, "MNIST IDX files not found in " + data_dir.string()};
  }
  const RunConfig config = load_run_config(config_path);
  std::filesystem::create_directories(work_dir);
  const auto out = work_dir / "mnist";
  std::filesystem::remove_all(out);
  const auto start = std::chrono::steady_clock::now();
  const int code = run(quoted(cli) + " train --config " + quoted(config_path) +
                       " --data-dir " + quoted(data_dir) + " --out " + quoted(out) +
                       " > " + quoted(work_dir / "mnist.log") + " 2>&1");
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  if (code != 0) return verdict(false, "train exited with " + std::to_string(code));

  std::ifstream in(out / "metrics.jsonl");
  std::vector<nlohmann::json> records;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) records.push_back(nlohmann::json::parse(line));
  }
  if (records.empty()) return verdict(false, "no metrics written");
  double max_audit = 0.0;
  bool monotone = true;
  double prev_eps = 0.0;
  for (const auto& r : records) {
    if (!r["audit_ratio"].is_null()) {
      max_audit = std::max(max_audit, r["audit_ratio"].get<double>());
    }
    const double e = r["epsilon"].get<double>();
    monotone = monotone && e >= prev_eps;
    prev_eps = e;
  }
  const auto& last = records.back();
  const double acc = last["val_accuracy"].get<double>();
  const double eps = last["epsilon"].get<double>();
  const std::uint64_t steps = last["step"].get<std::uint64_t>();

  // Offline recomputation from (sigma, p, T).
  const TrainTest data = load_datasets(config, data_dir);
  const double p = double(config.train.batch_size) / double(data.train.size());
  const std::size_t noised =
      Network::build(config.model, config.seed).parameterized_layers().size();
  const double sigma_eff = effective_noise_multiplier(
      config.train.noise_multiplier, config.train.strategy, noised);
  const double offline =
      epsilon_after(rdp_curve(sigma_eff, p), steps, config.train.delta).epsilon;

  const bool pass = acc >= 0.85 && eps <= 10.0 && eps == offline &&
                    max_audit <= 1.0 + kAuditTolerance && monotone && minutes <= 30.0;
  return verdict(pass, "val accuracy " + fmt(acc) + ", epsilon " + fmt(eps) +
                           " (offline " + fmt(offline) + (eps == offline ? ", exact" : ", MISMATCH") +
                           ") after " + std::to_string(steps) + " steps, max audit ratio " +
                           fmt(max_audit) + ", " + fmt(minutes) + " min, " +
                           std::to_string(data.train.size()) + " training samples");
}

// ------------------------------------------------------------------ no noise

Verdict no_noise_sanity() {
  RunConfig c;
  c.model.input_shape = {2};
  c.model.layers = {ortho_dense(16), group_sort2(), ortho_dense(16), group_sort2(),
                    ortho_dense(2)};
  c.data.dataset = "synthetic";
  c.data.n_per_class = 500;
  c.data.dim = 2;
  c.data.separation = 10.0;
  c.data.data_seed = 4;
  c.data.preprocess = PreprocessMode::kClip;
  c.data.input_bound = 10.0;
  c.train.input_bound = 10.0;
  c.train.noise_multiplier = 0.0;
  c.train.loss = LossKind::tau_cce(0.1);
  c.train.learning_rate = 0.05;
  c.train.momentum = 0.9;
  c.train.batch_size = 32;
  c.train.epochs = 20;
  c.train.seed = 2;
  const TrainTest data = load_datasets(c, {});
  Network net = Network::build(c.model, 1);
  const FitResult r = fit(net, data.train, data.test, c.train);
  if (r.history.empty()) return verdict(false, "no epochs ran");
  double best = 0.0;
  std::size_t first = 0;
  for (const EpochMetrics& m : r.history) {
    if (m.val_accuracy >= 0.99 && first == 0) first = m.epoch + 1;
    best = std::max(best, m.val_accuracy);
  }
  const bool loss_down = r.history.back().train_loss < r.history.front().train_loss;
  return verdict(first != 0 && loss_down,
                 "best val accuracy " + fmt(best) +
                     (first ? ", reached 0.99 at epoch " + std::to_string(first) : "") +
                     ", train loss " + fmt(r.history.front().train_loss) + " -> " +
                     fmt(r.history.back().train_loss) + ", epsilon " +
                     fmt(r.epsilon.epsilon));
}

// ------------------------------------------------------------- concentration

Verdict concentration_plumbing() {
  bool at_threshold = true, monotone = true;
  for (std::size_t b : {1u, 4u, 10u, 64u, 100u, 1000u, 65536u}) {
    const double u0 = 2.0 / std::sqrt(double(b));
    at_threshold = at_threshold && concentration_tail(u0, b) == 1.0;
    double prev = 1.0;
    for (int k = 1; k <= 200; ++k) {
      const double v = concentration_tail(u0 + 0.05 * k, b);
      monotone = monotone && v <= prev && v >= 0.0;
      prev = v;
    }
    monotone = monotone && prev < 1.0;
  }
  const double v = concentration_tail(1.0, 64);
  const bool frozen = std::abs(v - frozen::kConcentrationB64U1) <= 1e-15;
  return verdict(at_threshold && monotone && frozen,
                 std::string("tail(2/sqrt(b), b) == 1: ") + (at_threshold ? "yes" : "no") +
                     ", nonincreasing in u: " + (monotone ? "yes" : "no") +
                     ", tail(1, 64) = " + fmt(v));
}

}  // namespace lipdp::properties
