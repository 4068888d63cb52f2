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

#include "lipdp/trainer.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lipdp/oracles.h"

namespace lipdp {
namespace {

// Samples per reduction chunk and chunks per wave. Both are fixed so the
// summation order never depends on the thread count.
constexpr std::size_t kChunk = 8;
constexpr std::size_t kWave = 16;

constexpr std::uint64_t kDataStreamTag = 0x6461746173747265ULL;
constexpr std::uint64_t kNoiseStreamTag = 0x6e6f697365737472ULL;

std::mt19937_64 tagged_stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                    std::uint32_t(tag), std::uint32_t(tag >> 32)};
  return std::mt19937_64(seq);
}

struct ChunkSum {
  std::vector<Tensor> params;
  double loss = 0.0;
};

// Sum of per-sample gradients over samples [begin, end), in index order.
ChunkSum chunk_gradient(const Network& net, const Batch& batch,
                        const LossKind& loss, std::size_t begin,
                        std::size_t end) {
  ChunkSum sum;
  sum.params.resize(net.depth());
  for (std::size_t i = begin; i < end; ++i) {
    const ForwardTrace trace = net.forward_trace(batch.x.slice(i));
    const Tensor y = batch.y.slice(i);
    const auto out = trace.output().values();
    sum.loss += loss_value(loss, out, y.values());
    const Tensor cot(trace.output().shape(), loss_gradient(loss, out, y.values()));
    Network::Gradients g = net.backward(trace, cot);
    for (std::size_t d = 0; d < net.depth(); ++d) {
      if (g.params[d].empty()) continue;
      if (sum.params[d].empty()) {
        sum.params[d] = std::move(g.params[d]);
      } else {
        sum.params[d] += g.params[d];
      }
    }
  }
  return sum;
}

void accumulate(ChunkSum& total, ChunkSum&& part) {
  total.loss += part.loss;
  for (std::size_t d = 0; d < total.params.size(); ++d) {
    if (part.params[d].empty()) continue;
    if (total.params[d].empty()) {
      total.params[d] = std::move(part.params[d]);
    } else {
      total.params[d] += part.params[d];
    }
  }
}

const SensitivityReport& sensitivities(const Network& net,
                                       const TrainConfig& config,
                                       TrainerState& state) {
  if (config.refresh == SensitivityRefresh::kPerStep || !state.cached_report) {
    state.cached_report = backpropagation_for_bounds_unchecked(
        net, config.input_bound, config.loss, config.batch_size,
        config.neighboring_factor);
  }
  return *state.cached_report;
}

StepResult train_step(Network& net, const Batch& batch,
                      const TrainConfig& config, TrainerState& state,
                      Strategy strategy) {
  StepResult result;
  if (batch.x.empty() || batch.x.dim(0) != config.batch_size) {
    throw ShapeError("step expects a batch of exactly " +
                     std::to_string(config.batch_size) + " samples");
  }
  if (state.accountant) {
    const EpsilonResult next = epsilon_after(state.accountant->per_step(),
                                             state.steps + 1, config.delta);
    if (next.epsilon > config.epsilon_max) return result;
  }
  result.report = sensitivities(net, config, state);
  if (state.accountant) state.accountant->compose_step();

  BatchGradient grad = batch_gradient(net, batch, config.loss);
  result.mean_loss = grad.mean_loss;

  const double sigma = config.noise_multiplier;
  if (strategy == Strategy::kGlobal) {
    result.noise_std = sigma * result.report.global_sensitivity;
  }
  if (sigma > 0.0) {
    for (std::size_t d = 0; d < net.depth(); ++d) {
      if (grad.params[d].empty()) continue;
      const double std_dev = strategy == Strategy::kGlobal
                                 ? result.noise_std
                                 : sigma * result.report.sensitivities[d];
      std::normal_distribution<double> noise(0.0, std_dev);
      for (double& v : grad.params[d].values()) v += noise(state.noise_rng);
    }
  }

  if (state.velocity.empty()) state.velocity.resize(net.depth());
  for (std::size_t d = 0; d < net.depth(); ++d) {
    if (grad.params[d].empty()) continue;
    Tensor& step = grad.params[d];
    if (config.momentum != 0.0) {
      Tensor& v = state.velocity[d];
      if (v.empty()) {
        v = step;
      } else {
        v *= config.momentum;
        v += step;
      }
      step = v;
    }
    step *= config.learning_rate;
    net.layer(d).param -= step;
  }
  net.project_all();
  ++state.steps;
  result.taken = true;
  return result;
}

}  // namespace

std::mt19937_64 data_stream(std::uint64_t seed) {
  return tagged_stream(seed, kDataStreamTag);
}

std::mt19937_64 noise_stream(std::uint64_t seed) {
  return tagged_stream(seed, kNoiseStreamTag);
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.noise_multiplier >= 0.0) || std::isinf(c.noise_multiplier)) {
    fail("noise_multiplier must be finite and >= 0");
  }
  if (!(c.delta > 0.0 && c.delta < 1.0)) fail("delta must be in (0, 1)");
  if (c.neighboring_factor != kReplaceOneFactor &&
      c.neighboring_factor != kAddRemoveFactor) {
    fail("neighboring_factor must be 1 or 2");
  }
  if (!(c.epsilon_max > 0.0)) fail("epsilon_max must be > 0");
  if (c.noise_multiplier == 0.0 && std::isfinite(c.epsilon_max)) {
    fail("noise_multiplier 0 cannot meet a finite epsilon_max");
  }
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (!(c.input_bound > 0.0)) fail("input_bound must be > 0");
  validate(c.loss);
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset sub = data.subset(indices);
  return {std::move(sub.features), std::move(sub.labels)};
}

BatchGradient batch_gradient(const Network& net, const Batch& batch,
                             const LossKind& loss, ExecutionMode mode) {
  const std::size_t n = batch.x.dim(0);
  if (n == 0) throw std::invalid_argument("batch_gradient: empty batch");
  if (batch.y.dim(0) != n) throw ShapeError("batch inputs and labels disagree");
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  ChunkSum total;
  total.params.resize(net.depth());
  std::vector<ChunkSum> wave(kWave);
  for (std::size_t first = 0; first < chunks; first += kWave) {
    const std::size_t count = std::min(kWave, chunks - first);
    const bool parallel = mode == ExecutionMode::kParallel && count > 1;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t begin = (first + c) * kChunk;
      wave[c] = chunk_gradient(net, batch, loss, begin, std::min(n, begin + kChunk));
    }
    for (std::size_t c = 0; c < count; ++c) accumulate(total, std::move(wave[c]));
  }
  BatchGradient out;
  out.params = std::move(total.params);
  for (Tensor& t : out.params) {
    if (!t.empty()) t *= 1.0 / double(n);
  }
  out.mean_loss = total.loss / double(n);
  return out;
}

AuditReport audit_gradient_bounds(const Network& net, const Batch& batch,
                                  const LossKind& loss, double x0,
                                  std::size_t batch_size,
                                  double neighboring_factor) {
  const SensitivityReport report = backpropagation_for_bounds_unchecked(
      net, x0, loss, batch_size, neighboring_factor);
  const auto norms =
      oracles::per_sample_gradient_norms(net, batch.x, batch.y, loss);
  AuditReport out;
  out.per_layer_max_ratio.assign(net.depth(), 0.0);
  for (std::size_t d = 0; d < net.depth(); ++d) {
    if (!net.layer(d).has_params()) continue;
    const double bound = report.per_sample_bound(d);
    for (std::size_t i = 0; i < norms[d].size(); ++i) {
      const double observed = norms[d][i];
      double ratio = 0.0;
      if (bound > 0.0) {
        ratio = observed / bound;
      } else if (observed > 0.0) {
        ratio = std::numeric_limits<double>::infinity();
      }
      out.per_layer_max_ratio[d] = std::max(out.per_layer_max_ratio[d], ratio);
      if (ratio > out.max_ratio) {
        out.max_ratio = ratio;
        out.worst_layer = d;
        out.worst_sample = i;
        out.worst_observed = observed;
        out.worst_bound = bound;
      }
    }
  }
  return out;
}

std::string describe(const AuditReport& r) {
  std::ostringstream os;
  os.precision(12);
  os << "audit max_ratio=" << r.max_ratio << " layer=" << r.worst_layer
     << " sample=" << r.worst_sample << " observed=" << r.worst_observed
     << " bound=" << r.worst_bound << " per_layer=[";
  for (std::size_t d = 0; d < r.per_layer_max_ratio.size(); ++d) {
    os << (d ? ", " : "") << r.per_layer_max_ratio[d];
  }
  os << "]";
  return os.str();
}

TrainerState::TrainerState(const Network& net, const TrainConfig& config,
                           std::size_t dataset_size)
    : noise_rng(noise_stream(config.seed)) {
  validate(config);
  if (dataset_size == 0) throw std::invalid_argument("empty training set");
  if (config.batch_size > dataset_size) {
    throw std::invalid_argument("batch size exceeds training set size");
  }
  noised_layers = net.parameterized_layers().size();
  if (noised_layers == 0) throw std::invalid_argument("network has no parameters");
  sampling_probability = double(config.batch_size) / double(dataset_size);
  if (config.noise_multiplier > 0.0) {
    accountant.emplace(config.noise_multiplier, sampling_probability,
                       config.strategy, noised_layers, config.delta);
  }
}

EpsilonResult TrainerState::epsilon() const {
  if (!accountant) return {std::numeric_limits<double>::infinity(), 0};
  return epsilon_at(*accountant);
}

StepResult dp_train_step_local(Network& net, const Batch& batch,
                               const TrainConfig& config, TrainerState& state) {
  return train_step(net, batch, config, state, Strategy::kLocal);
}

StepResult dp_train_step_global(Network& net, const Batch& batch,
                                const TrainConfig& config, TrainerState& state) {
  return train_step(net, batch, config, state, Strategy::kGlobal);
}

StepResult dp_train_step(Network& net, const Batch& batch,
                         const TrainConfig& config, TrainerState& state) {
  return train_step(net, batch, config, state, config.strategy);
}

double accuracy(const Network& net, const Dataset& data, const LossKind& loss) {
  const std::size_t n = data.size();
  if (n == 0) return 0.0;
  std::vector<unsigned char> hit(n, 0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor out = net.forward(data.features.slice(i));
    hit[i] = predicted_class(loss, out.values()) ==
             label_class(loss, data.labels.row_span(i));
  }
  std::size_t correct = 0;
  for (unsigned char h : hit) correct += h;
  return double(correct) / double(n);
}

FitResult fit(Network& net, const Dataset& train, const Dataset& val,
              const TrainConfig& config,
              const std::function<void(const EpochMetrics&)>& on_epoch) {
  TrainerState state(net, config, train.size());
  if (train.sample_shape() != net.input_shape()) {
    throw ShapeError("training samples have shape " +
                     shape_to_string(train.sample_shape()) +
                     " but the network expects " +
                     shape_to_string(net.input_shape()));
  }
  // Rejects an unprojected starting point.
  backpropagation_for_bounds(net, config.input_bound, config.loss,
                             config.batch_size, config.neighboring_factor);
  std::uint64_t max_steps = kUnboundedSteps;
  if (state.accountant && std::isfinite(config.epsilon_max)) {
    max_steps = max_steps_for_budget(config.epsilon_max, config.delta,
                                     config.noise_multiplier,
                                     state.sampling_probability, config.strategy,
                                     state.noised_layers);
  }
  const std::vector<std::size_t> params = net.parameterized_layers();
  std::mt19937_64 data_rng = data_stream(config.seed);
  FitResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (state.steps >= max_steps) {
      result.budget_exhausted = true;
      break;
    }
    state.cached_report.reset();
    const auto batches = epoch_batches(train.size(), config.batch_size, data_rng);
    double loss_sum = 0.0;
    std::size_t taken = 0;
    SensitivityReport last_report;
    const std::vector<std::size_t>* last_batch = nullptr;
    for (const auto& idx : batches) {
      if (state.steps >= max_steps) break;
      const StepResult r = dp_train_step(net, make_batch(train, idx), config, state);
      if (!r.taken) break;
      loss_sum += r.mean_loss;
      ++taken;
      last_report = r.report;
      last_batch = &idx;
    }
    if (state.steps >= max_steps) result.budget_exhausted = true;

    EpochMetrics m;
    m.epoch = epoch;
    m.step = state.steps;
    m.train_loss = taken ? loss_sum / double(taken) : 0.0;
    m.val_accuracy = accuracy(net, val, config.loss);
    const EpsilonResult eps = state.epsilon();
    m.epsilon = eps.epsilon;
    m.rdp_order = eps.order;
    m.delta = config.delta;
    m.strategy = config.strategy;
    for (std::size_t d : params) {
      m.per_layer_sensitivity.push_back(
          last_report.sensitivities.empty() ? 0.0 : last_report.sensitivities[d]);
    }
    m.noise_multiplier = config.noise_multiplier;
    if (config.audit_every > 0 && (epoch + 1) % config.audit_every == 0 &&
        last_batch != nullptr) {
      const AuditReport audit = audit_gradient_bounds(
          net, make_batch(train, *last_batch), config.loss, config.input_bound,
          config.batch_size, config.neighboring_factor);
      m.audit_ratio = audit.max_ratio;
      if (audit.violated()) {
        throw CertificateViolation("certificate violation at epoch " +
                                   std::to_string(epoch) + ": " + describe(audit));
      }
    }
    m.budget_exhausted = result.budget_exhausted;
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
    if (result.budget_exhausted) break;
  }
  result.steps = state.steps;
  result.epsilon = state.epsilon();
  return result;
}

}  // namespace lipdp
