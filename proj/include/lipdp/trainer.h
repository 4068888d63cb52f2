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

#ifndef LIPDP_TRAINER_H_
#define LIPDP_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lipdp/accountant.h"
#include "lipdp/bound_engine.h"
#include "lipdp/data_io.h"
#include "lipdp/losses.h"
#include "lipdp/network.h"

namespace lipdp {

enum class SensitivityRefresh { kPerStep, kPerEpoch };

struct TrainConfig {
  std::size_t batch_size = 32;
  double noise_multiplier = 1.0;  // sigma; 0 disables noise and accounting
  double delta = 1e-5;
  Strategy strategy = Strategy::kGlobal;
  double neighboring_factor = kReplaceOneFactor;
  double epsilon_max = std::numeric_limits<double>::infinity();
  double learning_rate = 0.1;
  double momentum = 0.0;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  std::size_t audit_every = 1;  // epochs between audits, 0 disables
  SensitivityRefresh refresh = SensitivityRefresh::kPerStep;
  LossKind loss;
  double input_bound = 1.0;  // X0 established by preprocessing

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

struct Batch {
  Tensor x;  // b x input shape
  Tensor y;  // b x classes
};
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

enum class ExecutionMode { kSerial, kParallel };

struct BatchGradient {
  std::vector<Tensor> params;  // batch mean, one per layer (empty if none)
  double mean_loss = 0.0;
};
// Mean of per-sample gradients. The parallel mode splits the batch into
// fixed-size chunks and adds the chunk sums in order, so both modes return
// bitwise-identical results for any thread count.
BatchGradient batch_gradient(const Network& net, const Batch& batch,
                             const LossKind& loss,
                             ExecutionMode mode = ExecutionMode::kParallel);

// Raised when the audit finds a gradient above its certified bound.
class CertificateViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kAuditTolerance = 1e-6;

struct AuditReport {
  double max_ratio = 0.0;  // observed / (b Delta_d / factor)
  std::size_t worst_layer = 0;
  std::size_t worst_sample = 0;
  double worst_observed = 0.0;
  double worst_bound = 0.0;
  std::vector<double> per_layer_max_ratio;

  bool violated() const { return max_ratio > 1.0 + kAuditTolerance; }
};
AuditReport audit_gradient_bounds(const Network& net, const Batch& batch,
                                  const LossKind& loss, double x0,
                                  std::size_t batch_size,
                                  double neighboring_factor);
std::string describe(const AuditReport& report);

// Mutable training state kept across steps: the accountant (absent when
// sigma = 0), the noise stream, momentum buffers and cached sensitivities.
struct TrainerState {
  TrainerState(const Network& net, const TrainConfig& config,
               std::size_t dataset_size);

  // Epsilon spent so far; +inf when training without noise.
  EpsilonResult epsilon() const;

  std::optional<AccountantState> accountant;
  std::mt19937_64 noise_rng;
  std::vector<Tensor> velocity;
  std::optional<SensitivityReport> cached_report;
  std::uint64_t steps = 0;
  std::size_t noised_layers = 0;
  double sampling_probability = 0.0;
};

// Seeds of the two independent random streams derived from config.seed.
std::mt19937_64 data_stream(std::uint64_t seed);
std::mt19937_64 noise_stream(std::uint64_t seed);

struct StepResult {
  bool taken = false;  // false when the budget refused the step
  double mean_loss = 0.0;
  SensitivityReport report;
  double noise_std = 0.0;  // global strategy; per-layer values in report
};

// One projected clipless DP-SGD step with per-layer noise sigma * Delta_d.
StepResult dp_train_step_local(Network& net, const Batch& batch,
                               const TrainConfig& config, TrainerState& state);
// One projected clipless DP-SGD step with noise sigma * Delta on every
// coordinate.
StepResult dp_train_step_global(Network& net, const Batch& batch,
                                const TrainConfig& config, TrainerState& state);
// Dispatches on config.strategy.
StepResult dp_train_step(Network& net, const Batch& batch,
                         const TrainConfig& config, TrainerState& state);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::uint64_t step = 0;  // steps taken so far
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double epsilon = 0.0;
  int rdp_order = 0;
  double delta = 0.0;
  Strategy strategy = Strategy::kGlobal;
  std::vector<double> per_layer_sensitivity;  // parameterized layers only
  double noise_multiplier = 0.0;
  std::optional<double> audit_ratio;
  bool budget_exhausted = false;
};

struct FitResult {
  std::vector<EpochMetrics> history;
  std::uint64_t steps = 0;
  EpsilonResult epsilon;
  bool budget_exhausted = false;
};

double accuracy(const Network& net, const Dataset& data, const LossKind& loss);

// Runs epochs until config.epochs or the privacy budget is exhausted. Calls
// `on_epoch` after each record is appended. Throws CertificateViolation when
// an audit fails.
FitResult fit(Network& net, const Dataset& train, const Dataset& val,
              const TrainConfig& config,
              const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace lipdp

#endif  // LIPDP_TRAINER_H_
