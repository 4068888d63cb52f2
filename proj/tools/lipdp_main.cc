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

// Command-line entry point: train, certify, account and audit.

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lipdp/accountant.h"
#include "lipdp/bound_engine.h"
#include "lipdp/checkpoint.h"
#include "lipdp/config.h"
#include "lipdp/trainer.h"

namespace {

using json = nlohmann::ordered_json;
using namespace lipdp;

// Non-finite values (epsilon without noise) become null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json metrics_record(const EpochMetrics& m) {
  json j;
  j["epoch"] = m.epoch;
  j["step"] = m.step;
  j["train_loss"] = number(m.train_loss);
  j["val_accuracy"] = m.val_accuracy;
  j["epsilon"] = number(m.epsilon);
  j["rdp_order"] = m.rdp_order;
  j["delta"] = m.delta;
  j["strategy"] = std::string(to_string(m.strategy));
  j["per_layer_sensitivity"] = m.per_layer_sensitivity;
  j["noise_multiplier"] = m.noise_multiplier;
  j["audit_ratio"] = m.audit_ratio ? number(*m.audit_ratio) : json(nullptr);
  j["budget_exhausted"] = m.budget_exhausted;
  return j;
}

json report_json(const Network& net, const SensitivityReport& r) {
  json j;
  json layers = json::array();
  for (std::size_t d = 0; d < net.depth(); ++d) {
    layers.push_back(std::string(to_string(net.layer(d).desc.kind)));
  }
  j["layers"] = layers;
  j["input_bounds"] = r.input_bounds;
  j["backward_factors"] = r.backward_factors;
  j["per_layer_sensitivity"] = r.sensitivities;
  j["global_sensitivity"] = r.global_sensitivity;
  j["batch_size"] = r.batch_size;
  j["loss_constant"] = r.loss_constant;
  j["neighboring_factor"] = r.neighboring_factor;
  return j;
}

int fail(const std::string& kind, const std::string& message, int code = 1) {
  json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
  return code;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<std::uint64_t> seed) {
  RunConfig config = load_run_config(config_path);
  if (seed) {
    config.seed = *seed;
    config.train.seed = *seed;
  }
  if (config.data.dataset != "synthetic" && !std::filesystem::is_directory(data_dir)) {
    return fail("data not found", "data directory " + data_dir + " does not exist");
  }
  const TrainTest data = load_datasets(config, data_dir);
  Network net = Network::build(config.model, config.seed);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path out(out_dir);
  std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
  if (!metrics) return fail("io", "cannot write " + (out / "metrics.jsonl").string());
  const FitResult result =
      fit(net, data.train, data.test, config.train, [&](const EpochMetrics& m) {
        metrics << metrics_record(m).dump() << "\n";
        metrics.flush();
      });
  save_checkpoint(net, out / "model.ldp");
  json summary;
  summary["epsilon"] = number(result.epsilon.epsilon);
  summary["rdp_order"] = result.epsilon.order;
  summary["delta"] = config.train.delta;
  summary["steps"] = result.steps;
  summary["val_accuracy"] =
      result.history.empty() ? accuracy(net, data.test, config.train.loss)
                             : result.history.back().val_accuracy;
  summary["budget_exhausted"] = result.budget_exhausted;
  summary["sampling_probability"] =
      double(config.train.batch_size) / double(data.train.size());
  summary["note"] = std::string(kSamplingNote);
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_certify(const std::string& config_path) {
  const RunConfig config = load_run_config(config_path);
  const Network net = Network::build(config.model, config.seed);
  const SensitivityReport r = backpropagation_for_bounds(
      net, config.train.input_bound, config.train.loss, config.train.batch_size,
      config.train.neighboring_factor);
  std::cout << report_json(net, r).dump(2) << "\n";
  return 0;
}

int cmd_account(double sigma, double p, std::uint64_t steps, double delta,
                const std::string& strategy_name, std::size_t layers) {
  const auto strategy = strategy_from_string(strategy_name);
  if (!strategy) return fail("invalid argument", "strategy must be local or global");
  const AccountantState state(sigma, p, *strategy, layers, delta);
  const EpsilonResult eps = epsilon_after(state.per_step(), steps, delta);
  json j;
  j["epsilon"] = eps.epsilon;
  j["rdp_order"] = eps.order;
  j["delta"] = delta;
  j["steps"] = steps;
  j["noise_multiplier"] = sigma;
  j["effective_noise_multiplier"] = effective_noise_multiplier(sigma, *strategy, layers);
  j["sampling_probability"] = p;
  j["strategy"] = std::string(to_string(*strategy));
  j["layers"] = layers;
  j["per_step_curve"] = {{"orders", state.per_step().orders},
                         {"values", state.per_step().values}};
  j["note"] = std::string(kSamplingNote);
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_audit(const std::string& config_path, const std::string& checkpoint,
              const std::string& data_dir) {
  const RunConfig config = load_run_config(config_path);
  if (config.data.dataset != "synthetic" && !std::filesystem::is_directory(data_dir)) {
    return fail("data not found", "data directory " + data_dir + " does not exist");
  }
  Network net = Network::build(config.model, config.seed);
  load_checkpoint(net, checkpoint);
  const TrainTest data = load_datasets(config, data_dir);
  if (data.train.size() == 0) return fail("invalid data", "dataset is empty");
  const double violation = net.max_constraint_violation();
  const std::size_t b = config.train.batch_size;
  AuditReport worst;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.train.size(); start += b) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + b, data.train.size()); ++i) {
      idx.push_back(i);
    }
    const AuditReport r = audit_gradient_bounds(
        net, make_batch(data.train, idx), config.train.loss,
        config.train.input_bound, b, config.train.neighboring_factor);
    if (r.max_ratio > worst.max_ratio || worst.per_layer_max_ratio.empty()) {
      const std::size_t offset = start;
      worst = r;
      worst.worst_sample += offset;
    }
  }
  const bool pass = !worst.violated() && violation <= kProjectionTolerance;
  json j;
  j["max_ratio"] = number(worst.max_ratio);
  j["worst_layer"] = worst.worst_layer;
  j["worst_sample"] = worst.worst_sample;
  j["worst_observed"] = worst.worst_observed;
  j["worst_bound"] = worst.worst_bound;
  j["max_constraint_violation"] = violation;
  j["samples"] = data.train.size();
  j["pass"] = pass;
  std::cout << j.dump() << "\n";
  return pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clipless differentially private training of Lipschitz networks"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, checkpoint;
  std::optional<std::uint64_t> seed;
  auto* train = app.add_subcommand("train", "Train with DP-SGD and write metrics and a checkpoint");
  train->add_option("--config", config_path, "Run configuration (JSON)")->required();
  train->add_option("--data-dir", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--seed", seed, "Override the configured seed");

  auto* certify = app.add_subcommand("certify", "Print the sensitivity report at initialization");
  certify->add_option("--config", config_path, "Run configuration (JSON)")->required();

  double sigma = 0.0, p = 0.0, delta = 0.0;
  std::uint64_t steps = 0;
  std::string strategy = "global";
  std::size_t layers = 1;
  auto* account = app.add_subcommand("account", "Compute epsilon for a training schedule");
  account->add_option("--sigma", sigma, "Noise multiplier")->required()->check(CLI::PositiveNumber);
  account->add_option("--sampling-prob", p, "Sampling probability b/N")->required()->check(CLI::Range(0.0, 1.0));
  account->add_option("--steps", steps, "Number of steps")->required();
  account->add_option("--delta", delta, "Target delta")->required()->check(CLI::Range(0.0, 1.0));
  account->add_option("--strategy", strategy, "local or global")->check(CLI::IsMember({"local", "global"}));
  account->add_option("--layers", layers, "Noised layers D for the local strategy")->check(CLI::PositiveNumber);

  auto* audit = app.add_subcommand("audit", "Check observed gradient norms against their certified bounds");
  audit->add_option("--config", config_path, "Run configuration (JSON)")->required();
  audit->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  audit->add_option("--data-dir", data_dir, "Dataset directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, data_dir, out_dir, seed);
    if (*certify) return cmd_certify(config_path);
    if (*account) return cmd_account(sigma, p, steps, delta, strategy, layers);
    if (*audit) return cmd_audit(config_path, checkpoint, data_dir);
  } catch (const ConfigError& e) {
    return fail("invalid config", e.what(), 2);
  } catch (const DataError& e) {
    return fail("data error", e.what(), 2);
  } catch (const CertificateViolation& e) {
    return fail("certificate violation", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
  return 1;
}
