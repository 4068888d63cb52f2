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

#ifndef LIPDP_CONFIG_H_
#define LIPDP_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "lipdp/data_io.h"
#include "lipdp/network.h"
#include "lipdp/trainer.h"

namespace lipdp {

// Invalid configuration: unknown keys, wrong types, out-of-range values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string dataset = "mnist";  // mnist | cifar10 | synthetic
  PreprocessMode preprocess = PreprocessMode::kClip;
  double input_bound = 1.0;
  std::size_t train_size = 0;  // 0 keeps every sample
  std::size_t val_size = 0;
  // synthetic_two_gaussians parameters
  std::size_t n_per_class = 500;
  std::size_t dim = 2;
  double separation = 4.0;
  std::uint64_t data_seed = 0;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

// Everything a run needs. train.loss holds the model's loss and
// train.input_bound mirrors data.input_bound.
struct RunConfig {
  NetworkSpec model;
  DataConfig data;
  TrainConfig train;
  std::uint64_t seed = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// JSON text with sections model, data, dp, optimizer and seed. Unknown keys
// are errors.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& config);

// Loads (or generates) the configured dataset, reshapes samples to the
// model's input shape, preprocesses to the configured input bound and applies
// the size caps.
TrainTest load_datasets(const RunConfig& config,
                        const std::filesystem::path& data_dir);

}  // namespace lipdp

#endif  // LIPDP_CONFIG_H_
