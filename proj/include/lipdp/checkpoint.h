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

#ifndef LIPDP_CHECKPOINT_H_
#define LIPDP_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lipdp/network.h"
#include "lipdp/tensor.h"

namespace lipdp {

// "LDP1", a little-endian u32 version, then for each tensor: u32 name length,
// name bytes, u64 rank, u64 dims, raw little-endian doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Parameters and power-iteration caches of every layer, named
// "layer.<d>.param", "layer.<d>.power_u" and "layer.<d>.power_estimate".
NamedTensors network_tensors(const Network& net);
void save_checkpoint(const Network& net, const std::filesystem::path& path);
// Overwrites the network's parameters; names and shapes must match.
void load_checkpoint(Network& net, const std::filesystem::path& path);
void restore_tensors(Network& net, const NamedTensors& tensors);

}  // namespace lipdp

#endif  // LIPDP_CHECKPOINT_H_
