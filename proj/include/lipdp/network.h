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

#ifndef LIPDP_NETWORK_H_
#define LIPDP_NETWORK_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lipdp/layers.h"
#include "lipdp/tensor.h"

namespace lipdp {

// Wraps `inner` in a residual block: [split, inner..., merge(rule)]. Layer
// kinds that always change shape are rejected here; the remaining shape
// checks happen when the network is built.
std::vector<LayerDescriptor> make_residual(
    const std::vector<LayerDescriptor>& inner, MergeRule rule);

struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerDescriptor> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Activations recorded by a forward pass: inputs[d] is the input of layer d,
// inputs.back() the network output.
struct ForwardTrace {
  std::vector<Tensor> inputs;
  const Tensor& output() const { return inputs.back(); }
};

// Ordered layers with balanced residual spans. Residual bookkeeping uses a
// stack, so blocks may nest.
class Network {
 public:
  // Instantiates every layer, checks that shapes compose, initializes
  // parameters from `seed` and projects them.
  static Network build(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  const Shape& input_shape() const { return spec_.input_shape; }
  const Shape& output_shape() const { return layers_.back().output_shape; }
  std::size_t depth() const { return layers_.size(); }
  std::span<Layer> layers() { return layers_; }
  std::span<const Layer> layers() const { return layers_; }
  Layer& layer(std::size_t d) { return layers_.at(d); }
  const Layer& layer(std::size_t d) const { return layers_.at(d); }
  std::vector<std::size_t> parameterized_layers() const;
  std::size_t num_parameters() const;

  Tensor forward(const Tensor& x) const;
  ForwardTrace forward_trace(const Tensor& x) const;

  struct Gradients {
    std::vector<Tensor> params;  // one per layer, empty when parameterless
    Tensor input_cotangent;
  };
  // Reverse pass from the cotangent of the network output.
  Gradients backward(const ForwardTrace& trace, const Tensor& cotangent) const;

  // Projects every layer; returns false if any orthonormalization did not
  // converge.
  bool project_all();
  double max_constraint_violation() const;

 private:
  NetworkSpec spec_;
  std::vector<Layer> layers_;
};

}  // namespace lipdp

#endif  // LIPDP_NETWORK_H_
