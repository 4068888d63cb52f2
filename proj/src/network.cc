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

#include "lipdp/network.h"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

namespace lipdp {

std::vector<LayerDescriptor> make_residual(
    const std::vector<LayerDescriptor>& inner, MergeRule rule) {
  std::vector<LayerDescriptor> out;
  out.reserve(inner.size() + 2);
  out.push_back(residual_split());
  for (const LayerDescriptor& d : inner) {
    if (d.kind == LayerKind::kFlatten ||
        d.kind == LayerKind::kScaledL2NormPooling2D) {
      throw ShapeError("residual branch cannot contain shape-changing layer " +
                       std::string(to_string(d.kind)));
    }
    out.push_back(d);
  }
  out.push_back(residual_merge(rule));
  return out;
}

Network Network::build(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.layers.empty()) throw std::invalid_argument("network has no layers");
  Network net;
  net.spec_ = spec;
  std::mt19937_64 rng(seed);
  std::vector<Shape> open_splits;
  Shape shape = spec.input_shape;
  for (std::size_t d = 0; d < spec.layers.size(); ++d) {
    const LayerDescriptor& desc = spec.layers[d];
    if (desc.kind == LayerKind::kResidualSplit) {
      open_splits.push_back(shape);
    } else if (desc.kind == LayerKind::kResidualMerge) {
      if (open_splits.empty()) {
        throw std::invalid_argument("residual merge at layer " +
                                    std::to_string(d) + " without a split");
      }
      if (open_splits.back() != shape) {
        throw ShapeError("residual branch changes shape " +
                         shape_to_string(open_splits.back()) + " -> " +
                         shape_to_string(shape) + " at layer " +
                         std::to_string(d));
      }
      open_splits.pop_back();
    }
    Layer layer = make_layer(desc, shape);
    initialize(layer, rng);
    shape = layer.output_shape;
    net.layers_.push_back(std::move(layer));
  }
  if (!open_splits.empty()) {
    throw std::invalid_argument("unbalanced residual split");
  }
  return net;
}

std::vector<std::size_t> Network::parameterized_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t d = 0; d < layers_.size(); ++d) {
    if (layers_[d].has_params()) out.push_back(d);
  }
  return out;
}

std::size_t Network::num_parameters() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.param.size();
  return n;
}

ForwardTrace Network::forward_trace(const Tensor& x) const {
  ForwardTrace trace;
  trace.inputs.reserve(layers_.size() + 1);
  trace.inputs.push_back(x);
  std::vector<std::size_t> skips;  // trace index of each open split's input
  for (std::size_t d = 0; d < layers_.size(); ++d) {
    const Layer& layer = layers_[d];
    Tensor in = trace.inputs.back();
    if (layer.desc.kind == LayerKind::kResidualSplit) {
      skips.push_back(d);
      trace.inputs.push_back(std::move(in));
    } else if (layer.desc.kind == LayerKind::kResidualMerge) {
      Tensor y = in + trace.inputs[skips.back()];
      skips.pop_back();
      if (layer.desc.merge == MergeRule::kLipschitzAdd) y *= 0.5;
      trace.inputs.push_back(std::move(y));
    } else {
      trace.inputs.push_back(lipdp::forward(layer, in));
    }
  }
  return trace;
}

Tensor Network::forward(const Tensor& x) const {
  return forward_trace(x).output();
}

Network::Gradients Network::backward(const ForwardTrace& trace,
                                     const Tensor& cotangent) const {
  if (trace.inputs.size() != layers_.size() + 1) {
    throw std::invalid_argument("backward: trace does not match network");
  }
  Gradients grads;
  grads.params.resize(layers_.size());
  Tensor g = cotangent;
  std::vector<Tensor> skip_cotangents;
  for (std::size_t d = layers_.size(); d-- > 0;) {
    const Layer& layer = layers_[d];
    if (layer.desc.kind == LayerKind::kResidualMerge) {
      if (layer.desc.merge == MergeRule::kLipschitzAdd) g *= 0.5;
      skip_cotangents.push_back(g);
    } else if (layer.desc.kind == LayerKind::kResidualSplit) {
      g += skip_cotangents.back();
      skip_cotangents.pop_back();
    } else {
      VjpResult r = lipdp::vjp(layer, trace.inputs[d], g);
      g = std::move(r.input_cotangent);
      grads.params[d] = std::move(r.param_gradient);
    }
  }
  grads.input_cotangent = std::move(g);
  return grads;
}

bool Network::project_all() {
  bool ok = true;
  for (Layer& layer : layers_) ok = project(layer).converged && ok;
  return ok;
}

double Network::max_constraint_violation() const {
  double worst = 0.0;
  for (const Layer& layer : layers_) {
    worst = std::max(worst, constraint_violation(layer));
  }
  return worst;
}

}  // namespace lipdp
