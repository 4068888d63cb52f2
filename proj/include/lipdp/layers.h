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

#ifndef LIPDP_LAYERS_H_
#define LIPDP_LAYERS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "lipdp/kernels.h"
#include "lipdp/numerics.h"
#include "lipdp/tensor.h"

namespace lipdp {

enum class LayerKind {
  kBoundedInput,
  kSpectralDense,
  kOrthoDense,
  kSpectralConv2D,
  kBias,
  kGroupSort2,
  kReLU,
  kTanh,
  kScaledL2NormPooling2D,
  kLayerCentering,
  kFlatten,
  kClipGradient,
  kResidualSplit,
  kResidualMerge,
};

// How a plain Lipschitz conv is constrained: `kPlain` bounds the spectral
// norm of the full convolution operator; `kRko` orthonormalizes the reshaped
// (h*w*C) x F kernel matrix.
enum class ConvMode { kPlain, kRko };

// `kAdd` returns branch + skip (Lipschitz 2); `kLipschitzAdd` returns
// 0.5 * (branch + skip) (Lipschitz 1).
enum class MergeRule { kAdd, kLipschitzAdd };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from_string(std::string_view name);
std::string_view to_string(ConvMode mode);
std::string_view to_string(MergeRule rule);
std::string_view to_string(Padding padding);

struct LayerDescriptor {
  LayerKind kind = LayerKind::kFlatten;
  std::size_t units = 0;  // dense output features or conv filters
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t pool_h = 2;
  std::size_t pool_w = 2;
  double lipschitz = 1.0;    // l_d
  double bias_bound = 1.0;   // B
  double clip = 1.0;         // C
  double input_bound = 1.0;  // X0
  ConvMode conv_mode = ConvMode::kPlain;
  Padding padding = Padding::kZero;
  MergeRule merge = MergeRule::kAdd;

  friend bool operator==(const LayerDescriptor&, const LayerDescriptor&) = default;
};

LayerDescriptor bounded_input(double input_bound);
LayerDescriptor spectral_dense(std::size_t units, double lipschitz = 1.0);
LayerDescriptor ortho_dense(std::size_t units, double lipschitz = 1.0);
LayerDescriptor spectral_conv2d(std::size_t filters, std::size_t kernel_h,
                                std::size_t kernel_w, double lipschitz = 1.0,
                                ConvMode mode = ConvMode::kPlain,
                                Padding padding = Padding::kZero,
                                std::size_t stride = 1);
LayerDescriptor bias(double bound);
LayerDescriptor group_sort2();
LayerDescriptor relu();
LayerDescriptor tanh_activation();
LayerDescriptor scaled_l2_norm_pooling2d(std::size_t pool_h, std::size_t pool_w);
LayerDescriptor layer_centering();
LayerDescriptor flatten();
LayerDescriptor clip_gradient(double clip);
LayerDescriptor residual_split();
LayerDescriptor residual_merge(MergeRule rule);

// Throws std::invalid_argument when a hyperparameter is out of range.
void validate(const LayerDescriptor& desc);
bool has_parameters(LayerKind kind);

// A layer instantiated at a known input shape, with its single parameter
// tensor (weights W as units x inputs, an h x w x C x F kernel, or a bias of
// the input's shape) and its power-iteration cache.
struct Layer {
  LayerDescriptor desc;
  Shape input_shape;
  Shape output_shape;
  Tensor param;
  PowerIterationState power;

  bool has_params() const { return has_parameters(desc.kind); }
};

Layer make_layer(const LayerDescriptor& desc, const Shape& input_shape);
// Random initialization followed by projection.
void initialize(Layer& layer, std::mt19937_64& rng);

Tensor forward(const Layer& layer, const Tensor& x);

struct VjpResult {
  Tensor input_cotangent;
  Tensor param_gradient;  // empty for parameterless layers
};
VjpResult vjp(const Layer& layer, const Tensor& x, const Tensor& cotangent);

// Bound on ||forward(x)|| over ||x|| <= x_in. Residual merges are handled at
// the network level.
double propagate_input_bound(const LayerDescriptor& desc, double x_in);
// Bound on the spectral norm of d forward / d x (per branch for merges).
double jacobian_input_bound(const LayerDescriptor& desc);
// Factor K with ||d forward / d theta|| <= K for inputs of norm <= x_in.
double jacobian_param_bound(const Layer& layer, double x_in);

// Multiplier applied to the stored RKO kernel in the forward pass.
double rko_kernel_scale(const Layer& layer);
// Normalization factor sqrt(1 / ((1 - (h-1)/2H)(1 - (w-1)/2W))).
double rko_gradient_factor(std::size_t kernel_h, std::size_t kernel_w,
                           std::size_t image_h, std::size_t image_w);
// The kernel the convolution actually applies.
Tensor effective_kernel(const Layer& layer);
LinearOperator conv_operator(const Layer& layer, const Tensor& kernel);

struct ProjectionStatus {
  bool converged = true;
  double residual = 0.0;
};
ProjectionStatus project(Layer& layer);
// Relative excess of the layer's constraint, max(0, actual/target - 1).
double constraint_violation(const Layer& layer);

}  // namespace lipdp

#endif  // LIPDP_LAYERS_H_
