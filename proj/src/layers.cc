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

#include "lipdp/layers.h"

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace lipdp {
namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 14> kKindNames{{
    {LayerKind::kBoundedInput, "bounded_input"},
    {LayerKind::kSpectralDense, "spectral_dense"},
    {LayerKind::kOrthoDense, "ortho_dense"},
    {LayerKind::kSpectralConv2D, "spectral_conv2d"},
    {LayerKind::kBias, "bias"},
    {LayerKind::kGroupSort2, "group_sort2"},
    {LayerKind::kReLU, "relu"},
    {LayerKind::kTanh, "tanh"},
    {LayerKind::kScaledL2NormPooling2D, "scaled_l2_norm_pooling2d"},
    {LayerKind::kLayerCentering, "layer_centering"},
    {LayerKind::kFlatten, "flatten"},
    {LayerKind::kClipGradient, "clip_gradient"},
    {LayerKind::kResidualSplit, "residual_split"},
    {LayerKind::kResidualMerge, "residual_merge"},
}};

LayerDescriptor of_kind(LayerKind kind) {
  LayerDescriptor d;
  d.kind = kind;
  return d;
}

bool is_dense(LayerKind k) {
  return k == LayerKind::kSpectralDense || k == LayerKind::kOrthoDense;
}

std::string layer_error(const LayerDescriptor& d, const std::string& what) {
  return std::string(to_string(d.kind)) + ": " + what;
}

void require_input_shape(const Layer& layer, const Tensor& x) {
  if (x.shape() != layer.input_shape) {
    throw ShapeError(layer_error(layer.desc, "input shape " +
                                                 shape_to_string(x.shape()) +
                                                 " expected " +
                                                 shape_to_string(layer.input_shape)));
  }
}

Conv2DGeometry geometry(const Layer& layer) {
  return Conv2DGeometry::make(layer.input_shape, layer.param.shape(),
                              layer.desc.stride, layer.desc.padding);
}

Tensor as_matrix(const Tensor& kernel) {
  const Shape& s = kernel.shape();
  return kernel.reshaped({s[0] * s[1] * s[2], s[3]});
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<LayerKind> layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(ConvMode mode) {
  return mode == ConvMode::kPlain ? "plain" : "rko";
}

std::string_view to_string(MergeRule rule) {
  return rule == MergeRule::kAdd ? "add" : "lip_add";
}

std::string_view to_string(Padding padding) {
  return padding == Padding::kZero ? "zero" : "circular";
}

LayerDescriptor bounded_input(double input_bound) {
  LayerDescriptor d = of_kind(LayerKind::kBoundedInput);
  d.input_bound = input_bound;
  return d;
}

LayerDescriptor spectral_dense(std::size_t units, double lipschitz) {
  LayerDescriptor d = of_kind(LayerKind::kSpectralDense);
  d.units = units;
  d.lipschitz = lipschitz;
  return d;
}

LayerDescriptor ortho_dense(std::size_t units, double lipschitz) {
  LayerDescriptor d = of_kind(LayerKind::kOrthoDense);
  d.units = units;
  d.lipschitz = lipschitz;
  return d;
}

LayerDescriptor spectral_conv2d(std::size_t filters, std::size_t kernel_h,
                                std::size_t kernel_w, double lipschitz,
                                ConvMode mode, Padding padding,
                                std::size_t stride) {
  LayerDescriptor d = of_kind(LayerKind::kSpectralConv2D);
  d.units = filters;
  d.kernel_h = kernel_h;
  d.kernel_w = kernel_w;
  d.lipschitz = lipschitz;
  d.conv_mode = mode;
  d.padding = padding;
  d.stride = stride;
  return d;
}

LayerDescriptor bias(double bound) {
  LayerDescriptor d = of_kind(LayerKind::kBias);
  d.bias_bound = bound;
  return d;
}

LayerDescriptor group_sort2() { return of_kind(LayerKind::kGroupSort2); }
LayerDescriptor relu() { return of_kind(LayerKind::kReLU); }
LayerDescriptor tanh_activation() { return of_kind(LayerKind::kTanh); }

LayerDescriptor scaled_l2_norm_pooling2d(std::size_t pool_h,
                                         std::size_t pool_w) {
  LayerDescriptor d = of_kind(LayerKind::kScaledL2NormPooling2D);
  d.pool_h = pool_h;
  d.pool_w = pool_w;
  return d;
}

LayerDescriptor layer_centering() { return of_kind(LayerKind::kLayerCentering); }
LayerDescriptor flatten() { return of_kind(LayerKind::kFlatten); }

LayerDescriptor clip_gradient(double clip) {
  LayerDescriptor d = of_kind(LayerKind::kClipGradient);
  d.clip = clip;
  return d;
}

LayerDescriptor residual_split() { return of_kind(LayerKind::kResidualSplit); }

LayerDescriptor residual_merge(MergeRule rule) {
  LayerDescriptor d = of_kind(LayerKind::kResidualMerge);
  d.merge = rule;
  return d;
}

void validate(const LayerDescriptor& d) {
  auto fail = [&d](const std::string& what) {
    throw std::invalid_argument(layer_error(d, what));
  };
  switch (d.kind) {
    case LayerKind::kBoundedInput:
      if (!(d.input_bound > 0.0) || !std::isfinite(d.input_bound))
        fail("input bound must be positive and finite");
      break;
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
      if (d.units == 0) fail("units must be positive");
      if (!(d.lipschitz > 0.0)) fail("lipschitz target must be positive");
      break;
    case LayerKind::kSpectralConv2D:
      if (d.units == 0 || d.kernel_h == 0 || d.kernel_w == 0 || d.stride == 0)
        fail("filters, kernel size and stride must be positive");
      if (!(d.lipschitz > 0.0)) fail("lipschitz target must be positive");
      break;
    case LayerKind::kBias:
      if (!(d.bias_bound >= 0.0)) fail("bias bound must be nonnegative");
      break;
    case LayerKind::kClipGradient:
      if (!(d.clip > 0.0)) fail("clip constant must be positive");
      break;
    case LayerKind::kScaledL2NormPooling2D:
      if (d.pool_h == 0 || d.pool_w == 0) fail("pool size must be positive");
      break;
    default:
      break;
  }
}

bool has_parameters(LayerKind kind) {
  return kind == LayerKind::kSpectralDense || kind == LayerKind::kOrthoDense ||
         kind == LayerKind::kSpectralConv2D || kind == LayerKind::kBias;
}

Layer make_layer(const LayerDescriptor& desc, const Shape& input_shape) {
  validate(desc);
  Layer layer;
  layer.desc = desc;
  layer.input_shape = input_shape;
  auto fail = [&desc, &input_shape](const std::string& what) {
    throw ShapeError(layer_error(desc, what + " (input shape " +
                                           shape_to_string(input_shape) + ")"));
  };
  if (input_shape.empty()) fail("empty input shape");
  switch (desc.kind) {
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
      if (input_shape.size() != 1) fail("dense layers need a flat input");
      layer.output_shape = {desc.units};
      layer.param = Tensor({desc.units, input_shape[0]});
      break;
    case LayerKind::kSpectralConv2D: {
      if (input_shape.size() != 3) fail("conv layers need an HWC input");
      layer.param =
          Tensor({desc.kernel_h, desc.kernel_w, input_shape[2], desc.units});
      layer.output_shape = geometry(layer).output_shape();
      break;
    }
    case LayerKind::kBias:
      layer.output_shape = input_shape;
      layer.param = Tensor(input_shape);
      break;
    case LayerKind::kGroupSort2:
      if (input_shape.back() % 2 != 0) fail("last axis must have even size");
      layer.output_shape = input_shape;
      break;
    case LayerKind::kScaledL2NormPooling2D:
      if (input_shape.size() != 3) fail("pooling needs an HWC input");
      if (input_shape[0] % desc.pool_h != 0 || input_shape[1] % desc.pool_w != 0)
        fail("spatial dims must be divisible by the pool size");
      layer.output_shape = {input_shape[0] / desc.pool_h,
                            input_shape[1] / desc.pool_w, input_shape[2]};
      break;
    case LayerKind::kFlatten:
      layer.output_shape = {shape_size(input_shape)};
      break;
    default:
      layer.output_shape = input_shape;
      break;
  }
  return layer;
}

void initialize(Layer& layer, std::mt19937_64& rng) {
  if (!layer.has_params() || layer.desc.kind == LayerKind::kBias) {
    if (layer.has_params()) layer.param = Tensor(layer.param.shape());
    return;
  }
  std::size_t fan_in = 1;
  if (is_dense(layer.desc.kind)) {
    fan_in = layer.input_shape[0];
  } else {
    const Shape& s = layer.param.shape();
    fan_in = s[0] * s[1] * s[2];
  }
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(fan_in)));
  for (double& v : layer.param.values()) v = normal(rng);
  layer.power = {};
  project(layer);
}

double rko_gradient_factor(std::size_t kernel_h, std::size_t kernel_w,
                           std::size_t image_h, std::size_t image_w) {
  const double fh = 1.0 - (double(kernel_h) - 1.0) / (2.0 * double(image_h));
  const double fw = 1.0 - (double(kernel_w) - 1.0) / (2.0 * double(image_w));
  return std::sqrt(1.0 / (fh * fw));
}

double rko_kernel_scale(const Layer& layer) {
  return layer.desc.lipschitz /
         std::sqrt(double(layer.desc.kernel_h * layer.desc.kernel_w));
}

Tensor effective_kernel(const Layer& layer) {
  if (layer.desc.conv_mode == ConvMode::kRko) {
    return layer.param * rko_kernel_scale(layer);
  }
  return layer.param;
}

LinearOperator conv_operator(const Layer& layer, const Tensor& kernel) {
  const Conv2DGeometry g = Conv2DGeometry::make(
      layer.input_shape, kernel.shape(), layer.desc.stride, layer.desc.padding);
  LinearOperator op;
  op.input_dim = shape_size(g.input_shape());
  op.output_dim = shape_size(g.output_shape());
  op.apply = [g, &kernel](std::span<const double> x, std::span<double> y) {
    kernels::parallel::conv2d_forward(g, x, kernel.values(), y);
  };
  op.apply_adjoint = [g, &kernel](std::span<const double> c,
                                  std::span<double> out) {
    kernels::parallel::conv2d_input_vjp(g, c, kernel.values(), out);
  };
  return op;
}

Tensor forward(const Layer& layer, const Tensor& x) {
  require_input_shape(layer, x);
  const LayerDescriptor& d = layer.desc;
  switch (d.kind) {
    case LayerKind::kBoundedInput:
      return Tensor(x.shape(), project_ball(x.values(), d.input_bound));
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
      return matvec(layer.param, x);
    case LayerKind::kSpectralConv2D:
      return conv2d(x, effective_kernel(layer), d.stride, d.padding);
    case LayerKind::kBias:
      return x + layer.param;
    case LayerKind::kGroupSort2: {
      Tensor y = x;
      for (std::size_t i = 0; i + 1 < y.size(); i += 2) {
        if (y[i] > y[i + 1]) std::swap(y[i], y[i + 1]);
      }
      return y;
    }
    case LayerKind::kReLU: {
      Tensor y = x;
      for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
      return y;
    }
    case LayerKind::kTanh: {
      Tensor y = x;
      for (double& v : y.values()) v = std::tanh(v);
      return y;
    }
    case LayerKind::kScaledL2NormPooling2D: {
      Tensor y(layer.output_shape);
      const std::size_t w = x.dim(1), c = x.dim(2);
      const std::size_t oh = y.dim(0), ow = y.dim(1);
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t a = 0; a < d.pool_h; ++a) {
              for (std::size_t b = 0; b < d.pool_w; ++b) {
                const double v =
                    x[((i * d.pool_h + a) * w + j * d.pool_w + b) * c + ch];
                acc += v * v;
              }
            }
            y[(i * ow + j) * c + ch] = std::sqrt(acc);
          }
        }
      }
      return y;
    }
    case LayerKind::kLayerCentering: {
      Tensor y = x;
      const std::size_t n = x.shape().back();
      for (std::size_t start = 0; start < y.size(); start += n) {
        double mean = 0.0;
        for (std::size_t k = 0; k < n; ++k) mean += y[start + k];
        mean /= double(n);
        for (std::size_t k = 0; k < n; ++k) y[start + k] -= mean;
      }
      return y;
    }
    case LayerKind::kFlatten:
      return x.reshaped(layer.output_shape);
    case LayerKind::kClipGradient:
    case LayerKind::kResidualSplit:
    case LayerKind::kResidualMerge:
      return x;
  }
  throw std::logic_error("unhandled layer kind");
}

VjpResult vjp(const Layer& layer, const Tensor& x, const Tensor& cotangent) {
  require_input_shape(layer, x);
  if (cotangent.shape() != layer.output_shape) {
    throw ShapeError(layer_error(
        layer.desc, "cotangent shape " + shape_to_string(cotangent.shape()) +
                        " expected " + shape_to_string(layer.output_shape)));
  }
  const LayerDescriptor& d = layer.desc;
  VjpResult out;
  switch (d.kind) {
    case LayerKind::kBoundedInput: {
      const double n = x.norm();
      if (n <= d.input_bound) {
        out.input_cotangent = cotangent;
      } else {
        // Jacobian of X0 x / ||x||: (X0/||x||) (I - x x^T / ||x||^2).
        const double proj = dot(x.values(), cotangent.values()) / (n * n);
        Tensor g = cotangent;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= proj * x[i];
        out.input_cotangent = g * (d.input_bound / n);
      }
      break;
    }
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense: {
      out.input_cotangent = matvec_transposed(layer.param, cotangent);
      out.param_gradient = Tensor(layer.param.shape());
      kernels::parallel::add_outer(cotangent.values(), x.values(), 1.0,
                                   out.param_gradient.values());
      break;
    }
    case LayerKind::kSpectralConv2D: {
      const Conv2DGeometry g = geometry(layer);
      const Tensor kernel = effective_kernel(layer);
      out.input_cotangent = Tensor(layer.input_shape);
      kernels::parallel::conv2d_input_vjp(g, cotangent.values(), kernel.values(),
                                          out.input_cotangent.values());
      out.param_gradient = Tensor(layer.param.shape());
      kernels::parallel::conv2d_kernel_vjp(g, x.values(), cotangent.values(),
                                           out.param_gradient.values());
      if (d.conv_mode == ConvMode::kRko) out.param_gradient *= rko_kernel_scale(layer);
      break;
    }
    case LayerKind::kBias:
      out.input_cotangent = cotangent;
      out.param_gradient = cotangent;
      break;
    case LayerKind::kGroupSort2: {
      Tensor g = cotangent;
      for (std::size_t i = 0; i + 1 < g.size(); i += 2) {
        if (x[i] > x[i + 1]) std::swap(g[i], g[i + 1]);
      }
      out.input_cotangent = std::move(g);
      break;
    }
    case LayerKind::kReLU: {
      Tensor g = cotangent;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(x[i] > 0.0)) g[i] = 0.0;
      }
      out.input_cotangent = std::move(g);
      break;
    }
    case LayerKind::kTanh: {
      Tensor g = cotangent;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = std::tanh(x[i]);
        g[i] *= 1.0 - t * t;
      }
      out.input_cotangent = std::move(g);
      break;
    }
    case LayerKind::kScaledL2NormPooling2D: {
      Tensor g(layer.input_shape);
      const std::size_t w = x.dim(1), c = x.dim(2);
      const std::size_t oh = layer.output_shape[0], ow = layer.output_shape[1];
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t a = 0; a < d.pool_h; ++a) {
              for (std::size_t b = 0; b < d.pool_w; ++b) {
                const double v =
                    x[((i * d.pool_h + a) * w + j * d.pool_w + b) * c + ch];
                acc += v * v;
              }
            }
            const double norm = std::sqrt(acc);
            if (norm == 0.0) continue;  // zero subgradient at the origin
            const double ct = cotangent[(i * ow + j) * c + ch] / norm;
            for (std::size_t a = 0; a < d.pool_h; ++a) {
              for (std::size_t b = 0; b < d.pool_w; ++b) {
                const std::size_t idx =
                    ((i * d.pool_h + a) * w + j * d.pool_w + b) * c + ch;
                g[idx] = ct * x[idx];
              }
            }
          }
        }
      }
      out.input_cotangent = std::move(g);
      break;
    }
    case LayerKind::kLayerCentering: {
      // Symmetric operator: the vjp is centering again.
      Tensor g = cotangent;
      const std::size_t n = g.shape().back();
      for (std::size_t start = 0; start < g.size(); start += n) {
        double mean = 0.0;
        for (std::size_t k = 0; k < n; ++k) mean += g[start + k];
        mean /= double(n);
        for (std::size_t k = 0; k < n; ++k) g[start + k] -= mean;
      }
      out.input_cotangent = std::move(g);
      break;
    }
    case LayerKind::kFlatten:
      out.input_cotangent = cotangent.reshaped(layer.input_shape);
      break;
    case LayerKind::kClipGradient: {
      const double n = cotangent.norm();
      out.input_cotangent = n > d.clip ? cotangent * (d.clip / n) : cotangent;
      break;
    }
    case LayerKind::kResidualSplit:
    case LayerKind::kResidualMerge:
      out.input_cotangent = cotangent;
      break;
  }
  return out;
}

double propagate_input_bound(const LayerDescriptor& d, double x_in) {
  if (x_in < 0.0) throw std::invalid_argument("negative input bound");
  switch (d.kind) {
    case LayerKind::kBoundedInput:
      return std::min(x_in, d.input_bound);
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
    case LayerKind::kSpectralConv2D:
      return d.lipschitz * x_in;
    case LayerKind::kBias:
      return x_in + d.bias_bound;
    default:
      return x_in;
  }
}

double jacobian_input_bound(const LayerDescriptor& d) {
  switch (d.kind) {
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
    case LayerKind::kSpectralConv2D:
      return d.lipschitz;
    case LayerKind::kResidualMerge:
      return d.merge == MergeRule::kAdd ? 1.0 : 0.5;
    default:
      return 1.0;
  }
}

double jacobian_param_bound(const Layer& layer, double x_in) {
  if (x_in < 0.0) throw std::invalid_argument("negative input bound");
  const LayerDescriptor& d = layer.desc;
  switch (d.kind) {
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
      return x_in;
    case LayerKind::kBias:
      return 1.0;
    case LayerKind::kSpectralConv2D:
      if (d.conv_mode == ConvMode::kPlain) {
        return std::sqrt(double(d.kernel_h * d.kernel_w)) * x_in;
      }
      return d.lipschitz *
             rko_gradient_factor(d.kernel_h, d.kernel_w, layer.input_shape[0],
                                 layer.input_shape[1]) *
             x_in;
    default:
      return 0.0;
  }
}

namespace {

const PowerIterationOptions& power_options(const PowerIterationState& state) {
  return state.u.empty() ? kColdPowerIteration : kWarmPowerIteration;
}

ProjectionStatus orthonormalize_in_place(Tensor& matrix,
                                         PowerIterationState& state,
                                         double scale) {
  const double sigma = spectral_norm(matrix, state, power_options(state));
  Tensor normalized = sigma > 0.0 ? matrix * (1.0 / sigma) : matrix;
  BjorckResult r = bjorck_orthonormalize(normalized);
  matrix = std::move(r.matrix);
  if (scale != 1.0) matrix *= scale;
  return {r.converged, r.residual};
}

}  // namespace

ProjectionStatus project(Layer& layer) {
  const LayerDescriptor& d = layer.desc;
  switch (d.kind) {
    case LayerKind::kSpectralDense:
      layer.param = project_spectral(layer.param, d.lipschitz, layer.power,
                                     power_options(layer.power));
      return {};
    case LayerKind::kOrthoDense:
      return orthonormalize_in_place(layer.param, layer.power, d.lipschitz);
    case LayerKind::kSpectralConv2D: {
      if (d.conv_mode == ConvMode::kRko) {
        Tensor m = as_matrix(layer.param);
        ProjectionStatus s = orthonormalize_in_place(m, layer.power, 1.0);
        layer.param = m.reshaped(layer.param.shape());
        return s;
      }
      const Tensor kernel = layer.param;
      const double sigma = spectral_norm(conv_operator(layer, kernel),
                                         layer.power, power_options(layer.power));
      if (sigma > d.lipschitz) layer.param *= d.lipschitz / sigma;
      return {};
    }
    case LayerKind::kBias:
      layer.param = project_bias(layer.param, d.bias_bound);
      return {};
    default:
      return {};
  }
}

double constraint_violation(const Layer& layer) {
  const LayerDescriptor& d = layer.desc;
  PowerIterationState probe = layer.power;
  double actual = 0.0, target = 1.0;
  switch (d.kind) {
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
      actual = spectral_norm(layer.param, probe, kColdPowerIteration);
      target = d.lipschitz;
      break;
    case LayerKind::kSpectralConv2D:
      if (d.conv_mode == ConvMode::kRko) {
        actual = spectral_norm(as_matrix(layer.param), probe, kColdPowerIteration);
        target = 1.0;
      } else {
        const Tensor kernel = layer.param;
        actual = spectral_norm(conv_operator(layer, kernel), probe,
                               kColdPowerIteration);
        target = d.lipschitz;
      }
      break;
    case LayerKind::kBias:
      actual = layer.param.norm();
      target = d.bias_bound;
      if (target == 0.0) return actual;
      break;
    default:
      return 0.0;
  }
  return std::max(0.0, actual / target - 1.0);
}

}  // namespace lipdp
