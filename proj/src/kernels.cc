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

#include "lipdp/kernels.h"

#include <omp.h>

#include <algorithm>
#include <cstdint>
#include <string>

namespace lipdp {

Conv2DGeometry Conv2DGeometry::make(const Shape& input_hwc,
                                    const Shape& kernel_hwcf,
                                    std::size_t stride, Padding padding) {
  if (input_hwc.size() != 3) {
    throw ShapeError("conv2d expects an HWC input, got " +
                     shape_to_string(input_hwc));
  }
  if (kernel_hwcf.size() != 4) {
    throw ShapeError("conv2d expects an h x w x C x F kernel, got " +
                     shape_to_string(kernel_hwcf));
  }
  if (kernel_hwcf[2] != input_hwc[2]) {
    throw ShapeError("conv2d channel mismatch: input " +
                     shape_to_string(input_hwc) + ", kernel " +
                     shape_to_string(kernel_hwcf));
  }
  if (kernel_hwcf[0] > input_hwc[0] || kernel_hwcf[1] > input_hwc[1]) {
    throw ShapeError("conv2d kernel " + shape_to_string(kernel_hwcf) +
                     " larger than input " + shape_to_string(input_hwc));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  Conv2DGeometry g;
  g.in_h = input_hwc[0];
  g.in_w = input_hwc[1];
  g.in_c = input_hwc[2];
  g.k_h = kernel_hwcf[0];
  g.k_w = kernel_hwcf[1];
  g.filters = kernel_hwcf[3];
  g.stride = stride;
  g.padding = padding;
  g.out_h = (g.in_h + stride - 1) / stride;
  g.out_w = (g.in_w + stride - 1) / stride;
  const std::size_t pad_h =
      std::max<std::int64_t>(0, static_cast<std::int64_t>((g.out_h - 1) * stride + g.k_h) -
                                    static_cast<std::int64_t>(g.in_h));
  const std::size_t pad_w =
      std::max<std::int64_t>(0, static_cast<std::int64_t>((g.out_w - 1) * stride + g.k_w) -
                                    static_cast<std::int64_t>(g.in_w));
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

namespace kernels {
namespace {

// Input coordinate read by output position `o` through tap `t`, or -1 when it
// falls in the zero padding.
inline std::int64_t source(std::size_t o, std::size_t t, std::size_t stride,
                           std::size_t pad, std::size_t extent,
                           Padding padding) {
  std::int64_t r = static_cast<std::int64_t>(o * stride + t) -
                   static_cast<std::int64_t>(pad);
  const auto n = static_cast<std::int64_t>(extent);
  if (r >= 0 && r < n) return r;
  if (padding == Padding::kZero) return -1;
  r %= n;
  return r < 0 ? r + n : r;
}

constexpr std::size_t kMinParallelWork = 1 << 14;

template <bool kParallel>
void matvec_impl(std::span<const double> w, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for if (kParallel && rows * cols >= kMinParallelWork)
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = w.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

template <bool kParallel>
void matvec_transposed_impl(std::span<const double> w, std::size_t rows,
                            std::size_t cols, std::span<const double> g,
                            std::span<double> out) {
  const auto n = static_cast<std::int64_t>(cols);
#pragma omp parallel for if (kParallel && rows * cols >= kMinParallelWork)
  for (std::int64_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += w[i * cols + j] * g[i];
    out[j] = acc;
  }
}

template <bool kParallel>
void add_outer_impl(std::span<const double> g, std::span<const double> x,
                    double scale, std::span<double> acc) {
  const auto m = static_cast<std::int64_t>(g.size());
  const std::size_t n = x.size();
#pragma omp parallel for if (kParallel && g.size() * n >= kMinParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    const double gi = scale * g[i];
    double* row = acc.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += gi * x[j];
  }
}

template <bool kParallel>
void matmul_impl(std::span<const double> a, std::span<const double> b,
                 std::size_t m, std::size_t k, std::size_t n,
                 std::span<double> c) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for if (kParallel && m * k * n >= kMinParallelWork)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* out = c.data() + i * n;
    std::fill(out, out + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += aip * brow[j];
    }
  }
}

template <bool kParallel>
void conv2d_forward_impl(const Conv2DGeometry& g, std::span<const double> x,
                         std::span<const double> kernel,
                         std::span<double> y) {
  const auto positions = static_cast<std::int64_t>(g.out_h * g.out_w);
  const std::size_t work = g.out_h * g.out_w * g.window() * g.in_c * g.filters;
#pragma omp parallel for if (kParallel && work >= kMinParallelWork)
  for (std::int64_t pos = 0; pos < positions; ++pos) {
    const std::size_t i = pos / g.out_w;
    const std::size_t j = pos % g.out_w;
    double* out = y.data() + pos * g.filters;
    std::fill(out, out + g.filters, 0.0);
    for (std::size_t a = 0; a < g.k_h; ++a) {
      const auto r = source(i, a, g.stride, g.pad_top, g.in_h, g.padding);
      if (r < 0) continue;
      for (std::size_t b = 0; b < g.k_w; ++b) {
        const auto s = source(j, b, g.stride, g.pad_left, g.in_w, g.padding);
        if (s < 0) continue;
        const double* px = x.data() + (r * g.in_w + s) * g.in_c;
        const double* kab = kernel.data() + (a * g.k_w + b) * g.in_c * g.filters;
        for (std::size_t c = 0; c < g.in_c; ++c) {
          const double xv = px[c];
          const double* kc = kab + c * g.filters;
          for (std::size_t f = 0; f < g.filters; ++f) out[f] += xv * kc[f];
        }
      }
    }
  }
}

template <bool kParallel>
void conv2d_input_vjp_impl(const Conv2DGeometry& g,
                           std::span<const double> cotangent,
                           std::span<const double> kernel,
                           std::span<double> input_cotangent) {
  std::fill(input_cotangent.begin(), input_cotangent.end(), 0.0);
  const auto channels = static_cast<std::int64_t>(g.in_c);
  const std::size_t work = g.out_h * g.out_w * g.window() * g.in_c * g.filters;
  // Each thread owns one input channel, so the scatter below never races.
#pragma omp parallel for if (kParallel && work >= kMinParallelWork)
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < g.out_h; ++i) {
      for (std::size_t j = 0; j < g.out_w; ++j) {
        const double* ct = cotangent.data() + (i * g.out_w + j) * g.filters;
        for (std::size_t a = 0; a < g.k_h; ++a) {
          const auto r = source(i, a, g.stride, g.pad_top, g.in_h, g.padding);
          if (r < 0) continue;
          for (std::size_t b = 0; b < g.k_w; ++b) {
            const auto s = source(j, b, g.stride, g.pad_left, g.in_w, g.padding);
            if (s < 0) continue;
            const double* kc =
                kernel.data() + ((a * g.k_w + b) * g.in_c + c) * g.filters;
            double acc = 0.0;
            for (std::size_t f = 0; f < g.filters; ++f) acc += kc[f] * ct[f];
            input_cotangent[(r * g.in_w + s) * g.in_c + c] += acc;
          }
        }
      }
    }
  }
}

template <bool kParallel>
void conv2d_kernel_vjp_impl(const Conv2DGeometry& g, std::span<const double> x,
                            std::span<const double> cotangent,
                            std::span<double> kernel_gradient) {
  const auto taps = static_cast<std::int64_t>(g.window() * g.in_c);
  const std::size_t work = g.out_h * g.out_w * g.window() * g.in_c * g.filters;
#pragma omp parallel for if (kParallel && work >= kMinParallelWork)
  for (std::int64_t t = 0; t < taps; ++t) {
    const std::size_t a = t / (g.k_w * g.in_c);
    const std::size_t b = (t / g.in_c) % g.k_w;
    const std::size_t c = t % g.in_c;
    double* out = kernel_gradient.data() + t * g.filters;
    std::fill(out, out + g.filters, 0.0);
    for (std::size_t i = 0; i < g.out_h; ++i) {
      const auto r = source(i, a, g.stride, g.pad_top, g.in_h, g.padding);
      if (r < 0) continue;
      for (std::size_t j = 0; j < g.out_w; ++j) {
        const auto s = source(j, b, g.stride, g.pad_left, g.in_w, g.padding);
        if (s < 0) continue;
        const double xv = x[(r * g.in_w + s) * g.in_c + c];
        const double* ct = cotangent.data() + (i * g.out_w + j) * g.filters;
        for (std::size_t f = 0; f < g.filters; ++f) out[f] += xv * ct[f];
      }
    }
  }
}

}  // namespace

#define LIPDP_DEFINE_KERNELS(NS, PAR)                                          \
  namespace NS {                                                              \
  void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,  \
              std::span<const double> x, std::span<double> y) {               \
    matvec_impl<PAR>(w, rows, cols, x, y);                                    \
  }                                                                           \
  void matvec_transposed(std::span<const double> w, std::size_t rows,         \
                         std::size_t cols, std::span<const double> g,         \
                         std::span<double> out) {                             \
    matvec_transposed_impl<PAR>(w, rows, cols, g, out);                       \
  }                                                                           \
  void add_outer(std::span<const double> g, std::span<const double> x,        \
                 double scale, std::span<double> acc) {                       \
    add_outer_impl<PAR>(g, x, scale, acc);                                    \
  }                                                                           \
  void matmul(std::span<const double> a, std::span<const double> b,           \
              std::size_t m, std::size_t k, std::size_t n,                    \
              std::span<double> c) {                                          \
    matmul_impl<PAR>(a, b, m, k, n, c);                                       \
  }                                                                           \
  void conv2d_forward(const Conv2DGeometry& g, std::span<const double> x,     \
                      std::span<const double> kernel, std::span<double> y) {  \
    conv2d_forward_impl<PAR>(g, x, kernel, y);                                \
  }                                                                           \
  void conv2d_input_vjp(const Conv2DGeometry& g,                              \
                        std::span<const double> cotangent,                    \
                        std::span<const double> kernel,                       \
                        std::span<double> input_cotangent) {                  \
    conv2d_input_vjp_impl<PAR>(g, cotangent, kernel, input_cotangent);        \
  }                                                                           \
  void conv2d_kernel_vjp(const Conv2DGeometry& g, std::span<const double> x,  \
                         std::span<const double> cotangent,                   \
                         std::span<double> kernel_gradient) {                 \
    conv2d_kernel_vjp_impl<PAR>(g, x, cotangent, kernel_gradient);            \
  }                                                                           \
  }

LIPDP_DEFINE_KERNELS(serial, false)
LIPDP_DEFINE_KERNELS(parallel, true)

#undef LIPDP_DEFINE_KERNELS

int max_threads() { return omp_get_max_threads(); }

}  // namespace kernels
}  // namespace lipdp
