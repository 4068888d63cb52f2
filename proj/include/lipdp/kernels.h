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

#ifndef LIPDP_KERNELS_H_
#define LIPDP_KERNELS_H_

// Data-parallel inner loops. Every kernel exists twice: `parallel::` runs the
// outer loop under OpenMP, `serial::` is the single-threaded reference kept
// for tests and benchmarks. Each output element is reduced sequentially in
// index order in both variants, so the two agree bitwise.

#include <cstddef>
#include <span>

#include "lipdp/tensor.h"

namespace lipdp {

enum class Padding { kZero, kCircular };

// Geometry of a "same"-style 2-D cross-correlation over HWC images with a
// kh x kw x C x F kernel.
struct Conv2DGeometry {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t k_h = 1, k_w = 1, filters = 1;
  std::size_t stride = 1;
  Padding padding = Padding::kZero;
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;

  static Conv2DGeometry make(const Shape& input_hwc, const Shape& kernel_hwcf,
                             std::size_t stride, Padding padding);
  Shape input_shape() const { return {in_h, in_w, in_c}; }
  Shape output_shape() const { return {out_h, out_w, filters}; }
  Shape kernel_shape() const { return {k_h, k_w, in_c, filters}; }
  std::size_t window() const { return k_h * k_w; }
};

namespace kernels {

#define LIPDP_DECLARE_KERNELS                                                 \
  /* y = W x, W is rows x cols row-major. */                                  \
  void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,  \
              std::span<const double> x, std::span<double> y);                \
  /* out = W^T g. */                                                          \
  void matvec_transposed(std::span<const double> w, std::size_t rows,         \
                         std::size_t cols, std::span<const double> g,         \
                         std::span<double> out);                              \
  /* acc += scale * g x^T. */                                                 \
  void add_outer(std::span<const double> g, std::span<const double> x,        \
                 double scale, std::span<double> acc);                        \
  /* c = a (m x k) * b (k x n). */                                            \
  void matmul(std::span<const double> a, std::span<const double> b,           \
              std::size_t m, std::size_t k, std::size_t n,                    \
              std::span<double> c);                                           \
  void conv2d_forward(const Conv2DGeometry& g, std::span<const double> x,     \
                      std::span<const double> kernel, std::span<double> y);   \
  void conv2d_input_vjp(const Conv2DGeometry& g,                              \
                        std::span<const double> cotangent,                    \
                        std::span<const double> kernel,                       \
                        std::span<double> input_cotangent);                   \
  void conv2d_kernel_vjp(const Conv2DGeometry& g, std::span<const double> x,  \
                         std::span<const double> cotangent,                   \
                         std::span<double> kernel_gradient);

namespace serial {
LIPDP_DECLARE_KERNELS
}  // namespace serial

namespace parallel {
LIPDP_DECLARE_KERNELS
}  // namespace parallel

#undef LIPDP_DECLARE_KERNELS

// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace kernels
}  // namespace lipdp

#endif  // LIPDP_KERNELS_H_
