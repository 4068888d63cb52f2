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

#include "lipdp/numerics.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

namespace lipdp {
namespace {

void require_matrix(const Tensor& w, const char* what) {
  if (w.rank() != 2 || w.size() == 0) {
    throw ShapeError(std::string(what) + ": expected a non-empty matrix, got " +
                     shape_to_string(w.shape()));
  }
}

// Deterministic start vector. A constant vector would be orthogonal to the
// top singular direction of centering-like operators, so use seeded noise.
std::vector<double> initial_vector(std::size_t n) {
  std::mt19937_64 rng(0x5eedf00dULL + n);
  std::normal_distribution<double> normal;
  std::vector<double> u(n);
  for (double& v : u) v = normal(rng);
  const double nu = norm2(u);
  for (double& v : u) v /= nu;
  return u;
}

// W^T W for tall/square W, W W^T for wide W.
Tensor small_gram(const Tensor& w) {
  const std::size_t m = w.rows(), n = w.cols();
  if (m >= n) return matmul(transpose(w), w);
  return matmul(w, transpose(w));
}

}  // namespace

LinearOperator matrix_operator(const Tensor& w) {
  require_matrix(w, "matrix_operator");
  LinearOperator op;
  op.input_dim = w.cols();
  op.output_dim = w.rows();
  op.apply = [&w](std::span<const double> x, std::span<double> y) {
    kernels::parallel::matvec(w.values(), w.rows(), w.cols(), x, y);
  };
  op.apply_adjoint = [&w](std::span<const double> g, std::span<double> out) {
    kernels::parallel::matvec_transposed(w.values(), w.rows(), w.cols(), g, out);
  };
  return op;
}

double spectral_norm(const LinearOperator& op, PowerIterationState& state,
                     const PowerIterationOptions& options) {
  if (op.input_dim == 0 || op.output_dim == 0) {
    throw ShapeError("spectral_norm: empty operator");
  }
  if (options.max_iters < 1 || !(options.tol > 0.0)) {
    throw std::invalid_argument("spectral_norm: need max_iters >= 1, tol > 0");
  }
  std::vector<double> u = state.u.size() == op.input_dim
                              ? state.u
                              : initial_vector(op.input_dim);
  std::vector<double> v(op.output_dim), w(op.input_dim);

  op.apply(u, v);
  double sigma = norm2(v);
  if (sigma == 0.0) {
    if (state.u.size() != op.input_dim) state.u = std::move(u);
    state.last_estimate = 0.0;
    return 0.0;
  }
  // Stop on the eigen-residual of W^T W rather than on successive estimates:
  // with a small spectral gap the estimate creeps and successive differences
  // fall below tol long before it is accurate.
  for (int it = 0; it < options.max_iters; ++it) {
    op.apply_adjoint(v, w);
    const double rayleigh = sigma * sigma;
    double residual = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double r = w[i] - rayleigh * u[i];
      residual += r * r;
    }
    const double nw = norm2(w);
    if (nw == 0.0) break;
    for (std::size_t i = 0; i < w.size(); ++i) u[i] = w[i] / nw;
    op.apply(u, v);
    const double next = norm2(v);
    sigma = next;
    if (std::sqrt(residual) <= options.tol * rayleigh) break;
  }
  state.u = std::move(u);
  state.last_estimate = sigma;
  return sigma;
}

double spectral_norm(const Tensor& w, PowerIterationState& state,
                     const PowerIterationOptions& options) {
  require_matrix(w, "spectral_norm");
  return spectral_norm(matrix_operator(w), state, options);
}

double spectral_norm(const Tensor& w) {
  PowerIterationState state;
  return spectral_norm(w, state, kColdPowerIteration);
}

double orthogonality_residual(const Tensor& w) {
  require_matrix(w, "orthogonality_residual");
  Tensor g = small_gram(w);
  for (std::size_t i = 0; i < g.rows(); ++i) g.at(i, i) -= 1.0;
  return frobenius_norm(g);
}

BjorckResult bjorck_orthonormalize(const Tensor& w, int iters, double tol) {
  require_matrix(w, "bjorck_orthonormalize");
  if (iters < 1) throw std::invalid_argument("bjorck: iters must be >= 1");
  const bool tall = w.rows() >= w.cols();
  auto step = [tall](const Tensor& m) {
    const Tensor gram = small_gram(m);
    Tensor correction = tall ? matmul(m, gram) : matmul(gram, m);
    Tensor next = m * 1.5;
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= 0.5 * correction[i];
    return next;
  };

  BjorckResult result;
  result.matrix = w;
  result.residual = orthogonality_residual(result.matrix);
  while (result.residual > tol && result.iterations < iters) {
    result.matrix = step(result.matrix);
    ++result.iterations;
    result.residual = orthogonality_residual(result.matrix);
    if (!result.matrix.all_finite()) break;
  }
  result.converged = result.residual <= tol && result.matrix.all_finite();
  if (result.converged && result.residual > 0.0) {
    // Quadratic convergence: one more step takes the residual to ~tol^2.
    Tensor polished = step(result.matrix);
    const double r = orthogonality_residual(polished);
    if (r <= result.residual) {
      result.matrix = std::move(polished);
      result.residual = r;
      ++result.iterations;
    }
  }
  return result;
}

Tensor project_spectral(const Tensor& w, double target,
                        PowerIterationState& state,
                        const PowerIterationOptions& options) {
  if (!(target > 0.0)) {
    throw std::invalid_argument("project_spectral: target must be positive");
  }
  const double sigma = spectral_norm(w, state, options);
  if (sigma <= target) return w;
  return w * (target / sigma);
}

std::vector<double> project_ball(std::span<const double> v, double radius) {
  if (radius < 0.0) throw std::invalid_argument("project_ball: negative radius");
  std::vector<double> out(v.begin(), v.end());
  const double n = norm2(v);
  if (n > radius) {
    const double s = radius / n;
    for (double& x : out) x *= s;
  }
  return out;
}

Tensor project_bias(const Tensor& b, double bound) {
  return Tensor(b.shape(), project_ball(b.values(), bound));
}

Tensor transpose(const Tensor& w) {
  require_matrix(w, "transpose");
  Tensor t({w.cols(), w.rows()});
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) t.at(j, i) = w.at(i, j);
  }
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  kernels::parallel::matmul(a.values(), b.values(), a.rows(), a.cols(),
                            b.cols(), c.values());
  return c;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  require_matrix(w, "matvec");
  if (x.size() != w.cols()) {
    throw ShapeError("matvec: matrix " + shape_to_string(w.shape()) +
                     " with vector " + shape_to_string(x.shape()));
  }
  Tensor y({w.rows()});
  kernels::parallel::matvec(w.values(), w.rows(), w.cols(), x.values(),
                            y.values());
  return y;
}

Tensor matvec_transposed(const Tensor& w, const Tensor& g) {
  require_matrix(w, "matvec_transposed");
  if (g.size() != w.rows()) {
    throw ShapeError("matvec_transposed: matrix " + shape_to_string(w.shape()) +
                     " with vector " + shape_to_string(g.shape()));
  }
  Tensor out({w.cols()});
  kernels::parallel::matvec_transposed(w.values(), w.rows(), w.cols(),
                                       g.values(), out.values());
  return out;
}

double frobenius_norm(const Tensor& w) { return norm2(w.values()); }

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              Padding padding) {
  const Conv2DGeometry g =
      Conv2DGeometry::make(x.shape(), kernel.shape(), stride, padding);
  Tensor y(g.output_shape());
  kernels::parallel::conv2d_forward(g, x.values(), kernel.values(), y.values());
  return y;
}

}  // namespace lipdp
