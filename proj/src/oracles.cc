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

#include "lipdp/oracles.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace lipdp::oracles {

OracleReport compare(std::string quantity, double reference,
                     double implementation, double rel_threshold) {
  OracleReport r;
  r.quantity = std::move(quantity);
  r.reference = reference;
  r.implementation = implementation;
  r.abs_error = std::abs(reference - implementation);
  r.rel_error = r.abs_error / std::max(std::abs(reference), 1e-300);
  r.threshold = rel_threshold;
  r.pass = r.rel_error <= rel_threshold;
  return r;
}

std::string to_string(const OracleReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.quantity << ": reference=" << r.reference
     << " implementation=" << r.implementation << " abs_err=" << r.abs_error
     << " rel_err=" << r.rel_error << " threshold=" << r.threshold
     << (r.pass ? " PASS" : " FAIL");
  return os.str();
}

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

std::vector<std::vector<double>> per_sample_gradient_norms(
    const Network& net, const Tensor& inputs, const Tensor& labels,
    const LossKind& loss) {
  const std::size_t n = inputs.dim(0);
  if (n == 0) throw std::invalid_argument("per-sample norms need a nonempty batch");
  if (labels.dim(0) != n) throw ShapeError("inputs and labels disagree on batch size");
  std::vector<std::vector<double>> norms(net.depth(), std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const ForwardTrace trace = net.forward_trace(inputs.slice(i));
    const Tensor y = labels.slice(i);
    const std::vector<double> g =
        loss_gradient(loss, trace.output().values(), y.values());
    const Network::Gradients grads =
        net.backward(trace, Tensor(trace.output().shape(), g));
    for (std::size_t d = 0; d < net.depth(); ++d) {
      double s = 0.0;
      for (double v : grads.params[d].values()) s += v * v;
      norms[d][i] = std::sqrt(s);
    }
  }
  return norms;
}

SvdResult svd_reference(const Tensor& w, double tol, int max_sweeps) {
  if (w.rank() != 2) throw ShapeError("svd_reference expects a matrix");
  std::size_t m = w.dim(0);
  std::size_t n = w.dim(1);
  const bool wide = n > m;
  if (wide) std::swap(m, n);
  // Column-major copy: cols[j] is column j of the tall matrix.
  std::vector<std::vector<double>> cols(n, std::vector<double>(m));
  for (std::size_t r = 0; r < w.dim(0); ++r) {
    for (std::size_t c = 0; c < w.dim(1); ++c) {
      const double v = w.at(r, c);
      if (wide) {
        cols[r][c] = v;
      } else {
        cols[c][r] = v;
      }
    }
  }
  SvdResult out;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double a = 0.0, b = 0.0, c = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          a += cols[i][k] * cols[i][k];
          b += cols[j][k] * cols[j][k];
          c += cols[i][k] * cols[j][k];
        }
        if (c == 0.0 || std::abs(c) <= tol * std::sqrt(a * b)) continue;
        rotated = true;
        const double zeta = (b - a) / (2.0 * c);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double xi = cols[i][k];
          const double xj = cols[j][k];
          cols[i][k] = cs * xi - sn * xj;
          cols[j][k] = sn * xi + cs * xj;
        }
      }
    }
    out.sweeps = sweep + 1;
    if (!rotated) {
      out.converged = true;
      break;
    }
  }
  for (const auto& col : cols) {
    double s = 0.0;
    for (double v : col) s += v * v;
    out.singular_values.push_back(std::sqrt(s));
  }
  std::sort(out.singular_values.begin(), out.singular_values.end(),
            std::greater<>());
  return out;
}

Tensor naive_conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride,
                    Padding padding) {
  if (x.rank() != 3 || kernel.rank() != 4) {
    throw ShapeError("naive_conv2d expects HWC input and hwCF kernel");
  }
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), F = kernel.dim(3);
  if (kernel.dim(2) != C) throw ShapeError("naive_conv2d: channel mismatch");
  const std::size_t oh = (H + stride - 1) / stride;
  const std::size_t ow = (W + stride - 1) / stride;
  const std::size_t need_h = (oh - 1) * stride + kh;
  const std::size_t need_w = (ow - 1) * stride + kw;
  const std::size_t pad_h = need_h > H ? need_h - H : 0;
  const std::size_t pad_w = need_w > W ? need_w - W : 0;
  const std::size_t top = pad_h / 2, left = pad_w / 2;
  // Materialize the padded image.
  const std::size_t PH = H + pad_h, PW = W + pad_w;
  std::vector<double> padded(PH * PW * C, 0.0);
  for (std::size_t r = 0; r < PH; ++r) {
    for (std::size_t c = 0; c < PW; ++c) {
      std::int64_t sr = std::int64_t(r) - std::int64_t(top);
      std::int64_t sc = std::int64_t(c) - std::int64_t(left);
      if (padding == Padding::kCircular) {
        sr = ((sr % std::int64_t(H)) + std::int64_t(H)) % std::int64_t(H);
        sc = ((sc % std::int64_t(W)) + std::int64_t(W)) % std::int64_t(W);
      } else if (sr < 0 || sr >= std::int64_t(H) || sc < 0 ||
                 sc >= std::int64_t(W)) {
        continue;
      }
      for (std::size_t ch = 0; ch < C; ++ch) {
        padded[(r * PW + c) * C + ch] = x[(std::size_t(sr) * W + std::size_t(sc)) * C + ch];
      }
    }
  }
  Tensor y(Shape{oh, ow, F});
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t f = 0; f < F; ++f) {
        double acc = 0.0;
        for (std::size_t a = 0; a < kh; ++a) {
          for (std::size_t b = 0; b < kw; ++b) {
            for (std::size_t ch = 0; ch < C; ++ch) {
              acc += padded[((i * stride + a) * PW + (j * stride + b)) * C + ch] *
                     kernel[((a * kw + b) * C + ch) * F + f];
            }
          }
        }
        y[(i * ow + j) * F + f] = acc;
      }
    }
  }
  return y;
}

namespace {

// Adaptive Simpson on [a, b] with absolute tolerance `tol`.
struct Simpson {
  const std::function<double(double)>& f;
  int max_depth;
  bool ok = true;

  double run(double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    return step(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 0);
  }

  double step(double a, double b, double fa, double fm, double fb, double whole,
              double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth >= max_depth) {
      ok = false;
      return left + right + delta / 15.0;
    }
    return step(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
           step(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
  }
};

// Integrates f over [lo, hi] split into `panels` pieces, each refined
// adaptively, to relative tolerance rel_tol of the coarse total.
QuadratureResult integrate(const std::function<double(double)>& f, double lo,
                           double hi, int panels, double rel_tol) {
  const double h = (hi - lo) / panels;
  double coarse = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double a = lo + i * h, b = a + h;
    coarse += h / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
  }
  const double scale = std::max(std::abs(coarse), 1e-300);
  const double tol = rel_tol * scale / panels;
  Simpson s{f, 40};
  double total = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double a = lo + i * h;
    total += s.run(a, a + h, tol);
  }
  return {total, s.ok};
}

// log(mu(x) / q(x)) for mu = (1-p) N(0, s^2) + p N(1, s^2), q = N(0, s^2).
double log_ratio(double x, double sigma, double p) {
  const double z = (2.0 * x - 1.0) / (2.0 * sigma * sigma);
  if (p == 1.0) return z;
  if (z > 0.0) return z + std::log(p + (1.0 - p) * std::exp(-z));
  return std::log((1.0 - p) + p * std::exp(z));
}

double log_normal_pdf(double x, double sigma) {
  return -x * x / (2.0 * sigma * sigma) -
         std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
}

// log of integral of q (mu/q)^beta.
QuadratureResult log_moment(double sigma, double p, double beta, double alpha,
                            double rel_tol) {
  const double lo = -(alpha + 20.0 * sigma);
  const double hi = alpha + 20.0 * sigma;
  const int panels = std::max(64, int(std::ceil((hi - lo) / (sigma / 8.0))));
  auto log_integrand = [&](double x) {
    return log_normal_pdf(x, sigma) + beta * log_ratio(x, sigma, p);
  };
  // Shift by the largest log value on the panel grid.
  double shift = -INFINITY;
  const double h = (hi - lo) / panels;
  for (int i = 0; i <= 2 * panels; ++i) {
    shift = std::max(shift, log_integrand(lo + 0.5 * i * h));
  }
  const std::function<double(double)> scaled = [&](double x) {
    return std::exp(log_integrand(x) - shift);
  };
  QuadratureResult big = integrate(scaled, lo, hi, panels, rel_tol);
  const double log_i = shift + std::log(big.value);
  if (log_i > 0.5) return {log_i, big.converged};
  // Small divergence: integrate q ((mu/q)^beta - 1), whose total is I - 1, so
  // the relative tolerance carries over to the divergence itself.
  const std::function<double(double)> excess = [&](double x) {
    return std::exp(log_normal_pdf(x, sigma)) *
           std::expm1(beta * log_ratio(x, sigma, p));
  };
  QuadratureResult small = integrate(excess, lo, hi, panels, rel_tol);
  return {std::log1p(small.value), small.converged};
}

}  // namespace

QuadratureResult rdp_numerical_oracle(double sigma, double p, double alpha,
                                      double rel_tol) {
  if (!(alpha > 1.0)) throw std::invalid_argument("order must exceed 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must be in [0, 1]");
  if (p == 0.0) return {0.0, true};
  // D(mu || q) and D(q || mu).
  const QuadratureResult fwd = log_moment(sigma, p, alpha, alpha, rel_tol);
  const QuadratureResult rev = log_moment(sigma, p, 1.0 - alpha, alpha, rel_tol);
  const double d = std::max(fwd.value, rev.value) / (alpha - 1.0);
  return {std::max(0.0, d), fwd.converged && rev.converged};
}

}  // namespace lipdp::oracles
