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

#ifndef LIPDP_TESTS_TEST_UTIL_H_
#define LIPDP_TESTS_TEST_UTIL_H_

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "lipdp/data_io.h"
#include "lipdp/layers.h"
#include "lipdp/losses.h"
#include "lipdp/network.h"
#include "lipdp/tensor.h"

namespace lipdp::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline bool coin(std::mt19937_64& rng, double p = 0.5) {
  return std::bernoulli_distribution(p)(rng);
}

// n samples of the given shape with norm <= x0; every fourth one sits on the
// sphere, which is where the bounds are tightest.
inline Tensor samples_in_ball(std::size_t n, const Shape& sample_shape,
                              double x0, std::mt19937_64& rng) {
  Shape shape{n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor out(shape);
  const std::size_t dim = shape_size(sample_shape);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    const double radius =
        i % 4 == 0 ? x0 : x0 * std::pow(uniform(rng, 0.0, 1.0), 0.25);
    const double scale = radius / norm2(v);
    for (std::size_t k = 0; k < dim; ++k) out[i * dim + k] = v[k] * scale;
  }
  return out;
}

// One-hot rows, or a single +-1 column for the binary loss.
inline Tensor random_labels(std::size_t n, std::size_t classes,
                            const LossKind& loss, std::mt19937_64& rng) {
  if (loss.type == LossType::kBinaryCrossentropy) {
    Tensor y({n, 1});
    for (std::size_t i = 0; i < n; ++i) y[i] = coin(rng) ? 1.0 : -1.0;
    return y;
  }
  Tensor y({n, classes});
  for (std::size_t i = 0; i < n; ++i) y.at(i, pick(rng, 0, classes - 1)) = 1.0;
  return y;
}

inline LossKind random_loss(std::mt19937_64& rng) {
  switch (pick(rng, 0, 5)) {
    case 0:
      return LossKind::tau_cce(uniform(rng, 0.05, 2.0));
    case 1:
      return LossKind::multiclass_hinge(uniform(rng, 0.1, 2.0));
    case 2:
      return LossKind::kantorovich_rubinstein();
    case 3:
      return LossKind::hinge_kr(uniform(rng, 0.1, 2.0), uniform(rng, 0.5, 20.0));
    case 4:
      return LossKind::k_cosine_similarity(uniform(rng, 0.5, 2.0),
                                           uniform(rng, 0.05, 1.0));
    default:
      return LossKind::binary_crossentropy();
  }
}

struct RandomModel {
  NetworkSpec spec;
  LossKind loss;
  std::size_t classes = 2;
  double x0 = 1.0;
};

inline LayerDescriptor random_activation(std::mt19937_64& rng, std::size_t width) {
  switch (pick(rng, 0, 2)) {
    case 0:
      if (width % 2 == 0) return group_sort2();
      return relu();
    case 1:
      return relu();
    default:
      return tanh_activation();
  }
}

// A random projected architecture: optional conv stage on an HWC input, then
// dense layers, with biases, centering, residual blocks and gradient clipping
// sprinkled in. At most six affine layers, widths at most 64.
inline RandomModel random_model(std::mt19937_64& rng) {
  RandomModel m;
  m.x0 = uniform(rng, 0.5, 3.0);
  m.loss = random_loss(rng);
  m.classes = m.loss.type == LossType::kBinaryCrossentropy ? 2 : pick(rng, 2, 10);
  const std::size_t out_units =
      m.loss.type == LossType::kBinaryCrossentropy ? 1 : m.classes;
  std::vector<LayerDescriptor>& L = m.spec.layers;
  std::size_t affine = 0;
  const std::size_t max_affine = pick(rng, 2, 6);

  if (coin(rng, 0.3)) L.push_back(bounded_input(m.x0 * uniform(rng, 0.5, 1.5)));

  std::size_t width = 0;
  if (coin(rng)) {
    std::size_t h = 2 * pick(rng, 2, 4), w = 2 * pick(rng, 2, 4), c = pick(rng, 1, 2);
    m.spec.input_shape = {h, w, c};
    const std::size_t convs = pick(rng, 1, std::min<std::size_t>(2, max_affine - 1));
    for (std::size_t k = 0; k < convs; ++k) {
      const std::size_t f = 2 * pick(rng, 1, 2);
      const ConvMode mode = coin(rng) ? ConvMode::kRko : ConvMode::kPlain;
      const Padding pad = coin(rng) ? Padding::kCircular : Padding::kZero;
      const std::size_t kh = h >= 3 && coin(rng) ? 3 : 1;
      const std::size_t kw = pick(rng, 1, std::min<std::size_t>(3, w));
      const bool residual = f == c && coin(rng, 0.4);
      std::vector<LayerDescriptor> block{
          spectral_conv2d(f, kh, kw, uniform(rng, 0.5, 1.5), mode, pad,
                          residual ? 1 : pick(rng, 1, 2))};
      if (coin(rng, 0.4)) block.push_back(bias(uniform(rng, 0.0, 1.0)));
      block.push_back(random_activation(rng, f));
      if (residual) {
        const auto wrapped = make_residual(
            block, coin(rng) ? MergeRule::kAdd : MergeRule::kLipschitzAdd);
        L.insert(L.end(), wrapped.begin(), wrapped.end());
      } else {
        L.insert(L.end(), block.begin(), block.end());
        // Track the spatial size through strided convs (same padding).
        const std::size_t s = block.front().stride;
        h = (h + s - 1) / s;
        w = (w + s - 1) / s;
        c = f;
      }
      ++affine;
    }
    if (h % 2 == 0 && w % 2 == 0 && coin(rng, 0.4)) {
      L.push_back(scaled_l2_norm_pooling2d(2, 2));
      h /= 2;
      w /= 2;
    }
    if (coin(rng, 0.2)) L.push_back(clip_gradient(uniform(rng, 0.1, 2.0)));
    L.push_back(flatten());
    width = h * w * c;
  } else {
    width = pick(rng, 2, 32);
    m.spec.input_shape = {width};
  }

  while (affine + 1 < max_affine) {
    const std::size_t units =
        width <= 64 && coin(rng, 0.3) ? width : 2 * pick(rng, 1, 32);
    const double lip = uniform(rng, 0.5, 2.0);
    const bool ortho = coin(rng);
    auto dense = [&](std::size_t u) {
      return ortho ? ortho_dense(u, lip) : spectral_dense(u, lip);
    };
    if (units == width && coin(rng, 0.6)) {
      std::vector<LayerDescriptor> block{dense(units), random_activation(rng, units)};
      if (coin(rng, 0.3)) block.insert(block.begin() + 1, bias(uniform(rng, 0.0, 1.0)));
      const auto wrapped = make_residual(
          block, coin(rng) ? MergeRule::kAdd : MergeRule::kLipschitzAdd);
      L.insert(L.end(), wrapped.begin(), wrapped.end());
    } else {
      L.push_back(dense(units));
      if (coin(rng, 0.4)) L.push_back(bias(uniform(rng, 0.0, 1.0)));
      if (coin(rng, 0.2)) L.push_back(layer_centering());
      L.push_back(random_activation(rng, units));
      width = units;
    }
    if (coin(rng, 0.15)) L.push_back(clip_gradient(uniform(rng, 0.1, 2.0)));
    ++affine;
  }
  L.push_back(coin(rng) ? ortho_dense(out_units, uniform(rng, 0.5, 2.0))
                        : spectral_dense(out_units, uniform(rng, 0.5, 2.0)));
  if (coin(rng, 0.3)) L.push_back(bias(uniform(rng, 0.0, 1.0)));
  if (coin(rng, 0.2)) L.push_back(clip_gradient(uniform(rng, 0.1, 2.0)));
  return m;
}

// Gives a projected network nonzero biases inside their balls so the bias
// paths are exercised.
inline void randomize_biases(Network& net, std::mt19937_64& rng) {
  for (Layer& l : net.layers()) {
    if (l.desc.kind != LayerKind::kBias) continue;
    l.param = random_tensor(l.param.shape(), rng);
    project(l);
  }
}

}  // namespace lipdp::testing

#endif  // LIPDP_TESTS_TEST_UTIL_H_
