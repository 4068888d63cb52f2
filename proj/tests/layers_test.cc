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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "frozen_values.h"
#include "lipdp/layers.h"
#include "lipdp/network.h"
#include "lipdp/numerics.h"
#include "lipdp/oracles.h"
#include "test_util.h"

namespace lipdp {
namespace {

using testing::random_tensor;

Layer built(const LayerDescriptor& d, const Shape& in, std::uint64_t seed = 1) {
  Layer l = make_layer(d, in);
  std::mt19937_64 rng(seed);
  initialize(l, rng);
  return l;
}

TEST(Layers, NamesRoundTrip) {
  for (LayerKind k : {LayerKind::kBoundedInput, LayerKind::kOrthoDense,
                      LayerKind::kSpectralConv2D, LayerKind::kResidualMerge}) {
    EXPECT_EQ(layer_kind_from_string(to_string(k)), k);
  }
  EXPECT_FALSE(layer_kind_from_string("dropout").has_value());
}

TEST(Layers, ValidationRejectsBadHyperparameters) {
  EXPECT_THROW(validate(spectral_dense(0)), std::invalid_argument);
  EXPECT_THROW(validate(spectral_dense(4, -1.0)), std::invalid_argument);
  EXPECT_THROW(validate(bias(-0.1)), std::invalid_argument);
  EXPECT_THROW(validate(clip_gradient(0.0)), std::invalid_argument);
  EXPECT_THROW(validate(bounded_input(0.0)), std::invalid_argument);
  EXPECT_THROW(make_layer(group_sort2(), {3}), ShapeError);
  EXPECT_THROW(make_layer(scaled_l2_norm_pooling2d(2, 2), {5, 4, 1}), ShapeError);
  EXPECT_THROW(make_layer(spectral_dense(3), {2, 2, 1}), ShapeError);
  EXPECT_THROW(make_layer(spectral_conv2d(2, 3, 3), {4}), ShapeError);
}

TEST(Layers, GroupSortSortsPairs) {
  const Layer l = built(group_sort2(), {4});
  const Tensor y = forward(l, Tensor::vector({3, 1, -2, 5}));
  EXPECT_EQ(y, Tensor::vector({1, 3, -2, 5}));
  const VjpResult v = vjp(l, Tensor::vector({3, 1, -2, 5}), Tensor::vector({10, 20, 30, 40}));
  EXPECT_EQ(v.input_cotangent, Tensor::vector({20, 10, 30, 40}));
}

TEST(Layers, PoolingIsScaledL2Norm) {
  const Layer l = built(scaled_l2_norm_pooling2d(2, 2), {2, 2, 1});
  const Tensor y = forward(l, Tensor({2, 2, 1}, {1, 1, 1, 1}));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  // Norm preserving on the whole input.
  std::mt19937_64 rng(2);
  const Layer l2 = built(scaled_l2_norm_pooling2d(2, 2), {4, 6, 3});
  const Tensor x = random_tensor({4, 6, 3}, rng);
  EXPECT_NEAR(forward(l2, x).norm(), x.norm(), 1e-12);
}

TEST(Layers, CenteringRemovesMean) {
  const Layer l = built(layer_centering(), {3});
  EXPECT_EQ(forward(l, Tensor::vector({1, 2, 6})), Tensor::vector({-2, -1, 3}));
}

TEST(Layers, ClipGradientRescalesOnlyBackward) {
  const Layer l = built(clip_gradient(1.0), {2});
  const Tensor x = Tensor::vector({5, 5});
  EXPECT_EQ(forward(l, x), x);
  const VjpResult v = vjp(l, x, Tensor::vector({3, 4}));
  EXPECT_NEAR(v.input_cotangent.norm(), 1.0, 1e-15);
  EXPECT_EQ(vjp(l, x, Tensor::vector({0.3, 0.4})).input_cotangent, Tensor::vector({0.3, 0.4}));
}

TEST(Layers, BoundedInputProjects) {
  const Layer l = built(bounded_input(2.0), {2});
  EXPECT_NEAR(forward(l, Tensor::vector({3, 4})).norm(), 2.0, 1e-15);
  EXPECT_EQ(forward(l, Tensor::vector({0.3, 0.4})), Tensor::vector({0.3, 0.4}));
}

TEST(Layers, InputBoundPropagation) {
  EXPECT_DOUBLE_EQ(propagate_input_bound(spectral_dense(4, 2.0), 1.5), 3.0);
  EXPECT_DOUBLE_EQ(propagate_input_bound(bias(0.5), 1.5), 2.0);
  EXPECT_DOUBLE_EQ(propagate_input_bound(bounded_input(1.0), 1.5), 1.0);
  EXPECT_DOUBLE_EQ(propagate_input_bound(group_sort2(), 1.5), 1.5);
  EXPECT_DOUBLE_EQ(jacobian_input_bound(residual_merge(MergeRule::kAdd)), 1.0);
  EXPECT_DOUBLE_EQ(jacobian_input_bound(residual_merge(MergeRule::kLipschitzAdd)), 0.5);
  EXPECT_DOUBLE_EQ(jacobian_input_bound(spectral_conv2d(2, 3, 3, 0.7)), 0.7);
}

TEST(Layers, ParamJacobianBounds) {
  EXPECT_DOUBLE_EQ(jacobian_param_bound(built(spectral_dense(3), {5}), 2.0), 2.0);
  EXPECT_DOUBLE_EQ(jacobian_param_bound(built(bias(1.0), {5}), 2.0), 1.0);
  EXPECT_DOUBLE_EQ(jacobian_param_bound(built(relu(), {5}), 2.0), 0.0);
  EXPECT_DOUBLE_EQ(
      jacobian_param_bound(built(spectral_conv2d(2, 3, 3), {6, 6, 1}), 2.0), 6.0);
  const Layer rko = built(spectral_conv2d(2, 3, 3, 1.0, ConvMode::kRko), {32, 32, 1});
  EXPECT_NEAR(jacobian_param_bound(rko, 1.0), frozen::kRkoFactor3x3On32, 1e-15);
  EXPECT_NEAR(rko_gradient_factor(3, 3, 32, 32), frozen::kRkoFactor3x3On32, 1e-15);
  EXPECT_THROW(jacobian_param_bound(rko, -1.0), std::invalid_argument);
}

TEST(Layers, ProjectionMeetsConstraints) {
  std::mt19937_64 rng(3);
  Layer dense = built(spectral_dense(7, 1.3), {5});
  dense.param = random_tensor(dense.param.shape(), rng, 3.0);
  EXPECT_GT(constraint_violation(dense), 0.1);
  project(dense);
  EXPECT_LE(constraint_violation(dense), 1e-9);

  Layer ortho = built(ortho_dense(6, 2.0), {6});
  EXPECT_LE(constraint_violation(ortho), 1e-9);
  const auto sv = oracles::svd_reference(ortho.param).singular_values;
  EXPECT_NEAR(sv.front(), 2.0, 1e-9);
  EXPECT_NEAR(sv.back(), 2.0, 1e-9);

  Layer conv = built(spectral_conv2d(3, 3, 3, 0.8), {6, 6, 2});
  conv.param *= 5.0;
  project(conv);
  EXPECT_LE(constraint_violation(conv), 1e-8);

  Layer b = built(bias(0.5), {4});
  b.param = Tensor::vector({3, 4, 0, 0});
  project(b);
  EXPECT_NEAR(b.param.norm(), 0.5, 1e-15);
}

TEST(Layers, RkoConvIsOneLipschitzAfterScaling) {
  const Layer l = built(spectral_conv2d(4, 3, 3, 1.0, ConvMode::kRko, Padding::kCircular),
                        {8, 8, 4});
  PowerIterationState s;
  const Tensor k = effective_kernel(l);
  EXPECT_LE(spectral_norm(conv_operator(l, k), s), 1.0 + 1e-9);
  EXPECT_DOUBLE_EQ(rko_kernel_scale(l), 1.0 / 3.0);
}

TEST(Network, ResidualBookkeeping) {
  EXPECT_THROW(make_residual({flatten()}, MergeRule::kAdd), ShapeError);
  NetworkSpec unbalanced{{4}, {residual_split(), spectral_dense(4)}};
  EXPECT_THROW(Network::build(unbalanced, 0), std::invalid_argument);
  NetworkSpec orphan{{4}, {spectral_dense(4), residual_merge(MergeRule::kAdd)}};
  EXPECT_THROW(Network::build(orphan, 0), std::invalid_argument);
  NetworkSpec shape_change{{4}, {residual_split(), spectral_dense(3),
                                 residual_merge(MergeRule::kAdd)}};
  EXPECT_THROW(Network::build(shape_change, 0), ShapeError);
}

TEST(Network, ResidualForward) {
  auto layers = make_residual({spectral_dense(3)}, MergeRule::kLipschitzAdd);
  NetworkSpec spec{{3}, layers};
  Network net = Network::build(spec, 0);
  net.layer(1).param = Tensor::identity(3) * 0.5;
  const Tensor x = Tensor::vector({2, 4, 6});
  // 0.5 * (0.5 x + x)
  EXPECT_EQ(net.forward(x), Tensor::vector({1.5, 3, 4.5}));
}

TEST(Network, NestedResidualsBuild) {
  auto inner = make_residual({ortho_dense(4), group_sort2()}, MergeRule::kAdd);
  inner.push_back(bias(0.1));
  const auto outer = make_residual(inner, MergeRule::kLipschitzAdd);
  NetworkSpec spec{{4}, outer};
  const Network net = Network::build(spec, 5);
  EXPECT_EQ(net.depth(), outer.size());
  EXPECT_EQ(net.parameterized_layers().size(), 2u);
  EXPECT_EQ(net.forward(Tensor::vector({1, 2, 3, 4})).shape(), (Shape{4}));
}

TEST(Network, BuildIsSeededAndProjected) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const testing::RandomModel m = testing::random_model(rng);
    const Network a = Network::build(m.spec, 42);
    const Network b = Network::build(m.spec, 42);
    for (std::size_t d = 0; d < a.depth(); ++d) EXPECT_EQ(a.layer(d).param, b.layer(d).param);
    EXPECT_LE(a.max_constraint_violation(), 1e-6);
  }
}

}  // namespace
}  // namespace lipdp
