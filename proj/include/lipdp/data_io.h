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

#ifndef LIPDP_DATA_IO_H_
#define LIPDP_DATA_IO_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lipdp/tensor.h"

namespace lipdp {

// Malformed or missing dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

// Decodes an IDX stream of unsigned bytes. Images (magic 2051) become an
// N x rows x cols tensor scaled by 1/255; labels (magic 2049) an N-vector of
// raw class indices. Errors name the byte offset where decoding failed.
Tensor parse_idx(std::span<const std::uint8_t> bytes);
// Inverse of parse_idx: rank-3 tensors are written as images, rank-1 tensors
// as labels.
std::vector<std::uint8_t> serialize_idx(const Tensor& t);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Features are N x (sample shape); labels are one-hot N x K.
struct Dataset {
  Tensor features;
  Tensor labels;
  double input_bound = 0.0;

  std::size_t size() const { return features.empty() ? 0 : features.dim(0); }
  std::size_t num_classes() const { return labels.rank() == 2 ? labels.dim(1) : 0; }
  Shape sample_shape() const;
  // Same data with each sample reshaped (element count must match).
  Dataset reshaped(const Shape& sample_shape) const;
  // Samples at `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  // The first n samples.
  Dataset head(std::size_t n) const;
};

// One-hot N x K matrix from class indices.
Tensor one_hot(const Tensor& class_indices, std::size_t num_classes);

struct TrainTest {
  Dataset train;
  Dataset test;
};

// Reads train-images-idx3-ubyte, train-labels-idx1-ubyte,
// t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte from `dir`.
TrainTest load_mnist(const std::filesystem::path& dir);
// One CIFAR-10 binary batch: 3073-byte records (label, then 3072 channel-major
// pixels). Features come out as N x 32 x 32 x 3 in [0, 1].
Dataset load_cifar10_batch(const std::filesystem::path& file);
// data_batch_1..5.bin and test_batch.bin from `dir`.
TrainTest load_cifar10(const std::filesystem::path& dir);

enum class PreprocessMode { kClip, kNormalize };

struct PreprocessReport {
  double input_bound = 0.0;
  std::size_t rescaled = 0;      // samples whose norm changed
  std::size_t zero_vectors = 0;  // left at zero in normalize mode
};

// clip: x * min(1, X0/||x||); normalize: X0 * x / ||x||. Sets
// dataset.input_bound to X0.
PreprocessReport preprocess(Dataset& dataset, PreprocessMode mode, double x0);

// One epoch of batch indices: a Fisher-Yates shuffle driven by `rng`, cut into
// batches of size b. The remainder is dropped unless drop_remainder is false.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t b,
                                                    std::mt19937_64& rng,
                                                    bool drop_remainder = true);
// Every sample independently with probability p (variable batch size).
std::vector<std::size_t> poisson_batch(std::size_t n, double p,
                                       std::mt19937_64& rng);

// Two isotropic unit-variance Gaussian clusters centered at +-separation/2
// on the first axis. Samples are clipped to X0 = separation/2 + 3 sqrt(dim).
Dataset synthetic_two_gaussians(std::size_t n_per_class, std::size_t dim,
                                double separation, std::uint64_t seed);

}  // namespace lipdp

#endif  // LIPDP_DATA_IO_H_
