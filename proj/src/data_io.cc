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

#include "lipdp/data_io.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace lipdp {
namespace {

std::string at_offset(std::size_t offset, const std::string& what) {
  return "IDX offset " + std::to_string(offset) + ": " + what;
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) {
    throw DataError(at_offset(offset, "truncated header, need 4 bytes, have " +
                                          std::to_string(bytes.size() - std::min(offset, bytes.size()))));
  }
  return (std::uint32_t(bytes[offset]) << 24) |
         (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

double sample_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Tensor parse_idx(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  std::size_t ndims = 0;
  if (magic == kIdxImageMagic) {
    ndims = 3;
  } else if (magic == kIdxLabelMagic) {
    ndims = 1;
  } else {
    throw DataError(at_offset(0, "unsupported magic " + std::to_string(magic) +
                                     " (expected 2051 or 2049)"));
  }
  Shape dims(ndims);
  for (std::size_t i = 0; i < ndims; ++i) {
    dims[i] = read_be32(bytes, 4 + 4 * i);
    if (i > 0 && dims[i] == 0) {
      throw DataError(at_offset(4 + 4 * i, "zero-sized dimension"));
    }
  }
  const std::size_t header = 4 + 4 * ndims;
  const std::size_t count = shape_size(dims);
  if (bytes.size() - header < count) {
    throw DataError(at_offset(bytes.size(), "truncated payload, expected " +
                                                std::to_string(count) +
                                                " bytes after the header, have " +
                                                std::to_string(bytes.size() - header)));
  }
  if (bytes.size() - header > count) {
    throw DataError(at_offset(header + count, "trailing bytes after payload"));
  }
  std::vector<double> data(count);
  const double scale = magic == kIdxImageMagic ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < count; ++i) data[i] = bytes[header + i] * scale;
  return Tensor(std::move(dims), std::move(data));
}

std::vector<std::uint8_t> serialize_idx(const Tensor& t) {
  std::vector<std::uint8_t> out;
  double scale = 1.0;
  if (t.rank() == 3) {
    write_be32(out, kIdxImageMagic);
    scale = 255.0;
  } else if (t.rank() == 1) {
    write_be32(out, kIdxLabelMagic);
  } else {
    throw ShapeError("serialize_idx: expected rank 3 images or rank 1 labels, got " +
                     shape_to_string(t.shape()));
  }
  for (std::size_t d : t.shape()) write_be32(out, std::uint32_t(d));
  for (double v : t.values()) {
    const double b = std::round(v * scale);
    if (!(b >= 0.0 && b <= 255.0)) {
      throw std::invalid_argument("serialize_idx: value out of byte range");
    }
    out.push_back(std::uint8_t(b));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("data not found: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Shape Dataset::sample_shape() const {
  return Shape(features.shape().begin() + 1, features.shape().end());
}

Dataset Dataset::reshaped(const Shape& sample) const {
  Shape full{size()};
  full.insert(full.end(), sample.begin(), sample.end());
  Dataset out = *this;
  out.features = features.reshaped(full);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t fs = shape_size(sample_shape());
  const std::size_t k = num_classes();
  Shape fshape = features.shape();
  fshape[0] = indices.size();
  std::vector<double> f;
  std::vector<double> l;
  f.reserve(indices.size() * fs);
  l.reserve(indices.size() * k);
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("dataset index out of range");
    const auto fr = features.row_span(i);
    const auto lr = labels.row_span(i);
    f.insert(f.end(), fr.begin(), fr.end());
    l.insert(l.end(), lr.begin(), lr.end());
  }
  Dataset out;
  out.features = Tensor(std::move(fshape), std::move(f));
  out.labels = Tensor(Shape{indices.size(), k}, std::move(l));
  out.input_bound = input_bound;
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

Tensor one_hot(const Tensor& class_indices, std::size_t num_classes) {
  const std::size_t n = class_indices.size();
  Tensor out(Shape{n, num_classes});
  for (std::size_t i = 0; i < n; ++i) {
    const double c = class_indices[i];
    if (c < 0.0 || c >= double(num_classes) || c != std::floor(c)) {
      throw DataError("label " + std::to_string(c) + " at index " +
                      std::to_string(i) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    }
    out.at(i, std::size_t(c)) = 1.0;
  }
  return out;
}

namespace {

Dataset mnist_split(const std::filesystem::path& dir, const char* images,
                    const char* labels) {
  const Tensor x = parse_idx(read_file(dir / images));
  const Tensor y = parse_idx(read_file(dir / labels));
  if (x.rank() != 3) throw DataError(std::string(images) + " is not an image file");
  if (y.rank() != 1) throw DataError(std::string(labels) + " is not a label file");
  if (x.dim(0) != y.dim(0)) {
    throw DataError(std::string(images) + " has " + std::to_string(x.dim(0)) +
                    " images but " + labels + " has " + std::to_string(y.dim(0)) +
                    " labels");
  }
  Dataset d;
  d.features = x;
  d.labels = one_hot(y, 10);
  d.input_bound = std::sqrt(double(x.dim(1) * x.dim(2)));
  return d;
}

}  // namespace

TrainTest load_mnist(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("data not found: " + dir.string() + " is not a directory");
  }
  return {mnist_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
          mnist_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")};
}

Dataset load_cifar10_batch(const std::filesystem::path& file) {
  constexpr std::size_t kSide = 32, kChannels = 3;
  constexpr std::size_t kPixels = kSide * kSide * kChannels;
  constexpr std::size_t kRecord = kPixels + 1;
  const std::vector<std::uint8_t> bytes = read_file(file);
  if (bytes.size() % kRecord != 0) {
    throw DataError(file.string() + ": size " + std::to_string(bytes.size()) +
                    " is not a multiple of the 3073-byte record (partial record at offset " +
                    std::to_string(bytes.size() / kRecord * kRecord) + ")");
  }
  const std::size_t n = bytes.size() / kRecord;
  Tensor x(Shape{n, kSide, kSide, kChannels});
  Tensor y(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecord;
    y[i] = rec[0];
    for (std::size_t c = 0; c < kChannels; ++c) {
      for (std::size_t p = 0; p < kSide * kSide; ++p) {
        x[i * kPixels + p * kChannels + c] = rec[1 + c * kSide * kSide + p] / 255.0;
      }
    }
  }
  Dataset d;
  d.features = std::move(x);
  d.labels = one_hot(y, 10);
  d.input_bound = std::sqrt(double(kPixels));
  return d;
}

TrainTest load_cifar10(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("data not found: " + dir.string() + " is not a directory");
  }
  std::vector<double> f, l;
  std::size_t n = 0;
  for (int i = 1; i <= 5; ++i) {
    const Dataset b = load_cifar10_batch(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    f.insert(f.end(), b.features.values().begin(), b.features.values().end());
    l.insert(l.end(), b.labels.values().begin(), b.labels.values().end());
    n += b.size();
  }
  TrainTest out;
  out.train.features = Tensor(Shape{n, 32, 32, 3}, std::move(f));
  out.train.labels = Tensor(Shape{n, 10}, std::move(l));
  out.train.input_bound = std::sqrt(3072.0);
  out.test = load_cifar10_batch(dir / "test_batch.bin");
  return out;
}

PreprocessReport preprocess(Dataset& dataset, PreprocessMode mode, double x0) {
  if (!(x0 > 0.0)) throw std::invalid_argument("preprocess: X0 must be positive");
  PreprocessReport report;
  report.input_bound = x0;
  const std::size_t n = dataset.size();
  const std::size_t fs = n == 0 ? 0 : dataset.features.size() / n;
  std::span<double> all = dataset.features.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> x = all.subspan(i * fs, fs);
    const double nrm = sample_norm(x);
    if (nrm == 0.0) {
      if (mode == PreprocessMode::kNormalize) ++report.zero_vectors;
      continue;
    }
    double scale = 1.0;
    if (mode == PreprocessMode::kNormalize) {
      scale = x0 / nrm;
    } else if (nrm > x0) {
      scale = x0 / nrm;
    }
    if (scale != 1.0) {
      ++report.rescaled;
      for (double& v : x) v *= scale;
    }
  }
  dataset.input_bound = x0;
  return report;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t b,
                                                    std::mt19937_64& rng,
                                                    bool drop_remainder) {
  if (b == 0) throw std::invalid_argument("batch size must be >= 1");
  if (b > n) {
    throw std::invalid_argument("batch size " + std::to_string(b) +
                                " exceeds dataset size " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += b) {
    const std::size_t end = std::min(n, start + b);
    if (end - start < b && drop_remainder) break;
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

std::vector<std::size_t> poisson_batch(std::size_t n, double p,
                                       std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must be in [0, 1]");
  std::bernoulli_distribution keep(p);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep(rng)) out.push_back(i);
  }
  return out;
}

Dataset synthetic_two_gaussians(std::size_t n_per_class, std::size_t dim,
                                double separation, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("dim must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = 2 * n_per_class;
  Tensor x(Shape{n, dim});
  Tensor y(Shape{n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i < n_per_class ? 0 : 1;
    for (std::size_t j = 0; j < dim; ++j) x.at(i, j) = noise(rng);
    x.at(i, 0) += cls == 0 ? -separation / 2.0 : separation / 2.0;
    y.at(i, cls) = 1.0;
  }
  Dataset d;
  d.features = std::move(x);
  d.labels = std::move(y);
  preprocess(d, PreprocessMode::kClip, separation / 2.0 + 3.0 * std::sqrt(double(dim)));
  return d;
}

}  // namespace lipdp
