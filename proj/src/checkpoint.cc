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

#include "lipdp/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "lipdp/data_io.h"

namespace lipdp {
namespace {

constexpr char kMagic[4] = {'L', 'D', 'P', '1'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(std::uint8_t(v >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= T(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError("checkpoint truncated at offset " + std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, std::uint32_t(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint64_t>(out, t.rank());
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw DataError("not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  NamedTensors out;
  while (!r.done()) {
    const auto len = r.le<std::uint32_t>();
    std::string name = r.str(len);
    const auto rank = r.le<std::uint64_t>();
    if (rank > 8) throw DataError("tensor " + name + " has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint64_t>();
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = std::bit_cast<double>(r.le<std::uint64_t>());
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

NamedTensors network_tensors(const Network& net) {
  NamedTensors out;
  for (std::size_t d = 0; d < net.depth(); ++d) {
    const Layer& l = net.layer(d);
    if (!l.has_params()) continue;
    const std::string prefix = "layer." + std::to_string(d) + ".";
    out.emplace_back(prefix + "param", l.param);
    if (!l.power.u.empty()) {
      out.emplace_back(prefix + "power_u", Tensor::vector(l.power.u));
      out.emplace_back(prefix + "power_estimate",
                       Tensor::vector({l.power.last_estimate}));
    }
  }
  return out;
}

void restore_tensors(Network& net, const NamedTensors& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  std::size_t used = 0;
  for (std::size_t d = 0; d < net.depth(); ++d) {
    Layer& l = net.layer(d);
    if (!l.has_params()) continue;
    const std::string prefix = "layer." + std::to_string(d) + ".";
    auto it = by_name.find(prefix + "param");
    if (it == by_name.end()) throw DataError("checkpoint lacks " + prefix + "param");
    if (it->second->shape() != l.param.shape()) {
      throw ShapeError("checkpoint " + prefix + "param has shape " +
                       shape_to_string(it->second->shape()) + ", model expects " +
                       shape_to_string(l.param.shape()));
    }
    l.param = *it->second;
    ++used;
    auto u = by_name.find(prefix + "power_u");
    auto e = by_name.find(prefix + "power_estimate");
    if (u != by_name.end() && e != by_name.end()) {
      l.power.u = u->second->data();
      l.power.last_estimate = (*e->second)[0];
      used += 2;
    } else {
      l.power = {};
    }
  }
  if (used != tensors.size()) {
    throw DataError("checkpoint has tensors the model does not use");
  }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(network_tensors(net));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

void load_checkpoint(Network& net, const std::filesystem::path& path) {
  restore_tensors(net, decode_checkpoint(read_file(path)));
}

}  // namespace lipdp
