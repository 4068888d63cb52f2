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

#include "lipdp/config.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace lipdp {
namespace {

using json = nlohmann::ordered_json;

// Strict view of one JSON object: every key must be read before finish().
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(path_ + "." + key + ": missing");
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(key, j_.at(key));
  }

  template <typename T>
  T require(const std::string& key) {
    return convert<T>(key, raw(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + "." + key + ": unknown key");
    }
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

 private:
  template <typename T>
  T convert(const std::string& key, const json& v) const {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) throw ConfigError("expected a nonnegative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
      }
      return v.get<T>();
    } catch (const std::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::pair<std::size_t, std::size_t> pair_of(Section& s, const std::string& key,
                                            std::pair<std::size_t, std::size_t> fallback) {
  if (!s.has(key)) {
    s.get<json>(key, json());
    return fallback;
  }
  const json& v = s.raw(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() ||
      !v[1].is_number_unsigned()) {
    throw ConfigError(s.path(key) + ": expected [h, w]");
  }
  return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

Padding padding_from(const std::string& s, const std::string& where) {
  if (s == "zero") return Padding::kZero;
  if (s == "circular") return Padding::kCircular;
  throw ConfigError(where + ": padding must be zero or circular");
}

ConvMode conv_mode_from(const std::string& s, const std::string& where) {
  if (s == "plain") return ConvMode::kPlain;
  if (s == "rko") return ConvMode::kRko;
  throw ConfigError(where + ": mode must be plain or rko");
}

MergeRule merge_from(const std::string& s, const std::string& where) {
  if (s == "add") return MergeRule::kAdd;
  if (s == "lip_add") return MergeRule::kLipschitzAdd;
  throw ConfigError(where + ": merge must be add or lip_add");
}

void parse_layers(const json& arr, const std::string& path,
                  std::vector<LayerDescriptor>& out);

void parse_layer(const json& j, const std::string& path,
                 std::vector<LayerDescriptor>& out) {
  Section s(j, path);
  const std::string type = s.require<std::string>("type");
  if (type == "residual") {
    const MergeRule rule = merge_from(s.get<std::string>("merge", "add"), s.path("merge"));
    std::vector<LayerDescriptor> inner;
    parse_layers(s.raw("layers"), s.path("layers"), inner);
    s.finish();
    try {
      const auto block = make_residual(inner, rule);
      out.insert(out.end(), block.begin(), block.end());
    } catch (const std::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
    return;
  }
  const auto kind = layer_kind_from_string(type);
  if (!kind) throw ConfigError(s.path("type") + ": unknown layer type '" + type + "'");
  LayerDescriptor d;
  d.kind = *kind;
  switch (*kind) {
    case LayerKind::kBoundedInput:
      d.input_bound = s.require<double>("input_bound");
      break;
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
      d.units = s.require<std::size_t>("units");
      d.lipschitz = s.get<double>("lipschitz", 1.0);
      break;
    case LayerKind::kSpectralConv2D: {
      d.units = s.require<std::size_t>("filters");
      std::tie(d.kernel_h, d.kernel_w) = pair_of(s, "kernel", {3, 3});
      d.stride = s.get<std::size_t>("stride", 1);
      d.lipschitz = s.get<double>("lipschitz", 1.0);
      d.conv_mode = conv_mode_from(s.get<std::string>("mode", "plain"), s.path("mode"));
      d.padding = padding_from(s.get<std::string>("padding", "zero"), s.path("padding"));
      break;
    }
    case LayerKind::kBias:
      d.bias_bound = s.require<double>("bound");
      break;
    case LayerKind::kScaledL2NormPooling2D:
      std::tie(d.pool_h, d.pool_w) = pair_of(s, "pool", {2, 2});
      break;
    case LayerKind::kClipGradient:
      d.clip = s.require<double>("clip");
      break;
    case LayerKind::kResidualMerge:
      d.merge = merge_from(s.get<std::string>("merge", "add"), s.path("merge"));
      break;
    default:
      break;
  }
  s.finish();
  try {
    validate(d);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  out.push_back(d);
}

void parse_layers(const json& arr, const std::string& path,
                  std::vector<LayerDescriptor>& out) {
  if (!arr.is_array()) throw ConfigError(path + ": expected an array of layers");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    parse_layer(arr[i], path + "[" + std::to_string(i) + "]", out);
  }
}

LossKind parse_loss(const json& j, const std::string& path) {
  Section s(j, path);
  const std::string type = s.require<std::string>("type");
  const auto t = loss_type_from_string(type);
  if (!t) throw ConfigError(s.path("type") + ": unknown loss '" + type + "'");
  LossKind k;
  k.type = *t;
  switch (*t) {
    case LossType::kTauCategoricalCrossentropy:
      k.tau = s.get<double>("tau", 1.0);
      break;
    case LossType::kMulticlassHinge:
      k.margin = s.get<double>("margin", 1.0);
      break;
    case LossType::kHingeKR:
      k.margin = s.get<double>("margin", 1.0);
      k.alpha = s.get<double>("alpha", 0.0);
      break;
    case LossType::kKCosineSimilarity:
      k.k = s.get<double>("k", 1.0);
      k.x_min = s.get<double>("x_min", 1.0);
      break;
    default:
      break;
  }
  s.finish();
  try {
    validate(k);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return k;
}

json layer_json(const LayerDescriptor& d) {
  json j;
  j["type"] = std::string(to_string(d.kind));
  switch (d.kind) {
    case LayerKind::kBoundedInput:
      j["input_bound"] = d.input_bound;
      break;
    case LayerKind::kSpectralDense:
    case LayerKind::kOrthoDense:
      j["units"] = d.units;
      j["lipschitz"] = d.lipschitz;
      break;
    case LayerKind::kSpectralConv2D:
      j["filters"] = d.units;
      j["kernel"] = {d.kernel_h, d.kernel_w};
      j["stride"] = d.stride;
      j["lipschitz"] = d.lipschitz;
      j["mode"] = std::string(to_string(d.conv_mode));
      j["padding"] = std::string(to_string(d.padding));
      break;
    case LayerKind::kBias:
      j["bound"] = d.bias_bound;
      break;
    case LayerKind::kScaledL2NormPooling2D:
      j["pool"] = {d.pool_h, d.pool_w};
      break;
    case LayerKind::kClipGradient:
      j["clip"] = d.clip;
      break;
    case LayerKind::kResidualMerge:
      j["merge"] = std::string(to_string(d.merge));
      break;
    default:
      break;
  }
  return j;
}

// Emits residual spans as nested {"type": "residual"} blocks.
json layers_json(const std::vector<LayerDescriptor>& layers, std::size_t& i,
                 bool nested) {
  json arr = json::array();
  while (i < layers.size()) {
    const LayerDescriptor& d = layers[i];
    if (d.kind == LayerKind::kResidualMerge && nested) return arr;
    ++i;
    if (d.kind == LayerKind::kResidualSplit) {
      json block;
      block["type"] = "residual";
      json inner = layers_json(layers, i, true);
      if (i >= layers.size()) throw ConfigError("unbalanced residual split");
      block["merge"] = std::string(to_string(layers[i].merge));
      block["layers"] = std::move(inner);
      ++i;  // the merge
      arr.push_back(std::move(block));
    } else {
      arr.push_back(layer_json(d));
    }
  }
  return arr;
}

json loss_json(const LossKind& k) {
  json j;
  j["type"] = std::string(to_string(k.type));
  switch (k.type) {
    case LossType::kTauCategoricalCrossentropy:
      j["tau"] = k.tau;
      break;
    case LossType::kMulticlassHinge:
      j["margin"] = k.margin;
      break;
    case LossType::kHingeKR:
      j["margin"] = k.margin;
      j["alpha"] = k.alpha;
      break;
    case LossType::kKCosineSimilarity:
      j["k"] = k.k;
      j["x_min"] = k.x_min;
      break;
    default:
      break;
  }
  return j;
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section top(root, "config");

  Section model(top.raw("model"), "model");
  const json& shape = model.raw("input_shape");
  if (!shape.is_array() || shape.empty()) {
    throw ConfigError("model.input_shape: expected a nonempty array");
  }
  for (const json& d : shape) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
      throw ConfigError("model.input_shape: dimensions must be positive integers");
    }
    c.model.input_shape.push_back(d.get<std::size_t>());
  }
  parse_layers(model.raw("layers"), "model.layers", c.model.layers);
  c.train.loss = parse_loss(model.raw("loss"), "model.loss");
  model.finish();

  Section data(top.raw("data"), "data");
  c.data.dataset = data.require<std::string>("dataset");
  if (c.data.dataset != "mnist" && c.data.dataset != "cifar10" &&
      c.data.dataset != "synthetic") {
    throw ConfigError("data.dataset: expected mnist, cifar10 or synthetic");
  }
  const std::string mode = data.get<std::string>("preprocess", "clip");
  if (mode == "clip") {
    c.data.preprocess = PreprocessMode::kClip;
  } else if (mode == "normalize") {
    c.data.preprocess = PreprocessMode::kNormalize;
  } else {
    throw ConfigError("data.preprocess: expected clip or normalize");
  }
  c.data.input_bound = data.require<double>("input_bound");
  if (!(c.data.input_bound > 0.0)) throw ConfigError("data.input_bound: must be > 0");
  c.data.train_size = data.get<std::size_t>("train_size", 0);
  c.data.val_size = data.get<std::size_t>("val_size", 0);
  if (data.has("synthetic")) {
    Section syn(data.raw("synthetic"), "data.synthetic");
    c.data.n_per_class = syn.get<std::size_t>("n_per_class", c.data.n_per_class);
    c.data.dim = syn.get<std::size_t>("dim", c.data.dim);
    c.data.separation = syn.get<double>("separation", c.data.separation);
    c.data.data_seed = syn.get<std::uint64_t>("seed", c.data.data_seed);
    syn.finish();
  } else {
    data.get<json>("synthetic", json());
  }
  data.finish();

  Section dp(top.raw("dp"), "dp");
  c.train.noise_multiplier = dp.require<double>("noise_multiplier");
  c.train.delta = dp.get<double>("delta", 1e-5);
  const std::string strategy = dp.get<std::string>("strategy", "global");
  const auto st = strategy_from_string(strategy);
  if (!st) throw ConfigError("dp.strategy: expected local or global");
  c.train.strategy = *st;
  c.train.neighboring_factor = dp.get<double>("neighboring_factor", kReplaceOneFactor);
  if (dp.has("epsilon_max") && !dp.raw("epsilon_max").is_null()) {
    c.train.epsilon_max = dp.require<double>("epsilon_max");
  } else {
    dp.get<json>("epsilon_max", json());
    c.train.epsilon_max = std::numeric_limits<double>::infinity();
  }
  const std::string refresh = dp.get<std::string>("sensitivity_refresh", "step");
  if (refresh == "step") {
    c.train.refresh = SensitivityRefresh::kPerStep;
  } else if (refresh == "epoch") {
    c.train.refresh = SensitivityRefresh::kPerEpoch;
  } else {
    throw ConfigError("dp.sensitivity_refresh: expected step or epoch");
  }
  dp.finish();

  Section opt(top.raw("optimizer"), "optimizer");
  c.train.learning_rate = opt.require<double>("learning_rate");
  c.train.momentum = opt.get<double>("momentum", 0.0);
  c.train.batch_size = opt.require<std::size_t>("batch_size");
  c.train.epochs = opt.require<std::size_t>("epochs");
  c.train.audit_every = opt.get<std::size_t>("audit_every", 1);
  opt.finish();

  c.seed = top.get<std::uint64_t>("seed", 0);
  top.finish();

  c.train.seed = c.seed;
  c.train.input_bound = c.data.input_bound;
  try {
    validate(c.train);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& c) {
  json root;
  json& model = root["model"];
  model["input_shape"] = c.model.input_shape;
  std::size_t i = 0;
  model["layers"] = layers_json(c.model.layers, i, false);
  model["loss"] = loss_json(c.train.loss);

  json& data = root["data"];
  data["dataset"] = c.data.dataset;
  data["preprocess"] = c.data.preprocess == PreprocessMode::kClip ? "clip" : "normalize";
  data["input_bound"] = c.data.input_bound;
  data["train_size"] = c.data.train_size;
  data["val_size"] = c.data.val_size;
  data["synthetic"] = {{"n_per_class", c.data.n_per_class},
                       {"dim", c.data.dim},
                       {"separation", c.data.separation},
                       {"seed", c.data.data_seed}};

  json& dp = root["dp"];
  dp["noise_multiplier"] = c.train.noise_multiplier;
  dp["delta"] = c.train.delta;
  dp["strategy"] = std::string(to_string(c.train.strategy));
  dp["neighboring_factor"] = c.train.neighboring_factor;
  if (std::isfinite(c.train.epsilon_max)) {
    dp["epsilon_max"] = c.train.epsilon_max;
  } else {
    dp["epsilon_max"] = nullptr;
  }
  dp["sensitivity_refresh"] =
      c.train.refresh == SensitivityRefresh::kPerStep ? "step" : "epoch";

  json& opt = root["optimizer"];
  opt["learning_rate"] = c.train.learning_rate;
  opt["momentum"] = c.train.momentum;
  opt["batch_size"] = c.train.batch_size;
  opt["epochs"] = c.train.epochs;
  opt["audit_every"] = c.train.audit_every;

  root["seed"] = c.seed;
  return root.dump(2) + "\n";
}

TrainTest load_datasets(const RunConfig& c, const std::filesystem::path& data_dir) {
  TrainTest tt;
  if (c.data.dataset == "synthetic") {
    Dataset all = synthetic_two_gaussians(c.data.n_per_class, c.data.dim,
                                          c.data.separation, c.data.data_seed);
    // Every fifth sample goes to validation.
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < all.size(); ++i) (i % 5 == 4 ? va : tr).push_back(i);
    tt.train = all.subset(tr);
    tt.test = all.subset(va);
  } else if (c.data.dataset == "mnist") {
    tt = load_mnist(data_dir);
  } else {
    tt = load_cifar10(data_dir);
  }
  if (c.data.train_size > 0) tt.train = tt.train.head(c.data.train_size);
  if (c.data.val_size > 0) tt.test = tt.test.head(c.data.val_size);
  for (Dataset* d : {&tt.train, &tt.test}) {
    if (shape_size(d->sample_shape()) != shape_size(c.model.input_shape)) {
      throw ConfigError("dataset samples have shape " +
                        shape_to_string(d->sample_shape()) +
                        ", incompatible with model.input_shape " +
                        shape_to_string(c.model.input_shape));
    }
    *d = d->reshaped(c.model.input_shape);
    preprocess(*d, c.data.preprocess, c.data.input_bound);
  }
  return tt;
}

}  // namespace lipdp
