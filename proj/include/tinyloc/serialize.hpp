#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tinyloc/container.hpp"
#include "tinyloc/data.hpp"
#include "tinyloc/model.hpp"
#include "tinyloc/quantize.hpp"

namespace tinyloc::io {

/// Compression-variant labels carried in container metadata and reports.
inline constexpr const char* kVariantBaseline = "baseline";
inline constexpr const char* kVariantStaticQuant = "static_quant";
inline constexpr const char* kVariantDynamicQuant = "dynamic_quant";
inline constexpr const char* kVariantDistill = "distill";
inline constexpr const char* kVariantDistillStaticQuant =
    "distill_static_quant";

namespace detail {

inline uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("container: metadata '" + key +
                             "' is not an integer: '" + value + "'");
  }
}

inline std::string join_kernels(const std::vector<std::size_t>& ks) {
  std::string out;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ks[i]);
  }
  return out;
}

inline std::vector<std::size_t> split_kernels(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(std::size_t(parse_u64("kernels", item)));
  return out;
}

}  // namespace detail

inline std::string scheme_name(model::QuantScheme s) {
  switch (s) {
    case model::QuantScheme::none:
      return "none";
    case model::QuantScheme::static_outlier:
      return "static";
    case model::QuantScheme::dynamic:
      return "dynamic";
  }
  throw std::runtime_error("container: unknown quantization scheme");
}

inline model::QuantScheme scheme_from_name(const std::string& s) {
  if (s == "none") return model::QuantScheme::none;
  if (s == "static") return model::QuantScheme::static_outlier;
  if (s == "dynamic") return model::QuantScheme::dynamic;
  throw std::runtime_error("container: unknown quantization scheme '" + s +
                           "'");
}

inline void write_model_meta(Container& c, const model::ModelConfig& cfg,
                             const std::string& scheme,
                             const std::string& variant) {
  c.meta["kind"] = "model";
  c.meta["family"] = cfg.family;
  c.meta["hidden"] = std::to_string(cfg.hidden);
  c.meta["blocks"] = std::to_string(cfg.blocks);
  c.meta["kernels"] = detail::join_kernels(cfg.kernels);
  c.meta["input_dim"] = std::to_string(cfg.input_dim);
  c.meta["class_count"] = std::to_string(cfg.class_count);
  c.meta["state_dim"] = std::to_string(cfg.state_dim);
  c.meta["conv_width"] = std::to_string(cfg.conv_width);
  c.meta["expand"] = std::to_string(cfg.expand);
  c.meta["seed"] = std::to_string(cfg.seed);
  c.meta["scheme"] = scheme;
  c.meta["variant"] = variant;
}

inline model::ModelConfig read_model_config(const Container& c) {
  model::ModelConfig cfg;
  cfg.family = c.meta_at("family");
  cfg.hidden = std::size_t(detail::parse_u64("hidden", c.meta_at("hidden")));
  cfg.blocks = std::size_t(detail::parse_u64("blocks", c.meta_at("blocks")));
  cfg.kernels = detail::split_kernels(c.meta_at("kernels"));
  cfg.input_dim =
      std::size_t(detail::parse_u64("input_dim", c.meta_at("input_dim")));
  cfg.class_count =
      std::size_t(detail::parse_u64("class_count", c.meta_at("class_count")));
  cfg.state_dim =
      std::size_t(detail::parse_u64("state_dim", c.meta_at("state_dim")));
  cfg.conv_width =
      std::size_t(detail::parse_u64("conv_width", c.meta_at("conv_width")));
  cfg.expand = std::size_t(detail::parse_u64("expand", c.meta_at("expand")));
  cfg.seed = detail::parse_u64("seed", c.meta_at("seed"));
  cfg.validate();
  return cfg;
}

inline void require_kind(const Container& c, const std::string& kind) {
  if (c.meta_at("kind") != kind)
    throw std::runtime_error("container: expected a " + kind +
                             " container, found '" + c.meta_at("kind") + "'");
}

inline bool is_quantized(const Container& c) {
  return c.meta_at("kind") == "model" && c.meta_at("scheme") != "none";
}

// ---- full-precision models ----

inline Container save_model(const model::EmissionModel<float>& m,
                            const std::string& variant = kVariantBaseline,
                            std::map<std::string, std::string> extra = {}) {
  Container c;
  write_model_meta(c, m.cfg, "none", variant);
  for (auto& [key, value] : extra) c.meta.emplace(key, value);
  for (const auto& [name, tensor] : m.state_dict())
    c.tensors.push_back(pack_tensor(name, tensor));
  return c;
}

inline model::EmissionModel<float> load_model(const Container& c) {
  require_kind(c, "model");
  if (c.meta_at("scheme") != "none")
    throw std::runtime_error(
        "container: holds a quantized model; load it as one");
  model::EmissionModel<float> m(read_model_config(c));
  std::map<std::string, Tensor<float>> state;
  for (const auto& e : c.tensors) state[e.name] = unpack_f32(e);
  m.load_state(state);
  return m;
}

// ---- quantized models ----

inline Container save_quantized(const model::QuantizedModel& qm,
                                const std::string& variant,
                                std::map<std::string, std::string> extra = {}) {
  if (qm.scheme == model::QuantScheme::none)
    throw std::runtime_error(
        "container: model is not quantized; save it as full precision");
  Container c;
  write_model_meta(c, qm.cfg, scheme_name(qm.scheme), variant);

  // Code range is uniform across layers by construction; record it once.
  int32_t qmin = 0, qmax = 255;
  if (!qm.linears.empty()) {
    const auto& first = qm.linears.begin()->second.params.at(0);
    qmin = first.qmin;
    qmax = first.qmax;
    for (const auto& [name, ql] : qm.linears)
      for (const auto& p : ql.params)
        if (p.qmin != qmin || p.qmax != qmax)
          throw std::runtime_error(
              "container: mixed code ranges across layers are not "
              "representable");
  }
  c.meta["qmin"] = std::to_string(qmin);
  c.meta["qmax"] = std::to_string(qmax);
  for (auto& [key, value] : extra) c.meta.emplace(key, value);

  for (const auto& [name, tensor] : qm.dense)
    c.tensors.push_back(pack_tensor(name, tensor));
  for (const auto& [name, ql] : qm.linears) {
    TensorEntry codes = pack_tensor(name + ".weight", ql.codes);
    for (const auto& p : ql.params)
      codes.quant.push_back({p.scale, p.zero_point});
    c.tensors.push_back(std::move(codes));
    if (!ql.outlier_cols.empty()) {
      c.tensors.push_back(
          pack_u32(name + ".weight.outlier_cols", ql.outlier_cols));
      c.tensors.push_back(
          pack_half(name + ".weight.outlier_half", ql.outlier_half));
    }
    if (ql.bias.count() > 0)
      c.tensors.push_back(pack_tensor(name + ".bias", ql.bias));
  }
  return c;
}

inline model::QuantizedModel load_quantized(const Container& c) {
  require_kind(c, "model");
  model::QuantizedModel qm;
  qm.cfg = read_model_config(c);
  qm.scheme = scheme_from_name(c.meta_at("scheme"));
  if (qm.scheme == model::QuantScheme::none)
    throw std::runtime_error(
        "container: holds a full-precision model; load it as one");
  const int32_t qmin = int32_t(detail::parse_u64("qmin", c.meta_at("qmin")));
  const int32_t qmax = int32_t(detail::parse_u64("qmax", c.meta_at("qmax")));

  // First pass: quantized weight tables define the linear layer set.
  for (const auto& e : c.tensors) {
    if (DtypeTag(e.dtype) != DtypeTag::u8) continue;
    const std::string& n = e.name;
    if (n.size() < 8 || n.substr(n.size() - 7) != ".weight")
      throw std::runtime_error("container: unexpected uint8 tensor '" + n +
                               "'");
    const std::string base = n.substr(0, n.size() - 7);
    quant::QuantizedLinear ql;
    ql.codes = unpack_u8(e);
    ql.per_row = qm.scheme == model::QuantScheme::static_outlier;
    if (e.quant.empty())
      throw std::runtime_error("container: tensor '" + n +
                               "' is missing quantization records");
    for (const auto& rec : e.quant) {
      quant::QuantParams p;
      p.scale = rec.scale;
      p.zero_point = rec.zero_point;
      p.qmin = qmin;
      p.qmax = qmax;
      ql.params.push_back(p);
    }
    if (const TensorEntry* cols = c.find(base + ".weight.outlier_cols")) {
      ql.outlier_cols = unpack_u32(*cols);
      ql.outlier_half = unpack_f16(c.require(base + ".weight.outlier_half"));
    }
    if (const TensorEntry* bias = c.find(base + ".bias"))
      ql.bias = unpack_f32(*bias);
    ql.out_features = ql.codes.rows();
    ql.in_features = ql.codes.cols() + ql.outlier_cols.size();
    qm.linears.emplace(base, std::move(ql));
  }

  // Second pass: every remaining fp32 tensor is a dense parameter.
  for (const auto& e : c.tensors) {
    if (DtypeTag(e.dtype) != DtypeTag::f32) continue;
    const std::string& n = e.name;
    const bool is_linear_bias =
        n.size() > 5 && n.substr(n.size() - 5) == ".bias" &&
        qm.linears.count(n.substr(0, n.size() - 5)) > 0;
    if (!is_linear_bias) qm.dense[n] = unpack_f32(e);
  }
  return qm;
}

/// A loaded model of any compression variant, ready to run: full-precision
/// containers load into a plain model; quantized containers load into the
/// quantized tables plus a runnable fp32 skeleton whose linears are routed
/// through those tables via hooks().
struct ModelArtifact {
  model::ModelConfig cfg;
  std::string variant;
  model::QuantScheme scheme = model::QuantScheme::none;
  std::optional<model::EmissionModel<float>> dense;
  std::optional<model::QuantizedModel> quantized;

  model::EmissionModel<float>& runner() {
    if (!dense.has_value())
      throw std::runtime_error("artifact: no runnable model loaded");
    return *dense;
  }

  model::ForwardHooks hooks() const {
    model::ForwardHooks h;
    if (quantized.has_value()) h.quantized = &quantized->linears;
    return h;
  }
};

inline ModelArtifact load_artifact(const Container& c) {
  require_kind(c, "model");
  ModelArtifact art;
  art.variant = c.meta_at("variant");
  art.scheme = scheme_from_name(c.meta_at("scheme"));
  if (art.scheme == model::QuantScheme::none) {
    art.dense.emplace(load_model(c));
  } else {
    art.quantized.emplace(load_quantized(c));
    art.dense.emplace(art.quantized->skeleton());
  }
  art.cfg = art.dense->cfg;
  return art;
}

// ---- datasets ----

inline Container save_dataset(const data::DatasetSplit& ds,
                              std::map<std::string, std::string> extra = {}) {
  Container c;
  c.meta["kind"] = "dataset";
  c.meta["class_count"] = std::to_string(ds.class_count);
  c.meta["feature_dim"] = std::to_string(ds.feature_dim);
  c.meta["train_count"] = std::to_string(ds.train.size());
  c.meta["val_count"] = std::to_string(ds.val.size());
  c.meta["test_count"] = std::to_string(ds.test.size());
  for (auto& [key, value] : extra) c.meta.emplace(key, value);

  const auto pack_split = [&](const char* prefix,
                              const std::vector<data::LabeledSequence>& seqs) {
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const std::string stem = std::string(prefix) + "." + std::to_string(i);
      c.tensors.push_back(pack_tensor(stem + ".x", seqs[i].features));
      std::vector<uint32_t> labels;
      labels.reserve(seqs[i].labels.size());
      for (const int l : seqs[i].labels) {
        if (l < 0)
          throw std::runtime_error("container: negative class label");
        labels.push_back(uint32_t(l));
      }
      c.tensors.push_back(pack_u32(stem + ".y", labels));
    }
  };
  pack_split("train", ds.train);
  pack_split("val", ds.val);
  pack_split("test", ds.test);
  return c;
}

inline data::DatasetSplit load_dataset(const Container& c) {
  require_kind(c, "dataset");
  data::DatasetSplit ds;
  ds.class_count = std::size_t(
      detail::parse_u64("class_count", c.meta_at("class_count")));
  ds.feature_dim = std::size_t(
      detail::parse_u64("feature_dim", c.meta_at("feature_dim")));

  const auto load_split = [&](const char* prefix, const std::string& count_key)
      -> std::vector<data::LabeledSequence> {
    const std::size_t n =
        std::size_t(detail::parse_u64(count_key, c.meta_at(count_key)));
    std::vector<data::LabeledSequence> seqs;
    seqs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string stem = std::string(prefix) + "." + std::to_string(i);
      data::LabeledSequence s;
      s.features = unpack_f32(c.require(stem + ".x"));
      for (const uint32_t l : unpack_u32(c.require(stem + ".y")))
        s.labels.push_back(int(l));
      if (s.labels.size() != s.features.rows())
        throw std::runtime_error("container: sequence '" + stem +
                                 "' has mismatched labels");
      seqs.push_back(std::move(s));
    }
    return seqs;
  };
  ds.train = load_split("train", "train_count");
  ds.val = load_split("val", "val_count");
  ds.test = load_split("test", "test_count");
  return ds;
}

}  // namespace tinyloc::io
