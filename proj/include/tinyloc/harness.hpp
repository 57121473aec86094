#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tinyloc/container.hpp"
#include "tinyloc/data.hpp"
#include "tinyloc/distill.hpp"
#include "tinyloc/metrics.hpp"
#include "tinyloc/model.hpp"
#include "tinyloc/serialize.hpp"

namespace tinyloc::harness {

// ---- size accounting ----

inline constexpr std::size_t kKiB = 1024;
inline constexpr std::size_t kBudget64KiB = 64 * kKiB;
inline constexpr std::size_t kBudget32KiB = 32 * kKiB;

/// Pass iff the serialized footprint fits the limit (1 KB = 1024 B).
inline bool budget_check(std::size_t bytes, std::size_t limit_bytes) {
  if (limit_bytes == 0)
    throw std::invalid_argument("budget_check: limit must be positive");
  return bytes <= limit_bytes;
}

struct SizePart {
  std::string name;
  std::string dtype;
  std::size_t elements = 0;
  std::size_t payload_bytes = 0;
  std::size_t quant_param_bytes = 0;  // 8 B per record (fp32 scale + i32 zp)
};

/// Byte-exact accounting of a serialized container: every tensor's payload
/// and quantization-record bytes, with all remaining framing (magic,
/// version, metadata, names, shapes, length fields) as header_bytes.
/// total_bytes is the actual file size; the parts always sum back to it.
struct SizeBreakdown {
  std::vector<SizePart> parts;
  std::size_t header_bytes = 0;
  std::size_t total_bytes = 0;

  std::size_t payload_bytes() const {
    std::size_t n = 0;
    for (const auto& p : parts) n += p.payload_bytes;
    return n;
  }
  std::size_t quant_param_bytes() const {
    std::size_t n = 0;
    for (const auto& p : parts) n += p.quant_param_bytes;
    return n;
  }
};

inline std::string dtype_name(uint8_t tag) {
  switch (io::DtypeTag(tag)) {
    case io::DtypeTag::f32:
      return "fp32";
    case io::DtypeTag::f64:
      return "fp64";
    case io::DtypeTag::f16:
      return "fp16";
    case io::DtypeTag::u8:
      return "u8";
    case io::DtypeTag::u32:
      return "u32";
  }
  return "?";
}

inline SizeBreakdown model_size(const io::Container& c) {
  SizeBreakdown bd;
  bd.total_bytes = io::save_bytes(c).size();
  for (const auto& t : c.tensors) {
    SizePart p;
    p.name = t.name;
    p.dtype = dtype_name(t.dtype);
    p.elements = std::size_t(t.element_count());
    p.payload_bytes = t.payload.size();
    p.quant_param_bytes = 8 * t.quant.size();
    bd.parts.push_back(std::move(p));
  }
  bd.header_bytes =
      bd.total_bytes - bd.payload_bytes() - bd.quant_param_bytes();
  return bd;
}

inline SizeBreakdown model_size(const model::EmissionModel<float>& m) {
  return model_size(io::save_model(m));
}

inline SizeBreakdown model_size(const model::QuantizedModel& qm) {
  const char* variant = qm.scheme == model::QuantScheme::dynamic
                            ? io::kVariantDynamicQuant
                            : io::kVariantStaticQuant;
  return model_size(io::save_quantized(qm, variant));
}

/// Ceiling division to whole KB, as rendered in reports.
inline std::size_t size_kb_ceil(std::size_t bytes) {
  return (bytes + kKiB - 1) / kKiB;
}

/// Human-readable table for the size / quantize commands.
inline std::string format_size(const SizeBreakdown& bd) {
  std::ostringstream out;
  std::size_t widest = 6;
  for (const auto& p : bd.parts) widest = std::max(widest, p.name.size());
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %-5s %10s %11s %9s\n", int(widest),
                "tensor", "dtype", "elements", "payload B", "quant B");
  out << line;
  for (const auto& p : bd.parts) {
    std::snprintf(line, sizeof line, "%-*s  %-5s %10zu %11zu %9zu\n",
                  int(widest), p.name.c_str(), p.dtype.c_str(), p.elements,
                  p.payload_bytes, p.quant_param_bytes);
    out << line;
  }
  out << "header/framing bytes: " << bd.header_bytes << "\n";
  out << "total: " << bd.total_bytes << " B (" << size_kb_ceil(bd.total_bytes)
      << " KB) — 64 KB budget: "
      << (budget_check(bd.total_bytes, kBudget64KiB) ? "pass" : "FAIL")
      << ", 32 KB budget: "
      << (budget_check(bd.total_bytes, kBudget32KiB) ? "pass" : "FAIL")
      << "\n";
  return out.str();
}

// ---- evaluation rows ----

struct EvalRow {
  std::string model_name;
  std::string family;
  std::size_t hidden = 0;
  std::string layer_spec;  // block count, or "{k1,k2}" kernel set
  std::size_t param_count = 0;
  std::size_t serialized_bytes = 0;
  std::string variant;  // baseline | static_quant | dynamic_quant |
                        // distill | distill_static_quant
  double macro_f1 = 0;
  double accuracy = 0;
  bool budget_64k = false;
  bool budget_32k = false;
  uint64_t seed = 0;
  std::string dataset_id;
  std::string teacher_id;  // distill variants only
  std::string alpha;       // distill variants only
  std::string tau;         // static-quant variants only
  std::string error;       // non-empty -> the row failed; metrics invalid
};

inline const std::vector<std::string>& variant_order() {
  static const std::vector<std::string> order = {
      io::kVariantBaseline, io::kVariantStaticQuant, io::kVariantDynamicQuant,
      io::kVariantDistill, io::kVariantDistillStaticQuant};
  return order;
}

inline std::string model_display_name(const model::ModelConfig& cfg) {
  const std::size_t layers =
      cfg.family == "mamba" ? cfg.blocks : cfg.kernels.size();
  return cfg.family + "-H" + std::to_string(cfg.hidden) + "L" +
         std::to_string(layers);
}

inline std::string layer_spec_of(const model::ModelConfig& cfg) {
  if (cfg.family == "mamba") return std::to_string(cfg.blocks);
  std::string s = "{";
  for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(cfg.kernels[i]);
  }
  return s + "}";
}

/// Worker-thread cap for row evaluation: TINYLOC_THREADS when set,
/// otherwise the hardware concurrency (at least 1).
inline std::size_t eval_thread_cap() {
  if (const char* env = std::getenv("TINYLOC_THREADS")) {
    const long v = std::atol(env);
    if (v >= 1) return std::size_t(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline void fill_metrics(EvalRow& row, metrics::EvalMetrics m) {
  row.macro_f1 = m.macro_f1;
  row.accuracy = m.accuracy;
}

inline void fill_size(EvalRow& row, const io::Container& c) {
  row.serialized_bytes = io::save_bytes(c).size();
  row.budget_64k = budget_check(row.serialized_bytes, kBudget64KiB);
  row.budget_32k = budget_check(row.serialized_bytes, kBudget32KiB);
}

}  // namespace detail

/// Evaluate one loaded container on the test split of a dataset.
inline EvalRow evaluate_container(const io::Container& c,
                                  const data::DatasetSplit& ds,
                                  const std::string& dataset_id) {
  io::ModelArtifact art = io::load_artifact(c);
  EvalRow row;
  row.model_name = model_display_name(art.cfg);
  row.family = art.cfg.family;
  row.hidden = art.cfg.hidden;
  row.layer_spec = layer_spec_of(art.cfg);
  row.param_count = art.runner().param_count();
  row.variant = art.variant;
  row.seed = c.meta.count("master_seed")
                 ? io::detail::parse_u64("master_seed", c.meta.at("master_seed"))
                 : art.cfg.seed;
  row.dataset_id = dataset_id;
  if (c.meta.count("teacher")) row.teacher_id = c.meta.at("teacher");
  if (c.meta.count("alpha")) row.alpha = c.meta.at("alpha");
  if (c.meta.count("tau")) row.tau = c.meta.at("tau");
  detail::fill_size(row, c);
  const auto hooks = art.hooks();
  detail::fill_metrics(row, metrics::evaluate_model(art.runner(), ds.test,
                                                    &hooks));
  return row;
}

/// Evaluate many containers, fanning rows out across worker threads
/// (capped by TINYLOC_THREADS). Output order matches input order and is
/// independent of the thread count.
inline std::vector<EvalRow> evaluate_containers(
    const std::vector<io::Container>& containers,
    const data::DatasetSplit& ds, const std::string& dataset_id) {
  std::vector<EvalRow> rows(containers.size());
  const std::size_t workers =
      std::min(eval_thread_cap(), std::max<std::size_t>(containers.size(), 1));
  std::vector<std::thread> pool;
  std::size_t next = 0;
  std::mutex mu;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= containers.size()) return;
          i = next++;
        }
        try {
          rows[i] = evaluate_container(containers[i], ds, dataset_id);
        } catch (const std::exception& e) {
          rows[i].error = e.what();
        }
      }
    });
  for (auto& t : pool) t.join();
  return rows;
}

// ---- experiment orchestration ----

struct ExperimentConfig {
  std::vector<model::ModelConfig> grid;  // per-model seeds are overridden by
                                         // streams fanned out from `seed`
  std::vector<std::string> variants = {io::kVariantBaseline};
  train::TrainConfig training;  // alpha and seed fields are ignored here
  float tau = 6.0f;             // static-quant outlier threshold
  double alpha = 0.1;           // distillation blend
  bool soft_targets = false;
  uint64_t seed = 7;            // master seed
  std::string dataset_id = "synth";
};

/// Trains and evaluates every (model, variant) pair: baselines first, then
/// the requested compressed variants derived from them. The teacher for
/// distillation variants is the baseline with the best validation macro-F1
/// (ties to the larger model). A failure in one row is recorded on that row
/// and the run continues. Deterministic: all randomness fans out from the
/// master seed via named streams.
inline std::vector<EvalRow> run_experiment(const ExperimentConfig& xc,
                                           const data::DatasetSplit& ds) {
  if (xc.grid.empty())
    throw std::invalid_argument("run_experiment: empty model grid");
  if (xc.variants.empty())
    throw std::invalid_argument("run_experiment: no variants requested");
  for (const auto& v : xc.variants)
    if (std::find(variant_order().begin(), variant_order().end(), v) ==
        variant_order().end())
      throw std::invalid_argument("run_experiment: unknown variant '" + v +
                                  "'");

  const Rng master(xc.seed);
  const bool wants_distill =
      std::count(xc.variants.begin(), xc.variants.end(),
                 io::kVariantDistill) > 0 ||
      std::count(xc.variants.begin(), xc.variants.end(),
                 io::kVariantDistillStaticQuant) > 0;

  std::vector<Tensor<float>> calib_inputs;
  for (const auto& seq : ds.train) calib_inputs.push_back(seq.features);

  // Phase 1: baselines (every variant derives from them).
  struct Trained {
    std::string name;
    model::ModelConfig cfg;
    std::optional<model::EmissionModel<float>> m;
    double val_f1 = -1;
    std::string error;
  };
  std::vector<Trained> baselines;
  for (const auto& grid_cfg : xc.grid) {
    Trained t;
    t.cfg = grid_cfg;
    t.name = model_display_name(grid_cfg);
    t.cfg.seed = master.fork("init-" + t.name).seed();
    try {
      t.cfg.validate();
      t.m.emplace(t.cfg);
      train::TrainConfig tc = xc.training;
      tc.alpha = 1.0;
      tc.seed = master.fork("train-" + t.name).seed();
      const auto result = train::train_model(*t.m, ds, tc);
      t.val_f1 = result.best_val_f1;
    } catch (const std::exception& e) {
      t.m.reset();
      t.error = e.what();
    }
    baselines.push_back(std::move(t));
  }

  // Phase 2: teacher selection over the successfully trained baselines.
  std::size_t teacher_idx = baselines.size();
  std::string teacher_error;
  if (wants_distill) {
    std::vector<model::EmissionModel<float>*> candidates;
    std::vector<std::size_t> candidate_idx;
    for (std::size_t i = 0; i < baselines.size(); ++i)
      if (baselines[i].m.has_value()) {
        candidates.push_back(&*baselines[i].m);
        candidate_idx.push_back(i);
      }
    if (candidates.empty())
      teacher_error = "no baseline trained successfully to act as teacher";
    else
      teacher_idx = candidate_idx[train::select_teacher(candidates, ds.val)];
  }

  // Phase 3: one row per (model, variant), in grid x canonical order.
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < baselines.size(); ++i) {
    auto& base = baselines[i];
    EvalRow proto;
    proto.model_name = base.name;
    proto.family = base.cfg.family;
    proto.hidden = base.cfg.hidden;
    proto.layer_spec = layer_spec_of(base.cfg);
    proto.seed = xc.seed;
    proto.dataset_id = xc.dataset_id;

    std::optional<model::EmissionModel<float>> distilled;
    std::string distill_error;
    const auto ensure_distilled = [&]() -> model::EmissionModel<float>& {
      if (distilled.has_value()) return *distilled;
      if (!distill_error.empty()) throw std::runtime_error(distill_error);
      try {
        if (!teacher_error.empty()) throw std::runtime_error(teacher_error);
        model::ModelConfig scfg = base.cfg;
        scfg.seed = master.fork("distill-init-" + base.name).seed();
        distilled.emplace(scfg);
        train::TrainConfig tc = xc.training;
        tc.alpha = xc.alpha;
        tc.soft_targets = xc.soft_targets;
        tc.seed = master.fork("distill-train-" + base.name).seed();
        train::distill_train(*baselines[teacher_idx].m, *distilled, ds, tc,
                             nullptr);
      } catch (const std::exception& e) {
        distilled.reset();
        distill_error = e.what();
        throw;
      }
      return *distilled;
    };

    for (const auto& variant : variant_order()) {
      if (std::count(xc.variants.begin(), xc.variants.end(), variant) == 0)
        continue;
      EvalRow row = proto;
      row.variant = variant;
      try {
        if (!base.error.empty())
          throw std::runtime_error("baseline failed: " + base.error);
        model::EmissionModel<float>& bm = *base.m;
        row.param_count = bm.param_count();
        if (variant == io::kVariantBaseline) {
          detail::fill_size(row, io::save_model(bm, variant));
          detail::fill_metrics(row, metrics::evaluate_model(bm, ds.test));
        } else if (variant == io::kVariantStaticQuant ||
                   variant == io::kVariantDynamicQuant) {
          model::QuantizedModel qm;
          if (variant == io::kVariantStaticQuant) {
            const auto calibration =
                model::collect_calibration(bm, calib_inputs);
            qm = model::quantize_static(bm, calibration, xc.tau);
            row.tau = detail::fmt_double(xc.tau);
          } else {
            qm = model::quantize_dynamic(bm);
          }
          detail::fill_size(row, io::save_quantized(qm, variant));
          auto runner = qm.skeleton();
          model::ForwardHooks hooks;
          hooks.quantized = &qm.linears;
          detail::fill_metrics(
              row, metrics::evaluate_model(runner, ds.test, &hooks));
        } else {  // distill or distill_static_quant
          model::EmissionModel<float>& student = ensure_distilled();
          row.teacher_id = baselines[teacher_idx].name;
          row.alpha = detail::fmt_double(xc.alpha);
          if (variant == io::kVariantDistill) {
            detail::fill_size(row, io::save_model(student, variant));
            detail::fill_metrics(row,
                                 metrics::evaluate_model(student, ds.test));
          } else {
            const auto calibration =
                model::collect_calibration(student, calib_inputs);
            const auto qm =
                model::quantize_static(student, calibration, xc.tau);
            row.tau = detail::fmt_double(xc.tau);
            detail::fill_size(row, io::save_quantized(qm, variant));
            auto runner = qm.skeleton();
            model::ForwardHooks hooks;
            hooks.quantized = &qm.linears;
            detail::fill_metrics(
                row, metrics::evaluate_model(runner, ds.test, &hooks));
          }
        }
      } catch (const std::exception& e) {
        row.error = e.what();
        row.serialized_bytes = 0;
        row.budget_64k = row.budget_32k = false;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---- report emission ----

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

/// Budget tier of a model group: classified by its full-precision bytes
/// when available, else by the smallest successful variant.
inline std::string budget_class(std::size_t bytes) {
  if (bytes <= kBudget32KiB) return "Under 32 KB";
  if (bytes <= kBudget64KiB) return "Under 64 KB";
  return "Exceeds 64 KB";
}

inline int budget_rank(const std::string& cls) {
  if (cls == "Exceeds 64 KB") return 0;
  if (cls == "Under 64 KB") return 1;
  return 2;  // Under 32 KB — tightest fit last, mirroring the table order
}

struct ModelGroup {
  std::string key;
  std::string model_name;
  std::string family;
  std::size_t hidden = 0;
  std::size_t params = 0;
  uint64_t seed = 0;
  std::string dataset_id;
  std::string cls;
  std::map<std::string, const EvalRow*> by_variant;
};

inline std::vector<ModelGroup> group_rows(const std::vector<EvalRow>& rows) {
  std::vector<ModelGroup> groups;
  const auto find_group = [&](const std::string& key) -> ModelGroup& {
    for (auto& g : groups)
      if (g.key == key) return g;
    groups.emplace_back();
    groups.back().key = key;
    return groups.back();
  };
  for (const auto& row : rows) {
    const std::string key = row.model_name + "\x1f" + row.dataset_id +
                            "\x1f" + std::to_string(row.seed);
    ModelGroup& g = find_group(key);
    g.model_name = row.model_name;
    g.family = row.family;
    g.hidden = row.hidden;
    g.seed = row.seed;
    g.dataset_id = row.dataset_id;
    if (row.error.empty() && row.param_count > 0) g.params = row.param_count;
    g.by_variant[row.variant] = &row;
  }
  for (auto& g : groups) {
    std::size_t class_bytes = 0;
    const auto base = g.by_variant.find(io::kVariantBaseline);
    if (base != g.by_variant.end() && base->second->error.empty()) {
      class_bytes = base->second->serialized_bytes;
    } else {
      for (const auto& [variant, row] : g.by_variant)
        if (row->error.empty() &&
            (class_bytes == 0 || row->serialized_bytes < class_bytes))
          class_bytes = row->serialized_bytes;
    }
    g.cls = class_bytes == 0 ? "Exceeds 64 KB" : budget_class(class_bytes);
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const ModelGroup& a, const ModelGroup& b) {
                     if (budget_rank(a.cls) != budget_rank(b.cls))
                       return budget_rank(a.cls) < budget_rank(b.cls);
                     if (a.family != b.family) return a.family < b.family;
                     return a.hidden < b.hidden;
                   });
  return groups;
}

inline std::vector<std::string> variants_present(
    const std::vector<EvalRow>& rows) {
  std::vector<std::string> present;
  for (const auto& v : variant_order())
    for (const auto& row : rows)
      if (row.variant == v) {
        present.push_back(v);
        break;
      }
  return present;
}

inline std::string variant_label(const std::string& v) {
  if (v == io::kVariantBaseline) return "baseline";
  if (v == io::kVariantStaticQuant) return "static quant";
  if (v == io::kVariantDynamicQuant) return "dynamic quant";
  if (v == io::kVariantDistill) return "distill";
  if (v == io::kVariantDistillStaticQuant) return "distill+static";
  return v;
}

}  // namespace detail

/// Render evaluation rows as CSV (RFC-4180 quoting) or a markdown report.
/// One line per model; per-variant F1(%)/Acc(%)/Size(KB, ceiled) columns in
/// fixed order; models sorted by (budget class, family, H). The markdown
/// version groups models under budget-class headings; the CSV carries the
/// class and the 64/32 KB verdicts as columns. Both formats render the
/// same numbers.
inline std::string emit_report(const std::vector<EvalRow>& rows,
                               const std::string& format) {
  if (rows.empty())
    throw std::invalid_argument("emit_report: no rows");
  if (format != "csv" && format != "md")
    throw std::invalid_argument("emit_report: format must be csv or md");
  const auto groups = detail::group_rows(rows);
  const auto variants = detail::variants_present(rows);

  const auto cell_f1 = [](const EvalRow* r) {
    return r == nullptr || !r->error.empty() ? std::string()
                                             : detail::pct(r->macro_f1);
  };
  const auto cell_acc = [](const EvalRow* r) {
    return r == nullptr || !r->error.empty() ? std::string()
                                             : detail::pct(r->accuracy);
  };
  const auto cell_kb = [](const EvalRow* r) {
    return r == nullptr || !r->error.empty()
               ? std::string()
               : std::to_string(size_kb_ceil(r->serialized_bytes));
  };
  const auto row_of = [](const detail::ModelGroup& g,
                         const std::string& v) -> const EvalRow* {
    const auto it = g.by_variant.find(v);
    return it == g.by_variant.end() ? nullptr : it->second;
  };

  std::ostringstream out;
  if (format == "csv") {
    out << "model,params";
    for (const auto& v : variants)
      out << "," << v << "_f1_pct," << v << "_acc_pct," << v << "_size_kb,"
          << v << "_under_64k," << v << "_under_32k";
    out << ",family,hidden,layers,seed,dataset,budget_class,teacher,alpha,"
           "tau,errors\r\n";
    for (const auto& g : groups) {
      out << detail::csv_escape(g.model_name) << "," << g.params;
      for (const auto& v : variants) {
        const EvalRow* r = row_of(g, v);
        out << "," << cell_f1(r) << "," << cell_acc(r) << "," << cell_kb(r)
            << ",";
        if (r != nullptr && r->error.empty())
          out << (r->budget_64k ? "pass" : "fail") << ","
              << (r->budget_32k ? "pass" : "fail");
        else
          out << ",";
      }
      std::string layer_spec, teacher, alpha, tau, errors;
      for (const auto& v : variants) {
        const EvalRow* r = row_of(g, v);
        if (r == nullptr) continue;
        layer_spec = r->layer_spec;
        if (!r->teacher_id.empty()) teacher = r->teacher_id;
        if (!r->alpha.empty()) alpha = r->alpha;
        if (!r->tau.empty()) tau = r->tau;
        if (!r->error.empty()) {
          if (!errors.empty()) errors += "; ";
          errors += r->variant + ": " + r->error;
        }
      }
      out << "," << detail::csv_escape(g.family) << "," << g.hidden << ","
          << detail::csv_escape(layer_spec) << "," << g.seed << ","
          << detail::csv_escape(g.dataset_id) << ","
          << detail::csv_escape(g.cls) << "," << detail::csv_escape(teacher)
          << "," << detail::csv_escape(alpha) << ","
          << detail::csv_escape(tau) << "," << detail::csv_escape(errors)
          << "\r\n";
    }
    return out.str();
  }

  // Markdown.
  out << "# Evaluation Report\n\n";
  out << "Metrics are per-timestep macro-F1 and accuracy on the held-out "
         "test split.\n";
  out << "Sizes are serialized container bytes, ceiled to whole KB (1 KB = "
         "1024 B); `*` marks a variant over the 64 KB budget.\n";
  {
    std::vector<std::pair<uint64_t, std::string>> seeds;
    for (const auto& g : groups) {
      bool seen = false;
      for (const auto& s : seeds)
        if (s.first == g.seed && s.second == g.dataset_id) seen = true;
      if (!seen) seeds.emplace_back(g.seed, g.dataset_id);
    }
    out << "Runs:";
    for (const auto& [seed, dataset] : seeds)
      out << " dataset `" << dataset << "` master seed " << seed << ";";
    out << " per-model init/train streams fan out from the master seed.\n";
  }
  std::string current_cls;
  for (const auto& g : groups) {
    if (g.cls != current_cls) {
      current_cls = g.cls;
      out << "\n## " << current_cls << "\n\n";
      out << "| Model | Params |";
      for (const auto& v : variants)
        out << " " << detail::variant_label(v) << " F1 (%) |"
            << " " << detail::variant_label(v) << " Acc (%) |"
            << " " << detail::variant_label(v) << " Size (KB) |";
      out << "\n|---|---|";
      for (std::size_t i = 0; i < variants.size(); ++i) out << "---|---|---|";
      out << "\n";
    }
    out << "| " << g.model_name << " | " << g.params << " |";
    for (const auto& v : variants) {
      const EvalRow* r = row_of(g, v);
      if (r != nullptr && !r->error.empty()) {
        out << " error | error | error |";
        continue;
      }
      std::string kb = cell_kb(r);
      if (r != nullptr && !r->budget_64k) kb += "*";
      const auto dash = [](const std::string& s) {
        return s.empty() ? std::string("—") : s;
      };
      out << " " << dash(cell_f1(r)) << " | " << dash(cell_acc(r)) << " | "
          << dash(kb) << " |";
    }
    out << "\n";
  }
  bool any_error = false, any_distill = false;
  for (const auto& row : rows) {
    if (!row.error.empty()) any_error = true;
    if (!row.teacher_id.empty()) any_distill = true;
  }
  if (any_distill) {
    out << "\nDistillation:";
    std::vector<std::string> seen;
    for (const auto& row : rows)
      if (!row.teacher_id.empty()) {
        const std::string note = " " + row.model_name + " ← teacher " +
                                 row.teacher_id + " (alpha " + row.alpha +
                                 ");";
        if (std::find(seen.begin(), seen.end(), note) == seen.end()) {
          seen.push_back(note);
          out << note;
        }
      }
    out << "\n";
  }
  if (any_error) {
    out << "\nErrors:\n";
    for (const auto& row : rows)
      if (!row.error.empty())
        out << "- " << row.model_name << " " << row.variant << ": "
            << row.error << "\n";
  }
  return out.str();
}

}  // namespace tinyloc::harness
