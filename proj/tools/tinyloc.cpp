// tinyloc — train, compress, and evaluate tiny RSSI-sequence localisation
// models. Subcommands: synth, prepare-data, train, quantize, distill, eval,
// report, size. Exit codes: 0 success, 1 runtime failure, 2 usage/config
// error.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tinyloc/config.hpp"
#include "tinyloc/harness.hpp"

using namespace tinyloc;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int fail(int code, const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return code;
}

// ---- config -> domain structs ----

data::SynthConfig synth_from_config(const io::RunConfig& rc) {
  data::SynthConfig sc;
  sc.room_count = rc.get_u64("data", "rooms", sc.room_count);
  sc.ap_count = rc.get_u64("data", "aps", sc.ap_count);
  sc.samples_per_room =
      rc.get_u64("data", "samples_per_room", sc.samples_per_room);
  sc.noise_std = float(rc.get_double("data", "noise_std", sc.noise_std));
  sc.dropout = float(rc.get_double("data", "dropout", sc.dropout));
  sc.train_walks = rc.get_u64("data", "train_walks", sc.train_walks);
  sc.val_walks = rc.get_u64("data", "val_walks", sc.val_walks);
  sc.test_walks = rc.get_u64("data", "test_walks", sc.test_walks);
  sc.window_len = rc.get_u64("data", "window", sc.window_len);
  sc.stride = rc.get_u64("data", "stride", sc.stride);
  sc.seed = rc.get_u64("", "seed", sc.seed);
  return sc;
}

model::ModelConfig model_from_config(const io::RunConfig& rc,
                                     const data::DatasetSplit& ds) {
  model::ModelConfig mc;
  mc.family = rc.get_or("model", "family", mc.family);
  mc.hidden = rc.get_u64("model", "hidden", mc.hidden);
  mc.blocks = rc.get_u64("model", "blocks", mc.blocks);
  if (rc.has("model", "kernels"))
    mc.kernels = io::detail::split_kernels(rc.get("model", "kernels"));
  mc.state_dim = rc.get_u64("model", "state_dim", mc.state_dim);
  mc.conv_width = rc.get_u64("model", "conv_width", mc.conv_width);
  mc.expand = rc.get_u64("model", "expand", mc.expand);
  mc.input_dim = ds.feature_dim;
  mc.class_count = ds.class_count;
  return mc;
}

train::TrainConfig train_from_config(const io::RunConfig& rc) {
  train::TrainConfig tc;
  tc.epochs = rc.get_u64("train", "epochs", tc.epochs);
  tc.batch_size = rc.get_u64("train", "batch", tc.batch_size);
  tc.lr = rc.get_double("train", "lr", tc.lr);
  tc.stop_at_val_f1 =
      rc.get_double("train", "stop_at_val_f1", tc.stop_at_val_f1);
  return tc;
}

// Everything a trained-model container should remember about how it was
// produced: the dataset identity plus the full config echo.
std::map<std::string, std::string> provenance_meta(
    const io::RunConfig& rc, const std::string& dataset_id) {
  std::map<std::string, std::string> extra;
  if (!dataset_id.empty()) extra["dataset"] = dataset_id;
  for (const auto& [key, value] : rc.echo()) extra["cfg." + key] = value;
  return extra;
}

// ---- shared loading helpers ----

io::Container load_container(const std::string& path) {
  return io::load_file(path);
}

struct LoadedDataset {
  data::DatasetSplit ds;
  std::string id;
};

LoadedDataset load_dataset_file(const std::string& path) {
  const io::Container c = load_container(path);
  LoadedDataset out;
  out.ds = io::load_dataset(c);
  const auto it = c.meta.find("id");
  out.id = it == c.meta.end()
               ? std::filesystem::path(path).stem().string()
               : it->second;
  return out;
}

uint64_t payload_checksum(const io::Container& c) {
  std::vector<uint8_t> bytes;
  for (const auto& t : c.tensors)
    bytes.insert(bytes.end(), t.payload.begin(), t.payload.end());
  return io::fnv1a64(bytes);
}

void write_container(const io::Container& c, const std::string& path) {
  io::save_file(c, path);
  std::cout << "wrote " << path << " (" << io::save_bytes(c).size()
            << " bytes)\n";
}

void print_dataset_summary(const data::DatasetSplit& ds,
                           const std::string& id) {
  std::vector<std::size_t> hist(ds.class_count, 0);
  std::size_t total_steps = 0;
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& seq : *split)
      for (const int y : seq.labels) {
        ++hist.at(std::size_t(y));
        ++total_steps;
      }
  std::cout << "dataset " << id << ": "
            << ds.train.size() + ds.val.size() + ds.test.size()
            << " sequences (train " << ds.train.size() << " / val "
            << ds.val.size() << " / test " << ds.test.size() << "), D="
            << ds.feature_dim << " features, K=" << ds.class_count
            << " classes\n";
  std::cout << "class histogram (" << total_steps << " timesteps):";
  for (std::size_t k = 0; k < hist.size(); ++k)
    std::cout << " " << k << ":" << hist[k];
  std::cout << "\n";
}

std::vector<Tensor<float>> train_features(const data::DatasetSplit& ds) {
  std::vector<Tensor<float>> inputs;
  for (const auto& seq : ds.train) inputs.push_back(seq.features);
  return inputs;
}

// Derived output path for the chained distill+quantize container:
// "student.tloc" -> "student.static.tloc".
std::string hybrid_out_path(const std::string& out) {
  const std::filesystem::path p(out);
  std::filesystem::path q = p;
  q.replace_extension();
  q += ".static";
  q += p.extension();
  return q.string();
}

// ---- subcommand options ----

struct CommonOpts {
  std::string config;
  std::string data;
  std::string out;
  std::optional<uint64_t> seed;
};

io::RunConfig maybe_config(const std::string& path) {
  return path.empty() ? io::RunConfig{} : io::load_config(path);
}

// ---- subcommands ----

int run_synth(const CommonOpts& o) {
  io::RunConfig rc;
  data::SynthConfig sc;
  try {
    rc = maybe_config(o.config);
    const std::string source = rc.get_or("data", "source", "synth");
    if (source != "synth")
      return fail(kExitUsage, "synth requires data.source=synth (got '" +
                                  source + "'); use prepare-data instead");
    sc = synth_from_config(rc);
    if (o.seed) sc.seed = *o.seed;
  } catch (const std::exception& e) {
    return fail(kExitUsage, e.what());
  }
  try {
    const data::DatasetSplit ds = data::generate_synthetic(sc);
    const std::string id = "synth:seed=" + std::to_string(sc.seed);
    print_dataset_summary(ds, id);
    if (!o.out.empty())
      write_container(io::save_dataset(ds, {{"id", id}}), o.out);
    return 0;
  } catch (const std::invalid_argument& e) {
    return fail(kExitUsage, e.what());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, e.what());
  }
}

int run_prepare(const CommonOpts& o) {
  try {
    const io::RunConfig rc = io::load_config(o.config);
    const std::string source = rc.get("data", "source");
    const uint64_t seed = o.seed ? *o.seed : rc.get_u64("", "seed", 7);
    data::DatasetSplit ds;
    std::string id;
    if (source == "uji") {
      const std::string train_csv = rc.get("data", "train_csv");
      const std::string test_csv = rc.get("data", "test_csv");
      ds = data::load_uji(train_csv, test_csv, seed);
      id = "uji:" + std::filesystem::path(train_csv).stem().string() +
           ":seed=" + std::to_string(seed);
    } else if (source == "csv") {
      const std::string csv = rc.get("data", "csv");
      std::vector<data::RawStream> streams;
      std::string stem;
      std::size_t start = 0;  // semicolon-separated stream file list
      while (start <= csv.size()) {
        const std::size_t sep = csv.find(';', start);
        const std::string path =
            csv.substr(start, sep == std::string::npos ? sep : sep - start);
        if (!path.empty()) {
          streams.push_back(data::load_csv_stream(path));
          if (stem.empty())
            stem = std::filesystem::path(path).stem().string();
        }
        if (sep == std::string::npos) break;
        start = sep + 1;
      }
      ds = data::prepare_streams(
          streams, seed, rc.get_u64("data", "window", 20),
          rc.get_u64("data", "stride", 10),
          rc.get_double("data", "fill_horizon", 1.0));
      id = "csv:" + stem + ":seed=" + std::to_string(seed);
    } else {
      return fail(kExitUsage,
                  "data.source must be uji or csv for prepare-data (got '" +
                      source + "')");
    }
    print_dataset_summary(ds, id);
    if (!o.out.empty())
      write_container(io::save_dataset(ds, {{"id", id}}), o.out);
    return 0;
  } catch (const std::exception& e) {
    return fail(kExitUsage, e.what());
  }
}

int run_train(const CommonOpts& o) {
  io::RunConfig rc;
  LoadedDataset loaded;
  model::ModelConfig mc;
  train::TrainConfig tc;
  uint64_t master_seed = 0;
  try {
    rc = maybe_config(o.config);
    loaded = load_dataset_file(o.data);
    mc = model_from_config(rc, loaded.ds);
    tc = train_from_config(rc);
    master_seed = o.seed ? *o.seed : rc.get_u64("", "seed", 1);
    const Rng master(master_seed);
    mc.seed = master.fork("init").seed();
    tc.seed = master.fork("train").seed();
    mc.validate();
  } catch (const std::exception& e) {
    return fail(kExitUsage, e.what());
  }
  try {
    model::EmissionModel<float> m(mc);
    tc.log = &std::cout;
    const auto result = train::train_model(m, loaded.ds, tc);
    std::cout << "trained " << harness::model_display_name(mc) << ": "
              << m.param_count() << " params, best val macro-F1 "
              << result.best_val_f1 << " (epoch " << result.best_epoch
              << ")\n";
    auto extra = provenance_meta(rc, loaded.id);
    extra["master_seed"] = std::to_string(master_seed);
    const io::Container c = io::save_model(m, io::kVariantBaseline, extra);
    std::cout << "param checksum " << std::hex << payload_checksum(c)
              << std::dec << "\n";
    if (!o.out.empty()) write_container(c, o.out);
    return 0;
  } catch (const std::invalid_argument& e) {
    return fail(kExitUsage, e.what());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, e.what());
  }
}

int run_quantize(const CommonOpts& o, const std::string& model_path,
                 const std::string& scheme, double tau) {
  io::Container in;
  std::optional<LoadedDataset> loaded;
  try {
    if (scheme != "static" && scheme != "dynamic")
      return fail(kExitUsage,
                  "scheme must be static or dynamic (got '" + scheme + "')");
    in = load_container(model_path);
    if (io::is_quantized(in))
      return fail(kExitUsage, model_path +
                                  " is already quantized; re-quantization "
                                  "is refused");
    if (scheme == "static") {
      if (o.data.empty())
        return fail(kExitUsage,
                    "static quantization needs --data for calibration");
      loaded = load_dataset_file(o.data);
    }
  } catch (const std::exception& e) {
    return fail(kExitUsage, e.what());
  }
  try {
    model::EmissionModel<float> m = io::load_model(in);
    const auto before = harness::model_size(in);
    model::QuantizedModel qm;
    // Carry the source container's full provenance (dataset, seeds, config
    // echo); save_quantized overwrites the identity keys it owns.
    std::map<std::string, std::string> extra = in.meta;
    std::string variant = io::kVariantStaticQuant;
    if (scheme == "static") {
      const auto calibration =
          model::collect_calibration(m, train_features(loaded->ds));
      qm = model::quantize_static(m, calibration, float(tau));
      extra["tau"] = harness::detail::fmt_double(tau);
    } else {
      qm = model::quantize_dynamic(m);
      variant = io::kVariantDynamicQuant;
    }
    const io::Container out_c = io::save_quantized(qm, variant, extra);
    const auto after = harness::model_size(out_c);
    std::cout << "before (" << in.meta_at("variant") << "):\n"
              << harness::format_size(before);
    std::cout << "after (" << variant << "):\n" << harness::format_size(after);
    if (after.total_bytes >= before.total_bytes)
      std::cout << "warning: quantized container is not smaller ("
                << before.total_bytes << " -> " << after.total_bytes
                << " bytes); quantization overhead exceeds the savings on "
                   "a model this small\n";
    if (!o.out.empty()) write_container(out_c, o.out);
    return 0;
  } catch (const std::invalid_argument& e) {
    return fail(kExitUsage, e.what());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, e.what());
  }
}

int run_distill(const CommonOpts& o, const std::string& teacher_path,
                std::optional<double> alpha_flag, double tau, bool hybrid) {
  io::RunConfig rc;
  LoadedDataset loaded;
  io::Container teacher_c;
  model::ModelConfig mc;
  train::TrainConfig tc;
  double alpha = 0.1;
  uint64_t master_seed = 0;
  try {
    rc = maybe_config(o.config);
    loaded = load_dataset_file(o.data);
    teacher_c = load_container(teacher_path);
    if (io::is_quantized(teacher_c))
      return fail(kExitUsage,
                  "teacher must be a full-precision model container");
    mc = model_from_config(rc, loaded.ds);
    tc = train_from_config(rc);
    alpha = alpha_flag ? *alpha_flag
                       : rc.get_double("distill", "alpha", 0.1);
    if (alpha < 0.0 || alpha > 1.0)
      return fail(kExitUsage, "alpha must lie in [0, 1]");
    tc.alpha = alpha;
    tc.soft_targets = rc.get_bool("distill", "soft_targets", false);
    master_seed = o.seed ? *o.seed : rc.get_u64("", "seed", 1);
    const Rng master(master_seed);
    mc.seed = master.fork("distill-init").seed();
    tc.seed = master.fork("distill-train").seed();
    mc.validate();
  } catch (const std::exception& e) {
    return fail(kExitUsage, e.what());
  }
  try {
    model::EmissionModel<float> teacher = io::load_model(teacher_c);
    if (teacher.cfg.class_count != mc.class_count)
      return fail(kExitUsage,
                  "teacher predicts " +
                      std::to_string(teacher.cfg.class_count) +
                      " classes but the dataset has " +
                      std::to_string(mc.class_count));
    const std::string teacher_id = harness::model_display_name(teacher.cfg);
    std::cout << "distilling from " << teacher_id << " with alpha=" << alpha
              << (tc.soft_targets ? " (soft targets)" : "") << "\n";
    if (alpha == 1.0)
      std::cout << "warning: alpha=1 disables the distillation signal; "
                   "this is plain gold-label training\n";
    model::EmissionModel<float> student(mc);
    tc.log = &std::cout;
    const auto result =
        train::distill_train(teacher, student, loaded.ds, tc, &std::cerr);
    std::cout << "distilled " << harness::model_display_name(mc) << ": "
              << student.param_count() << " params, best val macro-F1 "
              << result.best_val_f1 << " (epoch " << result.best_epoch
              << ")\n";
    auto extra = provenance_meta(rc, loaded.id);
    extra["master_seed"] = std::to_string(master_seed);
    extra["teacher"] = teacher_id;
    extra["alpha"] = harness::detail::fmt_double(alpha);
    if (!o.out.empty())
      write_container(io::save_model(student, io::kVariantDistill, extra),
                      o.out);
    if (hybrid) {
      const auto calibration =
          model::collect_calibration(student, train_features(loaded.ds));
      const auto qm = model::quantize_static(student, calibration, float(tau));
      extra["tau"] = harness::detail::fmt_double(tau);
      const io::Container qc =
          io::save_quantized(qm, io::kVariantDistillStaticQuant, extra);
      if (!o.out.empty()) write_container(qc, hybrid_out_path(o.out));
    }
    return 0;
  } catch (const std::invalid_argument& e) {
    return fail(kExitUsage, e.what());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, e.what());
  }
}

int run_eval(const CommonOpts& o, const std::vector<std::string>& model_paths,
             std::string format, const io::RunConfig& rc) {
  LoadedDataset loaded;
  std::vector<io::Container> containers;
  std::string out_path = o.out;
  try {
    if (model_paths.empty())
      return fail(kExitUsage, "at least one --model container is required");
    if (format.empty()) format = rc.get_or("report", "format", "md");
    if (out_path.empty()) out_path = rc.get_or("report", "out", "");
    loaded = load_dataset_file(o.data);
    for (const auto& path : model_paths)
      containers.push_back(load_container(path));
  } catch (const std::exception& e) {
    return fail(kExitUsage, e.what());
  }
  try {
    const auto rows =
        harness::evaluate_containers(containers, loaded.ds, loaded.id);
    const std::string report = harness::emit_report(rows, format);
    if (out_path.empty()) {
      std::cout << report;
    } else {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + out_path);
      out << report;
      std::cout << "wrote " << out_path << " (" << report.size()
                << " bytes)\n";
    }
    for (const auto& row : rows)
      if (!row.error.empty())
        std::cerr << "row error: " << row.model_name << " " << row.variant
                  << ": " << row.error << "\n";
    return 0;
  } catch (const std::invalid_argument& e) {
    return fail(kExitUsage, e.what());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, e.what());
  }
}

int run_size(const std::string& model_path) {
  try {
    const io::Container c = load_container(model_path);
    std::cout << "kind=" << c.meta_at("kind");
    for (const auto& key : {"family", "variant", "scheme"})
      if (c.meta.count(key)) std::cout << " " << key << "=" << c.meta.at(key);
    std::cout << "\n" << harness::format_size(harness::model_size(c));
    return 0;
  } catch (const std::exception& e) {
    return fail(kExitUsage, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tiny RSSI-sequence localisation models: train, compress, "
               "evaluate"};
  app.require_subcommand(1);

  CommonOpts synth_o, prep_o, train_o, quant_o, distill_o, eval_o, report_o;
  std::string quant_model, distill_teacher, size_model;
  std::vector<std::string> eval_models, report_models;
  std::string quant_scheme = "static", eval_format, report_format;
  double quant_tau = 6.0, distill_tau = 6.0;
  std::optional<double> distill_alpha;
  bool distill_hybrid = false;

  auto* synth = app.add_subcommand(
      "synth", "generate a synthetic RSSI dataset container");
  synth->add_option("--config", synth_o.config, "INI config path");
  synth->add_option("--seed", synth_o.seed, "master seed");
  synth->add_option("--out", synth_o.out, "output dataset container");

  auto* prep = app.add_subcommand(
      "prepare-data", "window and split CSV/UJI data into a container");
  prep->add_option("--config", prep_o.config, "INI config path")->required();
  prep->add_option("--seed", prep_o.seed, "master seed");
  prep->add_option("--out", prep_o.out, "output dataset container");

  auto* train = app.add_subcommand("train", "train a model on a dataset");
  train->add_option("--config", train_o.config, "INI config path");
  train->add_option("--data", train_o.data, "dataset container")->required();
  train->add_option("--seed", train_o.seed, "master seed");
  train->add_option("--out", train_o.out, "output model container");

  auto* quant = app.add_subcommand(
      "quantize", "post-training quantization of a trained model");
  quant->add_option("--model", quant_model, "model container")->required();
  quant->add_option("--scheme", quant_scheme, "static|dynamic");
  quant->add_option("--tau", quant_tau, "outlier column threshold");
  quant->add_option("--data", quant_o.data,
                    "dataset container for calibration (static)");
  quant->add_option("--out", quant_o.out, "output model container");

  auto* distill = app.add_subcommand(
      "distill", "train a student against a teacher's predictions");
  distill->add_option("--config", distill_o.config, "INI config path");
  distill->add_option("--teacher", distill_teacher, "teacher container")
      ->required();
  distill->add_option("--data", distill_o.data, "dataset container")
      ->required();
  distill->add_option("--alpha", distill_alpha,
                      "gold-label weight in the mixed loss (default 0.1)");
  distill->add_option("--tau", distill_tau,
                      "outlier threshold for --hybrid quantization");
  distill->add_flag("--hybrid", distill_hybrid,
                    "also emit a static-quantized copy of the student");
  distill->add_option("--seed", distill_o.seed, "master seed");
  distill->add_option("--out", distill_o.out, "output model container");

  auto* eval = app.add_subcommand(
      "eval", "evaluate model containers on a dataset's test split");
  eval->add_option("--model", eval_models, "model container (repeatable)")
      ->required();
  eval->add_option("--data", eval_o.data, "dataset container")->required();
  eval->add_option("--format", eval_format, "csv|md (default md)");
  eval->add_option("--out", eval_o.out, "write report here (default stdout)");

  auto* report = app.add_subcommand(
      "report", "like eval, with format/out defaults from [report] config");
  report->add_option("--config", report_o.config, "INI config path");
  report->add_option("--model", report_models, "model container (repeatable)")
      ->required();
  report->add_option("--data", report_o.data, "dataset container")
      ->required();
  report->add_option("--format", report_format, "csv|md");
  report->add_option("--out", report_o.out, "write report here");

  auto* size = app.add_subcommand(
      "size", "byte-exact size breakdown of a container");
  size->add_option("--model", size_model, "container path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int cli_rc = app.exit(e);
    return cli_rc == 0 ? 0 : kExitUsage;
  }

  if (*synth) return run_synth(synth_o);
  if (*prep) return run_prepare(prep_o);
  if (*train) return run_train(train_o);
  if (*quant) return run_quantize(quant_o, quant_model, quant_scheme,
                                  quant_tau);
  if (*distill)
    return run_distill(distill_o, distill_teacher, distill_alpha, distill_tau,
                       distill_hybrid);
  if (*eval) return run_eval(eval_o, eval_models, eval_format, io::RunConfig{});
  if (*report) {
    io::RunConfig rc;
    try {
      rc = maybe_config(report_o.config);
    } catch (const std::exception& e) {
      return fail(kExitUsage, e.what());
    }
    return run_eval(report_o, report_models, report_format, rc);
  }
  return run_size(size_model);
}
