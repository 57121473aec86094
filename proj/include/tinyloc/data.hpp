#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "tinyloc/rng.hpp"
#include "tinyloc/tensor.hpp"

namespace tinyloc::data {

// RSSI ingestion: resample → forward-fill → window → scale. Missing
// readings are NaN until the fill stage replaces them; after preprocessing
// every sequence holds only values in [0, 1].

inline constexpr float kMissing = std::numeric_limits<float>::quiet_NaN();
inline constexpr float kInHomeSentinel = -120.0f;  // beyond feasible RSSI
inline constexpr float kUjiSentinel = -105.0f;     // below weakest observed
inline constexpr double kGridHz = 5.0;

inline bool is_missing(float v) { return std::isnan(v); }

struct RawStream {
  std::vector<double> timestamps;             // seconds, non-decreasing
  std::vector<std::vector<float>> readings;   // one vector of D per sample
  std::vector<int> labels;                    // class id per sample

  std::size_t size() const { return timestamps.size(); }
  std::size_t feature_dim() const {
    return readings.empty() ? 0 : readings[0].size();
  }
  void validate() const {
    if (timestamps.size() != readings.size() ||
        timestamps.size() != labels.size())
      throw std::invalid_argument("stream: parallel arrays disagree");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
      if (timestamps[i] < timestamps[i - 1])
        throw std::invalid_argument("stream: timestamps not sorted");
    for (const auto& r : readings)
      if (r.size() != feature_dim())
        throw std::invalid_argument("stream: ragged readings");
  }
};

struct LabeledSequence {
  Tensor<float> features;   // T×D, normalized
  std::vector<int> labels;  // length T
};

struct DatasetSplit {
  std::vector<LabeledSequence> train, val, test;
  std::size_t class_count = 0;
  std::size_t feature_dim = 0;

  const std::vector<LabeledSequence>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split: " + name);
  }
};

struct ScalerParams {
  std::vector<float> min, max;  // per feature, dBm
};

struct SynthConfig {
  std::size_t room_count = 3;
  std::size_t ap_count = 4;
  std::size_t samples_per_room = 40;  // per room visit, at the 5 Hz rate
  std::vector<std::vector<float>> room_means;  // empty → line-geometry defaults
  double noise_std = 1.5;
  double dropout = 0.0;
  uint64_t seed = 7;
  std::size_t train_walks = 24;
  std::size_t val_walks = 8;
  std::size_t test_walks = 8;
  std::size_t window_len = 20;
  std::size_t stride = 10;
};

/// Snap a stream onto the uniform 5 Hz grid. Each grid point takes the
/// nearest sample; a grid point with no sample within half a grid step gets
/// a missing row. Labels always come from the nearest sample.
inline RawStream resample_to_grid(const RawStream& s, double hz = kGridHz) {
  s.validate();
  if (s.size() == 0) throw std::invalid_argument("resample: empty stream");
  const double step = 1.0 / hz;
  const double t0 = s.timestamps.front();
  const std::size_t n = static_cast<std::size_t>(std::floor(
                            (s.timestamps.back() - t0) / step + 1e-9)) +
                        1;
  RawStream out;
  out.timestamps.reserve(n);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + double(i) * step;
    while (j + 1 < s.size() &&
           std::abs(s.timestamps[j + 1] - t) <= std::abs(s.timestamps[j] - t))
      ++j;
    out.timestamps.push_back(t);
    out.labels.push_back(s.labels[j]);
    if (std::abs(s.timestamps[j] - t) <= step / 2 + 1e-9)
      out.readings.push_back(s.readings[j]);
    else
      out.readings.push_back(
          std::vector<float>(s.feature_dim(), kMissing));
  }
  return out;
}

/// Fill missing readings per access point: a gap ≤ horizon seconds reuses
/// the last observed value; longer gaps (and leading missing) become the
/// sentinel. Output contains no missing values, so the op is idempotent.
/// Gap comparison carries a nanosecond-scale tolerance so that grid
/// timestamps built by repeated float addition stay on the fill side.
inline RawStream forward_fill(const RawStream& s, double horizon_s,
                              float sentinel = kInHomeSentinel) {
  if (horizon_s <= 0) throw std::invalid_argument("forward_fill: horizon ≤ 0");
  s.validate();
  if (s.size() == 0) throw std::invalid_argument("forward_fill: empty stream");
  RawStream out = s;
  const std::size_t D = s.feature_dim();
  std::vector<float> last_val(D, 0.0f);
  std::vector<double> last_t(D, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t d = 0; d < D; ++d) {
      const float v = s.readings[i][d];
      if (!is_missing(v)) {
        last_val[d] = v;
        last_t[d] = s.timestamps[i];
      } else if (s.timestamps[i] - last_t[d] <= horizon_s + 1e-9) {
        out.readings[i][d] = last_val[d];
      } else {
        out.readings[i][d] = sentinel;
      }
    }
  return out;
}

/// Cut a filled stream into fixed-length windows with per-timestep labels.
/// count = max(0, ⌊(T − len)/stride⌋ + 1); the trailing remainder is dropped.
inline std::vector<LabeledSequence> make_windows(const RawStream& s,
                                                 std::size_t window_len,
                                                 std::size_t stride) {
  if (window_len < 1 || stride < 1)
    throw std::invalid_argument("make_windows: bad window/stride");
  s.validate();
  std::vector<LabeledSequence> out;
  if (s.size() < window_len) return out;
  const std::size_t D = s.feature_dim();
  for (std::size_t start = 0; start + window_len <= s.size();
       start += stride) {
    LabeledSequence seq;
    seq.features = Tensor<float>({window_len, D});
    seq.labels.resize(window_len);
    for (std::size_t t = 0; t < window_len; ++t) {
      for (std::size_t d = 0; d < D; ++d)
        seq.features.at(t, d) = s.readings[start + t][d];
      seq.labels[t] = s.labels[start + t];
    }
    out.push_back(std::move(seq));
  }
  return out;
}

/// Per-feature min/max over the training sequences only.
inline ScalerParams fit_scaler(const std::vector<LabeledSequence>& train) {
  if (train.empty())
    throw std::invalid_argument("fit_scaler: empty training set");
  const std::size_t D = train[0].features.cols();
  ScalerParams p;
  p.min.assign(D, std::numeric_limits<float>::max());
  p.max.assign(D, std::numeric_limits<float>::lowest());
  for (const auto& seq : train)
    for (std::size_t t = 0; t < seq.features.rows(); ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const float v = seq.features.at(t, d);
        if (is_missing(v))
          throw std::invalid_argument("fit_scaler: missing value; fill first");
        p.min[d] = std::min(p.min[d], v);
        p.max[d] = std::max(p.max[d], v);
      }
  std::size_t constant = 0;
  std::size_t first = 0;
  for (std::size_t d = 0; d < D; ++d)
    if (!(p.max[d] > p.min[d])) {
      if (constant == 0) first = d;
      ++constant;
    }
  if (constant > 0)
    std::cerr << "tinyloc: warning: " << constant
              << " feature(s) are constant in the training split (first: "
              << first << "); they scale to 0\n";
  return p;
}

/// v → (v − min)/(max − min) clamped to [0,1]; constant features map to 0.
inline void apply_scaler(LabeledSequence& seq, const ScalerParams& p) {
  const std::size_t D = seq.features.cols();
  if (p.min.size() != D)
    throw std::invalid_argument("apply_scaler: feature dim mismatch");
  for (std::size_t t = 0; t < seq.features.rows(); ++t)
    for (std::size_t d = 0; d < D; ++d) {
      float& v = seq.features.at(t, d);
      const float range = p.max[d] - p.min[d];
      v = range > 0 ? std::clamp((v - p.min[d]) / range, 0.0f, 1.0f) : 0.0f;
    }
}

inline void apply_scaler(std::vector<LabeledSequence>& seqs,
                         const ScalerParams& p) {
  for (auto& s : seqs) apply_scaler(s, p);
}

/// Largest-remainder allocation of a stratified split: per class,
/// ⌊frac·n_c⌋ plus one extra for the largest fractional remainders until
/// ⌊frac·N⌋ items are taken. Returns (taken, left) index lists.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_split(const std::vector<int>& labels, double frac, Rng rng) {
  const std::size_t N = labels.size();
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < N; ++i) by_class[labels[i]].push_back(i);
  const std::size_t target = static_cast<std::size_t>(
      std::floor(frac * double(N)));
  std::vector<std::pair<double, int>> remainders;  // (−remainder, class)
  std::size_t base_total = 0;
  std::map<int, std::size_t> take;
  for (auto& [cls, idx] : by_class) {
    const double q = frac * double(idx.size());
    take[cls] = static_cast<std::size_t>(std::floor(q));
    base_total += take[cls];
    remainders.push_back({-(q - std::floor(q)), cls});
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; base_total < target && i < remainders.size(); ++i) {
    const int cls = remainders[i].second;
    if (take[cls] < by_class[cls].size()) {
      ++take[cls];
      ++base_total;
    }
  }
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < take[cls] ? out.first : out.second).push_back(idx[i]);
  }
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

// ---- synthetic generation ----

/// Default per-room AP means from a 1-D line: rooms at integer positions,
/// APs spread across the same span, mean = −40 − 12·distance. Pairwise
/// distinct and comfortably separable against the default noise.
inline std::vector<std::vector<float>> default_room_means(
    std::size_t rooms, std::size_t aps) {
  std::vector<std::vector<float>> m(rooms, std::vector<float>(aps));
  const double span = double(rooms - 1);
  for (std::size_t r = 0; r < rooms; ++r)
    for (std::size_t a = 0; a < aps; ++a) {
      const double ap_pos =
          aps > 1 ? span * double(a) / double(aps - 1) : span / 2;
      m[r][a] = static_cast<float>(-40.0 - 12.0 * std::abs(double(r) - ap_pos));
    }
  return m;
}

namespace detail {
inline RawStream synth_walk(const SynthConfig& cfg,
                            const std::vector<std::vector<float>>& means,
                            Rng rng) {
  std::vector<std::size_t> order(cfg.room_count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  RawStream s;
  const double step = 1.0 / kGridHz;
  std::size_t i = 0;
  for (const std::size_t room : order)
    for (std::size_t k = 0; k < cfg.samples_per_room; ++k, ++i) {
      s.timestamps.push_back(double(i) * step);
      s.labels.push_back(static_cast<int>(room));
      std::vector<float> row(cfg.ap_count);
      for (std::size_t a = 0; a < cfg.ap_count; ++a) {
        const double v = double(means[room][a]) +
                         (cfg.noise_std > 0
                              ? rng.normal(0.0, cfg.noise_std)
                              : 0.0);
        row[a] = rng.bernoulli(cfg.dropout) ? kMissing
                                            : static_cast<float>(v);
      }
      s.readings.push_back(std::move(row));
    }
  return s;
}

inline std::vector<LabeledSequence> synth_split(
    const SynthConfig& cfg, const std::vector<std::vector<float>>& means,
    const Rng& root, const std::string& name, std::size_t walks) {
  std::vector<LabeledSequence> out;
  for (std::size_t w = 0; w < walks; ++w) {
    Rng rng = root.fork("synth-" + name + "-walk-" + std::to_string(w));
    RawStream s = synth_walk(cfg, means, rng);
    s = forward_fill(s, 1.0, kInHomeSentinel);
    auto windows = make_windows(s, cfg.window_len, cfg.stride);
    for (auto& seq : windows) out.push_back(std::move(seq));
  }
  return out;
}
}  // namespace detail

/// Deterministic desk-scale dataset: seeded walks among rooms with per-room
/// AP means, Gaussian noise, and Bernoulli dropout (missing markers), run
/// through the same fill/window/scale pipeline as real data. Splits come
/// from disjoint walks.
inline DatasetSplit generate_synthetic(const SynthConfig& cfg) {
  if (cfg.room_count < 2)
    throw std::invalid_argument("generate_synthetic: need at least 2 rooms");
  if (cfg.ap_count < 1 || cfg.samples_per_room < 1)
    throw std::invalid_argument("generate_synthetic: bad config");
  const auto means = cfg.room_means.empty()
                         ? default_room_means(cfg.room_count, cfg.ap_count)
                         : cfg.room_means;
  if (means.size() != cfg.room_count)
    throw std::invalid_argument("generate_synthetic: room mean count");
  for (std::size_t r = 0; r < means.size(); ++r) {
    if (means[r].size() != cfg.ap_count)
      throw std::invalid_argument("generate_synthetic: mean dim mismatch");
    for (std::size_t q = r + 1; q < means.size(); ++q)
      if (means[r] == means[q])
        throw std::invalid_argument(
            "generate_synthetic: room means must be pairwise distinct");
  }
  const Rng root(cfg.seed);
  DatasetSplit ds;
  ds.class_count = cfg.room_count;
  ds.feature_dim = cfg.ap_count;
  ds.train = detail::synth_split(cfg, means, root, "train", cfg.train_walks);
  ds.val = detail::synth_split(cfg, means, root, "val", cfg.val_walks);
  ds.test = detail::synth_split(cfg, means, root, "test", cfg.test_walks);
  const ScalerParams scaler = fit_scaler(ds.train);
  apply_scaler(ds.train, scaler);
  apply_scaler(ds.val, scaler);
  apply_scaler(ds.test, scaler);
  return ds;
}

// ---- delimiter-separated ingestion ----

namespace detail {
inline std::vector<std::string> split_line(const std::string& line,
                                           char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, delim)) out.push_back(cell);
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

inline bool is_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}
}  // namespace detail

/// One row per timestamped sample: timestamp, D RSSI columns (empty cell =
/// missing), label. An optional non-numeric first line is treated as a
/// header.
inline RawStream load_csv_stream(const std::string& path, char delim = ',') {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stream file: " + path);
  RawStream s;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_line(line, delim);
    if (cells.size() < 3)
      throw std::runtime_error("stream row needs timestamp, data, label: " +
                               path);
    if (first && !detail::is_number(cells[0])) {
      first = false;
      continue;  // header
    }
    first = false;
    s.timestamps.push_back(std::stod(cells[0]));
    std::vector<float> row(cells.size() - 2);
    for (std::size_t d = 0; d + 2 < cells.size(); ++d)
      row[d] = cells[d + 1].empty() ? kMissing : std::stof(cells[d + 1]);
    s.readings.push_back(std::move(row));
    s.labels.push_back(std::stoi(cells.back()));
  }
  s.validate();
  if (s.size() == 0) throw std::runtime_error("empty stream file: " + path);
  return s;
}

/// In-home pipeline over one or more raw streams: 5 Hz grid → 1 s forward
/// fill → 20/10 windows → stratified window split (75% train, the rest
/// half val / half test) → min-max scaling fit on train.
inline DatasetSplit prepare_streams(const std::vector<RawStream>& streams,
                                    uint64_t seed,
                                    std::size_t window_len = 20,
                                    std::size_t stride = 10,
                                    double fill_horizon_s = 1.0) {
  if (streams.empty())
    throw std::invalid_argument("prepare_streams: no input streams");
  std::vector<LabeledSequence> windows;
  int max_label = -1;
  const std::size_t D = streams[0].feature_dim();
  for (const auto& raw : streams) {
    if (raw.feature_dim() != D)
      throw std::invalid_argument("prepare_streams: feature dim mismatch");
    RawStream s = resample_to_grid(raw);
    s = forward_fill(s, fill_horizon_s, kInHomeSentinel);
    for (auto& w : make_windows(s, window_len, stride))
      windows.push_back(std::move(w));
  }
  if (windows.empty())
    throw std::invalid_argument("prepare_streams: streams shorter than one window");
  std::vector<int> majority;  // stratify windows by majority label
  for (const auto& w : windows) {
    std::map<int, int> counts;
    for (const int y : w.labels) {
      ++counts[y];
      max_label = std::max(max_label, y);
    }
    int best = w.labels[0], best_n = 0;
    for (const auto& [y, n] : counts)
      if (n > best_n) {
        best = y;
        best_n = n;
      }
    majority.push_back(best);
  }
  const Rng root(seed);
  auto [train_idx, rest_idx] =
      stratified_split(majority, 0.75, root.fork("split-train"));
  std::vector<int> rest_labels;
  for (const std::size_t i : rest_idx) rest_labels.push_back(majority[i]);
  auto [val_rel, test_rel] =
      stratified_split(rest_labels, 0.5, root.fork("split-val"));
  DatasetSplit ds;
  ds.feature_dim = D;
  ds.class_count = static_cast<std::size_t>(max_label) + 1;
  for (const std::size_t i : train_idx) ds.train.push_back(windows[i]);
  for (const std::size_t i : val_rel) ds.val.push_back(windows[rest_idx[i]]);
  for (const std::size_t i : test_rel)
    ds.test.push_back(windows[rest_idx[i]]);
  const ScalerParams scaler = fit_scaler(ds.train);
  apply_scaler(ds.train, scaler);
  apply_scaler(ds.val, scaler);
  apply_scaler(ds.test, scaler);
  return ds;
}

// ---- UJI fingerprints ----

inline constexpr std::size_t kUjiApCount = 520;

/// Published wide layout: 520 WAP columns then location metadata. Labels
/// are joint building–floor–area classes discovered from the training
/// records (sorted triples → dense ids). Each record is a length-1
/// sequence; the training file is split 75/25 stratified into train/val and
/// the validation file becomes the test split.
inline DatasetSplit load_uji(const std::string& train_path,
                             const std::string& test_path, uint64_t seed,
                             char delim = ',') {
  struct Record {
    std::vector<float> rssi;
    long building, floor, area;
    std::size_t line_no;
  };
  auto read_file = [&](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open uji file: " + path);
    std::string line;
    if (!std::getline(in, line))
      throw std::runtime_error("empty uji file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_line(line, delim);
    std::size_t wap_cols = 0;
    long bcol = -1, fcol = -1, acol = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::string h = header[i];
      std::transform(h.begin(), h.end(), h.begin(), ::toupper);
      if (h.rfind("WAP", 0) == 0) ++wap_cols;
      if (h == "BUILDINGID") bcol = long(i);
      if (h == "FLOOR") fcol = long(i);
      if (h == "SPACEID") acol = long(i);
    }
    if (wap_cols != kUjiApCount)
      throw std::runtime_error(path + ": expected 520 WAP columns, found " +
                               std::to_string(wap_cols));
    if (bcol < 0 || fcol < 0 || acol < 0)
      throw std::runtime_error(path +
                               ": missing BUILDINGID/FLOOR/SPACEID columns");
    std::vector<Record> recs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto cells = detail::split_line(line, delim);
      if (cells.size() != header.size())
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": column count mismatch");
      Record r;
      r.line_no = line_no;
      r.rssi.resize(kUjiApCount);
      for (std::size_t d = 0; d < kUjiApCount; ++d) {
        const float v = std::stof(cells[d]);
        r.rssi[d] = (v == 100.0f) ? kUjiSentinel : v;  // undetected marker
      }
      r.building = std::stol(cells[std::size_t(bcol)]);
      r.floor = std::stol(cells[std::size_t(fcol)]);
      r.area = std::stol(cells[std::size_t(acol)]);
      recs.push_back(std::move(r));
    }
    return recs;
  };

  const auto train_recs = read_file(train_path);
  const auto test_recs = read_file(test_path);
  if (train_recs.empty())
    throw std::runtime_error("uji training file has no records");

  std::map<std::tuple<long, long, long>, int> class_of;
  for (const auto& r : train_recs) {
    const auto key = std::make_tuple(r.building, r.floor, r.area);
    class_of.emplace(key, 0);
  }
  int next = 0;
  for (auto& [key, id] : class_of) id = next++;  // sorted triples → dense ids

  auto to_sequence = [&](const Record& r, const std::string& origin) {
    const auto key = std::make_tuple(r.building, r.floor, r.area);
    const auto it = class_of.find(key);
    if (it == class_of.end())
      throw std::runtime_error(
          origin + " record at line " + std::to_string(r.line_no) +
          " has unseen building/floor/area (" + std::to_string(r.building) +
          "/" + std::to_string(r.floor) + "/" + std::to_string(r.area) + ")");
    LabeledSequence seq;
    seq.features = Tensor<float>({1, kUjiApCount});
    for (std::size_t d = 0; d < kUjiApCount; ++d)
      seq.features.at(0, d) = r.rssi[d];
    seq.labels = {it->second};
    return seq;
  };

  std::vector<int> labels;
  for (const auto& r : train_recs)
    labels.push_back(
        class_of.at(std::make_tuple(r.building, r.floor, r.area)));
  auto [train_idx, val_idx] =
      stratified_split(labels, 0.75, Rng(seed).fork("uji-split"));

  DatasetSplit ds;
  ds.feature_dim = kUjiApCount;
  ds.class_count = class_of.size();
  for (const std::size_t i : train_idx)
    ds.train.push_back(to_sequence(train_recs[i], "train"));
  for (const std::size_t i : val_idx)
    ds.val.push_back(to_sequence(train_recs[i], "val"));
  for (const auto& r : test_recs)
    ds.test.push_back(to_sequence(r, "test"));
  const ScalerParams scaler = fit_scaler(ds.train);
  apply_scaler(ds.train, scaler);
  apply_scaler(ds.val, scaler);
  apply_scaler(ds.test, scaler);
  return ds;
}

}  // namespace tinyloc::data
