#include <gtest/gtest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "tinyloc/data.hpp"

using namespace tinyloc;
using namespace tinyloc::data;

namespace {

RawStream grid_stream(std::size_t T, std::size_t D, int label = 0) {
  RawStream s;
  for (std::size_t i = 0; i < T; ++i) {
    s.timestamps.push_back(double(i) * 0.2);
    s.readings.push_back(std::vector<float>(D, -50.0f));
    s.labels.push_back(label);
  }
  return s;
}

std::filesystem::path temp_file(const std::string& name,
                                const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p;
}

bool sequences_identical(const std::vector<LabeledSequence>& a,
                         const std::vector<LabeledSequence>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].labels != b[i].labels) return false;
    if (a[i].features.shape != b[i].features.shape) return false;
    if (std::memcmp(a[i].features.data.data(), b[i].features.data.data(),
                    a[i].features.count() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace

// ---- windowing ----

TEST(MakeWindows, CountMatchesClosedForm) {
  for (std::size_t T = 0; T <= 75; ++T) {
    for (const auto [len, stride] :
         {std::pair<std::size_t, std::size_t>{20, 10}, {5, 5}, {7, 3},
          {4, 9}}) {
      const auto windows = make_windows(grid_stream(T, 2), len, stride);
      const std::size_t expect =
          T < len ? 0 : (T - len) / stride + 1;
      EXPECT_EQ(windows.size(), expect) << "T=" << T << " len=" << len
                                        << " stride=" << stride;
    }
  }
}

TEST(MakeWindows, ContentAlignsWithStrideOffsets) {
  RawStream s = grid_stream(35, 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.readings[i][0] = float(i);
    s.labels[i] = int(i);
  }
  const auto windows = make_windows(s, 20, 10);
  ASSERT_EQ(windows.size(), 2u);  // samples 30..34 dropped
  for (std::size_t w = 0; w < windows.size(); ++w)
    for (std::size_t t = 0; t < 20; ++t) {
      EXPECT_EQ(windows[w].features.at(t, 0), float(w * 10 + t));
      EXPECT_EQ(windows[w].labels[t], int(w * 10 + t));
    }
}

TEST(MakeWindows, ShortStreamGivesEmptyList) {
  EXPECT_TRUE(make_windows(grid_stream(19, 3), 20, 10).empty());
  EXPECT_TRUE(make_windows(grid_stream(0, 3), 20, 10).empty());
}

// ---- forward fill ----

TEST(ForwardFill, GapWithinHorizonReusesLastValue) {
  RawStream s = grid_stream(10, 1);
  s.readings[3][0] = kMissing;  // 0.2 s after last observation
  s.readings[4][0] = kMissing;  // 0.4 s
  const auto f = forward_fill(s, 1.0);
  EXPECT_FLOAT_EQ(f.readings[3][0], -50.0f);
  EXPECT_FLOAT_EQ(f.readings[4][0], -50.0f);
}

TEST(ForwardFill, GapBeyondHorizonBecomesSentinel) {
  RawStream s = grid_stream(12, 1);
  for (std::size_t i = 3; i <= 9; ++i) s.readings[i][0] = kMissing;
  const auto f = forward_fill(s, 1.0);
  // last observation at t=0.4; horizon admits fills through t=1.4 (i=7)
  for (std::size_t i = 3; i <= 7; ++i)
    EXPECT_FLOAT_EQ(f.readings[i][0], -50.0f) << i;
  EXPECT_FLOAT_EQ(f.readings[8][0], kInHomeSentinel);
  EXPECT_FLOAT_EQ(f.readings[9][0], kInHomeSentinel);
  EXPECT_FLOAT_EQ(f.readings[10][0], -50.0f);  // fresh observation
}

TEST(ForwardFill, LeadingMissingBecomesSentinel) {
  RawStream s = grid_stream(6, 2);
  s.readings[0][1] = kMissing;
  s.readings[1][1] = kMissing;
  const auto f = forward_fill(s, 1.0);
  EXPECT_FLOAT_EQ(f.readings[0][1], kInHomeSentinel);
  EXPECT_FLOAT_EQ(f.readings[1][1], kInHomeSentinel);
  EXPECT_FLOAT_EQ(f.readings[0][0], -50.0f);
}

TEST(ForwardFill, PerAccessPointIndependence) {
  RawStream s = grid_stream(4, 2);
  s.readings[1][0] = kMissing;
  s.readings[2][1] = kMissing;
  s.readings[1][1] = -70.0f;
  const auto f = forward_fill(s, 1.0);
  EXPECT_FLOAT_EQ(f.readings[1][0], -50.0f);  // filled from AP 0 history
  EXPECT_FLOAT_EQ(f.readings[2][1], -70.0f);  // filled from AP 1 history
}

TEST(ForwardFill, Idempotent) {
  Rng rng(99);
  RawStream s = grid_stream(40, 3);
  for (auto& row : s.readings)
    for (auto& v : row) {
      v = float(rng.uniform(-90.0, -30.0));
      if (rng.bernoulli(0.3)) v = kMissing;
    }
  const auto once = forward_fill(s, 1.0);
  const auto twice = forward_fill(once, 1.0);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i)
    for (std::size_t d = 0; d < 3; ++d)
      EXPECT_EQ(once.readings[i][d], twice.readings[i][d]);
}

TEST(ForwardFill, EmptyStreamThrows) {
  EXPECT_THROW(forward_fill(RawStream{}, 1.0), std::invalid_argument);
}

// ---- resampling ----

TEST(Resample, OffGridSamplesSnapToNearestPoint) {
  RawStream s;
  s.timestamps = {0.0, 0.23, 0.39, 0.61};
  s.readings = {{-40.0f}, {-41.0f}, {-42.0f}, {-43.0f}};
  s.labels = {0, 0, 1, 1};
  const auto g = resample_to_grid(s);
  ASSERT_EQ(g.size(), 4u);  // grid 0.0, 0.2, 0.4, 0.6
  EXPECT_FLOAT_EQ(g.readings[0][0], -40.0f);
  EXPECT_FLOAT_EQ(g.readings[1][0], -41.0f);  // 0.23 nearest to 0.2
  EXPECT_FLOAT_EQ(g.readings[2][0], -42.0f);  // 0.39 nearest to 0.4
  EXPECT_FLOAT_EQ(g.readings[3][0], -43.0f);
  EXPECT_EQ(g.labels[2], 1);
}

TEST(Resample, DistantGridPointsBecomeMissing) {
  RawStream s;
  s.timestamps = {0.0, 1.0};
  s.readings = {{-40.0f}, {-50.0f}};
  s.labels = {0, 1};
  const auto g = resample_to_grid(s);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_FALSE(is_missing(g.readings[0][0]));
  for (std::size_t i = 1; i <= 4; ++i)
    EXPECT_TRUE(is_missing(g.readings[i][0])) << i;
  EXPECT_FALSE(is_missing(g.readings[5][0]));
}

// ---- scaling ----

TEST(Scaler, MidpointOfRangeScalesToHalf) {
  std::vector<LabeledSequence> train(1);
  train[0].features = Tensor<float>({2, 1});
  train[0].features.at(0, 0) = -120.0f;
  train[0].features.at(1, 0) = 0.0f;
  train[0].labels = {0, 0};
  const auto p = fit_scaler(train);
  LabeledSequence probe;
  probe.features = Tensor<float>({1, 1});
  probe.features.at(0, 0) = -60.0f;
  probe.labels = {0};
  apply_scaler(probe, p);
  EXPECT_FLOAT_EQ(probe.features.at(0, 0), 0.5f);
}

TEST(Scaler, ClampsOutOfRangeValues) {
  std::vector<LabeledSequence> train(1);
  train[0].features = Tensor<float>({2, 1});
  train[0].features.at(0, 0) = -90.0f;
  train[0].features.at(1, 0) = -30.0f;
  train[0].labels = {0, 0};
  const auto p = fit_scaler(train);
  LabeledSequence probe;
  probe.features = Tensor<float>({2, 1});
  probe.features.at(0, 0) = -120.0f;
  probe.features.at(1, 0) = -10.0f;
  probe.labels = {0, 0};
  apply_scaler(probe, p);
  EXPECT_FLOAT_EQ(probe.features.at(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(probe.features.at(1, 0), 1.0f);
}

TEST(Scaler, StrictlyMonotoneInsideRange) {
  std::vector<LabeledSequence> train(1);
  train[0].features = Tensor<float>({2, 1});
  train[0].features.at(0, 0) = -100.0f;
  train[0].features.at(1, 0) = -20.0f;
  train[0].labels = {0, 0};
  const auto p = fit_scaler(train);
  float prev = -1.0f;
  for (float v = -100.0f; v <= -20.0f; v += 2.5f) {
    LabeledSequence probe;
    probe.features = Tensor<float>({1, 1});
    probe.features.at(0, 0) = v;
    probe.labels = {0};
    apply_scaler(probe, p);
    EXPECT_GT(probe.features.at(0, 0), prev);
    prev = probe.features.at(0, 0);
  }
}

TEST(Scaler, ConstantFeatureMapsToZero) {
  std::vector<LabeledSequence> train(1);
  train[0].features = Tensor<float>({3, 2});
  for (std::size_t t = 0; t < 3; ++t) {
    train[0].features.at(t, 0) = -55.0f;          // constant
    train[0].features.at(t, 1) = -55.0f - float(t);  // varying
  }
  train[0].labels = {0, 0, 0};
  const auto p = fit_scaler(train);
  auto probe = train[0];
  apply_scaler(probe, p);
  for (std::size_t t = 0; t < 3; ++t)
    EXPECT_FLOAT_EQ(probe.features.at(t, 0), 0.0f);
  EXPECT_FLOAT_EQ(probe.features.at(2, 1), 0.0f);
  EXPECT_FLOAT_EQ(probe.features.at(0, 1), 1.0f);
}

TEST(Scaler, OutputsStayInUnitInterval) {
  Rng rng(4);
  std::vector<LabeledSequence> train(3);
  for (auto& seq : train) {
    seq.features = Tensor<float>({10, 4});
    for (auto& v : seq.features.data) v = float(rng.uniform(-100.0, -20.0));
    seq.labels.assign(10, 0);
  }
  const auto p = fit_scaler(train);
  auto all = train;
  apply_scaler(all, p);
  for (const auto& seq : all)
    for (const float v : seq.features.data) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
}

// ---- stratified split ----

TEST(StratifiedSplit, TotalsMatchLargestRemainderBookkeeping) {
  // 19,937 records split 75/25 → 14,952 vs 4,985 (floor of 0.75·N).
  std::vector<int> labels;
  Rng rng(11);
  for (std::size_t i = 0; i < 19937; ++i) labels.push_back(int(rng.index(59)));
  const auto [a, b] = stratified_split(labels, 0.75, Rng(1).fork("s"));
  EXPECT_EQ(a.size(), 14952u);
  EXPECT_EQ(b.size(), 4985u);
}

TEST(StratifiedSplit, PartitionIsDisjointAndComplete) {
  std::vector<int> labels;
  Rng rng(5);
  for (std::size_t i = 0; i < 1000; ++i) labels.push_back(int(rng.index(7)));
  const auto [a, b] = stratified_split(labels, 0.75, Rng(2).fork("s"));
  std::set<std::size_t> seen(a.begin(), a.end());
  for (const auto i : b) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), labels.size());
}

TEST(StratifiedSplit, PerClassCountsOffByAtMostOne) {
  std::vector<int> labels;
  Rng rng(6);
  for (std::size_t i = 0; i < 4000; ++i) labels.push_back(int(rng.index(13)));
  const auto [a, b] = stratified_split(labels, 0.75, Rng(3).fork("s"));
  std::map<int, std::size_t> total, taken;
  for (const int y : labels) ++total[y];
  for (const auto i : a) ++taken[labels[i]];
  for (const auto& [cls, n] : total) {
    const double want = 0.75 * double(n);
    EXPECT_LE(std::abs(double(taken[cls]) - want), 1.0) << "class " << cls;
  }
}

// ---- synthetic data ----

TEST(Synthetic, RejectsFewerThanTwoRooms) {
  SynthConfig cfg;
  cfg.room_count = 1;
  EXPECT_THROW(generate_synthetic(cfg), std::invalid_argument);
}

TEST(Synthetic, RejectsDuplicateRoomMeans) {
  SynthConfig cfg;
  cfg.room_count = 2;
  cfg.ap_count = 2;
  cfg.room_means = {{-40.0f, -50.0f}, {-40.0f, -50.0f}};
  EXPECT_THROW(generate_synthetic(cfg), std::invalid_argument);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  const SynthConfig cfg;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  EXPECT_TRUE(sequences_identical(a.train, b.train));
  EXPECT_TRUE(sequences_identical(a.val, b.val));
  EXPECT_TRUE(sequences_identical(a.test, b.test));
}

TEST(Synthetic, DifferentSeedsDiffer) {
  SynthConfig cfg;
  const auto a = generate_synthetic(cfg);
  cfg.seed = 8;
  const auto b = generate_synthetic(cfg);
  EXPECT_FALSE(sequences_identical(a.train, b.train));
}

TEST(Synthetic, SplitSizesFollowWalkCounts) {
  const SynthConfig cfg;  // 3 rooms × 40 samples = 120 → 11 windows per walk
  const auto ds = generate_synthetic(cfg);
  const std::size_t per_walk = (120 - 20) / 10 + 1;
  EXPECT_EQ(ds.train.size(), cfg.train_walks * per_walk);
  EXPECT_EQ(ds.val.size(), cfg.val_walks * per_walk);
  EXPECT_EQ(ds.test.size(), cfg.test_walks * per_walk);
  EXPECT_EQ(ds.class_count, 3u);
  EXPECT_EQ(ds.feature_dim, 4u);
}

TEST(Synthetic, FeaturesLieInUnitInterval) {
  const auto ds = generate_synthetic(SynthConfig{});
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& seq : *split)
      for (const float v : seq.features.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
        EXPECT_TRUE(std::isfinite(v));
      }
}

TEST(Synthetic, ZeroNoiseZeroDropoutYieldsExactScaledMeans) {
  SynthConfig cfg;
  cfg.noise_std = 0.0;
  cfg.dropout = 0.0;
  const auto ds = generate_synthetic(cfg);
  const auto means = default_room_means(cfg.room_count, cfg.ap_count);
  // Per feature, the train split sees every room, so min/max over rooms
  // give the scaler range and each value is an exactly-scaled room mean.
  std::vector<float> lo(cfg.ap_count, std::numeric_limits<float>::max());
  std::vector<float> hi(cfg.ap_count, std::numeric_limits<float>::lowest());
  for (const auto& row : means)
    for (std::size_t a = 0; a < cfg.ap_count; ++a) {
      lo[a] = std::min(lo[a], row[a]);
      hi[a] = std::max(hi[a], row[a]);
    }
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& seq : *split)
      for (std::size_t t = 0; t < seq.features.rows(); ++t) {
        const int room = seq.labels[t];
        for (std::size_t a = 0; a < cfg.ap_count; ++a) {
          const float range = hi[a] - lo[a];
          const float expect =
              range > 0
                  ? std::clamp((means[room][a] - lo[a]) / range, 0.0f, 1.0f)
                  : 0.0f;
          EXPECT_EQ(seq.features.at(t, a), expect);
        }
      }
}

TEST(Synthetic, NearestTrainMeanClassifierIsPerfectOnDefaults) {
  const auto ds = generate_synthetic(SynthConfig{});
  // Oracle: per-room mean feature vector estimated from the train split,
  // then nearest-mean classification of every test timestep.
  std::vector<std::vector<double>> centroid(
      ds.class_count, std::vector<double>(ds.feature_dim, 0.0));
  std::vector<std::size_t> counts(ds.class_count, 0);
  for (const auto& seq : ds.train)
    for (std::size_t t = 0; t < seq.features.rows(); ++t) {
      const int y = seq.labels[t];
      ++counts[y];
      for (std::size_t a = 0; a < ds.feature_dim; ++a)
        centroid[y][a] += seq.features.at(t, a);
    }
  for (std::size_t y = 0; y < ds.class_count; ++y) {
    ASSERT_GT(counts[y], 0u);
    for (auto& v : centroid[y]) v /= double(counts[y]);
  }
  std::size_t correct = 0, total = 0;
  for (const auto& seq : ds.test)
    for (std::size_t t = 0; t < seq.features.rows(); ++t) {
      double best = std::numeric_limits<double>::max();
      int arg = -1;
      for (std::size_t y = 0; y < ds.class_count; ++y) {
        double d2 = 0;
        for (std::size_t a = 0; a < ds.feature_dim; ++a) {
          const double diff = seq.features.at(t, a) - centroid[y][a];
          d2 += diff * diff;
        }
        if (d2 < best) {
          best = d2;
          arg = int(y);
        }
      }
      correct += (arg == seq.labels[t]);
      ++total;
    }
  EXPECT_EQ(correct, total);
}

TEST(Synthetic, EveryRoomAppearsInEverySplit) {
  const auto ds = generate_synthetic(SynthConfig{});
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    std::set<int> seen;
    for (const auto& seq : *split)
      for (const int y : seq.labels) seen.insert(y);
    EXPECT_EQ(seen.size(), ds.class_count);
  }
}

TEST(Synthetic, DropoutStillProducesFiniteFeatures) {
  SynthConfig cfg;
  cfg.dropout = 0.2;
  const auto ds = generate_synthetic(cfg);
  for (const auto& seq : ds.train)
    for (const float v : seq.features.data) EXPECT_TRUE(std::isfinite(v));
}

// ---- text stream ingestion ----

TEST(CsvStream, ParsesHeaderRowsAndMissingCells) {
  const auto p = temp_file("tinyloc_stream.csv",
                           "time,ap0,ap1,room\n"
                           "0.0,-40,-60,0\n"
                           "0.2,,-61,0\n"
                           "0.4,-42,,1\n");
  const auto s = load_csv_stream(p.string());
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.feature_dim(), 2u);
  EXPECT_FLOAT_EQ(s.readings[0][0], -40.0f);
  EXPECT_TRUE(is_missing(s.readings[1][0]));
  EXPECT_FLOAT_EQ(s.readings[1][1], -61.0f);
  EXPECT_TRUE(is_missing(s.readings[2][1]));
  EXPECT_EQ(s.labels[2], 1);
  std::filesystem::remove(p);
}

TEST(CsvStream, MissingFileThrows) {
  EXPECT_THROW(load_csv_stream("/nonexistent/stream.csv"),
               std::runtime_error);
}

TEST(CsvStream, PrepareStreamsRunsFullPipeline) {
  std::string body = "time,ap0,ap1,room\n";
  for (int i = 0; i < 120; ++i) {
    const int room = i / 40;
    body += std::to_string(0.2 * i) + "," +
            std::to_string(-40 - 10 * room) + "," +
            std::to_string(-70 + 10 * room) + "," + std::to_string(room) +
            "\n";
  }
  const auto p = temp_file("tinyloc_walk.csv", body);
  std::vector<RawStream> streams;
  for (int k = 0; k < 4; ++k) streams.push_back(load_csv_stream(p.string()));
  const auto ds = prepare_streams(streams, 123);
  EXPECT_EQ(ds.feature_dim, 2u);
  EXPECT_EQ(ds.class_count, 3u);
  const std::size_t total = ds.train.size() + ds.val.size() + ds.test.size();
  EXPECT_EQ(total, 4u * ((120 - 20) / 10 + 1));
  EXPECT_GT(ds.train.size(), ds.val.size());
  for (const auto& seq : ds.train)
    for (const float v : seq.features.data) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  std::filesystem::remove(p);
}

// ---- wide fingerprint ingestion ----

namespace {

std::string uji_header() {
  std::string h;
  for (int i = 1; i <= 520; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "WAP%03d,", i);
    h += buf;
  }
  h +=
      "LONGITUDE,LATITUDE,FLOOR,BUILDINGID,SPACEID,RELATIVEPOSITION,USERID,"
      "PHONEID,TIMESTAMP\n";
  return h;
}

// One record: APs all "100" (undetected) except listed (index,value) pairs.
std::string uji_record(const std::vector<std::pair<int, int>>& aps,
                       int building, int floor, int space) {
  std::vector<int> rssi(520, 100);
  for (const auto& [i, v] : aps) rssi[i] = v;
  std::string row;
  for (const int v : rssi) row += std::to_string(v) + ",";
  row += "-7.1,4864982.2," + std::to_string(floor) + "," +
         std::to_string(building) + "," + std::to_string(space) +
         ",1,5,13,1371713733\n";
  return row;
}

}  // namespace

TEST(UjiLoader, BuildsJointClassesAndSplits) {
  std::string train = uji_header();
  // 8 records per class across 3 joint building/floor/space classes.
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 8; ++k)
      train += uji_record({{c * 5, -40 - k}, {c * 5 + 1, -60}}, c, c % 2,
                          100 + c);
  std::string test = uji_header();
  test += uji_record({{0, -44}}, 0, 0, 100);
  const auto ptrain = temp_file("tinyloc_uji_train.csv", train);
  const auto ptest = temp_file("tinyloc_uji_test.csv", test);
  const auto ds = load_uji(ptrain.string(), ptest.string(), 42);
  EXPECT_EQ(ds.class_count, 3u);
  EXPECT_EQ(ds.feature_dim, 520u);
  EXPECT_EQ(ds.train.size() + ds.val.size(), 24u);
  EXPECT_EQ(ds.train.size(), 18u);  // 75% of 24
  EXPECT_EQ(ds.test.size(), 1u);
  for (const auto& seq : ds.train) {
    EXPECT_EQ(seq.features.rows(), 1u);  // length-1 sequences
    EXPECT_EQ(seq.labels.size(), 1u);
  }
  std::filesystem::remove(ptrain);
  std::filesystem::remove(ptest);
}

TEST(UjiLoader, UndetectedEverywhereScalesToAllZeros) {
  std::string train = uji_header();
  for (int k = 0; k < 4; ++k)
    train += uji_record({{0, -40 - k}, {1, -50}}, 0, 0, 100);
  for (int k = 0; k < 4; ++k)
    train += uji_record({{0, -70 - k}, {1, -80}}, 1, 1, 200);
  std::string test = uji_header();
  test += uji_record({}, 0, 0, 100);  // every AP carries the "100" marker
  const auto ptrain = temp_file("tinyloc_uji_zero_train.csv", train);
  const auto ptest = temp_file("tinyloc_uji_zero_test.csv", test);
  const auto ds = load_uji(ptrain.string(), ptest.string(), 1);
  ASSERT_EQ(ds.test.size(), 1u);
  for (std::size_t d = 0; d < ds.feature_dim; ++d)
    EXPECT_EQ(ds.test[0].features.at(0, d), 0.0f) << d;
  std::filesystem::remove(ptrain);
  std::filesystem::remove(ptest);
}

TEST(UjiLoader, UnseenClassInTestFileThrowsWithRecordLocation) {
  std::string train = uji_header();
  for (int k = 0; k < 4; ++k) train += uji_record({{0, -40}}, 0, 0, 100);
  for (int k = 0; k < 4; ++k) train += uji_record({{1, -50}}, 1, 1, 200);
  std::string test = uji_header();
  test += uji_record({{0, -45}}, 2, 3, 999);  // unseen triple
  const auto ptrain = temp_file("tinyloc_uji_bad_train.csv", train);
  const auto ptest = temp_file("tinyloc_uji_bad_test.csv", test);
  try {
    load_uji(ptrain.string(), ptest.string(), 1);
    FAIL() << "expected unseen-class error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2/3/999"), std::string::npos) << msg;
  }
  std::filesystem::remove(ptrain);
  std::filesystem::remove(ptest);
}

TEST(UjiLoader, WrongColumnCountThrows) {
  const auto p = temp_file("tinyloc_uji_narrow.csv",
                           "WAP001,WAP002,FLOOR,BUILDINGID,SPACEID\n"
                           "100,100,0,0,100\n");
  EXPECT_THROW(load_uji(p.string(), p.string(), 1), std::runtime_error);
  std::filesystem::remove(p);
}
