#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "tinyloc/crf.hpp"
#include "tinyloc/optim.hpp"
#include "tinyloc/rng.hpp"

using tinyloc::Rng;
using tinyloc::Tensor;
namespace crf = tinyloc::crf;
namespace nn = tinyloc::nn;
using D = double;
using VarD = nn::Var<double>;

namespace {

struct Instance {
  Tensor<D> emis, trans, start, end;
};

Instance random_instance(std::size_t T, std::size_t K, Rng& rng,
                         double scale = 2.0) {
  Instance in{Tensor<D>({T, K}), Tensor<D>({K, K}), Tensor<D>({K}),
              Tensor<D>({K})};
  for (auto& v : in.emis.data) v = rng.uniform(-scale, scale);
  for (auto& v : in.trans.data) v = rng.uniform(-scale, scale);
  for (auto& v : in.start.data) v = rng.uniform(-scale, scale);
  for (auto& v : in.end.data) v = rng.uniform(-scale, scale);
  return in;
}

}  // namespace

TEST(Crf, UniformSingleStepLossIsLogK) {
  Tensor<D> emis = Tensor<D>::zeros({1, 2});
  Tensor<D> trans = Tensor<D>::zeros({2, 2});
  Tensor<D> start = Tensor<D>::zeros({2});
  Tensor<D> end = Tensor<D>::zeros({2});
  EXPECT_NEAR(crf::nll(emis, {0}, trans, start, end), std::log(2.0), 1e-12);
}

TEST(Crf, AllZeroScoresLogZIsTLogK) {
  for (std::size_t K : {2, 3, 5}) {
    for (std::size_t T : {1, 3, 6}) {
      Tensor<D> emis = Tensor<D>::zeros({T, K});
      Tensor<D> trans = Tensor<D>::zeros({K, K});
      Tensor<D> boundary = Tensor<D>::zeros({K});
      EXPECT_NEAR(crf::forward_logz(emis, trans, boundary, boundary),
                  double(T) * std::log(double(K)), 1e-10);
    }
  }
}

TEST(Crf, SingleClassLogZIsEmissionSum) {
  Rng rng(5);
  Tensor<D> emis({4, 1});
  D sum = 0;
  for (auto& v : emis.data) {
    v = rng.uniform(-2, 2);
    sum += v;
  }
  Tensor<D> trans = Tensor<D>::zeros({1, 1});
  Tensor<D> boundary = Tensor<D>::zeros({1});
  EXPECT_NEAR(crf::forward_logz(emis, trans, boundary, boundary), sum, 1e-12);
}

TEST(Crf, DominantGoldEmissionsDriveLossToZero) {
  Tensor<D> emis = Tensor<D>::zeros({3, 2});
  const std::vector<int> gold = {0, 1, 0};
  for (std::size_t t = 0; t < 3; ++t) emis.at(t, gold[t]) = 50.0;
  Tensor<D> trans = Tensor<D>::zeros({2, 2});
  Tensor<D> boundary = Tensor<D>::zeros({2});
  EXPECT_LT(crf::nll(emis, gold, trans, boundary, boundary), 1e-10);
}

TEST(Crf, LogZMatchesEnumeration) {
  Rng rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t K = 2 + rng.index(3);  // 2..4
    const std::size_t T = 1 + rng.index(6);  // 1..6
    auto in = random_instance(T, K, rng);
    const D fast = crf::forward_logz(in.emis, in.trans, in.start, in.end);
    const D slow = oracles::enumerated_logz(in.emis, in.trans, in.start, in.end);
    EXPECT_NEAR(fast, slow, std::abs(slow) * 1e-10 + 1e-10);
  }
}

TEST(Crf, NllMatchesEnumeration) {
  Rng rng(13);
  auto in = random_instance(4, 3, rng);
  const std::vector<int> gold = {2, 0, 1, 1};
  const D direct = crf::nll(in.emis, gold, in.trans, in.start, in.end);
  const D slowz = oracles::enumerated_logz(in.emis, in.trans, in.start, in.end);
  const D score =
      crf::path_score(in.emis, gold, in.trans, in.start, in.end);
  EXPECT_NEAR(direct, slowz - score, 1e-10);
  EXPECT_GE(direct, 0.0);
}

TEST(Crf, ViterbiMatchesEnumeration) {
  Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t K = 2 + rng.index(3);
    const std::size_t T = 1 + rng.index(5);
    auto in = random_instance(T, K, rng);
    EXPECT_EQ(crf::viterbi_decode(in.emis, in.trans, in.start, in.end),
              oracles::enumerated_best_path(in.emis, in.trans, in.start, in.end));
  }
}

TEST(Crf, ViterbiZeroParamsIsPerStepArgmax) {
  Tensor<D> emis({2, 2}, {0, 1, 1, 0});
  Tensor<D> trans = Tensor<D>::zeros({2, 2});
  Tensor<D> boundary = Tensor<D>::zeros({2});
  EXPECT_EQ(crf::viterbi_decode(emis, trans, boundary, boundary),
            (std::vector<int>{1, 0}));
}

TEST(Crf, ViterbiTiesPickLowerClass) {
  // every path scores identically → all-zeros path must win
  Tensor<D> emis = Tensor<D>::zeros({3, 3});
  Tensor<D> trans = Tensor<D>::zeros({3, 3});
  Tensor<D> boundary = Tensor<D>::zeros({3});
  EXPECT_EQ(crf::viterbi_decode(emis, trans, boundary, boundary),
            (std::vector<int>{0, 0, 0}));
}

TEST(Crf, ViterbiScoreDominatesEveryPath) {
  Rng rng(19);
  auto in = random_instance(5, 3, rng);
  auto best = crf::viterbi_decode(in.emis, in.trans, in.start, in.end);
  const D top = crf::path_score(in.emis, best, in.trans, in.start, in.end);
  oracles::for_each_path(in.emis, in.trans, in.start, in.end,
                         [&](const std::vector<int>&, D s) {
                           EXPECT_LE(s, top + 1e-12);
                         });
}

TEST(Crf, MarginalsZeroParamsAreSoftmaxRows) {
  Rng rng(23);
  Tensor<D> emis({4, 3});
  for (auto& v : emis.data) v = rng.uniform(-2, 2);
  Tensor<D> trans = Tensor<D>::zeros({3, 3});
  Tensor<D> boundary = Tensor<D>::zeros({3});
  auto post = crf::marginals(emis, trans, boundary, boundary);
  for (std::size_t t = 0; t < 4; ++t) {
    D z = 0;
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(emis.at(t, k));
    for (std::size_t k = 0; k < 3; ++k)
      EXPECT_NEAR(post.at(t, k), std::exp(emis.at(t, k)) / z, 1e-12);
  }
}

TEST(Crf, MarginalRowsSumToOne) {
  Rng rng(29);
  auto in = random_instance(6, 4, rng, 3.0);
  auto post = crf::marginals(in.emis, in.trans, in.start, in.end);
  for (std::size_t t = 0; t < 6; ++t) {
    D s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += post.at(t, k);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Crf, MarginalsMatchEnumeration) {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t K = 2 + rng.index(2);
    const std::size_t T = 2 + rng.index(2);
    auto in = random_instance(T, K, rng);
    auto fast = crf::marginals(in.emis, in.trans, in.start, in.end);
    auto slow =
        oracles::enumerated_marginals(in.emis, in.trans, in.start, in.end);
    for (std::size_t i = 0; i < fast.count(); ++i)
      EXPECT_NEAR(fast[i], slow[i], 1e-10);
  }
}

TEST(Crf, UniformEmissionShiftRaisesLogZByTc) {
  Rng rng(37);
  auto in = random_instance(5, 3, rng);
  const D base = crf::forward_logz(in.emis, in.trans, in.start, in.end);
  const D c = 0.73;
  Tensor<D> shifted = in.emis;
  for (auto& v : shifted.data) v += c;
  const D moved = crf::forward_logz(shifted, in.trans, in.start, in.end);
  EXPECT_NEAR(moved, base + 5 * c, 1e-10);
  EXPECT_EQ(crf::viterbi_decode(in.emis, in.trans, in.start, in.end),
            crf::viterbi_decode(shifted, in.trans, in.start, in.end));
}

TEST(Crf, OutOfRangeLabelThrows) {
  Tensor<D> emis = Tensor<D>::zeros({2, 2});
  Tensor<D> trans = Tensor<D>::zeros({2, 2});
  Tensor<D> boundary = Tensor<D>::zeros({2});
  EXPECT_THROW(crf::nll(emis, {0, 2}, trans, boundary, boundary),
               std::out_of_range);
}

TEST(Crf, NllGradientPassesFiniteDifferences) {
  Rng rng(41);
  auto in = random_instance(5, 3, rng);
  const std::vector<int> gold = {0, 2, 1, 2, 0};
  auto emis = VarD::param(in.emis, "emis");
  auto trans = VarD::param(in.trans, "trans");
  auto start = VarD::param(in.start, "start");
  auto end = VarD::param(in.end, "end");
  const double err = nn::grad_check(
      [&] { return crf::crf_nll(emis, gold, trans, start, end); },
      {emis, trans, start, end}, 1e-5, 128);
  EXPECT_LT(err, 1e-6);
}

TEST(Crf, TapeNllMatchesNumericNll) {
  Rng rng(43);
  auto in = random_instance(4, 3, rng);
  const std::vector<int> gold = {1, 1, 0, 2};
  auto loss = crf::crf_nll(VarD::param(in.emis, "e"), gold,
                           VarD::param(in.trans, "t"),
                           VarD::param(in.start, "s"),
                           VarD::param(in.end, "n"));
  EXPECT_NEAR(loss.value()[0],
              crf::nll(in.emis, gold, in.trans, in.start, in.end), 1e-12);
}
