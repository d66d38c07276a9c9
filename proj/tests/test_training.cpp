#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "wiae/datagen.hpp"
#include "wiae/stats.hpp"
#include "wiae/wiae.hpp"

using namespace wiae;

namespace {

constexpr std::size_t kTrainLen = 10000;

const bool kAllocatorTuned = (keep_freed_memory(), true);

double runs_p(const WiaeModel& model, const std::vector<double>& series, std::uint64_t seed) {
  Rng rng = substream(seed, "dither");
  return stats::runs_up_down_test(stats::dither(encode(model, series), rng)).p_value;
}

// Trains on seeds in turn until a majority of 5 passes or fails.
int majority_of_five(const std::function<bool(std::uint64_t)>& trial, std::uint64_t first_seed) {
  int pass = 0, fail = 0;
  for (std::uint64_t s = first_seed; pass < 3 && fail < 3; ++s) (trial(s) ? pass : fail) += 1;
  return pass;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += (a[i] - ma) * (b[i] - mb);
    aa += (a[i] - ma) * (a[i] - ma);
    bb += (b[i] - mb) * (b[i] - mb);
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

// The encoder should invert the process up to a monotone map: its output
// tracks the true innovation x_t - 0.5 x_{t-1} and is serially uncorrelated.
TEST(TrainedLar, RecoversTheInnovation) {
  const auto cfg = case_defaults("lar");
  const auto model = train(data::gen_lar(kTrainLen, 0.5, cfg.seed), cfg);
  const auto x = data::gen_lar(kTrainLen, 0.5, cfg.seed + 1000);
  const auto nu = encode(model, x);
  const std::size_t off = x.size() - nu.size();
  ASSERT_GE(off, 1u);

  std::vector<double> e(nu.size());
  for (std::size_t i = 0; i < nu.size(); ++i) e[i] = x[i + off] - 0.5 * x[i + off - 1];
  EXPECT_GT(correlation(nu, e), 0.95);

  const std::vector<double> head(nu.begin(), nu.end() - 1), tail(nu.begin() + 1, nu.end());
  EXPECT_LT(std::abs(correlation(head, tail)), 0.05);
}

TEST(TrainedMa, InnovationsPassRunsTest) {
  const int pass = majority_of_five(
      [](std::uint64_t seed) {
        auto cfg = case_defaults("ma");
        cfg.seed = seed;
        const auto model = train(data::gen_ma(kTrainLen, seed), cfg);
        const double p = runs_p(model, data::gen_ma(kTrainLen, seed + 1000), seed);
        RecordProperty("runs_p_seed_" + std::to_string(seed), std::to_string(p));
        return p > 0.05;
      },
      case_defaults("ma").seed);
  EXPECT_GE(pass, 3);
}

TEST(TrainedMc, InnovationsPassRunsTest) {
  const data::Transition chain{{{0.6, 0.4}, {0.4, 0.6}}};
  const int pass = majority_of_five(
      [&](std::uint64_t seed) {
        auto cfg = case_defaults("mc");
        cfg.seed = seed;
        const auto model = train(data::gen_mc(kTrainLen, chain, seed), cfg);
        const double p = runs_p(model, data::gen_mc(kTrainLen, chain, seed + 1000), seed);
        RecordProperty("runs_p_seed_" + std::to_string(seed), std::to_string(p));
        return p > 0.05;
      },
      case_defaults("mc").seed);
  EXPECT_GE(pass, 3);
}
