#pragma once

// Goodness-of-fit machinery: orthonormal shifted Legendre polynomials,
// Neyman's smooth test for uniformity, the runs up-and-down test and the tail
// probabilities they rely on.

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wiae/error.hpp"
#include "wiae/rng.hpp"

namespace wiae::stats {

inline constexpr std::size_t kMaxOrder = 4;
inline constexpr std::size_t kMinNeymanBlock = 20;
inline constexpr std::size_t kMinRunsLength = 26;

// Orthonormal shifted Legendre polynomial of order j on [0, 1].
inline double shifted_legendre(std::size_t j, double u) {
  switch (j) {
    case 1: return std::sqrt(3.0) * (2.0 * u - 1.0);
    case 2: return std::sqrt(5.0) * ((6.0 * u - 6.0) * u + 1.0);
    case 3: return std::sqrt(7.0) * (((20.0 * u - 30.0) * u + 12.0) * u - 1.0);
    case 4: return 3.0 * ((((70.0 * u - 140.0) * u + 90.0) * u - 20.0) * u + 1.0);
    default: throw ContractViolation("shifted_legendre: order must be in 1..4, got " + std::to_string(j));
  }
}

// P(X > x) for X ~ chi-square with k degrees of freedom.
inline double chi_square_sf(double x, double k) {
  detail::require(x >= 0.0, "chi_square_sf: x must be >= 0");
  detail::require(k >= 1.0, "chi_square_sf: degrees of freedom must be >= 1");
  if (x == 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * k, 0.5 * x);
}

// 1 - Phi(z).
inline double standard_normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

struct GofResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  std::size_t block_len = 0;
  std::size_t clamped = 0;  // inputs pulled back into [0, 1]
};

// Neyman's smooth test of H0: block ~ i.i.d. U[0, 1].
//   T = sum_{r=1..order} ( N^{-1/2} sum_i h_r(u_i) )^2  ~  chi-square(order).
// Values outside [0, 1] are clamped; more than 1% of them is a DomainError.
inline GofResult neyman_statistic(std::span<const double> block, std::size_t order = kMaxOrder) {
  detail::require(order >= 1 && order <= kMaxOrder, "neyman_statistic: order must be in 1..4");
  const std::size_t n = block.size();
  if (n < kMinNeymanBlock)
    throw SmallSample("neyman_statistic: block of " + std::to_string(n) + " values is below the minimum of " +
                      std::to_string(kMinNeymanBlock));
  double score[kMaxOrder] = {0.0, 0.0, 0.0, 0.0};
  std::size_t clamped = 0;
  for (double u : block) {
    if (!(u >= 0.0 && u <= 1.0)) {
      ++clamped;
      u = std::isnan(u) ? 0.5 : std::clamp(u, 0.0, 1.0);
    }
    for (std::size_t r = 0; r < order; ++r) score[r] += shifted_legendre(r + 1, u);
  }
  if (double(clamped) > 0.01 * double(n))
    throw DomainError("neyman_statistic: " + std::to_string(clamped) + " of " + std::to_string(n) +
                      " values outside [0, 1]");
  double t = 0.0;
  const double scale = 1.0 / std::sqrt(double(n));
  for (std::size_t r = 0; r < order; ++r) t += (score[r] * scale) * (score[r] * scale);
  return GofResult{t, order, chi_square_sf(t, double(order)), n, clamped};
}

struct RunsResult {
  std::size_t runs = 0;
  double z = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

inline double runs_mean(std::size_t n) { return (2.0 * double(n) - 1.0) / 3.0; }
inline double runs_variance(std::size_t n) { return (16.0 * double(n) - 29.0) / 90.0; }

// Number of maximal monotone runs: 1 + sign changes of the first differences.
inline std::size_t count_runs_up_down(std::span<const double> seq) {
  detail::require(seq.size() >= 2, "count_runs_up_down: need at least two values");
  std::size_t runs = 1;
  int prev = 0;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const double d = seq[i] - seq[i - 1];
    if (d == 0.0) throw TieError("runs test: tie between positions " + std::to_string(i - 1) + " and " +
                                 std::to_string(i) + "; dither discrete data first");
    const int sign = d > 0.0 ? 1 : -1;
    if (prev != 0 && sign != prev) ++runs;
    prev = sign;
  }
  return runs;
}

// Runs up-and-down test of H0: seq is i.i.d., two-sided, normal approximation.
inline RunsResult runs_up_down_test(std::span<const double> seq) {
  const std::size_t n = seq.size();
  if (n < kMinRunsLength)
    throw SmallSample("runs_up_down_test: normal approximation needs at least " +
                      std::to_string(kMinRunsLength) + " values, got " + std::to_string(n));
  const std::size_t runs = count_runs_up_down(seq);
  const double z = (double(runs) - runs_mean(n)) / std::sqrt(runs_variance(n));
  return RunsResult{runs, z, std::min(1.0, 2.0 * standard_normal_sf(std::abs(z))), n};
}

// Adds seeded U(-amplitude, amplitude) noise so discrete-valued data has no
// ties in the runs test.
inline std::vector<double> dither(std::span<const double> seq, Rng& rng, double amplitude = 1e-9) {
  std::vector<double> out(seq.begin(), seq.end());
  for (auto& v : out) v += uniform(rng, -amplitude, amplitude);
  return out;
}

}  // namespace wiae::stats
