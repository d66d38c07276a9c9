#pragma once

// Quality metrics: critic-based Wasserstein-1 estimates between two sets of
// blocks, and ROC / AUROC of a detector's p-values.
//
// Convention used throughout: a smaller p-value means "more novel".

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wiae/autodiff.hpp"
#include "wiae/datagen.hpp"
#include "wiae/error.hpp"
#include "wiae/nn.hpp"
#include "wiae/rng.hpp"
#include "wiae/wiae.hpp"

namespace wiae::eval {

struct WassersteinConfig {
  std::size_t repeats = 5;
  std::size_t steps = 2000;
  std::size_t batch = 60;
  double lr = 1e-4;
  double lambda = 10.0;
  std::uint64_t seed = 0;
};

struct WassersteinEstimate {
  double mean = 0.0;
  double std = 0.0;
  std::size_t repeats = 0;
};

// Blocks of length n starting every `stride` samples (0: disjoint blocks).
// A trailing partial block is dropped.
inline Tensor blocks_of(std::span<const double> series, std::size_t n, std::size_t stride = 0) {
  detail::require(n >= 1, "blocks_of: n must be >= 1");
  if (stride == 0) stride = n;
  const std::size_t count = series.size() < n ? 0 : (series.size() - n) / stride + 1;
  Tensor out(count, n);
  for (std::size_t b = 0; b < count; ++b)
    for (std::size_t i = 0; i < n; ++i) out(b, i) = series[b * stride + i];
  return out;
}

inline Tensor uniform_blocks(std::size_t count, std::size_t n, double lo, double hi, Rng& rng) {
  return detail::uniform_tensor(count, n, lo, hi, rng);
}

namespace detail_w {

inline Tensor rows_at(const Tensor& src, std::span<const std::size_t> idx) {
  Tensor out(idx.size(), src.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) out(r, c) = src(idx[r], c);
  return out;
}

inline double mean_score(const MlpParams& critic, const Tensor& samples) {
  const Tensor s = forward_batch(critic, samples);
  double acc = 0.0;
  for (double v : s.data()) acc += v;
  return acc / double(s.size());
}

}  // namespace detail_w

// Trains a fresh gradient-penalized critic per repeat to maximize
// mean D(a) - mean D(b) and reports |gap| over the full sets, as mean and
// sample standard deviation across repeats. D and -D are both admissible, so
// a critic stuck in the wrong orientation (common for n = 1, where flipping
// sign means crossing the penalty barrier) still gives a valid lower bound.
inline WassersteinEstimate wasserstein_critic(const Tensor& a, const Tensor& b, const WassersteinConfig& cfg = {}) {
  detail::require(a.rows() > 0 && b.rows() > 0, "wasserstein_critic: sample sets must be nonempty");
  detail::require(a.cols() == b.cols(), "wasserstein_critic: block lengths differ");
  detail::require(cfg.repeats >= 1 && cfg.batch >= 1, "wasserstein_critic: repeats and batch must be >= 1");
  const std::size_t n = a.cols();
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

  std::vector<double> gaps;
  for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
    Rng rng = substream(cfg.seed, "wasserstein/" + std::to_string(rep));
    MlpParams critic = make_critic(n, rng);
    AdamState state;
    std::uniform_int_distribution<std::size_t> pick_a(0, a.rows() - 1), pick_b(0, b.rows() - 1);
    std::vector<std::size_t> ia(cfg.batch), ib(cfg.batch);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      for (auto& i : ia) i = pick_a(rng);
      for (auto& i : ib) i = pick_b(rng);
      const Tensor real = detail_w::rows_at(a, ia);
      const Tensor fake = detail_w::rows_at(b, ib);
      Graph g;
      const MlpVars vars = bind(g, critic, true);
      const Var gap = g.sub(g.mean(forward(g, vars, g.constant(fake))), g.mean(forward(g, vars, g.constant(real))));
      const Var loss = g.add(gap, g.scale(gradient_penalty(g, vars, real, fake, rng), cfg.lambda));
      const auto grads = collect(g.backward(loss), vars);
      adam_step(critic.parameters(), grads, state, adam);
    }
    gaps.push_back(std::abs(detail_w::mean_score(critic, a) - detail_w::mean_score(critic, b)));
  }

  WassersteinEstimate est;
  est.repeats = gaps.size();
  for (double v : gaps) est.mean += v;
  est.mean /= double(gaps.size());
  if (gaps.size() > 1) {
    double ss = 0.0;
    for (double v : gaps) ss += (v - est.mean) * (v - est.mean);
    est.std = std::sqrt(ss / double(gaps.size() - 1));
  }
  return est;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocReport {
  std::vector<RocPoint> points;
  double auroc = 0.0;
  std::size_t n_h0 = 0;
  std::size_t n_h1 = 0;
};

// Sweeps the rejection threshold over every distinct p-value (reject when
// p <= threshold, so equal p-values move together) from (0,0) to (1,1);
// AUROC is the trapezoidal area.
inline RocReport roc_points(std::span<const double> h0, std::span<const double> h1) {
  detail::require(!h0.empty() && !h1.empty(), "roc_points: both score sets must be nonempty");
  std::vector<double> a(h0.begin(), h0.end()), b(h1.begin(), h1.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> thresholds;
  thresholds.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocReport r;
  r.n_h0 = a.size();
  r.n_h1 = b.size();
  r.points.push_back({0.0, 0.0});
  std::size_t ka = 0, kb = 0;
  for (double t : thresholds) {
    while (ka < a.size() && a[ka] <= t) ++ka;
    while (kb < b.size() && b[kb] <= t) ++kb;
    r.points.push_back({double(ka) / double(a.size()), double(kb) / double(b.size())});
  }
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    const auto& p = r.points[i - 1];
    const auto& q = r.points[i];
    r.auroc += (q.fpr - p.fpr) * 0.5 * (p.tpr + q.tpr);
  }
  return r;
}

// P(h1 more novel than h0) + 0.5 P(tie) over all pairs.
inline double auroc_bruteforce(std::span<const double> h0, std::span<const double> h1) {
  detail::require(!h0.empty() && !h1.empty(), "auroc_bruteforce: both score sets must be nonempty");
  double wins = 0.0;
  for (double p1 : h1)
    for (double p0 : h0) wins += p1 < p0 ? 1.0 : (p1 == p0 ? 0.5 : 0.0);
  return wins / (double(h0.size()) * double(h1.size()));
}

inline void write_roc_csv(std::ostream& out, const RocReport& r) {
  out << "fpr,tpr\n";
  for (const auto& p : r.points) out << data::format_double(p.fpr) << ',' << data::format_double(p.tpr) << '\n';
}

inline nlohmann::json roc_summary(const RocReport& r) {
  return nlohmann::json{{"auroc", r.auroc}, {"n_h0", r.n_h0}, {"n_h1", r.n_h1}};
}

}  // namespace wiae::eval
