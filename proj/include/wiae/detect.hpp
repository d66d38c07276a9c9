#pragma once

// Online novelty detection: encode a stream causally, cut the innovations into
// blocks and test each block for uniformity with Neyman's smooth test.

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wiae/datagen.hpp"
#include "wiae/error.hpp"
#include "wiae/stats.hpp"
#include "wiae/wiae.hpp"

namespace wiae {

struct DetectConfig {
  std::size_t block_len = 1000;
  std::size_t stride = 0;  // 0 means block_len (disjoint blocks)
  double p_threshold = 0.05;
  std::size_t order = stats::kMaxOrder;

  std::size_t effective_stride() const { return stride == 0 ? block_len : stride; }

  void validate() const {
    detail::require(block_len >= stats::kMinNeymanBlock, "DetectConfig: block length must be >= 20");
    detail::require(p_threshold > 0.0 && p_threshold < 1.0, "DetectConfig: p_threshold must be in (0, 1)");
    detail::require(order >= 1 && order <= stats::kMaxOrder, "DetectConfig: order must be in 1..4");
  }
};

enum class Decision { normal, novel };

inline const char* to_string(Decision d) { return d == Decision::novel ? "novel" : "normal"; }

struct NoveltyScore {
  std::size_t block_index = 0;
  std::size_t start = 0;  // series index of the first sample whose innovation is in the block
  double statistic = 0.0;
  double p_value = 1.0;
  Decision decision = Decision::normal;
};

inline Decision decide(double p_value, double threshold) {
  return p_value < threshold ? Decision::novel : Decision::normal;
}

// Maps an innovation in [-1, 1] to the unit interval tested for uniformity.
inline double to_unit(double nu) { return 0.5 * (nu + 1.0); }

// Number of blocks score_stream emits for a series of `length` samples.
inline std::size_t block_count(std::size_t length, std::size_t m, const DetectConfig& cfg) {
  if (length + 1 < m + cfg.block_len) return 0;
  return (length + 1 - m - cfg.block_len) / cfg.effective_stride() + 1;
}

inline std::vector<NoveltyScore> score_stream(const WiaeModel& model, std::span<const double> series,
                                              const DetectConfig& cfg) {
  cfg.validate();
  const std::size_t m = model.window.m;
  if (series.size() + 1 < m + cfg.block_len)
    throw DegenerateData("score_stream: need at least m + N - 1 = " + std::to_string(m + cfg.block_len - 1) +
                         " samples, got " + std::to_string(series.size()));
  const auto nu = encode(model, series);
  std::vector<double> u(nu.size());
  for (std::size_t i = 0; i < nu.size(); ++i) u[i] = to_unit(nu[i]);

  std::vector<NoveltyScore> out;
  const std::size_t count = block_count(series.size(), m, cfg);
  const std::size_t stride = cfg.effective_stride();
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto res = stats::neyman_statistic(std::span<const double>(u).subspan(k * stride, cfg.block_len), cfg.order);
    out.push_back(NoveltyScore{k, m - 1 + k * stride, res.statistic, res.p_value, decide(res.p_value, cfg.p_threshold)});
  }
  return out;
}

// Sample-at-a-time version of score_stream for live data. Emits the same
// scores, each as soon as its last sample arrives.
class StreamScorer {
 public:
  StreamScorer(const WiaeModel& model, DetectConfig cfg) : model_(model), cfg_(cfg) { cfg_.validate(); }

  std::optional<NoveltyScore> push(double sample) {
    const std::size_t m = model_.window.m;
    window_.push_front(model_.norm.apply(sample));
    if (window_.size() > m) window_.pop_back();
    ++seen_;
    if (window_.size() < m) return std::nullopt;
    const std::vector<double> w(window_.begin(), window_.end());
    pending_.push_back(to_unit(encode_window(model_.encoder, w)));

    // Innovation index of the newest value is seen_ - m.
    const std::size_t newest = seen_ - m;
    const std::size_t next_start = emitted_ * cfg_.effective_stride();
    if (newest + 1 < next_start + cfg_.block_len) return std::nullopt;
    // pending_ holds innovations [base_, newest].
    const std::size_t offset = next_start - base_;
    const auto res =
        stats::neyman_statistic(std::span<const double>(pending_).subspan(offset, cfg_.block_len), cfg_.order);
    NoveltyScore s{emitted_, m - 1 + next_start, res.statistic, res.p_value, decide(res.p_value, cfg_.p_threshold)};
    ++emitted_;
    const std::size_t keep_from = emitted_ * cfg_.effective_stride();
    if (keep_from > base_) {
      const std::size_t drop = std::min(keep_from - base_, pending_.size());
      pending_.erase(pending_.begin(), pending_.begin() + std::ptrdiff_t(drop));
      base_ += drop;
    }
    return s;
  }

 private:
  const WiaeModel& model_;
  DetectConfig cfg_;
  std::deque<double> window_;  // newest first
  std::vector<double> pending_;
  std::size_t base_ = 0;
  std::size_t seen_ = 0;
  std::size_t emitted_ = 0;
};

// Relabels scores under a new threshold without re-encoding.
inline std::vector<Decision> decide(std::span<const NoveltyScore> scores, double threshold) {
  std::vector<Decision> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(decide(s.p_value, threshold));
  return out;
}

struct DetectSummary {
  std::size_t blocks = 0;
  std::size_t rejected = 0;
  double rejection_rate = 0.0;
};

inline DetectSummary summarize(std::span<const NoveltyScore> scores) {
  DetectSummary s;
  s.blocks = scores.size();
  for (const auto& x : scores) s.rejected += x.decision == Decision::novel;
  s.rejection_rate = s.blocks ? double(s.rejected) / double(s.blocks) : 0.0;
  return s;
}

inline nlohmann::json to_json(const NoveltyScore& s) {
  return nlohmann::json{{"block_index", s.block_index},
                        {"start", s.start},
                        {"statistic", s.statistic},
                        {"p_value", s.p_value},
                        {"decision", to_string(s.decision)}};
}

inline void write_jsonl(std::ostream& out, std::span<const NoveltyScore> scores) {
  for (const auto& s : scores) out << to_json(s).dump() << '\n';
}

inline void write_scores_csv(std::ostream& out, std::span<const NoveltyScore> scores) {
  out << "block_index,start,statistic,p_value,decision\n";
  for (const auto& s : scores)
    out << s.block_index << ',' << s.start << ',' << data::format_double(s.statistic) << ','
        << data::format_double(s.p_value) << ',' << to_string(s.decision) << '\n';
}

// Reads the p_value of every line of a JSONL score file.
inline std::vector<double> read_p_values_jsonl(std::istream& in, const std::string& source) {
  std::vector<double> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).at("p_value").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source + ": line " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace wiae
