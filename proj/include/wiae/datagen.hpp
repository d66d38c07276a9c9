#pragma once

// Synthetic processes, novelty injection and CSV series I/O.

#include <Eigen/Eigenvalues>

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wiae/error.hpp"
#include "wiae/rng.hpp"

namespace wiae::data {

inline constexpr std::size_t kArBurnIn = 1000;

enum class Law {
  uniform,       // U[-1, 1]
  uniform_wide,  // U[-1.5, 1.5]
  normal,        // N(0, 1)
};

inline const char* to_string(Law law) {
  switch (law) {
    case Law::uniform: return "uniform";
    case Law::uniform_wide: return "uniform-wide";
    case Law::normal: return "normal";
  }
  return "?";
}

inline Law parse_law(std::string_view s) {
  if (s == "uniform" || s == "u1") return Law::uniform;
  if (s == "uniform-wide" || s == "u15") return Law::uniform_wide;
  if (s == "normal" || s == "gauss") return Law::normal;
  throw ContractViolation("unknown innovation law '" + std::string(s) + "'");
}

inline std::vector<double> draw(Law law, std::size_t count, Rng& rng) {
  std::vector<double> out(count);
  switch (law) {
    case Law::uniform: {
      std::uniform_real_distribution<double> d(-1.0, 1.0);
      for (auto& v : out) v = d(rng);
      break;
    }
    case Law::uniform_wide: {
      std::uniform_real_distribution<double> d(-1.5, 1.5);
      for (auto& v : out) v = d(rng);
      break;
    }
    case Law::normal: {
      std::normal_distribution<double> d(0.0, 1.0);
      for (auto& v : out) v = d(rng);
      break;
    }
  }
  return out;
}

// x_t = nu_t + theta * nu_{t-1}; one burn-in innovation.
inline std::vector<double> gen_ma(std::size_t length, std::uint64_t seed, Law law = Law::uniform,
                                  double theta = 2.5) {
  detail::require(length >= 2, "gen_ma: length must be >= 2");
  Rng rng = substream(seed, "data");
  const auto nu = draw(law, length + 1, rng);
  std::vector<double> x(length);
  for (std::size_t t = 0; t < length; ++t) x[t] = nu[t + 1] + theta * nu[t];
  return x;
}

// True when every root of 1 - phi_1 z - ... - phi_p z^p lies outside the
// unit circle, i.e. the companion matrix has spectral radius < 1.
inline bool ar_is_stationary(std::span<const double> phi) {
  for (double c : phi)
    if (!std::isfinite(c)) return false;
  const auto p = Eigen::Index(phi.size());
  if (p == 0) return true;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) companion(0, j) = phi[std::size_t(j)];
  for (Eigen::Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  const auto eig = companion.eigenvalues();
  for (Eigen::Index i = 0; i < p; ++i)
    if (std::abs(eig[i]) >= 1.0) return false;
  return true;
}

// x_t = sum_k phi_k x_{t-k} + nu_t, started at zero with 1000 samples
// discarded.
inline std::vector<double> gen_ar(std::size_t length, std::span<const double> phi, std::uint64_t seed,
                                  Law law = Law::uniform) {
  detail::require(length >= 1, "gen_ar: length must be >= 1");
  detail::require(ar_is_stationary(phi), "gen_ar: coefficients are not stationary");
  Rng rng = substream(seed, "data");
  const std::size_t total = length + kArBurnIn;
  const auto nu = draw(law, total, rng);
  std::vector<double> x(total, 0.0);
  for (std::size_t t = 0; t < total; ++t) {
    double v = nu[t];
    for (std::size_t k = 0; k < phi.size() && k < t; ++k) v += phi[k] * x[t - 1 - k];
    x[t] = v;
  }
  return std::vector<double>(x.begin() + std::ptrdiff_t(kArBurnIn), x.end());
}

inline std::vector<double> gen_lar(std::size_t length, double phi, std::uint64_t seed, Law law = Law::uniform) {
  const std::array<double, 1> c{phi};
  return gen_ar(length, c, seed, law);
}

using Transition = std::array<std::array<double, 2>, 2>;

inline void validate_transition(const Transition& p) {
  for (const auto& row : p) {
    for (double v : row) detail::require(v >= 0.0 && std::isfinite(v), "transition matrix: negative or non-finite entry");
    detail::require(std::abs(row[0] + row[1] - 1.0) <= 1e-12, "transition matrix: row does not sum to 1");
  }
}

// Two-state chain over {0.0, 1.0}; the first state is drawn from the
// stationary distribution (0.5/0.5 when the chain has none unique).
inline std::vector<double> gen_mc(std::size_t length, const Transition& p, std::uint64_t seed) {
  validate_transition(p);
  Rng rng = substream(seed, "data");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double leave = p[0][1] + p[1][0];
  const double pi1 = leave > 0.0 ? p[0][1] / leave : 0.5;
  std::vector<double> x(length);
  int state = u(rng) < pi1 ? 1 : 0;
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) state = u(rng) < p[std::size_t(state)][1] ? 1 : 0;
    x[t] = double(state);
  }
  return x;
}

struct GmmComponent {
  double weight = 1.0;
  double mean = 0.0;
  double stddev = 0.0;
};

inline double sample_stddev(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / double(x.size() - 1));
}

// Two symmetric components at +-0.5 sigma_x with spread 0.2 sigma_x. These
// are artifact defaults, not values taken from any dataset.
inline std::vector<GmmComponent> default_gmm(std::span<const double> series) {
  const double s = sample_stddev(series);
  return {{0.5, -0.5 * s, 0.2 * s}, {0.5, 0.5 * s, 0.2 * s}};
}

inline std::vector<double> inject_gmm_noise(std::span<const double> series, std::span<const GmmComponent> comps,
                                            std::uint64_t seed) {
  detail::require(!comps.empty(), "inject_gmm_noise: no components");
  double total = 0.0;
  for (const auto& c : comps) {
    detail::require(c.weight >= 0.0 && c.stddev >= 0.0, "inject_gmm_noise: negative weight or stddev");
    total += c.weight;
  }
  detail::require(std::abs(total - 1.0) <= 1e-9, "inject_gmm_noise: weights must sum to 1");
  Rng rng = substream(seed, "gmm");
  std::uniform_real_distribution<double> pick(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> out(series.begin(), series.end());
  for (auto& v : out) {
    const double r = pick(rng);
    std::size_t k = 0;
    double acc = comps[0].weight;
    while (r >= acc && k + 1 < comps.size()) acc += comps[++k].weight;
    const double e = z(rng);
    v += comps[k].mean + comps[k].stddev * e;
  }
  return out;
}

struct LabeledSeries {
  std::vector<double> values;
  std::vector<std::string> labels;  // empty, or one per value
  std::string source;
};

namespace detail_csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail_csv

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Rows are `value[,label]`. A first row whose value field is not numeric is
// treated as a header.
inline LabeledSeries parse_csv(std::istream& in, const std::string& source) {
  LabeledSeries out;
  out.source = source;
  std::string line;
  std::size_t row = 0;
  bool any_label = false;
  while (std::getline(in, line)) {
    ++row;
    std::string_view text = detail_csv::trim(line);
    if (text.empty()) continue;
    const auto comma = text.find(',');
    const std::string_view field = text.substr(0, comma);
    const auto value = detail_csv::parse_number(field);
    if (!value) {
      if (row == 1) continue;
      throw FormatError(source + ": row " + std::to_string(row) + ": cannot parse '" + std::string(field) + "'");
    }
    out.values.push_back(*value);
    if (comma != std::string_view::npos) {
      out.labels.emplace_back(detail_csv::trim(text.substr(comma + 1)));
      any_label = true;
    } else {
      out.labels.emplace_back();
    }
  }
  if (out.values.empty()) throw FormatError(source + ": no data rows");
  if (!any_label) out.labels.clear();
  return out;
}

inline LabeledSeries load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in, path);
}

inline void write_csv(std::ostream& out, const LabeledSeries& s) {
  const bool labelled = !s.labels.empty();
  if (labelled) detail::require(s.labels.size() == s.values.size(), "save_csv: label count does not match values");
  out << (labelled ? "value,label\n" : "value\n");
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    out << format_double(s.values[i]);
    if (labelled) out << ',' << s.labels[i];
    out << '\n';
  }
}

inline void save_csv(const LabeledSeries& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_csv(out, s);
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void save_csv(std::span<const double> values, const std::string& path) {
  save_csv(LabeledSeries{std::vector<double>(values.begin(), values.end()), {}, path}, path);
}

}  // namespace wiae::data
