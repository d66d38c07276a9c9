// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wiae/datagen.hpp"
#include "wiae/detect.hpp"
#include "wiae/eval.hpp"
#include "wiae/stats.hpp"
#include "wiae/wiae.hpp"

using namespace wiae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string join(const std::vector<double>& v, const char* f = "%.4f") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(f, v[i]);
  return s;
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / double(x.size());
}

double variance_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / double(x.size());
}

double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  double ks = 0.0;
  const double n = double(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) ks = std::max({ks, double(i + 1) / n - p[i], p[i] - double(i) / n});
  return ks;
}

// 1. Reverse mode against central differences through the plain forward pass.
Outcome autodiff_correctness() {
  std::mt19937_64 pick(1);
  double worst = 0.0;
  for (int net_index = 0; net_index < 100; ++net_index) {
    std::uniform_int_distribution<std::size_t> width(1, 100), depth(1, 3), in_dim(1, 50);
    std::vector<std::size_t> hidden(depth(pick));
    for (auto& h : hidden) h = width(pick);
    Rng rng = substream(std::uint64_t(net_index), "acceptance/mlp");
    MlpParams net = make_mlp(in_dim(pick), hidden, Activation::tanh, rng);
    const std::size_t batch = 3;
    const Tensor input = detail::uniform_tensor(batch, net.input_dim(), -1.0, 1.0, rng);
    const Tensor weight = detail::uniform_tensor(batch, 1, -1.0, 1.0, rng);
    auto loss_of = [&](const MlpParams& p) {
      const Tensor out = forward(p, input);
      double s = 0.0;
      for (std::size_t r = 0; r < batch; ++r) s += weight[r] * out[r];
      return s / double(batch);
    };

    Graph g;
    const MlpVars vars = bind(g, net, true);
    const Var loss = g.mean(g.mul(forward(g, vars, g.constant(input)), g.constant(weight)));
    const auto grads = collect(g.backward(loss), vars);

    const auto params = net.parameters();
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t k = 0; k < params[t]->size(); ++k) {
        const double h = 1e-5, orig = (*params[t])[k];
        (*params[t])[k] = orig + h;
        const double up = loss_of(net);
        (*params[t])[k] = orig - h;
        const double down = loss_of(net);
        (*params[t])[k] = orig;
        const double numeric = (up - down) / (2.0 * h), analytic = grads[t][k];
        const double denom = std::max(1.0, std::abs(analytic));
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
      }
    }
  }
  return {worst < 1e-4, "max relative error " + fmt("%.3g", worst)};
}

// 2. Orthonormality by composite Simpson quadrature on [0, 1].
Outcome legendre_orthonormality() {
  const int intervals = 20000;
  const double h = 1.0 / intervals;
  double worst = 0.0;
  for (std::size_t j = 1; j <= 4; ++j)
    for (std::size_t k = 1; k <= 4; ++k) {
      auto f = [&](double u) { return stats::shifted_legendre(j, u) * stats::shifted_legendre(k, u); };
      double acc = f(0.0) + f(1.0);
      for (int i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
      worst = std::max(worst, std::abs(acc * h / 3.0 - (j == k ? 1.0 : 0.0)));
    }
  return {worst < 1e-8, "max |<h_j,h_k> - delta_jk| " + fmt("%.3g", worst)};
}

// 3. Neyman statistic under the null.
Outcome neyman_null() {
  Rng rng = substream(3, "acceptance/neyman");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> t, p;
  std::vector<double> block(500);
  for (int b = 0; b < 1000; ++b) {
    for (auto& u : block) u = unit(rng);
    const auto r = stats::neyman_statistic(block);
    t.push_back(r.statistic);
    p.push_back(r.p_value);
  }
  const double mean_t = mean_of(t);
  double rejected = 0.0;
  for (double v : p) rejected += v < 0.05;
  const double rate = rejected / double(p.size());
  const double ks = ks_uniform(p);
  const bool ok = std::abs(mean_t - 4.0) <= 0.3 && rate >= 0.035 && rate <= 0.065 && ks < 0.06;
  return {ok, "mean T " + fmt("%.4f", mean_t) + ", rejection rate " + fmt("%.4f", rate) + ", KS " + fmt("%.4f", ks)};
}

// 4. Runs up and down: Monte-Carlo moments of the run count.
Outcome runs_constants() {
  Rng rng = substream(4, "acceptance/runs");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = 500;
  const int trials = 10000;
  std::vector<double> seq(n), counts;
  for (int i = 0; i < trials; ++i) {
    for (auto& v : seq) v = unit(rng);
    counts.push_back(double(stats::count_runs_up_down(seq)));
  }
  const double mean = mean_of(counts);
  const double var = variance_of(counts) * trials / (trials - 1);
  const double mean_ref = (2.0 * n - 1.0) / 3.0, var_ref = (16.0 * n - 29.0) / 90.0;
  const bool ok = std::abs(mean - mean_ref) <= 0.5 && std::abs(var / var_ref - 1.0) <= 0.05;
  return {ok, "mean " + fmt("%.3f", mean) + " (ref " + fmt("%.3f", mean_ref) + "), variance " + fmt("%.3f", var) +
                  " (ref " + fmt("%.3f", var_ref) + ")"};
}

// 5. Synthetic generators against closed-form moments.
Outcome generator_moments() {
  const std::size_t len = 1000000;
  const auto ma = data::gen_ma(len, 37);
  const double ma_var = variance_of(ma);
  const double m = mean_of(ma);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    den += (ma[i] - m) * (ma[i] - m);
    if (i) num += (ma[i] - m) * (ma[i - 1] - m);
  }
  const double ma_acf = num / den;
  const double lar_var = variance_of(data::gen_lar(len, 0.5, 18));
  const data::Transition p{{{0.6, 0.4}, {0.4, 0.6}}};
  const auto mc = data::gen_mc(len, p, 140);
  double c[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t t = 1; t < mc.size(); ++t) c[int(mc[t - 1])][int(mc[t])] += 1;
  double mc_err = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      mc_err = std::max(mc_err, std::abs(c[i][j] / (c[i][0] + c[i][1]) - p[std::size_t(i)][std::size_t(j)]));
  const bool ok = std::abs(ma_var - 2.4167) <= 0.02 && std::abs(ma_acf - 0.3448) <= 0.01 &&
                  std::abs(lar_var - 0.4444) <= 0.005 && mc_err <= 0.002;
  return {ok, "MA var " + fmt("%.4f", ma_var) + ", MA acf1 " + fmt("%.4f", ma_acf) + ", LAR var " +
                  fmt("%.4f", lar_var) + ", MC max freq error " + fmt("%.4f", mc_err)};
}

// 6. Perturbing samples after t changes nothing that ends at or before t.
Outcome causality() {
  TrainConfig cfg = case_defaults("lar");
  const auto base = data::gen_lar(240, 0.5, 6);
  const WiaeModel model = init_model(cfg, normalize_fit(base));
  const std::size_t m = model.window.m;
  DetectConfig dc;
  dc.block_len = 50;
  dc.stride = 25;
  std::mt19937_64 pick(6);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t violations = 0, checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = data::gen_lar(240, 0.5, 100 + std::uint64_t(trial));
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, x.size() - 2)(pick);
    auto y = x;
    const std::size_t k = std::uniform_int_distribution<std::size_t>(t + 1, x.size() - 1)(pick);
    y[k] += noise(pick);
    if (trial % 2) for (std::size_t i = t + 1; i < y.size(); ++i) y[i] = -y[i];

    const auto nx = encode(model, x), ny = encode(model, y);
    const auto rx = reconstruct(model, x), ry = reconstruct(model, y);
    const auto sx = score_stream(model, x, dc), sy = score_stream(model, y, dc);
    // nu[i] ends at sample i + m - 1; reconstruction[i] at i + 2m - 2.
    for (std::size_t i = 0; i + m - 1 <= t && i < nx.size(); ++i, ++checked) violations += nx[i] != ny[i];
    for (std::size_t i = 0; i + 2 * m - 2 <= t && i < rx.size(); ++i, ++checked) violations += rx[i] != ry[i];
    for (std::size_t b = 0; b < sx.size(); ++b) {
      if (sx[b].start + dc.block_len - 1 > t) break;
      ++checked;
      violations += sx[b].statistic != sy[b].statistic || sx[b].p_value != sy[b].p_value;
    }
  }
  return {violations == 0 && checked > 0,
          std::to_string(violations) + " changed outputs among " + std::to_string(checked) + " past outputs"};
}

double untrained_and_trained_w(const TrainConfig& cfg, const std::vector<double>& train_x,
                               const std::vector<double>& held_out, double& w_init, double& runs_p) {
  const WiaeModel trained = train(train_x, cfg);
  const WiaeModel init = init_model(cfg, normalize_fit(train_x));
  Rng dither_rng = substream(cfg.seed, "acceptance/dither");
  runs_p = stats::runs_up_down_test(stats::dither(encode(trained, held_out), dither_rng)).p_value;
  auto w_to_uniform = [&](const WiaeModel& model) {
    const Tensor blocks = eval::blocks_of(encode(model, held_out), cfg.n, 1);
    Rng ref_rng = substream(cfg.seed, "acceptance/reference");
    const Tensor ref = eval::uniform_blocks(blocks.rows(), cfg.n, -1.0, 1.0, ref_rng);
    eval::WassersteinConfig wc;
    wc.seed = cfg.seed;
    return eval::wasserstein_critic(ref, blocks, wc).mean;
  };
  w_init = w_to_uniform(init);
  return w_to_uniform(trained);
}

// 7. LAR training smoke over 5 seeds.
Outcome training_smoke() {
  std::vector<double> ps, ws, w0s;
  int runs_pass = 0, w_pass = 0;
  for (std::uint64_t seed = 18; seed < 23; ++seed) {
    auto cfg = case_defaults("lar");
    cfg.seed = seed;
    double w0 = 0.0, p = 0.0;
    const double w = untrained_and_trained_w(cfg, data::gen_lar(10000, 0.5, seed),
                                             data::gen_lar(10000, 0.5, seed + 1000), w0, p);
    ps.push_back(p);
    ws.push_back(w);
    w0s.push_back(w0);
    runs_pass += p > 0.05;
    w_pass += w < w0;
    std::fprintf(stderr, "  criterion 7 seed %llu: runs p %.4f, W %.4f, untrained W %.4f\n",
                 static_cast<unsigned long long>(seed), p, w, w0);
  }
  return {runs_pass >= 3 && w_pass >= 4, "runs p [" + join(ps) + "] (" + std::to_string(runs_pass) + "/5 > 0.05), W [" +
                                             join(ws) + "] vs untrained [" + join(w0s) + "] (" +
                                             std::to_string(w_pass) + "/5 below)"};
}

std::vector<double> p_values(const WiaeModel& model, const std::vector<double>& series, std::size_t block) {
  DetectConfig dc;
  dc.block_len = block;
  std::vector<double> out;
  for (const auto& s : score_stream(model, series, dc)) out.push_back(s.p_value);
  return out;
}

// 8. Detection power on the AR1, AR2 and MA cases.
Outcome detection_power() {
  const std::size_t blocks = 200;
  std::vector<double> ar1, ar2, ma;
  for (std::uint64_t k = 0; k < 5; ++k) {
    auto cfg = case_defaults("ar1");
    cfg.seed += k;
    const std::size_t s = cfg.seed, n = 1000, len = cfg.m - 1 + blocks * n;
    const auto model = train(data::gen_lar(10000, 0.5, s, data::Law::normal), cfg);
    const auto h0 = p_values(model, data::gen_lar(len, 0.5, s + 1000, data::Law::normal), n);
    const auto h1_ar1 = p_values(model, data::gen_ar(len, std::vector<double>{0.3, 0.3}, s + 2000, data::Law::normal), n);
    const auto h1_ar2 = p_values(model, data::gen_lar(len, 0.5, s + 3000, data::Law::uniform_wide), n);
    ar1.push_back(eval::roc_points(h0, h1_ar1).auroc);
    ar2.push_back(eval::roc_points(h0, h1_ar2).auroc);
    std::fprintf(stderr, "  criterion 8 AR seed %zu: AUROC AR1 %.4f, AR2 %.4f\n", s, ar1.back(), ar2.back());
  }
  for (std::uint64_t k = 0; k < 5; ++k) {
    auto cfg = case_defaults("ma");
    cfg.seed += k;
    const std::size_t s = cfg.seed, n = 500, len = cfg.m - 1 + blocks * n;
    const auto model = train(data::gen_ma(10000, s, data::Law::uniform_wide), cfg);
    const auto h0 = p_values(model, data::gen_ma(len, s + 1000, data::Law::uniform_wide), n);
    const auto h1 = p_values(model, data::gen_ma(len, s + 2000, data::Law::normal), n);
    ma.push_back(eval::roc_points(h0, h1).auroc);
    std::fprintf(stderr, "  criterion 8 MA seed %zu: AUROC %.4f\n", s, ma.back());
  }
  auto count = [](const std::vector<double>& v, double bar) {
    return int(std::count_if(v.begin(), v.end(), [&](double a) { return a >= bar; }));
  };
  const int c1 = count(ar1, 0.75), c2 = count(ar2, 0.75), c3 = count(ma, 0.65);
  return {c1 >= 3 && c2 >= 3 && c3 >= 3, "AUROC AR1 [" + join(ar1) + "] (" + std::to_string(c1) + "/5 >= 0.75), AR2 [" +
                                             join(ar2) + "] (" + std::to_string(c2) + "/5 >= 0.75), MA [" + join(ma) +
                                             "] (" + std::to_string(c3) + "/5 >= 0.65)"};
}

// 9. Trapezoidal AUROC against an explicit pair count.
Outcome auroc_oracle() {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> size(1, 60), level(0, 19);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> h0(std::size_t(size(rng))), h1(std::size_t(size(rng)));
    const bool coarse = trial % 3 == 0;
    for (auto& v : h0) v = coarse ? level(rng) / 20.0 : unit(rng);
    for (auto& v : h1) v = coarse ? level(rng) / 20.0 : unit(rng) * unit(rng);
    double pairs = 0.0;
    for (double a : h1)
      for (double b : h0) pairs += a < b ? 1.0 : (a == b ? 0.5 : 0.0);
    pairs /= double(h0.size() * h1.size());
    worst = std::max(worst, std::abs(eval::roc_points(h0, h1).auroc - pairs));
  }
  return {worst <= 1e-12, "max |trapezoid - pairwise| " + fmt("%.3g", worst)};
}

// 10. Critic-based Wasserstein estimate on scalar uniforms.
Outcome wasserstein_sanity() {
  Rng rng = substream(10, "acceptance/wasserstein");
  const Tensor a = eval::uniform_blocks(2000, 1, -1.0, 1.0, rng);
  const Tensor b = eval::uniform_blocks(2000, 1, -1.0, 1.0, rng);
  Tensor shifted = a;
  for (auto& v : shifted.data()) v += 1.0;
  const double same = eval::wasserstein_critic(a, b).mean;
  const double up = eval::wasserstein_critic(shifted, a).mean;
  const double down = eval::wasserstein_critic(a, shifted).mean;
  const bool ok = same <= 0.05 && std::abs(up - 1.0) <= 0.15 && std::abs(down - 1.0) <= 0.15;
  return {ok, "identical " + fmt("%.4f", same) + ", unit shift " + fmt("%.4f", up) + " / " + fmt("%.4f", down)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 11. The scripted CLI pipeline twice, compared file by file.
Outcome determinism() {
  const std::vector<std::string> script{
      "generate --kind lar --phi 0.5 --len 10000 --seed 18 --out train.csv",
      "generate --kind lar --phi 0.5 --len 20019 --seed 1018 --out h0.csv",
      "generate --kind ar --phi 0.3,0.3 --len 20019 --seed 2018 --out h1.csv",
      "train train.csv --case lar --out model.json",
      "detect h0.csv --model model.json --block 1000 --out h0.jsonl --summary h0.summary.json",
      "detect h1.csv --model model.json --block 1000 --out h1.jsonl --summary h1.summary.json",
      "eval --h0 h0.jsonl --h1 h1.jsonl --roc roc.csv --out auroc.json",
      "eval --mode representation --model model.json --data h0.csv --out representation.csv",
  };
  const fs::path root = fs::temp_directory_path() / "wiae_acceptance_determinism";
  fs::remove_all(root);
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    for (const auto& step : script) {
      const std::string cmd = "cd '" + (root / run).string() + "' && '" + WIAE_CLI_PATH + "' " + step + " >/dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "step failed: " + step};
    }
  }
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(root / "a")) names.insert(e.path().filename().string());
  std::size_t same = 0, bytes = 0;
  std::string differing;
  for (const auto& name : names) {
    const auto x = slurp(root / "a" / name), y = slurp(root / "b" / name);
    if (x == y && !x.empty()) {
      ++same;
      bytes += x.size();
    } else {
      differing += " " + name;
    }
  }
  std::size_t count_b = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(root / "b")) ++count_b;
  const bool ok = differing.empty() && count_b == names.size() && names.size() >= 10;
  fs::remove_all(root);
  return {ok, std::to_string(same) + "/" + std::to_string(names.size()) + " files identical (" + std::to_string(bytes) +
                  " bytes)" + (differing.empty() ? "" : ", differing:" + differing)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  wiae::keep_freed_memory();
  const std::vector<Criterion> all{
      {1, "autodiff correctness", 10, autodiff_correctness},
      {2, "Legendre orthonormality", 1, legendre_orthonormality},
      {3, "Neyman null calibration", 5, neyman_null},
      {4, "runs-test constants", 30, runs_constants},
      {5, "generator moments", 30, generator_moments},
      {6, "causality", 10, causality},
      {7, "LAR training smoke", 15 * 60, training_smoke},
      {8, "detection power", 45 * 60, detection_power},
      {9, "AUROC oracle equivalence", 5, auroc_oracle},
      {10, "Wasserstein sanity", 5 * 60, wasserstein_sanity},
      {11, "pipeline determinism", 30 * 60, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s criterion %d (%s): %s; %.1f s of %.0f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.limit_s, in_time ? "" : " (over time limit)");
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
