// wiae: generate synthetic series, train a weak innovations auto-encoder,
// score streams for novelty and evaluate the results.
//
// Usage: wiae [--config exp.json] <generate|train|detect|eval> [flags]
// Exit codes: 0 ok, 2 usage, 3 I/O or file format, 4 contract violation or
// unusable data, 1 anything else.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wiae/datagen.hpp"
#include "wiae/detect.hpp"
#include "wiae/error.hpp"
#include "wiae/eval.hpp"
#include "wiae/stats.hpp"
#include "wiae/wiae.hpp"

namespace {

using nlohmann::json;

enum ExitCode { kOk = 0, kOther = 1, kUsage = 2, kIo = 3, kContract = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reads an experiment file: an object with one section per subcommand, e.g.
// {"seed": 7, "train": {"case": "ma", "epochs": 50}}. Top-level scalars apply
// to every subcommand that has a flag of that name; section values win over
// them and command-line flags win over both.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::vector<std::string> sections) : sections_(std::move(sections)) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json root;
    try {
      root = json::parse(in);
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError("experiment file: " + std::string(e.what()));
    }
    if (!root.is_object()) throw CLI::ConversionError("experiment file: top level must be an object");
    std::vector<CLI::ConfigItem> items;
    auto add = [&](const json& obj, const std::string& section) {
      for (const auto& [key, value] : obj.items()) {
        if (value.is_object()) continue;
        CLI::ConfigItem item;
        item.parents = {section};
        item.name = key;
        if (value.is_array())
          for (const auto& v : value) item.inputs.push_back(scalar(v));
        else
          item.inputs.push_back(scalar(value));
        items.push_back(std::move(item));
      }
    };
    for (const auto& s : sections_)
      if (root.contains(s) && root[s].is_object()) add(root[s], s);
    for (const auto& s : sections_) add(root, s);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  std::vector<std::string> sections_;
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw wiae::IoError("cannot write " + path);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  auto out = open_out(path);
  out << text;
  if (!out) throw wiae::IoError("write failed: " + path);
}

std::vector<double> load_values(const std::string& path) { return wiae::data::load_csv(path).values; }

double lag1_acf(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    den += (x[i] - mean) * (x[i] - mean);
    if (i > 0) num += (x[i] - mean) * (x[i - 1] - mean);
  }
  return den > 0.0 ? num / den : 0.0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string kind;
  std::vector<double> phi{0.5};
  double theta = 2.5;
  double p00 = 0.6;
  std::optional<double> p11;
  std::size_t len = 0;
  std::uint64_t seed = 0;
  std::string law = "uniform";
  bool gmm = false;
  std::string out = "-";
};

int run_generate(const GenerateArgs& a) {
  using namespace wiae::data;
  Law law;
  try {
    law = parse_law(a.law);
  } catch (const wiae::ContractViolation& e) {
    throw UsageError(e.what());
  }
  std::vector<double> x;
  if (a.kind == "ma") {
    x = gen_ma(a.len, a.seed, law, a.theta);
  } else if (a.kind == "lar" || a.kind == "ar") {
    if (a.kind == "lar" && a.phi.size() != 1) throw UsageError("--kind lar takes a single --phi");
    if (!ar_is_stationary(a.phi)) throw UsageError("--phi: coefficients are not stationary");
    x = gen_ar(a.len, a.phi, a.seed, law);
  } else if (a.kind == "mc") {
    const double p11 = a.p11.value_or(a.p00);
    if (!(a.p00 >= 0.0 && a.p00 <= 1.0 && p11 >= 0.0 && p11 <= 1.0))
      throw UsageError("--p00/--p11 must be probabilities");
    x = gen_mc(a.len, Transition{{{a.p00, 1.0 - a.p00}, {1.0 - p11, p11}}}, a.seed);
  } else {
    throw UsageError("unknown --kind '" + a.kind + "'");
  }
  if (a.gmm) x = inject_gmm_noise(x, default_gmm(x), a.seed);

  std::ostringstream csv;
  write_csv(csv, LabeledSeries{x, {}, a.out});
  write_text(a.out, csv.str());

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  const double sd = sample_stddev(x);
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  std::fprintf(stderr, "generated %zu samples (%s): mean %.6g var %.6g min %.6g max %.6g acf1 %.6g\n", x.size(),
               a.kind.c_str(), mean, sd * sd, *lo, *hi, lag1_acf(x));
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string case_name = "lar";
  std::string out = "model.json";
  std::string log;
  std::optional<std::size_t> m, n, batch, epochs, steps, critic_iters;
  std::optional<double> lr, lambda1, lambda2, mu, fd_step, clip;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> penalty;
  bool recon_critic = false;
};

wiae::TrainConfig resolve(const TrainArgs& a) {
  wiae::TrainConfig c;
  try {
    c = wiae::case_defaults(a.case_name);
    if (a.penalty) c.penalty = wiae::parse_penalty_mode(*a.penalty);
  } catch (const wiae::ContractViolation& e) {
    throw UsageError(e.what());
  }
  if (a.m) c.m = *a.m;
  if (a.n) c.n = *a.n;
  if (a.batch) c.batch = *a.batch;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.steps) c.steps_per_epoch = *a.steps;
  if (a.critic_iters) c.critic_iters = *a.critic_iters;
  if (a.lr) c.lr = *a.lr;
  if (a.lambda1) c.lambda1 = *a.lambda1;
  if (a.lambda2) c.lambda2 = *a.lambda2;
  if (a.mu) c.mu = *a.mu;
  if (a.fd_step) c.fd_step = *a.fd_step;
  if (a.clip) c.clip = *a.clip;
  if (a.seed) c.seed = *a.seed;
  c.recon_critic_in_generator = a.recon_critic;
  return c;
}

int run_train(const TrainArgs& a) {
  const auto cfg = resolve(a);
  const auto x = load_values(a.data);
  const auto model = wiae::train(x, cfg);
  wiae::save_checkpoint(model, a.out);

  std::string log_path = a.log;
  if (log_path.empty()) {
    const auto dot = a.out.rfind('.');
    log_path = (dot == std::string::npos ? a.out : a.out.substr(0, dot)) + ".loss.csv";
  }
  std::ostringstream log;
  log << "epoch,critic_nu,critic_x,generator,reconstruction\n";
  for (const auto& e : model.log)
    log << e.epoch << ',' << wiae::data::format_double(e.critic_nu) << ',' << wiae::data::format_double(e.critic_x)
        << ',' << wiae::data::format_double(e.generator) << ',' << wiae::data::format_double(e.reconstruction)
        << '\n';
  write_text(log_path, log.str());

  if (model.log.empty()) {
    std::fprintf(stderr, "saved initialized model to %s (0 epochs)\n", a.out.c_str());
  } else {
    const auto& e = model.log.back();
    std::fprintf(stderr,
                 "epoch %zu: critic_nu %.6g critic_x %.6g generator %.6g reconstruction %.6g\nsaved %s, loss log %s\n",
                 e.epoch, e.critic_nu, e.critic_x, e.generator, e.reconstruction, a.out.c_str(), log_path.c_str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// detect

struct DetectArgs {
  std::string model;
  std::string data;
  std::size_t block = 1000;
  std::size_t stride = 0;
  double p_threshold = 0.05;
  std::string format = "jsonl";
  std::string out = "-";
  std::string summary;
};

int run_detect(const DetectArgs& a) {
  const auto model = wiae::load_checkpoint(a.model);
  const auto x = load_values(a.data);
  std::size_t outside = 0;
  for (double v : x) outside += std::abs(model.norm.apply(v)) > 1.0;
  if (double(outside) > 0.01 * double(x.size()))
    std::fprintf(stderr, "warning: %zu of %zu samples fall outside the training range of %s\n", outside, x.size(),
                 a.model.c_str());

  wiae::DetectConfig cfg;
  cfg.block_len = a.block;
  cfg.stride = a.stride;
  cfg.p_threshold = a.p_threshold;
  const auto scores = wiae::score_stream(model, x, cfg);

  std::ostringstream body;
  if (a.format == "csv")
    wiae::write_scores_csv(body, scores);
  else
    wiae::write_jsonl(body, scores);
  write_text(a.out, body.str());

  const auto s = wiae::summarize(scores);
  const json summary{{"blocks", s.blocks}, {"rejected", s.rejected}, {"rejection_rate", s.rejection_rate}};
  if (!a.summary.empty()) write_text(a.summary, summary.dump(1) + "\n");
  std::fprintf(stderr, "%s\n", summary.dump().c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string mode = "roc";
  std::string h0, h1;
  std::string model, data;
  std::string roc_out;
  std::string out = "-";
  std::size_t repeats = 5;
  std::size_t steps = 2000;
  std::size_t stride = 1;
  double lambda = 10.0;
  std::uint64_t seed = 0;
};

std::vector<double> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw wiae::IoError("cannot open " + path);
  return wiae::read_p_values_jsonl(in, path);
}

std::string fmt(double v) { return wiae::data::format_double(v); }

int run_eval(const EvalArgs& a) {
  if (a.mode == "roc") {
    if (a.h0.empty() || a.h1.empty()) throw UsageError("roc mode needs --h0 and --h1 score files");
    const auto p0 = read_scores(a.h0);
    const auto p1 = read_scores(a.h1);
    if (p0.empty() || p1.empty()) throw UsageError("score files must not be empty");
    const auto report = wiae::eval::roc_points(p0, p1);
    if (!a.roc_out.empty()) {
      std::ostringstream csv;
      wiae::eval::write_roc_csv(csv, report);
      write_text(a.roc_out, csv.str());
    }
    write_text(a.out, wiae::eval::roc_summary(report).dump(1) + "\n");
    return kOk;
  }

  if (a.mode != "representation" && a.mode != "reconstruction") throw UsageError("unknown --mode '" + a.mode + "'");
  if (a.model.empty() || a.data.empty()) throw UsageError(a.mode + " mode needs --model and --data");
  const auto model = wiae::load_checkpoint(a.model);
  const auto x = load_values(a.data);
  if (x.empty()) throw UsageError("data file is empty");
  const std::size_t n = model.window.n;
  wiae::eval::WassersteinConfig wc;
  wc.repeats = a.repeats;
  wc.steps = a.steps;
  wc.lambda = a.lambda;
  wc.seed = a.seed;

  std::ostringstream csv;
  if (a.mode == "representation") {
    const auto nu = wiae::encode(model, x);
    wiae::Rng dither_rng = wiae::substream(a.seed, "dither");
    const auto runs = wiae::stats::runs_up_down_test(wiae::stats::dither(nu, dither_rng));
    const wiae::Tensor blocks = wiae::eval::blocks_of(nu, n, a.stride);
    wiae::Rng rng = wiae::substream(a.seed, "reference");
    const wiae::Tensor ref = wiae::eval::uniform_blocks(blocks.rows(), n, -1.0, 1.0, rng);
    const auto w = wiae::eval::wasserstein_critic(ref, blocks, wc);
    csv << "p,W_mean,W_std\n" << fmt(runs.p_value) << ',' << fmt(w.mean) << ',' << fmt(w.std) << '\n';
  } else {
    // Both sides in the model's normalized units, aligned sample for sample.
    const auto xn = wiae::normalize_apply(x, model.norm);
    const auto nu = wiae::encode_series(model.encoder, xn);
    const auto xhat = wiae::decode_series(model.decoder, nu);
    const std::vector<double> target(xn.begin() + std::ptrdiff_t(2 * model.window.m - 2), xn.end());
    const auto w =
        wiae::eval::wasserstein_critic(wiae::eval::blocks_of(target, n, a.stride), wiae::eval::blocks_of(xhat, n, a.stride), wc);
    csv << "W_mean,W_std\n" << fmt(w.mean) << ',' << fmt(w.std) << '\n';
  }
  write_text(a.out, csv.str());
  return kOk;
}

constexpr const char* kCaseTable =
    "Per-case training defaults (--case):\n"
    "  case   lr     lambda1 lambda2 mu   seed\n"
    "  mc     1e-4   1.0     1.0     1.0  140\n"
    "  ar1    1e-4   1.0     1.6     1.0  18\n"
    "  ar2    1e-4   1.0     1.6     1.0  18\n"
    "  lar    1e-4   1.0     1.6     1.0  18\n"
    "  ma     1e-4   1.0     1.6     1.0  37\n"
    "  utk    1e-4   1.0     1.2     2.9  80\n"
    "  bess   1e-4   1.0     1.0     1.0  58\n"
    "All cases: m 20, n 50, batch 60, epochs 100, steps-per-epoch 20, critic-iters 5,\n"
    "Adam betas 0.9/0.999, penalty exact.\n";

}  // namespace

int main(int argc, char** argv) {
  wiae::keep_freed_memory();
  CLI::App app{"Weak innovations auto-encoder: synthetic data, training, novelty detection, evaluation"};
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a synthetic series to CSV");
  gen->add_option("--kind", ga.kind, "Process: ma, lar, ar or mc")->required()->check(CLI::IsMember({"ma", "lar", "ar", "mc"}));
  gen->add_option("--phi", ga.phi, "AR coefficients phi_1[,phi_2,...]")->delimiter(',')->capture_default_str();
  gen->add_option("--theta", ga.theta, "MA coefficient")->capture_default_str();
  gen->add_option("--p00", ga.p00, "MC probability of staying in state 0")->capture_default_str();
  gen->add_option("--p11", ga.p11, "MC probability of staying in state 1 (default: --p00)");
  gen->add_option("--len", ga.len, "Number of samples")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", ga.seed, "Root seed")->capture_default_str();
  gen->add_option("--law", ga.law, "Innovation law: uniform (U[-1,1]), uniform-wide (U[-1.5,1.5]), normal")
      ->capture_default_str();
  gen->add_flag("--gmm", ga.gmm, "Add two-component Gaussian mixture noise");
  gen->add_option("--out", ga.out, "Output CSV, '-' for stdout")->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model on a CSV series and save a checkpoint");
  tr->add_option("data", ta.data, "Training series CSV")->required();
  tr->add_option("--case", ta.case_name, "Hyperparameter preset (see table below)")
      ->capture_default_str()
      ->check(CLI::IsMember({"mc", "ar1", "ar2", "lar", "ma", "utk", "bess"}));
  tr->add_option("--out", ta.out, "Checkpoint path")->capture_default_str();
  tr->add_option("--log", ta.log, "Loss log CSV (default: <out stem>.loss.csv)");
  tr->add_option("--m", ta.m, "Encoder/decoder memory [20]");
  tr->add_option("--n", ta.n, "Critic block length [50]");
  tr->add_option("--batch", ta.batch, "Segments per update [60]");
  tr->add_option("--epochs", ta.epochs, "Epochs [100]");
  tr->add_option("--steps-per-epoch", ta.steps, "Generator updates per epoch [20]");
  tr->add_option("--critic-iters", ta.critic_iters, "Critic updates per generator update [5]");
  tr->add_option("--lr", ta.lr, "Adam learning rate [case]");
  tr->add_option("--lambda1", ta.lambda1, "Innovation critic penalty weight [case]");
  tr->add_option("--lambda2", ta.lambda2, "Reconstruction critic penalty weight [case]");
  tr->add_option("--mu", ta.mu, "Reconstruction weight in the generator loss [case]");
  tr->add_option("--seed", ta.seed, "Root seed [case]");
  tr->add_option("--penalty", ta.penalty, "Lipschitz penalty: exact, finite-difference, weight-clipping [exact]");
  tr->add_option("--fd-step", ta.fd_step, "Step of the finite-difference penalty [1e-4]");
  tr->add_option("--clip", ta.clip, "Weight-clipping bound [0.01]");
  tr->add_flag("--recon-critic", ta.recon_critic, "Also feed the reconstruction critic into the generator loss");

  DetectArgs da;
  auto* det = app.add_subcommand("detect", "Score a series block by block for novelty");
  det->add_option("--model", da.model, "Checkpoint")->required();
  det->add_option("data", da.data, "Series CSV")->required();
  det->add_option("--block", da.block, "Block length N")->capture_default_str();
  det->add_option("--stride", da.stride, "Distance between block starts (0: block length)")->capture_default_str();
  det->add_option("--p-threshold", da.p_threshold, "Reject blocks with p below this")->capture_default_str();
  det->add_option("--format", da.format, "Score format: jsonl or csv")
      ->capture_default_str()
      ->check(CLI::IsMember({"jsonl", "csv"}));
  det->add_option("--out", da.out, "Score file, '-' for stdout")->capture_default_str();
  det->add_option("--summary", da.summary, "Also write {blocks, rejected, rejection_rate} here");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "ROC of two score files, or representation/reconstruction quality");
  ev->add_option("--mode", ea.mode, "roc, representation or reconstruction")
      ->capture_default_str()
      ->check(CLI::IsMember({"roc", "representation", "reconstruction"}));
  ev->add_option("--h0", ea.h0, "JSONL scores of normal data (roc)");
  ev->add_option("--h1", ea.h1, "JSONL scores of novel data (roc)");
  ev->add_option("--roc", ea.roc_out, "ROC curve CSV (roc)");
  ev->add_option("--model", ea.model, "Checkpoint (representation, reconstruction)");
  ev->add_option("--data", ea.data, "Series CSV (representation, reconstruction)");
  ev->add_option("--out", ea.out, "Report path, '-' for stdout")->capture_default_str();
  ev->add_option("--repeats", ea.repeats, "Wasserstein critic restarts")->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--steps", ea.steps, "Wasserstein critic steps")->capture_default_str();
  ev->add_option("--lambda", ea.lambda, "Wasserstein critic penalty weight")->capture_default_str();
  ev->add_option("--stride", ea.stride, "Distance between Wasserstein block starts (0: disjoint)")->capture_default_str();
  ev->add_option("--seed", ea.seed, "Seed for reference samples and critics")->capture_default_str();

  app.footer(kCaseTable);
  tr->footer(kCaseTable);
  app.set_config("--config", "", "JSON experiment file with per-subcommand sections; flags take precedence");
  app.config_formatter(std::make_shared<JsonConfig>(std::vector<std::string>{"generate", "train", "detect", "eval"}));
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  for (auto* sub : {gen, tr, det, ev}) sub->allow_config_extras(CLI::config_extras_mode::ignore);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return run_generate(ga);
    if (*tr) return run_train(ta);
    if (*det) return run_detect(da);
    if (*ev) return run_eval(ea);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const wiae::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const wiae::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kContract;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}
