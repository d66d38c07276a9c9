#pragma once

// Weak innovations auto-encoder: adversarial training of a causal encoder
// (series -> innovations), a causal decoder (innovations -> series) and two
// Wasserstein critics, plus checkpoint persistence.
//
// One training iteration runs critic_iters critic updates followed by one
// generator update:
//
//   critic on innovations   L1 = D_nu(nu_hat) - D_nu(u) + lambda1 * GP
//   critic on series        L2 = D_x(x_hat) - D_x(x) + lambda2 * GP
//   encoder + decoder       -D_nu(nu_hat) + mu * |x_hat - x|_2
//
// with u ~ U[-1,1]^n and all terms averaged over the batch. GP is
// (|grad_input D(bar)|_2 - 1)^2 at bar = eps * real + (1 - eps) * fake.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "wiae/autodiff.hpp"
#include "wiae/error.hpp"
#include "wiae/nn.hpp"
#include "wiae/rng.hpp"

namespace wiae {

enum class PenaltyMode {
  exact,              // input gradient built from primitives, differentiated once
  finite_difference,  // central differences, 2n extra critic evaluations per row
  weight_clipping,    // no penalty; critic weights clipped after each step
};

inline const char* to_string(PenaltyMode m) {
  switch (m) {
    case PenaltyMode::exact: return "exact";
    case PenaltyMode::finite_difference: return "finite-difference";
    case PenaltyMode::weight_clipping: return "weight-clipping";
  }
  return "?";
}

inline PenaltyMode parse_penalty_mode(std::string_view s) {
  if (s == "exact") return PenaltyMode::exact;
  if (s == "finite-difference") return PenaltyMode::finite_difference;
  if (s == "weight-clipping") return PenaltyMode::weight_clipping;
  throw ContractViolation("unknown penalty mode '" + std::string(s) + "'");
}

struct TrainConfig {
  std::size_t m = 20;
  std::size_t n = 50;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda1 = 1.0;
  double lambda2 = 1.6;
  double mu = 1.0;
  std::size_t batch = 60;
  std::size_t epochs = 100;
  std::size_t steps_per_epoch = 20;  // generator updates per epoch
  std::size_t critic_iters = 5;
  std::uint64_t seed = 18;
  PenaltyMode penalty = PenaltyMode::exact;
  bool recon_critic_in_generator = false;
  double fd_step = 1e-4;
  double clip = 0.01;

  WindowSpec window() const { return WindowSpec{m, n}; }
  AdamConfig adam() const { return AdamConfig{lr, beta1, beta2, adam_eps}; }

  void validate() const {
    window().validate();
    detail::require(lr > 0.0, "TrainConfig: lr must be positive");
    detail::require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "TrainConfig: betas must be in [0, 1)");
    detail::require(adam_eps > 0.0, "TrainConfig: adam_eps must be positive");
    detail::require(lambda1 >= 0.0 && lambda2 >= 0.0 && mu >= 0.0, "TrainConfig: lambda1, lambda2, mu must be >= 0");
    detail::require(batch >= 1, "TrainConfig: batch must be >= 1");
    detail::require(steps_per_epoch >= 1, "TrainConfig: steps_per_epoch must be >= 1");
    detail::require(critic_iters >= 1, "TrainConfig: critic_iters must be >= 1");
    detail::require(fd_step > 0.0 && clip > 0.0, "TrainConfig: fd_step and clip must be positive");
  }
};

// Per-case hyperparameters: lr, (lambda1, lambda2), mu and seed.
inline TrainConfig case_defaults(std::string_view name) {
  TrainConfig c;
  auto set = [&](double l1, double l2, double mu, std::uint64_t seed) {
    c.lambda1 = l1;
    c.lambda2 = l2;
    c.mu = mu;
    c.seed = seed;
  };
  if (name == "mc") set(1.0, 1.0, 1.0, 140);
  else if (name == "ar1" || name == "ar2" || name == "lar") set(1.0, 1.6, 1.0, 18);
  else if (name == "ma") set(1.0, 1.6, 1.0, 37);
  else if (name == "utk") set(1.0, 1.2, 2.9, 80);
  else if (name == "bess") set(1.0, 1.0, 1.0, 58);
  else throw ContractViolation("unknown case '" + std::string(name) + "'");
  return c;
}

// Affine map sending the training range [min, max] to [-0.9, 0.9].
struct Normalization {
  double scale = 1.0;
  double offset = 0.0;

  double apply(double x) const { return scale * x + offset; }
  double invert(double y) const { return (y - offset) / scale; }
};

inline Normalization normalize_fit(std::span<const double> series) {
  if (series.empty()) throw DegenerateData("normalize_fit: empty series");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (!(*hi > *lo)) throw DegenerateData("normalize_fit: constant series");
  const double scale = 1.8 / (*hi - *lo);
  return Normalization{scale, -0.9 - *lo * scale};
}

inline std::vector<double> normalize_apply(std::span<const double> series, const Normalization& norm) {
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = norm.apply(series[i]);
  return out;
}

inline std::vector<double> denormalize(std::span<const double> series, const Normalization& norm) {
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = norm.invert(series[i]);
  return out;
}

struct EpochLog {
  std::size_t epoch = 0;
  double critic_nu = 0.0;
  double critic_x = 0.0;
  double generator = 0.0;
  double reconstruction = 0.0;
};

struct WiaeModel {
  MlpParams encoder;
  MlpParams decoder;
  MlpParams critic_nu;  // innovations vs U[-1,1]^n
  MlpParams critic_x;   // reconstruction vs data
  WindowSpec window;
  Normalization norm;
  TrainConfig config;
  std::vector<EpochLog> log;

  void validate() const {
    window.validate();
    encoder.validate();
    decoder.validate();
    critic_nu.validate();
    critic_x.validate();
    detail::require(encoder.input_dim() == window.m && decoder.input_dim() == window.m,
                    "WiaeModel: encoder/decoder width must equal m");
    detail::require(critic_nu.input_dim() == window.n && critic_x.input_dim() == window.n,
                    "WiaeModel: critic width must equal n");
    detail::require(norm.scale > 0.0 && std::isfinite(norm.offset), "WiaeModel: normalization scale must be > 0");
  }
};

inline WiaeModel init_model(const TrainConfig& cfg, const Normalization& norm) {
  cfg.validate();
  Rng rng = substream(cfg.seed, "init");
  WiaeModel model;
  model.window = cfg.window();
  model.encoder = make_encoder(cfg.m, rng);
  model.decoder = make_decoder(cfg.m, rng);
  model.critic_nu = make_critic(cfg.n, rng);
  model.critic_x = make_critic(cfg.n, rng);
  model.norm = norm;
  model.config = cfg;
  return model;
}

// Training allocates and frees the same large buffers every step. glibc's
// default thresholds return them to the kernel each time, which costs about a
// tenth of training time in page faults. Call once at program start.
inline void keep_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

// Training state beyond the model itself: optimizer moments and the stream
// that draws latent samples and interpolation weights.
struct TrainingState {
  WiaeModel model;
  AdamState encoder;
  AdamState decoder;
  AdamState critic_nu;
  AdamState critic_x;
  Rng noise;

  explicit TrainingState(WiaeModel m) : model(std::move(m)), noise(substream(model.config.seed, "noise")) {}
};

// Aligned n-blocks for a batch of segments: innovations, reconstructions and
// the data they reconstruct. Each tensor is batch x n.
struct BlockBatch {
  Tensor nu;
  Tensor x_hat;
  Tensor x;
};

namespace detail {

inline void check_segments(const Tensor& segments, const WindowSpec& w) {
  require(segments.rows() >= 1, "segment batch is empty");
  require(segments.cols() == w.segment_length(),
          "segment length must be 2m + n - 2 = " + std::to_string(w.segment_length()) + ", got " +
              std::to_string(segments.cols()));
}

// Encoder windows for every segment, stacked: batch * (m + n - 1) rows.
inline Tensor segment_windows(const Tensor& segments, std::size_t m) {
  const std::size_t per = segments.cols() - m + 1;
  std::vector<double> data(segments.rows() * per * m);
  std::size_t k = 0;
  for (std::size_t b = 0; b < segments.rows(); ++b) {
    const auto seg = segments.row_span(b);
    for (std::size_t r = 0; r < per; ++r)
      for (std::size_t j = 0; j < m; ++j) data[k++] = seg[r + m - 1 - j];
  }
  return Tensor(segments.rows() * per, m, std::move(data));
}

// Index helpers over the stacked per-segment innovation column
// (m + n - 1 values per segment, the i-th at segment index m - 1 + i).
inline std::vector<std::size_t> decoder_window_index(std::size_t batch, const WindowSpec& w) {
  const std::size_t per = w.m + w.n - 1;
  std::vector<std::size_t> idx;
  idx.reserve(batch * w.n * w.m);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < w.n; ++i)
      for (std::size_t j = 0; j < w.m; ++j) idx.push_back(b * per + (w.m - 1 + i - j));
  return idx;
}

inline std::vector<std::size_t> innovation_block_index(std::size_t batch, const WindowSpec& w) {
  const std::size_t per = w.m + w.n - 1;
  std::vector<std::size_t> idx;
  idx.reserve(batch * w.n);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < w.n; ++i) idx.push_back(b * per + w.m - 1 + i);
  return idx;
}

inline Tensor tail_columns(const Tensor& segments, std::size_t n) {
  Tensor out(segments.rows(), n);
  const std::size_t first = segments.cols() - n;
  for (std::size_t b = 0; b < segments.rows(); ++b)
    for (std::size_t i = 0; i < n; ++i) out(b, i) = segments(b, first + i);
  return out;
}

inline Tensor uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = d(rng);
  return Tensor(rows, cols, std::move(v));
}

inline void clip_weights(MlpParams& net, double c) {
  for (auto* t : net.parameters())
    for (auto& v : t->data()) v = std::clamp(v, -c, c);
}

}  // namespace detail

// Innovation, reconstruction and data blocks for a batch of normalized
// segments under the current (frozen) encoder and decoder.
inline BlockBatch frozen_blocks(const WiaeModel& model, const Tensor& segments) {
  const WindowSpec& w = model.window;
  detail::check_segments(segments, w);
  const std::size_t batch = segments.rows();
  const Tensor nu = forward_batch(model.encoder, detail::segment_windows(segments, w.m));
  const auto win_idx = detail::decoder_window_index(batch, w);
  Tensor dec_in(batch * w.n, w.m);
  for (std::size_t k = 0; k < win_idx.size(); ++k) dec_in[k] = nu[win_idx[k]];
  const Tensor x_hat = forward_batch(model.decoder, dec_in);
  const auto blk_idx = detail::innovation_block_index(batch, w);
  Tensor nu_block(batch, w.n);
  for (std::size_t k = 0; k < blk_idx.size(); ++k) nu_block[k] = nu[blk_idx[k]];
  return BlockBatch{std::move(nu_block), Tensor(batch, w.n, x_hat.values()), detail::tail_columns(segments, w.n)};
}

// Mean over rows of (|g_i|_2 - 1)^2, g_i the critic's input gradient at
// bar_i = eps_i * real_i + (1 - eps_i) * fake_i, eps_i ~ U[0, 1]. The result
// is differentiable with respect to the critic weights bound in `critic`.
inline Var gradient_penalty(Graph& g, const MlpVars& critic, const Tensor& real, const Tensor& fake, Rng& rng,
                            PenaltyMode mode = PenaltyMode::exact, double h = 1e-4) {
  detail::require(real.same_shape(fake), "gradient_penalty: real and fake blocks differ in shape");
  detail::require(mode != PenaltyMode::weight_clipping, "gradient_penalty: weight clipping has no penalty term");
  const std::size_t rows = real.rows(), n = real.cols();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor bar(rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double eps = unit(rng);
    for (std::size_t c = 0; c < n; ++c) bar(r, c) = eps * real(r, c) + (1.0 - eps) * fake(r, c);
  }

  Var grad;
  if (mode == PenaltyMode::exact) {
    grad = input_gradient(g, critic, g.constant(std::move(bar)));
  } else {
    // Row r, coordinate j: probes 2(r n + j) (+h) and 2(r n + j) + 1 (-h).
    Tensor probes(rows * 2 * n, n);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t s = 0; s < 2; ++s) {
          const std::size_t p = 2 * (r * n + j) + s;
          for (std::size_t c = 0; c < n; ++c) probes(p, c) = bar(r, c);
          probes(p, j) += s == 0 ? h : -h;
        }
    const Var scores = forward(g, critic, g.constant(std::move(probes)));
    std::vector<std::size_t> up(rows * n), down(rows * n);
    for (std::size_t k = 0; k < rows * n; ++k) {
      up[k] = 2 * k;
      down[k] = 2 * k + 1;
    }
    grad = g.scale(g.sub(g.gather(scores, std::move(up), rows, n), g.gather(scores, std::move(down), rows, n)),
                   1.0 / (2.0 * h));
  }
  const Var dev = g.scale_shift(g.row_norms(grad), 1.0, -1.0);
  return g.mean(g.mul(dev, dev));
}

struct CriticLosses {
  double nu = 0.0;
  double x = 0.0;
};

namespace detail {

// One Adam step on `critic` minimizing mean D(fake) - mean D(real) + lambda GP.
inline double critic_step(MlpParams& critic, AdamState& adam, const Tensor& real, const Tensor& fake, double lambda,
                          const TrainConfig& cfg, Rng& rng) {
  Graph g;
  const MlpVars vars = bind(g, critic, true);
  const Var d_fake = g.mean(forward(g, vars, g.constant(fake)));
  const Var d_real = g.mean(forward(g, vars, g.constant(real)));
  Var loss = g.sub(d_fake, d_real);
  if (cfg.penalty != PenaltyMode::weight_clipping) {
    const Var gp = gradient_penalty(g, vars, real, fake, rng, cfg.penalty, cfg.fd_step);
    loss = g.add(loss, g.scale(gp, lambda));
  }
  const Gradients grads = g.backward(loss);
  const auto grad_list = collect(grads, vars);
  const auto params = critic.parameters();
  adam_step(params, grad_list, adam, cfg.adam());
  if (cfg.penalty == PenaltyMode::weight_clipping) clip_weights(critic, cfg.clip);
  return g.value(loss).item();
}

}  // namespace detail

// Critic updates from precomputed blocks; encoder and decoder are untouched.
inline CriticLosses critic_update_blocks(TrainingState& st, const BlockBatch& blocks, const TrainConfig& cfg) {
  const std::size_t n = st.model.window.n;
  detail::require(blocks.nu.cols() == n && blocks.x_hat.cols() == n && blocks.x.cols() == n,
                  "critic_update: block width must be n");
  const Tensor u = detail::uniform_tensor(blocks.nu.rows(), n, -1.0, 1.0, st.noise);
  CriticLosses out;
  out.nu = detail::critic_step(st.model.critic_nu, st.critic_nu, u, blocks.nu, cfg.lambda1, cfg, st.noise);
  out.x = detail::critic_step(st.model.critic_x, st.critic_x, blocks.x, blocks.x_hat, cfg.lambda2, cfg, st.noise);
  return out;
}

// One Adam step on each critic for a batch of normalized segments of length
// 2m + n - 2.
inline CriticLosses critic_update(TrainingState& st, const Tensor& segments, const TrainConfig& cfg) {
  return critic_update_blocks(st, frozen_blocks(st.model, segments), cfg);
}

struct GeneratorLosses {
  double total = 0.0;
  double adversarial = 0.0;     // -mean D_nu(nu_hat)
  double reconstruction = 0.0;  // mean |x_hat - x|_2
};

// One Adam step on the encoder and one on the decoder; critics are untouched.
inline GeneratorLosses generator_update(TrainingState& st, const Tensor& segments, const TrainConfig& cfg) {
  WiaeModel& model = st.model;
  const WindowSpec& w = model.window;
  detail::check_segments(segments, w);
  const std::size_t batch = segments.rows();

  Graph g;
  const MlpVars enc = bind(g, model.encoder, true);
  const MlpVars dec = bind(g, model.decoder, true);
  const MlpVars d_nu = bind(g, model.critic_nu, false);

  const Var nu = forward(g, enc, g.constant(detail::segment_windows(segments, w.m)));
  const Var dec_in = g.gather(nu, detail::decoder_window_index(batch, w), batch * w.n, w.m);
  const Var x_hat_col = forward(g, dec, dec_in);
  std::vector<std::size_t> reshape(batch * w.n);
  for (std::size_t k = 0; k < reshape.size(); ++k) reshape[k] = k;
  const Var x_hat = g.gather(x_hat_col, std::move(reshape), batch, w.n);
  const Var nu_block = g.gather(nu, detail::innovation_block_index(batch, w), batch, w.n);

  const Var adversarial = g.scale(g.mean(forward(g, d_nu, nu_block)), -1.0);
  const Var x_real = g.constant(detail::tail_columns(segments, w.n));
  const Var recon = g.mean(g.row_norms(g.sub(x_hat, x_real)));
  Var total = g.add(adversarial, g.scale(recon, cfg.mu));
  if (cfg.recon_critic_in_generator) {
    const MlpVars d_x = bind(g, model.critic_x, false);
    total = g.add(total, g.scale(g.mean(forward(g, d_x, x_hat)), -1.0));
  }

  const Gradients grads = g.backward(total);
  const auto enc_grads = collect(grads, enc);
  const auto dec_grads = collect(grads, dec);
  const auto enc_params = model.encoder.parameters();
  const auto dec_params = model.decoder.parameters();
  adam_step(enc_params, enc_grads, st.encoder, cfg.adam());
  adam_step(dec_params, dec_grads, st.decoder, cfg.adam());
  return GeneratorLosses{g.value(total).item(), g.value(adversarial).item(), g.value(recon).item()};
}

// Batch of `count` segments starting at uniformly drawn offsets (with
// replacement).
inline std::vector<std::size_t> sample_starts(std::size_t series_len, std::size_t seg_len, std::size_t count,
                                              Rng& rng) {
  detail::require(series_len >= seg_len, "sample_starts: series shorter than a segment");
  std::uniform_int_distribution<std::size_t> d(0, series_len - seg_len);
  std::vector<std::size_t> out(count);
  for (auto& s : out) s = d(rng);
  return out;
}

inline Tensor gather_segments(std::span<const double> series, std::span<const std::size_t> starts,
                              std::size_t seg_len) {
  Tensor out(starts.size(), seg_len);
  for (std::size_t b = 0; b < starts.size(); ++b)
    for (std::size_t i = 0; i < seg_len; ++i) out(b, i) = series[starts[b] + i];
  return out;
}

namespace detail {

// Innovations and reconstructions of a whole normalized series under the
// frozen networks; blocks for any segment are then slices.
struct SeriesCache {
  std::vector<double> nu;     // nu[k] belongs to series index k + m - 1
  std::vector<double> x_hat;  // x_hat[k] belongs to series index k + 2m - 2

  SeriesCache(const WiaeModel& model, std::span<const double> xn) {
    const std::size_t m = model.window.m;
    nu = forward_batch(model.encoder, sliding_windows(xn, m)).values();
    x_hat = forward_batch(model.decoder, sliding_windows(nu, m)).values();
  }

  BlockBatch blocks(std::span<const double> xn, std::span<const std::size_t> starts, const WindowSpec& w) const {
    BlockBatch out{Tensor(starts.size(), w.n), Tensor(starts.size(), w.n), Tensor(starts.size(), w.n)};
    for (std::size_t b = 0; b < starts.size(); ++b) {
      const std::size_t s = starts[b];
      for (std::size_t i = 0; i < w.n; ++i) {
        out.nu(b, i) = nu[s + w.m - 1 + i];
        out.x_hat(b, i) = x_hat[s + i];
        out.x(b, i) = xn[s + 2 * w.m - 2 + i];
      }
    }
    return out;
  }
};

}  // namespace detail

// Runs epochs * steps_per_epoch iterations of (critic_iters critic updates +
// one generator update) on the series. Deterministic given (series, cfg).
inline WiaeModel train(std::span<const double> series, const TrainConfig& cfg) {
  cfg.validate();
  const WindowSpec w = cfg.window();
  const std::size_t seg_len = w.segment_length();
  if (series.size() < seg_len + cfg.batch)
    throw DegenerateData("train: need at least 2m + n - 2 + batch = " + std::to_string(seg_len + cfg.batch) +
                         " samples, got " + std::to_string(series.size()));
  const Normalization norm = normalize_fit(series);
  const std::vector<double> xn = normalize_apply(series, norm);
  TrainingState st(init_model(cfg, norm));

  // Encoding the whole series once per iteration is cheaper than encoding
  // every critic batch separately when the series is short.
  const std::size_t per_batch_rows = cfg.critic_iters * cfg.batch * (w.m + 2 * w.n - 1);
  const bool use_cache = 2 * xn.size() <= per_batch_rows;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng batch_rng = substream(cfg.seed, "batch/" + std::to_string(epoch));
    EpochLog log{epoch + 1, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
      std::optional<detail::SeriesCache> cache;
      if (use_cache) cache.emplace(st.model, xn);
      for (std::size_t c = 0; c < cfg.critic_iters; ++c) {
        const auto starts = sample_starts(xn.size(), seg_len, cfg.batch, batch_rng);
        const CriticLosses cl =
            cache ? critic_update_blocks(st, cache->blocks(xn, starts, w), cfg)
                  : critic_update(st, gather_segments(xn, starts, seg_len), cfg);
        log.critic_nu += cl.nu;
        log.critic_x += cl.x;
      }
      const auto starts = sample_starts(xn.size(), seg_len, cfg.batch, batch_rng);
      const GeneratorLosses gl = generator_update(st, gather_segments(xn, starts, seg_len), cfg);
      log.generator += gl.total;
      log.reconstruction += gl.reconstruction;
    }
    const double critic_steps = double(cfg.steps_per_epoch * cfg.critic_iters);
    log.critic_nu /= critic_steps;
    log.critic_x /= critic_steps;
    log.generator /= double(cfg.steps_per_epoch);
    log.reconstruction /= double(cfg.steps_per_epoch);
    st.model.log.push_back(log);
  }
  return std::move(st.model);
}

// Causal innovations of a raw (unnormalized) series: output[i] belongs to
// series index m - 1 + i.
inline std::vector<double> encode(const WiaeModel& model, std::span<const double> series) {
  const auto xn = normalize_apply(series, model.norm);
  if (xn.size() < model.window.m) throw DegenerateData("encode: series shorter than the encoder window");
  return encode_series(model.encoder, xn);
}

// Reconstruction in the original units: output[i] belongs to series index
// 2m - 2 + i.
inline std::vector<double> reconstruct(const WiaeModel& model, std::span<const double> series) {
  const auto nu = encode(model, series);
  if (nu.size() < model.window.m) throw DegenerateData("reconstruct: series shorter than 2m - 1");
  return denormalize(decode_series(model.decoder, nu), model.norm);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

namespace detail {

using nlohmann::json;

inline json to_json(const TrainConfig& c) {
  return json{{"m", c.m},
              {"n", c.n},
              {"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"mu", c.mu},
              {"batch", c.batch},
              {"epochs", c.epochs},
              {"steps_per_epoch", c.steps_per_epoch},
              {"critic_iters", c.critic_iters},
              {"seed", c.seed},
              {"penalty", to_string(c.penalty)},
              {"recon_critic_in_generator", c.recon_critic_in_generator},
              {"fd_step", c.fd_step},
              {"clip", c.clip}};
}

inline TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.m = j.at("m").get<std::size_t>();
  c.n = j.at("n").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.lambda1 = j.at("lambda1").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.mu = j.at("mu").get<double>();
  c.batch = j.at("batch").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<std::size_t>();
  c.critic_iters = j.at("critic_iters").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.penalty = parse_penalty_mode(j.at("penalty").get<std::string>());
  c.recon_critic_in_generator = j.at("recon_critic_in_generator").get<bool>();
  c.fd_step = j.at("fd_step").get<double>();
  c.clip = j.at("clip").get<double>();
  return c;
}

inline json to_json(const Tensor& t) {
  return json{{"shape", {t.rows(), t.cols()}}, {"data", t.values()}};
}

inline Tensor tensor_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw FormatError("checkpoint: tensor shape must have two entries");
  return Tensor(shape[0], shape[1], j.at("data").get<std::vector<double>>());
}

inline json to_json(const MlpParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers)
    layers.push_back(json{{"weight", to_json(l.weight)}, {"bias", to_json(l.bias)}, {"activation", to_string(l.activation)}});
  return layers;
}

inline MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  for (const auto& l : j) {
    const auto act = l.at("activation").get<std::string>();
    if (act != "tanh" && act != "linear") throw FormatError("checkpoint: unknown activation '" + act + "'");
    p.layers.push_back(Layer{tensor_from_json(l.at("weight")), tensor_from_json(l.at("bias")),
                             act == "tanh" ? Activation::tanh : Activation::linear});
  }
  return p;
}

}  // namespace detail

inline std::string checkpoint_to_string(const WiaeModel& model) {
  using detail::json;
  json log = json::array();
  for (const auto& e : model.log)
    log.push_back(json{{"epoch", e.epoch},
                       {"critic_nu", e.critic_nu},
                       {"critic_x", e.critic_x},
                       {"generator", e.generator},
                       {"reconstruction", e.reconstruction}});
  const json doc{{"format_version", kCheckpointVersion},
                 {"config", detail::to_json(model.config)},
                 {"window", {{"m", model.window.m}, {"n", model.window.n}}},
                 {"norm", {{"scale", model.norm.scale}, {"offset", model.norm.offset}}},
                 {"weights",
                  {{"encoder", detail::to_json(model.encoder)},
                   {"decoder", detail::to_json(model.decoder)},
                   {"critic_nu", detail::to_json(model.critic_nu)},
                   {"critic_x", detail::to_json(model.critic_x)}}},
                 {"train_log", log}};
  return doc.dump(1) + "\n";
}

inline WiaeModel checkpoint_from_string(const std::string& text, const std::string& source = "checkpoint") {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(source + ": not a valid checkpoint document (" + e.what() + ")");
  }
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointVersion)
      throw VersionError(source + ": checkpoint format_version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
    WiaeModel model;
    model.config = detail::config_from_json(doc.at("config"));
    model.window = WindowSpec{doc.at("window").at("m").get<std::size_t>(), doc.at("window").at("n").get<std::size_t>()};
    model.norm = Normalization{doc.at("norm").at("scale").get<double>(), doc.at("norm").at("offset").get<double>()};
    const auto& w = doc.at("weights");
    model.encoder = detail::mlp_from_json(w.at("encoder"));
    model.decoder = detail::mlp_from_json(w.at("decoder"));
    model.critic_nu = detail::mlp_from_json(w.at("critic_nu"));
    model.critic_x = detail::mlp_from_json(w.at("critic_x"));
    for (const auto& e : doc.at("train_log"))
      model.log.push_back(EpochLog{e.at("epoch").get<std::size_t>(), e.at("critic_nu").get<double>(),
                                   e.at("critic_x").get<double>(), e.at("generator").get<double>(),
                                   e.at("reconstruction").get<double>()});
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw FormatError(source + ": malformed checkpoint (" + e.what() + ")");
  } catch (const VersionError&) {
    throw;
  } catch (const ContractViolation& e) {
    throw FormatError(source + ": inconsistent checkpoint (" + e.what() + ")");
  }
}

inline void save_checkpoint(const WiaeModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_string(model);
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

inline WiaeModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str(), path);
}

}  // namespace wiae
