#pragma once

// Fully connected networks for the encoder, decoder and the two critics.
//
// Causal convolution is realized as an MLP applied to a sliding window of the
// m most recent samples, newest first: the window for time t is
// (x_t, x_{t-1}, ..., x_{t-m+1}). Nothing after t can reach the output for t.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wiae/autodiff.hpp"
#include "wiae/error.hpp"
#include "wiae/rng.hpp"

namespace wiae {

enum class Activation { tanh, linear };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "linear"; }

struct Layer {
  Tensor weight;  // out x in
  Tensor bias;    // 1 x out
  Activation activation = Activation::tanh;
};

struct MlpParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  void validate() const {
    detail::require(!layers.empty(), "MlpParams: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      detail::require(l.bias.rows() == 1 && l.bias.cols() == l.weight.rows(),
                      "MlpParams: bias of layer " + std::to_string(i) + " does not match weight");
      if (i > 0)
        detail::require(l.weight.cols() == layers[i - 1].weight.rows(),
                        "MlpParams: layer " + std::to_string(i) + " does not chain");
    }
  }

  // Weight, bias, weight, bias, ... in layer order.
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto &x = a.layers[i], &y = b.layers[i];
      if (!(x.weight == y.weight) || !(x.bias == y.bias) || x.activation != y.activation) return false;
    }
    return true;
  }
};

struct WindowSpec {
  std::size_t m = 20;  // encoder/decoder memory
  std::size_t n = 50;  // critic block length

  void validate() const { detail::require(m >= 1 && n >= 1, "WindowSpec: m and n must be >= 1"); }
  // Segment length that yields an n-block of innovations and an n-block of
  // reconstructions.
  std::size_t segment_length() const { return 2 * m + n - 2; }
};

inline constexpr std::size_t kDefaultHidden[] = {100, 50, 25};

// Hidden layers use tanh; the output layer uses `output`. Weights are drawn
// from U(-r, r) with r = sqrt(6 / (fan_in + fan_out)); biases start at zero.
inline MlpParams make_mlp(std::size_t input, std::span<const std::size_t> hidden, Activation output, Rng& rng) {
  detail::require(input >= 1, "make_mlp: input dimension must be >= 1");
  MlpParams p;
  std::size_t fan_in = input;
  auto add_layer = [&](std::size_t fan_out, Activation act) {
    const double r = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-r, r);
    std::vector<double> w(fan_out * fan_in);
    for (auto& v : w) v = dist(rng);
    p.layers.push_back(Layer{Tensor(fan_out, fan_in, std::move(w)), Tensor(1, fan_out), act});
    fan_in = fan_out;
  };
  for (auto h : hidden) add_layer(h, Activation::tanh);
  add_layer(1, output);
  return p;
}

inline MlpParams make_encoder(std::size_t m, Rng& rng) { return make_mlp(m, kDefaultHidden, Activation::tanh, rng); }
inline MlpParams make_decoder(std::size_t m, Rng& rng) { return make_mlp(m, kDefaultHidden, Activation::tanh, rng); }
inline MlpParams make_critic(std::size_t n, Rng& rng) { return make_mlp(n, kDefaultHidden, Activation::linear, rng); }

// Same architecture with every weight and bias set to zero.
inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z = p;
  for (auto* t : z.parameters())
    for (auto& v : t->data()) v = 0.0;
  return z;
}

// Row-by-row evaluation. Each output row depends only on its input row, bit
// for bit, whatever else is in the batch.
inline Tensor forward(const MlpParams& net, const Tensor& input) {
  detail::require(input.cols() == net.input_dim(),
                  "forward: input width " + std::to_string(input.cols()) + " != " + std::to_string(net.input_dim()));
  Tensor out(input.rows(), net.output_dim());
  std::vector<Eigen::VectorXd> act(net.layers.size() + 1);
  for (std::size_t r = 0; r < input.rows(); ++r) {
    act[0] = Eigen::Map<const Eigen::VectorXd>(input.row_span(r).data(), Eigen::Index(input.cols()));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const auto& layer = net.layers[l];
      act[l + 1].noalias() = detail::view(layer.weight) * act[l];
      act[l + 1] += detail::view(layer.bias).row(0).transpose();
      if (layer.activation == Activation::tanh) {
        auto arr = act[l + 1].array();
        detail::tanh_inplace(arr);
      }
    }
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = act.back()[Eigen::Index(c)];
  }
  return out;
}

// Whole-batch evaluation through matrix products; faster than forward() but
// rounding of a row may depend on the batch shape.
inline Tensor forward_batch(const MlpParams& net, const Tensor& input) {
  detail::require(input.cols() == net.input_dim(), "forward_batch: input width mismatch");
  detail::RowMat a = detail::view(input);
  for (const auto& layer : net.layers) {
    detail::RowMat z = a * detail::view(layer.weight).transpose();
    z.rowwise() += detail::view(layer.bias).row(0);
    if (layer.activation == Activation::tanh) {
      auto arr = z.array();
      detail::tanh_inplace(arr);
    }
    a = std::move(z);
  }
  return Tensor(std::size_t(a.rows()), std::size_t(a.cols()),
                std::vector<double>(a.data(), a.data() + a.size()));
}

// Network weights bound into a graph.
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
  std::vector<Activation> activations;
};

// trainable=false records the weights as constants: gradients flow through
// the network to its input but not into the weights.
inline MlpVars bind(Graph& g, const MlpParams& net, bool trainable) {
  MlpVars v;
  for (const auto& l : net.layers) {
    v.weights.push_back(trainable ? g.parameter(l.weight) : g.constant(l.weight));
    v.biases.push_back(trainable ? g.parameter(l.bias) : g.constant(l.bias));
    v.activations.push_back(l.activation);
  }
  return v;
}

// Gradients of the bound weights, in MlpParams::parameters() order.
inline std::vector<Tensor> collect(const Gradients& grads, const MlpVars& v) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < v.weights.size(); ++i) {
    out.push_back(grads[v.weights[i]]);
    out.push_back(grads[v.biases[i]]);
  }
  return out;
}

inline Var forward(Graph& g, const MlpVars& net, Var x) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    x = g.affine(x, net.weights[l], net.biases[l]);
    if (net.activations[l] == Activation::tanh) x = g.tanh(x);
  }
  return x;
}

// Per-row gradient of a scalar-output network with respect to its input,
// expressed with primitive ops so that it can itself be differentiated with
// respect to the weights by an ordinary backward sweep.
inline Var input_gradient(Graph& g, const MlpVars& net, Var x) {
  const std::size_t rows = g.value(x).rows();
  detail::require(g.value(net.weights.back()).rows() == 1, "input_gradient: network output must be scalar");
  std::vector<Var> post;  // activation outputs of each layer
  Var a = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    a = g.affine(a, net.weights[l], net.biases[l]);
    if (net.activations[l] == Activation::tanh) a = g.tanh(a);
    post.push_back(a);
  }
  Var delta = g.constant(Tensor(rows, 1, 1.0));
  for (std::size_t l = net.weights.size(); l-- > 0;) {
    if (net.activations[l] == Activation::tanh) {
      const Var deriv = g.scale_shift(g.mul(post[l], post[l]), -1.0, 1.0);
      delta = g.mul(delta, deriv);
    }
    delta = g.matmul(delta, net.weights[l]);
  }
  return delta;
}

// Rows of the sliding windows over series, newest sample first. Row k holds
// the window ending at index k + m - 1.
inline Tensor sliding_windows(std::span<const double> series, std::size_t m) {
  detail::require(m >= 1, "sliding_windows: m must be >= 1");
  detail::require(series.size() >= m, "sliding_windows: series shorter than window");
  const std::size_t rows = series.size() - m + 1;
  std::vector<double> data(rows * m);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < m; ++j) data[r * m + j] = series[r + m - 1 - j];
  return Tensor(rows, m, std::move(data));
}

inline double apply_scalar(const MlpParams& net, std::span<const double> input, const char* what) {
  detail::require(input.size() == net.input_dim(), std::string(what) + ": expected length " +
                                                       std::to_string(net.input_dim()) + ", got " +
                                                       std::to_string(input.size()));
  return forward(net, Tensor(1, input.size(), std::vector<double>(input.begin(), input.end())))[0];
}

// window = (x_t, ..., x_{t-m+1}).
inline double encode_window(const MlpParams& enc, std::span<const double> window) {
  return apply_scalar(enc, window, "encode_window");
}

// window = (nu_t, ..., nu_{t-m+1}); result is in the normalized domain.
inline double decode_window(const MlpParams& dec, std::span<const double> window) {
  return apply_scalar(dec, window, "decode_window");
}

// Encodes every window of a segment in time order: output[i] is the
// innovation at segment index m - 1 + i.
inline std::vector<double> encode_series(const MlpParams& enc, std::span<const double> series) {
  const Tensor out = forward(enc, sliding_windows(series, enc.input_dim()));
  return out.values();
}

inline std::vector<double> encode_block(const MlpParams& enc, std::span<const double> segment, std::size_t n) {
  const std::size_t m = enc.input_dim();
  detail::require(segment.size() == m + n - 1, "encode_block: segment length must be m + n - 1 = " +
                                                   std::to_string(m + n - 1) + ", got " +
                                                   std::to_string(segment.size()));
  return encode_series(enc, segment);
}

// Decodes an innovation sequence; output[i] reconstructs index m - 1 + i.
inline std::vector<double> decode_series(const MlpParams& dec, std::span<const double> innovations) {
  const Tensor out = forward(dec, sliding_windows(innovations, dec.input_dim()));
  return out.values();
}

inline double critic_score(const MlpParams& critic, std::span<const double> block) {
  return apply_scalar(critic, block, "critic_score");
}

}  // namespace wiae
