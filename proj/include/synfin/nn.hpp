#pragma once

// Small reverse-mode network toolkit: dense layers, GRU stacks, losses and
// Adam. Every layer keeps its gradient next to its value; forward passes
// that need a backward pass record a Tape.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synfin/rng.hpp"
#include "synfin/types.hpp"

namespace synfin::nn {

using Tensor2 = Matrix;
/// Time-major batch of sequences: element t is (batch x features).
using Sequence = std::vector<Tensor2>;

enum class Activation { linear, relu, sigmoid, tanh };

std::string to_string(Activation a);
Activation activation_from_string(std::string_view name);

Tensor2 activate(const Tensor2& pre, Activation a);
/// Multiplies an upstream gradient by the activation derivative expressed in
/// terms of the activation output.
Tensor2 activation_backward(const Tensor2& grad_out, const Tensor2& out, Activation a);

struct Param {
  std::string name;
  Tensor2 value;
  Tensor2 grad;

  Param() = default;
  Param(std::string n, Tensor2 v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor2::Zero(value.rows(), value.cols())) {}
};

using ParamList = std::vector<Param*>;

void zero_grad(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

class DenseLayer {
 public:
  struct Tape {
    Tensor2 input;
    Tensor2 output;
  };

  DenseLayer() = default;
  /// Glorot-uniform weights, zero bias.
  DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng);
  /// weight is (out x in), bias is (1 x out).
  DenseLayer(Tensor2 weight, Tensor2 bias, Activation act);

  Tensor2 forward(const Tensor2& batch) const;
  Tensor2 forward(const Tensor2& batch, Tape& tape) const;
  /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Tensor2 backward(const Tensor2& grad_output, const Tape& tape);

  std::size_t input_size() const { return static_cast<std::size_t>(weight_.value.cols()); }
  std::size_t output_size() const { return static_cast<std::size_t>(weight_.value.rows()); }
  Activation activation() const { return act_; }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }
  void collect(ParamList& out);

 private:
  Param weight_;
  Param bias_;
  Activation act_ = Activation::linear;
};

/// h_t = (1 - z) * c + z * h_{t-1}, with update gate z, reset gate r and
/// candidate c = tanh(W_c [x, r * h_{t-1}] + b_c). Gate matrices are
/// (hidden x (input + hidden)).
class GruCell {
 public:
  struct StepTape {
    Tensor2 xh;   // [x, h_prev]
    Tensor2 xrh;  // [x, r * h_prev]
    Tensor2 h_prev;
    Tensor2 z;
    Tensor2 r;
    Tensor2 c;
  };

  GruCell() = default;
  GruCell(std::size_t input, std::size_t hidden, Rng& rng);

  Tensor2 step(const Tensor2& x, const Tensor2& h_prev) const;
  Tensor2 step(const Tensor2& x, const Tensor2& h_prev, StepTape& tape) const;
  /// Returns dL/dx and writes dL/dh_prev.
  Tensor2 backward_step(const Tensor2& grad_h, const StepTape& tape, Tensor2& grad_h_prev);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }

  Param& update_weight() { return wz_; }
  Param& update_bias() { return bz_; }
  Param& reset_weight() { return wr_; }
  Param& reset_bias() { return br_; }
  Param& candidate_weight() { return wc_; }
  Param& candidate_bias() { return bc_; }
  void collect(ParamList& out);

  friend void to_json(nlohmann::json& j, const GruCell& cell);
  friend void from_json(const nlohmann::json& j, GruCell& cell);

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  Param wz_, bz_, wr_, br_, wc_, bc_;
};

/// Single-sample convenience wrapper around GruCell::step.
Vector gru_step(const GruCell& cell, const Vector& x, const Vector& h_prev);

class GruStack {
 public:
  struct Tape {
    std::vector<std::vector<GruCell::StepTape>> steps;  // [layer][t]
  };

  GruStack() = default;
  GruStack(std::size_t input, std::size_t hidden, std::size_t layers, Rng& rng);

  /// Zero initial state; returns the top layer's hidden states.
  Sequence forward(const Sequence& inputs) const;
  Sequence forward(const Sequence& inputs, Tape& tape) const;
  Sequence backward(const Sequence& grad_outputs, const Tape& tape);

  std::size_t layers() const { return cells_.size(); }
  std::size_t hidden_size() const { return cells_.empty() ? 0 : cells_.front().hidden_size(); }
  std::size_t input_size() const { return cells_.empty() ? 0 : cells_.front().input_size(); }
  GruCell& cell(std::size_t i) { return cells_.at(i); }
  void collect(ParamList& out);

  friend void to_json(nlohmann::json& j, const GruStack& s);
  friend void from_json(const nlohmann::json& j, GruStack& s);

 private:
  std::vector<GruCell> cells_;
};

/// GRU stack followed by a dense head applied at every time step.
class RecurrentNet {
 public:
  struct Tape {
    GruStack::Tape rnn;
    DenseLayer::Tape head;
    std::size_t batch = 0;
  };

  RecurrentNet() = default;
  RecurrentNet(std::size_t input, std::size_t hidden, std::size_t layers, std::size_t output,
               Activation head_activation, Rng& rng);

  Sequence forward(const Sequence& inputs) const;
  Sequence forward(const Sequence& inputs, Tape& tape) const;
  Sequence backward(const Sequence& grad_outputs, const Tape& tape);

  GruStack& rnn() { return rnn_; }
  const GruStack& rnn() const { return rnn_; }
  DenseLayer& head() { return head_; }
  const DenseLayer& head() const { return head_; }
  ParamList params();

  friend void to_json(nlohmann::json& j, const RecurrentNet& n);
  friend void from_json(const nlohmann::json& j, RecurrentNet& n);

 private:
  GruStack rnn_;
  DenseLayer head_;
};

/// Feed-forward chain of dense layers.
class DenseStack {
 public:
  struct Tape {
    std::vector<DenseLayer::Tape> layers;
  };

  DenseStack() = default;
  /// sizes = {in, h1, ..., out}; hidden layers use `hidden`, the last `output`.
  DenseStack(const std::vector<std::size_t>& sizes, Activation hidden, Activation output, Rng& rng);
  explicit DenseStack(std::vector<DenseLayer> layers);

  Tensor2 forward(const Tensor2& batch) const;
  Tensor2 forward(const Tensor2& batch, Tape& tape) const;
  Tensor2 backward(const Tensor2& grad_output, const Tape& tape);

  std::size_t input_size() const { return layers_.front().input_size(); }
  std::size_t output_size() const { return layers_.back().output_size(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  ParamList params();

 private:
  std::vector<DenseLayer> layers_;
};

// Losses. Each returns the scalar and its gradient w.r.t. the prediction.
struct Loss {
  double value = 0.0;
  Tensor2 grad;
};

/// Mean over all elements of (pred - target)^2.
Loss mse_loss(const Tensor2& pred, const Tensor2& target);
/// Binary cross-entropy on logits against a constant label, averaged.
Loss bce_with_logits(const Tensor2& logits, double label);

/// Mean squared error over all steps and elements of two sequences.
double sequence_mse(const Sequence& pred, const Sequence& target, Sequence* grad = nullptr);

/// Row-stacks a sequence into (steps*batch x features) and back.
Tensor2 stack_steps(const Sequence& seq);
Sequence unstack_steps(const Tensor2& stacked, std::size_t batch);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments {
  Tensor2 m;
  Tensor2 v;
};

/// One bias-corrected Adam update; `step` is the 1-based step number.
void adam_update(Tensor2& param, const Tensor2& grad, AdamMoments& moments, std::size_t step,
                 const AdamConfig& config);

/// Adam over a fixed parameter list. Throws std::runtime_error on non-finite gradients.
class Adam {
 public:
  Adam() = default;
  Adam(ParamList params, AdamConfig config);

  void step();
  void zero_grad();
  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParamList params_;
  std::vector<AdamMoments> moments_;
  AdamConfig config_;
  std::size_t step_ = 0;
};

// JSON checkpoint layout: {"weight": {"rows","cols","data"}, ...}.
nlohmann::json tensor_to_json(const Tensor2& t);
Tensor2 tensor_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const DenseLayer& layer);
void from_json(const nlohmann::json& j, DenseLayer& layer);
void to_json(nlohmann::json& j, const DenseStack& stack);
void from_json(const nlohmann::json& j, DenseStack& stack);

}  // namespace synfin::nn
