#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strata/autograd.hpp"
#include "strata/stack.hpp"

namespace strata {

enum class AttentionKind { global, toeplitz };
/// What the decoder receives from its previous step.
enum class InputFeeding { probabilities, none };
/// `single_slice` restarts both GRUs at every slice, so each encoding sees
/// only its own slice. Used for the per-slice baseline.
enum class EncoderContext { bidirectional, single_slice };
enum class DecodeMode { teacher_forcing, free_running };

std::string to_string(AttentionKind kind);
std::string to_string(Boundary boundary);
std::string to_string(InputFeeding feeding);
std::string to_string(EncoderContext context);
AttentionKind parse_attention_kind(std::string_view text);
Boundary parse_boundary(std::string_view text);
InputFeeding parse_input_feeding(std::string_view text);
EncoderContext parse_encoder_context(std::string_view text);

struct ModelConfig {
  AttentionKind attention = AttentionKind::toeplitz;
  int half_width = 1;  // D, Toeplitz only
  std::size_t raw_dim = 8;
  std::size_t feature_dim = 8;
  std::size_t enc_hidden = 8;
  std::size_t dec_hidden = 8;   // global decoder GRU
  std::size_t attn_hidden = 8;  // global attention scoring layer
  Boundary boundary = Boundary::zero_pad;
  InputFeeding input_feeding = InputFeeding::probabilities;
  EncoderContext encoder_context = EncoderContext::bidirectional;

  std::size_t encoding_dim() const noexcept { return 2 * enc_hidden; }
  std::size_t feed_dim() const noexcept {
    return input_feeding == InputFeeding::probabilities ? kNumClasses : 0;
  }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class ParamKind { weight, bias, kernel_logits };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamKind kind;
};

/// Every learnable tensor of a model with this configuration, in a fixed order.
std::vector<ParamSpec> parameter_specs(const ModelConfig& config);

/// Named parameter tensors in insertion order.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::span<Tensor> tensors() noexcept { return tensors_; }
  std::span<const Tensor> tensors() const noexcept { return tensors_; }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

struct Model {
  ModelConfig config;
  ParamStore params;
};

/// Zero-initialized model; see init_params for the trained initialization.
Model make_zero_model(const ModelConfig& config);

// --- graph-level parameter bundles ---------------------------------------

struct GruVars {
  Var Wz, Wr, Wh;  // input weights, F x H
  Var Uz, Ur, Uh;  // recurrent weights, H x H
  Var bz, br, bh;  // 1 x H
};

struct GlobalAttentionVars {
  Var W;  // decoder state -> scoring layer, H_dec x A
  Var U;  // encoding -> scoring layer, E x A
  Var b;  // 1 x A
  Var v;  // A x 1
};

struct ToeplitzDecoderVars {
  Var W_ctx;   // E x 3
  Var W_feed;  // 3 x 3, absent without input feeding
  Var b;       // 1 x 3
};

struct GlobalDecoderVars {
  GlobalAttentionVars attention;
  GruVars gru;  // input is concat(context, previous output)
  Var W_out;    // H_dec x 3
  Var b_out;    // 1 x 3
};

struct ModelVars {
  Var encoder_W, encoder_b;
  GruVars forward, backward;
  Var kernel_logits;
  ToeplitzDecoderVars toeplitz;
  GlobalDecoderVars global;
  std::vector<Var> all;  // in ParamStore order
};

/// Puts the model's parameters on `graph`, as leaves when `trainable`,
/// otherwise as constants (no backward closures are recorded).
ModelVars bind_params(Graph& graph, const Model& model, bool trainable);

/// Wires already-bound variables (in parameter_specs order) into bundles.
ModelVars assemble_vars(const ModelConfig& config, std::span<const Var> params);

// --- layers ---------------------------------------------------------------

/// tanh(raw * W + b), row-wise, for one slice (1 x F_raw) or a whole stack.
Var slice_encoder(const Var& raw, const Var& W, const Var& b);

/// z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
/// h~ = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) * h + z * h~.
Var gru_cell(const Var& x, const Var& h_prev, const GruVars& p);

/// Row t is concat(forward state after slices 0..t, backward state after
/// slices T-1..t). Both directions start from zero.
Var bi_gru_encode(const Var& features, const GruVars& fwd, const GruVars& bwd,
                  EncoderContext context = EncoderContext::bidirectional);

struct AttentionStep {
  Var context;  // 1 x E
  Var weights;  // 1 x T
};

/// Additive scoring: score_j = v . tanh(s_prev W + h_j U + b).
AttentionStep global_attention_step(const Var& encodings, const Var& s_prev,
                                    const GlobalAttentionVars& p);

/// Softmax-parameterized convex kernel of support 2D+1.
struct ToeplitzKernel {
  int half_width = 0;
  Tensor logits;

  static ToeplitzKernel uniform(int half_width);
  Tensor weights() const;
};

/// Context rows c_t = sum_k a[k+D] h_{t+k}: one kernel shared by every slice.
Var toeplitz_attention(const Var& encodings, const Var& kernel_logits, Boundary boundary);

/// T x T map whose row t holds slice t's weights: A[t][j] = a[j-t+D] inside
/// the band and 0 outside. renormalize rescales each row to sum to one.
Tensor build_attention_map(std::span<const double> weights, std::size_t length,
                           Boundary boundary);
Tensor build_attention_map(const ToeplitzKernel& kernel, std::size_t length, Boundary boundary);

struct Decoded {
  Var logits;             // T x 3
  Tensor attention_map;   // T x T, empty for the Toeplitz decoder
};

/// GRU decoder over global-attention contexts. `teacher` labels, when
/// non-empty, replace the fed-back previous output with the one-hot truth.
Decoded decode_global(const Var& encodings, const GlobalDecoderVars& p, InputFeeding feeding,
                      std::span<const int> teacher = {});

/// Fully connected decoder: logits_t = c_t W_ctx + y_{t-1} W_feed + b.
Var decode_toeplitz(const Var& context, const ToeplitzDecoderVars& p, InputFeeding feeding,
                    std::span<const int> teacher = {});

struct ForwardResult {
  Var logits;
  Tensor attention_map;
  ModelVars vars;
};

ForwardResult forward(const Model& model, Graph& graph, const StackSample& stack,
                      DecodeMode mode, bool trainable = false);
/// Same assembly over variables bound by the caller.
ForwardResult forward(const ModelConfig& config, const ModelVars& vars, const StackSample& stack,
                      DecodeMode mode);

/// Per-row argmax; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

std::vector<int> predict(const Model& model, const StackSample& stack);

/// The attention map of a free-running pass over `stack`.
Tensor attention_map(const Model& model, const StackSample& stack);

}  // namespace strata
