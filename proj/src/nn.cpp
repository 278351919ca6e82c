#include "strata/nn.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "strata/error.hpp"

namespace strata {

std::string to_string(AttentionKind kind) {
  return kind == AttentionKind::global ? "global" : "toeplitz";
}

std::string to_string(Boundary boundary) {
  return boundary == Boundary::zero_pad ? "zero_pad" : "renormalize";
}

std::string to_string(InputFeeding feeding) {
  return feeding == InputFeeding::probabilities ? "probabilities" : "none";
}

std::string to_string(EncoderContext context) {
  return context == EncoderContext::bidirectional ? "bidirectional" : "single_slice";
}

AttentionKind parse_attention_kind(std::string_view text) {
  if (text == "global") return AttentionKind::global;
  if (text == "toeplitz") return AttentionKind::toeplitz;
  throw ValidationError("unknown attention kind '" + std::string(text) + "'");
}

Boundary parse_boundary(std::string_view text) {
  if (text == "zero_pad") return Boundary::zero_pad;
  if (text == "renormalize") return Boundary::renormalize;
  throw ValidationError("unknown boundary mode '" + std::string(text) + "'");
}

InputFeeding parse_input_feeding(std::string_view text) {
  if (text == "probabilities") return InputFeeding::probabilities;
  if (text == "none") return InputFeeding::none;
  throw ValidationError("unknown input feeding '" + std::string(text) + "'");
}

EncoderContext parse_encoder_context(std::string_view text) {
  if (text == "bidirectional") return EncoderContext::bidirectional;
  if (text == "single_slice") return EncoderContext::single_slice;
  throw ValidationError("unknown encoder context '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (half_width < 0) throw ValidationError("D must be non-negative");
  if (raw_dim == 0 || feature_dim == 0 || enc_hidden == 0 || dec_hidden == 0 ||
      attn_hidden == 0) {
    throw ValidationError("model dimensions must be positive");
  }
}

namespace {

void add_gru_specs(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t input,
                   std::size_t hidden) {
  for (const char* gate : {"z", "r", "h"})
    out.push_back({prefix + ".W" + gate, {input, hidden}, ParamKind::weight});
  for (const char* gate : {"z", "r", "h"})
    out.push_back({prefix + ".U" + gate, {hidden, hidden}, ParamKind::weight});
  for (const char* gate : {"z", "r", "h"})
    out.push_back({prefix + ".b" + gate, {1, hidden}, ParamKind::bias});
}

}  // namespace

std::vector<ParamSpec> parameter_specs(const ModelConfig& config) {
  config.validate();
  const auto E = config.encoding_dim();
  const auto feed = config.feed_dim();
  std::vector<ParamSpec> out;
  out.push_back({"encoder.W", {config.raw_dim, config.feature_dim}, ParamKind::weight});
  out.push_back({"encoder.b", {1, config.feature_dim}, ParamKind::bias});
  add_gru_specs(out, "gru_fwd", config.feature_dim, config.enc_hidden);
  add_gru_specs(out, "gru_bwd", config.feature_dim, config.enc_hidden);
  if (config.attention == AttentionKind::toeplitz) {
    const auto support = static_cast<std::size_t>(2 * config.half_width + 1);
    out.push_back({"kernel.logits", {1, support}, ParamKind::kernel_logits});
    out.push_back({"decoder.W_ctx", {E, kNumClasses}, ParamKind::weight});
    if (feed) out.push_back({"decoder.W_feed", {feed, kNumClasses}, ParamKind::weight});
    out.push_back({"decoder.b", {1, kNumClasses}, ParamKind::bias});
  } else {
    out.push_back({"attention.W", {config.dec_hidden, config.attn_hidden}, ParamKind::weight});
    out.push_back({"attention.U", {E, config.attn_hidden}, ParamKind::weight});
    out.push_back({"attention.b", {1, config.attn_hidden}, ParamKind::bias});
    out.push_back({"attention.v", {config.attn_hidden, 1}, ParamKind::weight});
    add_gru_specs(out, "decoder_gru", E + feed, config.dec_hidden);
    out.push_back({"decoder.W_out", {config.dec_hidden, kNumClasses}, ParamKind::weight});
    out.push_back({"decoder.b_out", {1, kNumClasses}, ParamKind::bias});
  }
  return out;
}

void ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::size_t ParamStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return names_.size();
}

bool ParamStore::contains(std::string_view name) const { return index_of(name) < names_.size(); }

const Tensor& ParamStore::get(std::string_view name) const {
  const auto i = index_of(name);
  if (i == names_.size()) throw ValidationError("no parameter named '" + std::string(name) + "'");
  return tensors_[i];
}

Tensor& ParamStore::get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

Model make_zero_model(const ModelConfig& config) {
  Model model{config, {}};
  for (auto& spec : parameter_specs(config)) model.params.add(spec.name, Tensor(spec.shape, 0.0));
  return model;
}

ModelVars bind_params(Graph& graph, const Model& model, bool trainable) {
  const auto specs = parameter_specs(model.config);
  if (specs.size() != model.params.size()) {
    throw ConfigMismatchError("parameter set does not match the model configuration");
  }
  std::vector<Var> bound;
  bound.reserve(specs.size());
  for (const auto& spec : specs) {
    const auto& value = model.params.get(spec.name);
    if (value.shape() != spec.shape) {
      throw ConfigMismatchError("parameter '" + spec.name + "' has shape " +
                                shape_string(value.shape()) + ", expected " +
                                shape_string(spec.shape));
    }
    bound.push_back(trainable ? graph.leaf(value) : graph.constant(value));
  }
  return assemble_vars(model.config, bound);
}

ModelVars assemble_vars(const ModelConfig& config, std::span<const Var> params) {
  const auto specs = parameter_specs(config);
  if (specs.size() != params.size()) {
    throw ConfigMismatchError("expected " + std::to_string(specs.size()) + " parameters, got " +
                              std::to_string(params.size()));
  }
  ModelVars vars;
  vars.all.assign(params.begin(), params.end());
  auto find = [&](std::string_view name) -> Var {
    for (std::size_t i = 0; i < specs.size(); ++i)
      if (specs[i].name == name) return vars.all[i];
    return {};
  };
  auto gru = [&](const std::string& prefix) {
    return GruVars{find(prefix + ".Wz"), find(prefix + ".Wr"), find(prefix + ".Wh"),
                   find(prefix + ".Uz"), find(prefix + ".Ur"), find(prefix + ".Uh"),
                   find(prefix + ".bz"), find(prefix + ".br"), find(prefix + ".bh")};
  };
  vars.encoder_W = find("encoder.W");
  vars.encoder_b = find("encoder.b");
  vars.forward = gru("gru_fwd");
  vars.backward = gru("gru_bwd");
  if (config.attention == AttentionKind::toeplitz) {
    vars.kernel_logits = find("kernel.logits");
    vars.toeplitz = {find("decoder.W_ctx"), find("decoder.W_feed"), find("decoder.b")};
  } else {
    vars.global.attention = {find("attention.W"), find("attention.U"), find("attention.b"),
                             find("attention.v")};
    vars.global.gru = gru("decoder_gru");
    vars.global.W_out = find("decoder.W_out");
    vars.global.b_out = find("decoder.b_out");
  }
  return vars;
}

Var slice_encoder(const Var& raw, const Var& W, const Var& b) {
  return tanh(add(matmul(raw, W), b));
}

namespace {

struct GateInputs {
  Var z, r, h;  // x W + b for each gate
};

GateInputs project_inputs(const Var& x, const GruVars& p) {
  return {add(matmul(x, p.Wz), p.bz), add(matmul(x, p.Wr), p.br), add(matmul(x, p.Wh), p.bh)};
}

Var gru_update(const GateInputs& in, const Var& h_prev, const GruVars& p) {
  const Var z = sigmoid(add(in.z, matmul(h_prev, p.Uz)));
  const Var r = sigmoid(add(in.r, matmul(h_prev, p.Ur)));
  const Var candidate = tanh(add(in.h, matmul(hadamard(r, h_prev), p.Uh)));
  return add(hadamard(one_minus(z), h_prev), hadamard(z, candidate));
}

GateInputs row_of(const GateInputs& all, std::size_t t) {
  return {slice_rows(all.z, t, t + 1), slice_rows(all.r, t, t + 1), slice_rows(all.h, t, t + 1)};
}

Var one_hot_row(Graph& graph, int label) {
  Tensor row = Tensor::zeros(1, kNumClasses);
  row[static_cast<std::size_t>(label)] = 1.0;
  return graph.constant(std::move(row));
}

Var uniform_row(Graph& graph) {
  return graph.constant(Tensor({1, kNumClasses}, 1.0 / static_cast<double>(kNumClasses)));
}

void check_teacher(std::span<const int> teacher, std::size_t length) {
  if (!teacher.empty() && teacher.size() != length) {
    throw DimensionError("teacher labels: " + std::to_string(teacher.size()) + " for " +
                         std::to_string(length) + " slices");
  }
}

}  // namespace

Var gru_cell(const Var& x, const Var& h_prev, const GruVars& p) {
  if (h_prev.cols() != p.Uz.rows() || x.cols() != p.Wz.rows()) {
    throw DimensionError("gru_cell: input " + shape_string(x.shape()) + " / state " +
                         shape_string(h_prev.shape()) + " do not fit the parameters");
  }
  return gru_update(project_inputs(x, p), h_prev, p);
}

Var bi_gru_encode(const Var& features, const GruVars& fwd, const GruVars& bwd,
                  EncoderContext context) {
  const auto T = features.rows();
  if (T == 0) throw ValidationError("bi_gru_encode: empty sequence");
  if (features.cols() != fwd.Wz.rows() || features.cols() != bwd.Wz.rows()) {
    throw DimensionError("bi_gru_encode: feature width does not match the GRU input size");
  }
  Graph& graph = *features.graph();
  const auto H_f = fwd.Uz.rows(), H_b = bwd.Uz.rows();
  const GateInputs xf = project_inputs(features, fwd);
  const GateInputs xb = project_inputs(features, bwd);

  if (context == EncoderContext::single_slice) {
    // Every slice starts from a zero state, so all rows update at once.
    const Var hf = gru_update(xf, graph.constant(Tensor::zeros(T, H_f)), fwd);
    const Var hb = gru_update(xb, graph.constant(Tensor::zeros(T, H_b)), bwd);
    return concat_cols(hf, hb);
  }

  std::vector<Var> forward_states(T), backward_states(T);
  Var h = graph.constant(Tensor::zeros(1, H_f));
  for (std::size_t t = 0; t < T; ++t) {
    h = gru_update(row_of(xf, t), h, fwd);
    forward_states[t] = h;
  }
  h = graph.constant(Tensor::zeros(1, H_b));
  for (std::size_t t = T; t-- > 0;) {
    h = gru_update(row_of(xb, t), h, bwd);
    backward_states[t] = h;
  }
  return concat_cols(concat_rows(forward_states), concat_rows(backward_states));
}

namespace {

AttentionStep attend(const Var& encodings, const Var& keys, const Var& s_prev,
                     const GlobalAttentionVars& p) {
  const Var query = add(matmul(s_prev, p.W), p.b);
  const Var hidden = tanh(add(keys, query));
  const Var scores = reshape(matmul(hidden, p.v), {1, encodings.rows()});
  const Var weights = softmax(scores);
  return {matmul(weights, encodings), weights};
}

}  // namespace

AttentionStep global_attention_step(const Var& encodings, const Var& s_prev,
                                    const GlobalAttentionVars& p) {
  if (s_prev.cols() != p.W.rows() || encodings.cols() != p.U.rows()) {
    throw DimensionError("global_attention_step: state or encoding width mismatch");
  }
  return attend(encodings, matmul(encodings, p.U), s_prev, p);
}

ToeplitzKernel ToeplitzKernel::uniform(int half_width) {
  if (half_width < 0) throw ValidationError("D must be non-negative");
  return {half_width, Tensor({1, static_cast<std::size_t>(2 * half_width + 1)}, 0.0)};
}

Tensor ToeplitzKernel::weights() const { return softmax_values(logits.data()); }

Var toeplitz_attention(const Var& encodings, const Var& kernel_logits, Boundary boundary) {
  return conv1d_band(encodings, softmax(kernel_logits), boundary);
}

Tensor build_attention_map(std::span<const double> weights, std::size_t length,
                           Boundary boundary) {
  if (length == 0) throw ValidationError("build_attention_map: T must be positive");
  if (weights.size() % 2 == 0) throw DimensionError("kernel length must be odd (2D+1)");
  const auto half = static_cast<std::ptrdiff_t>(weights.size() / 2);
  const auto T = static_cast<std::ptrdiff_t>(length);
  Tensor map = Tensor::zeros(length, length);
  for (std::ptrdiff_t t = 0; t < T; ++t) {
    double total = 0.0;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, t - half);
         j <= std::min(T - 1, t + half); ++j) {
      const double w = weights[static_cast<std::size_t>(j - t + half)];
      map.at(static_cast<std::size_t>(t), static_cast<std::size_t>(j)) = w;
      total += w;
    }
    if (boundary == Boundary::renormalize) {
      for (std::size_t j = 0; j < length; ++j) map.at(static_cast<std::size_t>(t), j) /= total;
    }
  }
  return map;
}

Tensor build_attention_map(const ToeplitzKernel& kernel, std::size_t length, Boundary boundary) {
  return build_attention_map(kernel.weights().data(), length, boundary);
}

Decoded decode_global(const Var& encodings, const GlobalDecoderVars& p, InputFeeding feeding,
                      std::span<const int> teacher) {
  const auto T = encodings.rows();
  check_teacher(teacher, T);
  Graph& graph = *encodings.graph();
  const Var keys = matmul(encodings, p.attention.U);
  Var state = graph.constant(Tensor::zeros(1, p.gru.Uz.rows()));
  Var previous = uniform_row(graph);
  Tensor map = Tensor::zeros(T, T);
  std::vector<Var> rows;
  rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const AttentionStep step = attend(encodings, keys, state, p.attention);
    for (std::size_t j = 0; j < T; ++j) map.at(t, j) = step.weights.value()[j];
    const Var input =
        feeding == InputFeeding::probabilities ? concat_cols(step.context, previous) : step.context;
    state = gru_cell(input, state, p.gru);
    const Var logits = add(matmul(state, p.W_out), p.b_out);
    rows.push_back(logits);
    if (feeding == InputFeeding::probabilities) {
      previous = teacher.empty() ? softmax(logits) : one_hot_row(graph, teacher[t]);
    }
  }
  return {concat_rows(rows), std::move(map)};
}

Var decode_toeplitz(const Var& context, const ToeplitzDecoderVars& p, InputFeeding feeding,
                    std::span<const int> teacher) {
  const auto T = context.rows();
  check_teacher(teacher, T);
  const Var base = add(matmul(context, p.W_ctx), p.b);
  if (feeding == InputFeeding::none) return base;

  Graph& graph = *context.graph();
  if (!teacher.empty()) {
    // Previous outputs are known up front, so the whole stack is one product.
    Tensor fed = Tensor::zeros(T, kNumClasses);
    for (std::size_t c = 0; c < kNumClasses; ++c) fed.at(0, c) = 1.0 / kNumClasses;
    for (std::size_t t = 1; t < T; ++t) fed.at(t, static_cast<std::size_t>(teacher[t - 1])) = 1.0;
    return add(base, matmul(graph.constant(std::move(fed)), p.W_feed));
  }

  Var previous = uniform_row(graph);
  std::vector<Var> rows;
  rows.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Var logits = add(slice_rows(base, t, t + 1), matmul(previous, p.W_feed));
    rows.push_back(logits);
    previous = softmax(logits);
  }
  return concat_rows(rows);
}

ForwardResult forward(const Model& model, Graph& graph, const StackSample& stack, DecodeMode mode,
                      bool trainable) {
  return forward(model.config, bind_params(graph, model, trainable), stack, mode);
}

ForwardResult forward(const ModelConfig& cfg, const ModelVars& vars, const StackSample& stack,
                      DecodeMode mode) {
  const auto T = stack.length();
  if (T == 0) throw ValidationError("forward: empty stack");
  if (stack.features.rows() != T || stack.features.cols() != cfg.raw_dim) {
    throw DimensionError("forward: stack '" + stack.id + "' has features " +
                         shape_string(stack.features.shape()) + ", expected " +
                         std::to_string(T) + "x" + std::to_string(cfg.raw_dim));
  }
  if (vars.all.empty()) throw UsageError("forward: unbound parameters");
  Graph& graph = *vars.all.front().graph();
  ForwardResult result;
  result.vars = vars;
  const std::span<const int> teacher =
      mode == DecodeMode::teacher_forcing ? std::span<const int>(stack.labels)
                                          : std::span<const int>();

  const Var raw = graph.constant(stack.features);
  const Var features = slice_encoder(raw, vars.encoder_W, vars.encoder_b);
  const Var encodings = bi_gru_encode(features, vars.forward, vars.backward, cfg.encoder_context);

  if (cfg.attention == AttentionKind::toeplitz) {
    const Var context = toeplitz_attention(encodings, vars.kernel_logits, cfg.boundary);
    result.logits = decode_toeplitz(context, vars.toeplitz, cfg.input_feeding, teacher);
    result.attention_map =
        build_attention_map(softmax_values(vars.kernel_logits.value().data()).data(), T,
                            cfg.boundary);
  } else {
    auto decoded = decode_global(encodings, vars.global, cfg.input_feeding, teacher);
    result.logits = decoded.logits;
    result.attention_map = std::move(decoded.attention_map);
  }
  return result;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(t, c) > logits.at(t, best)) best = c;
    out[t] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Model& model, const StackSample& stack) {
  Graph graph;
  return argmax_rows(forward(model, graph, stack, DecodeMode::free_running).logits.value());
}

Tensor attention_map(const Model& model, const StackSample& stack) {
  Graph graph;
  return forward(model, graph, stack, DecodeMode::free_running).attention_map;
}

}  // namespace strata
