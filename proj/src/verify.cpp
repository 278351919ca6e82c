#include "strata/verify.hpp"

#include <functional>
#include <utility>

#include "strata/nn.hpp"
#include "strata/rng.hpp"

namespace strata {

namespace {

constexpr std::size_t kT = 5;
constexpr std::size_t kF = 3;
constexpr std::size_t kH = 4;
constexpr std::size_t kE = 2 * kH;
constexpr std::size_t kA = 4;

struct Case {
  ScalarFn fn;
  std::vector<Tensor> params;
};

using CaseBuilder = std::function<Case(Rng&)>;

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double sigma = 0.5) {
  Tensor t = Tensor::zeros(rows, cols);
  for (double& x : t.data()) x = sigma * rng.normal();
  return t;
}

std::vector<int> random_labels(Rng& rng, std::size_t n) {
  std::vector<int> labels(n);
  for (int& y : labels) y = static_cast<int>(rng.uniform_int(0, kNumClasses - 1));
  return labels;
}

// sum(out * R) for a fixed random R, so every output entry gets a distinct weight.
Var project(Graph& graph, const Var& out, const Tensor& weights) {
  return sum(hadamard(out, graph.constant(weights)));
}

void push_gru(std::vector<Tensor>& params, Rng& rng, std::size_t input, std::size_t hidden) {
  for (int i = 0; i < 3; ++i) params.push_back(random_tensor(rng, input, hidden));
  for (int i = 0; i < 3; ++i) params.push_back(random_tensor(rng, hidden, hidden));
  for (int i = 0; i < 3; ++i) params.push_back(random_tensor(rng, 1, hidden));
}

GruVars gru_at(std::span<const Var> p, std::size_t at) {
  return {p[at], p[at + 1], p[at + 2], p[at + 3], p[at + 4],
          p[at + 5], p[at + 6], p[at + 7], p[at + 8]};
}

Case conv_case(Rng& rng, Boundary boundary) {
  Tensor R = random_tensor(rng, 7, 3);
  return {[R, boundary](Graph& g, std::span<const Var> p) {
            return project(g, conv1d_band(p[0], softmax(p[1]), boundary), R);
          },
          {random_tensor(rng, 7, 3), random_tensor(rng, 1, 5)}};
}

ModelConfig small_config(AttentionKind kind, EncoderContext context = EncoderContext::bidirectional) {
  ModelConfig cfg;
  cfg.attention = kind;
  cfg.half_width = 1;
  cfg.raw_dim = kF;
  cfg.feature_dim = kF;
  cfg.enc_hidden = kH;
  cfg.dec_hidden = kH;
  cfg.attn_hidden = kA;
  cfg.encoder_context = context;
  return cfg;
}

Case model_case(Rng& rng, const ModelConfig& cfg, DecodeMode mode) {
  StackSample stack{"gradcheck", random_tensor(rng, kT, kF, 1.0), random_labels(rng, kT)};
  std::vector<Tensor> params;
  for (const auto& spec : parameter_specs(cfg)) {
    params.push_back(random_tensor(rng, spec.shape.size() == 1 ? 1 : spec.shape[0],
                                   spec.shape.back()));
  }
  return {[cfg, stack, mode](Graph&, std::span<const Var> p) {
            const ModelVars vars = assemble_vars(cfg, p);
            return cross_entropy(forward(cfg, vars, stack, mode).logits, stack.labels);
          },
          std::move(params)};
}

const std::vector<std::pair<std::string, CaseBuilder>>& registry() {
  static const std::vector<std::pair<std::string, CaseBuilder>> cases = {
      {"matmul",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, 4, 3);
         return {[R](Graph& g, std::span<const Var> p) { return project(g, matmul(p[0], p[1]), R); },
                 {random_tensor(rng, 4, 5), random_tensor(rng, 5, 3)}};
       }},
      {"elementwise",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, 4, 3);
         return {[R](Graph& g, std::span<const Var> p) {
                   const Var a = sigmoid(add(p[0], p[1]));
                   const Var b = scale(one_minus(p[2]), 0.7);
                   return project(g, tanh(sub(hadamard(a, b), p[0])), R);
                 },
                 {random_tensor(rng, 4, 3), random_tensor(rng, 1, 3), random_tensor(rng, 4, 3)}};
       }},
      {"concat_slice",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, 4, 3);
         return {[R](Graph& g, std::span<const Var> p) {
                   const Var rows = slice_rows(concat_rows(p[0], p[1]), 1, 4);
                   const Var cols = concat_cols(slice_cols(rows, 0, 2), slice_cols(rows, 1, 3));
                   return project(g, reshape(cols, {4, 3}), R);
                 },
                 {random_tensor(rng, 2, 3), random_tensor(rng, 3, 3)}};
       }},
      {"softmax",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, 1, 6);
         return {[R](Graph& g, std::span<const Var> p) { return project(g, softmax(p[0]), R); },
                 {random_tensor(rng, 1, 6)}};
       }},
      {"conv1d_band_zero_pad", [](Rng& rng) { return conv_case(rng, Boundary::zero_pad); }},
      {"conv1d_band_renormalize", [](Rng& rng) { return conv_case(rng, Boundary::renormalize); }},
      {"cross_entropy",
       [](Rng& rng) -> Case {
         auto labels = random_labels(rng, kT);
         return {[labels](Graph&, std::span<const Var> p) { return cross_entropy(p[0], labels); },
                 {random_tensor(rng, kT, kNumClasses)}};
       }},
      {"slice_encoder",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, kT, kF);
         return {[R](Graph& g, std::span<const Var> p) {
                   return project(g, slice_encoder(p[0], p[1], p[2]), R);
                 },
                 {random_tensor(rng, kT, kF, 1.0), random_tensor(rng, kF, kF),
                  random_tensor(rng, 1, kF)}};
       }},
      {"gru_cell",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, 1, kH);
         std::vector<Tensor> params{random_tensor(rng, 1, kF), random_tensor(rng, 1, kH)};
         push_gru(params, rng, kF, kH);
         return {[R](Graph& g, std::span<const Var> p) {
                   return project(g, gru_cell(p[0], p[1], gru_at(p, 2)), R);
                 },
                 std::move(params)};
       }},
      {"bi_gru_encode",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, kT, kE);
         std::vector<Tensor> params{random_tensor(rng, kT, kF, 1.0)};
         push_gru(params, rng, kF, kH);
         push_gru(params, rng, kF, kH);
         return {[R](Graph& g, std::span<const Var> p) {
                   return project(g, bi_gru_encode(p[0], gru_at(p, 1), gru_at(p, 10)), R);
                 },
                 std::move(params)};
       }},
      {"global_attention_step",
       [](Rng& rng) -> Case {
         Tensor Rc = random_tensor(rng, 1, kE);
         Tensor Rw = random_tensor(rng, 1, kT);
         return {[Rc, Rw](Graph& g, std::span<const Var> p) {
                   const auto step = global_attention_step(p[0], p[1], {p[2], p[3], p[4], p[5]});
                   return add(project(g, step.context, Rc), project(g, step.weights, Rw));
                 },
                 {random_tensor(rng, kT, kE), random_tensor(rng, 1, kH), random_tensor(rng, kH, kA),
                  random_tensor(rng, kE, kA), random_tensor(rng, 1, kA),
                  random_tensor(rng, kA, 1)}};
       }},
      {"toeplitz_attention",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, kT, kE);
         return {[R](Graph& g, std::span<const Var> p) {
                   return add(project(g, toeplitz_attention(p[0], p[1], Boundary::zero_pad), R),
                              project(g, toeplitz_attention(p[0], p[1], Boundary::renormalize), R));
                 },
                 {random_tensor(rng, kT, kE), random_tensor(rng, 1, 3)}};
       }},
      {"decode_global",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, kT, kNumClasses);
         std::vector<Tensor> params{random_tensor(rng, kT, kE), random_tensor(rng, kH, kA),
                                    random_tensor(rng, kE, kA), random_tensor(rng, 1, kA),
                                    random_tensor(rng, kA, 1)};
         push_gru(params, rng, kE + kNumClasses, kH);
         params.push_back(random_tensor(rng, kH, kNumClasses));
         params.push_back(random_tensor(rng, 1, kNumClasses));
         return {[R](Graph& g, std::span<const Var> p) {
                   const GlobalDecoderVars vars{{p[1], p[2], p[3], p[4]}, gru_at(p, 5), p[14], p[15]};
                   return project(g, decode_global(p[0], vars, InputFeeding::probabilities).logits,
                                  R);
                 },
                 std::move(params)};
       }},
      {"decode_toeplitz",
       [](Rng& rng) -> Case {
         Tensor R = random_tensor(rng, kT, kNumClasses);
         return {[R](Graph& g, std::span<const Var> p) {
                   return project(
                       g, decode_toeplitz(p[0], {p[1], p[2], p[3]}, InputFeeding::probabilities), R);
                 },
                 {random_tensor(rng, kT, kE), random_tensor(rng, kE, kNumClasses),
                  random_tensor(rng, kNumClasses, kNumClasses), random_tensor(rng, 1, kNumClasses)}};
       }},
      {"model_toeplitz_free",
       [](Rng& rng) {
         return model_case(rng, small_config(AttentionKind::toeplitz), DecodeMode::free_running);
       }},
      {"model_toeplitz_forced",
       [](Rng& rng) {
         auto cfg = small_config(AttentionKind::toeplitz);
         cfg.boundary = Boundary::renormalize;
         return model_case(rng, cfg, DecodeMode::teacher_forcing);
       }},
      {"model_global_free",
       [](Rng& rng) {
         return model_case(rng, small_config(AttentionKind::global), DecodeMode::free_running);
       }},
      {"model_global_forced",
       [](Rng& rng) {
         return model_case(rng, small_config(AttentionKind::global), DecodeMode::teacher_forcing);
       }},
      {"model_single_slice",
       [](Rng& rng) {
         auto cfg = small_config(AttentionKind::toeplitz, EncoderContext::single_slice);
         cfg.half_width = 0;
         cfg.input_feeding = InputFeeding::none;
         return model_case(rng, cfg, DecodeMode::free_running);
       }},
  };
  return cases;
}

}  // namespace

std::vector<std::string> gradcheck_components() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

std::vector<ComponentCheck> run_gradcheck_suite(std::uint64_t seed, std::string_view only) {
  std::vector<ComponentCheck> out;
  const auto& cases = registry();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& [name, build] = cases[i];
    if (!only.empty() && name.find(only) == std::string::npos) continue;
    Rng rng(derive_seed(seed, i));
    Case c = build(rng);
    out.push_back({name, finite_difference_check(c.fn, std::move(c.params), kGradCheckEps, Stencil::richardson)});
  }
  return out;
}

}  // namespace strata
