#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "strata/error.hpp"
#include "strata/nn.hpp"
#include "strata/train.hpp"

using namespace strata;

namespace {

Model random_model(ModelConfig cfg, std::uint64_t seed, double sigma = 0.6) {
  Model model = make_zero_model(cfg);
  Rng rng(seed);
  for (auto& t : model.params.tensors())
    for (double& v : t.data()) v = sigma * rng.normal();
  return model;
}

oracle::Gru gru_of(const Model& m, const std::string& prefix) {
  auto mat = [&](const char* n) { return oracle::to_mat(m.params.get(prefix + n)); };
  auto vec = [&](const char* n) { return oracle::row_of(m.params.get(prefix + n)); };
  return {mat(".Wz"), mat(".Wr"), mat(".Wh"), mat(".Uz"), mat(".Ur"), mat(".Uh"),
          vec(".bz"), vec(".br"), vec(".bh")};
}

GruVars bind_gru(Graph& g, const oracle::Gru& p) {
  auto c = [&](const oracle::Mat& m) { return g.constant(oracle::to_tensor(m)); };
  auto r = [&](const oracle::Vec& v) { return g.constant(Tensor::row(v)); };
  return {c(p.Wz), c(p.Wr), c(p.Wh), c(p.Uz), c(p.Ur), c(p.Uh), r(p.bz), r(p.br), r(p.bh)};
}

oracle::Gru random_gru(Rng& rng, std::size_t in, std::size_t h) {
  auto m = [&](std::size_t r, std::size_t c) { return oracle::to_mat(oracle::random_tensor(rng, r, c, 0.7)); };
  auto v = [&](std::size_t n) { return oracle::row_of(oracle::random_tensor(rng, 1, n, 0.7)); };
  return {m(in, h), m(in, h), m(in, h), m(h, h), m(h, h), m(h, h), v(h), v(h), v(h)};
}

oracle::Mat encode_oracle(const Model& m, const Tensor& features) {
  auto raw = oracle::to_mat(features);
  const auto W = oracle::to_mat(m.params.get("encoder.W"));
  const auto b = oracle::row_of(m.params.get("encoder.b"));
  for (auto& row : raw) {
    row = oracle::affine(row, W, b);
    for (double& v : row) v = std::tanh(v);
  }
  if (m.config.encoder_context == EncoderContext::single_slice) {
    oracle::Mat out;
    for (const auto& row : raw) out.push_back(oracle::bi_gru({row}, gru_of(m, "gru_fwd"), gru_of(m, "gru_bwd"))[0]);
    return out;
  }
  return oracle::bi_gru(raw, gru_of(m, "gru_fwd"), gru_of(m, "gru_bwd"));
}

oracle::Mat forward_oracle(const Model& m, const StackSample& s, std::span<const int> teacher = {}) {
  const auto enc = encode_oracle(m, s.features);
  const auto& p = m.params;
  if (m.config.attention == AttentionKind::toeplitz) {
    const auto w = oracle::softmax(oracle::row_of(p.get("kernel.logits")));
    const auto ctx = oracle::matmul(
        oracle::attention_map(w, enc.size(), m.config.boundary == Boundary::renormalize), enc);
    const auto W_feed = p.contains("decoder.W_feed") ? oracle::to_mat(p.get("decoder.W_feed"))
                                                     : oracle::Mat(3, oracle::Vec(3, 0.0));
    return oracle::decode_toeplitz(ctx, oracle::to_mat(p.get("decoder.W_ctx")), W_feed,
                                   oracle::row_of(p.get("decoder.b")), teacher);
  }
  oracle::Vec v;
  for (const auto& row : oracle::to_mat(p.get("attention.v"))) v.push_back(row[0]);
  const oracle::GlobalDecoder dec{{oracle::to_mat(p.get("attention.W")), oracle::to_mat(p.get("attention.U")),
                                   oracle::row_of(p.get("attention.b")), v},
                                  gru_of(m, "decoder_gru"), oracle::to_mat(p.get("decoder.W_out")),
                                  oracle::row_of(p.get("decoder.b_out"))};
  return oracle::decode_global(enc, dec, nullptr, teacher);
}

ModelConfig small(AttentionKind kind, int D = 1) {
  ModelConfig cfg;
  cfg.attention = kind;
  cfg.half_width = D;
  cfg.raw_dim = 4;
  cfg.feature_dim = 3;
  cfg.enc_hidden = 3;
  cfg.dec_hidden = 4;
  cfg.attn_hidden = 5;
  return cfg;
}

StackSample random_stack(Rng& rng, std::size_t T, std::size_t F) {
  StackSample s{"s", oracle::random_tensor(rng, T, F), std::vector<int>(T)};
  for (int& y : s.labels) y = static_cast<int>(rng.uniform_int(0, 2));
  return s;
}

}  // namespace

TEST_CASE("slice_encoder") {
  Graph g;
  Rng rng(1);
  const Tensor raw = oracle::random_tensor(rng, 4, 3, 0.01);
  CHECK(slice_encoder(g.constant(raw), g.constant(Tensor::zeros(3, 3)), g.constant(Tensor::zeros(1, 3)))
            .value() == Tensor::zeros(4, 3));
  const Tensor I = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(max_abs_diff(slice_encoder(g.constant(raw), g.constant(I), g.constant(Tensor::zeros(1, 3))).value(),
                     raw) < 1e-3);
  const Tensor W = oracle::random_tensor(rng, 3, 5), b = oracle::random_tensor(rng, 1, 5);
  auto expected = oracle::to_mat(raw);
  for (auto& row : expected) {
    row = oracle::affine(row, oracle::to_mat(W), oracle::row_of(b));
    for (double& v : row) v = std::tanh(v);
  }
  CHECK(max_abs_diff(slice_encoder(g.constant(raw), g.constant(W), g.constant(b)).value(),
                     oracle::to_tensor(expected)) < 1e-12);
  CHECK_THROWS_AS(slice_encoder(g.constant(raw), g.constant(Tensor::zeros(4, 3)), g.constant(Tensor::zeros(1, 3))),
                  DimensionError);
}

TEST_CASE("gru_cell") {
  Graph g;
  Rng rng(2);
  const oracle::Gru zero{oracle::Mat(3, oracle::Vec(4)), oracle::Mat(3, oracle::Vec(4)),
                         oracle::Mat(3, oracle::Vec(4)), oracle::Mat(4, oracle::Vec(4)),
                         oracle::Mat(4, oracle::Vec(4)), oracle::Mat(4, oracle::Vec(4)),
                         oracle::Vec(4), oracle::Vec(4), oracle::Vec(4)};
  const Tensor x = oracle::random_tensor(rng, 1, 3), h = oracle::random_tensor(rng, 1, 4);

  const Tensor halved = gru_cell(g.constant(x), g.constant(h), bind_gru(g, zero)).value();
  for (std::size_t j = 0; j < 4; ++j) CHECK(halved[j] == 0.5 * h[j]);

  auto no_bias = random_gru(rng, 3, 4);
  no_bias.bz = no_bias.br = no_bias.bh = oracle::Vec(4, 0.0);
  CHECK(gru_cell(g.constant(Tensor::zeros(1, 3)), g.constant(Tensor::zeros(1, 4)), bind_gru(g, no_bias))
            .value() == Tensor::zeros(1, 4));

  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_gru(rng, 3, 4);
    const Tensor xi = oracle::random_tensor(rng, 1, 3), hi = oracle::random_tensor(rng, 1, 4);
    const auto expected = oracle::gru_cell(oracle::row_of(xi), oracle::row_of(hi), p);
    CHECK(max_abs_diff(gru_cell(g.constant(xi), g.constant(hi), bind_gru(g, p)).value(),
                       Tensor::row(expected)) < 1e-12);
  }
}

TEST_CASE("bi_gru_encode") {
  Rng rng(3);
  const auto fwd = random_gru(rng, 3, 4), bwd = random_gru(rng, 3, 4);

  SUBCASE("single slice") {
    Graph g;
    const Tensor x = oracle::random_tensor(rng, 1, 3);
    const auto zero = oracle::Vec(4, 0.0);
    const auto expected = oracle::concat(oracle::gru_cell(oracle::row_of(x), zero, fwd),
                                         oracle::gru_cell(oracle::row_of(x), zero, bwd));
    CHECK(max_abs_diff(bi_gru_encode(g.constant(x), bind_gru(g, fwd), bind_gru(g, bwd)).value(),
                       Tensor::row(expected)) < 1e-12);
  }
  SUBCASE("reversing the sequence swaps the two halves") {
    Graph g;
    const Tensor x = oracle::random_tensor(rng, 6, 3);
    Tensor reversed = x;
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t c = 0; c < 3; ++c) reversed.at(t, c) = x.at(5 - t, c);
    const Tensor a = bi_gru_encode(g.constant(x), bind_gru(g, fwd), bind_gru(g, bwd)).value();
    const Tensor b = bi_gru_encode(g.constant(reversed), bind_gru(g, bwd), bind_gru(g, fwd)).value();
    double worst = 0.0;
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t j = 0; j < 4; ++j) {
        worst = std::max(worst, std::abs(b.at(t, j) - a.at(5 - t, 4 + j)));
        worst = std::max(worst, std::abs(b.at(t, 4 + j) - a.at(5 - t, j)));
      }
    CHECK(worst < 1e-12);
    CHECK(max_abs_diff(a, oracle::to_tensor(oracle::bi_gru(oracle::to_mat(x), fwd, bwd))) < 1e-12);
  }
  SUBCASE("zero parameters give zero encodings") {
    Graph g;
    const oracle::Gru zero{oracle::Mat(3, oracle::Vec(4)), oracle::Mat(3, oracle::Vec(4)),
                           oracle::Mat(3, oracle::Vec(4)), oracle::Mat(4, oracle::Vec(4)),
                           oracle::Mat(4, oracle::Vec(4)), oracle::Mat(4, oracle::Vec(4)),
                           oracle::Vec(4), oracle::Vec(4), oracle::Vec(4)};
    CHECK(bi_gru_encode(g.constant(oracle::random_tensor(rng, 5, 3)), bind_gru(g, zero), bind_gru(g, zero))
              .value() == Tensor::zeros(5, 8));
  }
  SUBCASE("single_slice context restarts every slice") {
    Graph g;
    const Tensor x = oracle::random_tensor(rng, 4, 3);
    const Tensor enc = bi_gru_encode(g.constant(x), bind_gru(g, fwd), bind_gru(g, bwd),
                                     EncoderContext::single_slice)
                           .value();
    for (std::size_t t = 0; t < 4; ++t) {
      const auto expected = oracle::bi_gru({oracle::row_of(x, t)}, fwd, bwd)[0];
      CHECK(max_abs_diff(enc.row_copy(t), Tensor::row(expected)) < 1e-12);
    }
  }
}

TEST_CASE("global_attention_step") {
  Rng rng(4);
  const oracle::Attention p{oracle::to_mat(oracle::random_tensor(rng, 4, 5)),
                            oracle::to_mat(oracle::random_tensor(rng, 6, 5)),
                            oracle::row_of(oracle::random_tensor(rng, 1, 5)),
                            oracle::row_of(oracle::random_tensor(rng, 1, 5))};
  auto bind = [&](Graph& g) {
    oracle::Mat v;
    for (double e : p.v) v.push_back({e});
    return GlobalAttentionVars{g.constant(oracle::to_tensor(p.W)), g.constant(oracle::to_tensor(p.U)),
                               g.constant(Tensor::row(p.b)), g.constant(oracle::to_tensor(v))};
  };
  Graph g;
  const Var s = g.constant(oracle::random_tensor(rng, 1, 4));

  const Tensor one = oracle::random_tensor(rng, 1, 6);
  const auto single = global_attention_step(g.constant(one), s, bind(g));
  CHECK(single.weights.value()[0] == 1.0);
  CHECK(single.context.value() == one);

  Tensor same = Tensor::zeros(5, 6);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t e = 0; e < 6; ++e) same.at(t, e) = one[e];
  CHECK(max_abs_diff(global_attention_step(g.constant(same), s, bind(g)).context.value(), one) < 1e-15);

  for (int trial = 0; trial < 10; ++trial) {
    const Tensor enc = oracle::random_tensor(rng, 7, 6);
    const Tensor sp = oracle::random_tensor(rng, 1, 4);
    const auto got = global_attention_step(g.constant(enc), g.constant(sp), bind(g));
    const auto want = oracle::attend(oracle::to_mat(enc), oracle::row_of(sp), p);
    CHECK(max_abs_diff(got.context.value(), Tensor::row(want.context)) < 1e-12);
    CHECK(max_abs_diff(got.weights.value(), Tensor::row(want.alpha)) < 1e-12);
  }
}

TEST_CASE("toeplitz_attention") {
  Graph g;
  Rng rng(5);
  const Tensor H = oracle::random_tensor(rng, 8, 4);
  CHECK(bit_equal(toeplitz_attention(g.constant(H), g.constant(Tensor::row({0.3})), Boundary::zero_pad).value(), H));

  const Var logits = g.constant(Tensor::row({std::log(0.25), std::log(0.5), std::log(0.25)}));
  CHECK(max_abs_diff(toeplitz_attention(g.constant(Tensor::matrix(3, 1, {1, 2, 3})), logits, Boundary::zero_pad)
                         .value(),
                     Tensor::matrix(3, 1, {1, 2, 2})) < 1e-15);

  Tensor constant = Tensor::zeros(6, 2);
  for (std::size_t t = 0; t < 6; ++t) constant.at(t, 0) = 1.5, constant.at(t, 1) = -2.0;
  const Tensor out =
      toeplitz_attention(g.constant(constant), g.constant(Tensor::zeros(1, 5)), Boundary::renormalize).value();
  CHECK(max_abs_diff(out, constant) < 1e-15);
}

TEST_CASE("build_attention_map") {
  for (std::size_t T : {1, 2, 5, 17}) {
    const Tensor A = build_attention_map(ToeplitzKernel::uniform(0), T, Boundary::zero_pad);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) CHECK(A.at(i, j) == (i == j ? 1.0 : 0.0));
  }
  const std::vector<double> w{0.25, 0.5, 0.25};
  CHECK(build_attention_map(w, 3, Boundary::zero_pad) ==
        Tensor::matrix(3, 3, {.5, .25, 0, .25, .5, .25, 0, .25, .5}));

  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto T = static_cast<std::size_t>(rng.uniform_int(1, 64));
    const int D = static_cast<int>(rng.uniform_int(0, 7));
    ToeplitzKernel k{D, oracle::random_tensor(rng, 1, static_cast<std::size_t>(2 * D + 1))};
    const Tensor A = build_attention_map(k, T, Boundary::zero_pad);
    for (std::size_t i = 0; i + 1 < T; ++i)
      for (std::size_t j = 0; j + 1 < T; ++j) CHECK(A.at(i, j) == A.at(i + 1, j + 1));
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j)
        if (std::abs(static_cast<long>(i) - static_cast<long>(j)) > D) CHECK(A.at(i, j) == 0.0);
    const Tensor R = build_attention_map(k, T, Boundary::renormalize);
    for (std::size_t i = 0; i < T; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < T; ++j) {
        CHECK(R.at(i, j) >= 0.0);
        total += R.at(i, j);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("toeplitz kernel weights") {
  Rng rng(7);
  const Tensor logits = oracle::random_tensor(rng, 1, 9, 3.0);
  Tensor shifted = logits;
  for (double& v : shifted.data()) v -= 41.0;
  const Tensor w = ToeplitzKernel{4, logits}.weights();
  CHECK(max_abs_diff(w, ToeplitzKernel{4, shifted}.weights()) < 1e-12);
  double total = 0.0;
  for (double v : w.data()) {
    CHECK(v >= 0.0);
    total += v;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  const Tensor uniform = ToeplitzKernel::uniform(3).weights();
  for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("decode_toeplitz") {
  Rng rng(8);
  Graph g;
  SUBCASE("zero parameters stay at the uniform fixed point") {
    const Var logits = decode_toeplitz(g.constant(oracle::random_tensor(rng, 5, 6)),
                                       {g.constant(Tensor::zeros(6, 3)), g.constant(Tensor::zeros(3, 3)),
                                        g.constant(Tensor::zeros(1, 3))},
                                       InputFeeding::probabilities);
    CHECK(logits.value() == Tensor::zeros(5, 3));
  }
  SUBCASE("random cases against the unrolled recurrence") {
    for (std::size_t T : {1, 4}) {
      const Tensor C = oracle::random_tensor(rng, T, 6), Wc = oracle::random_tensor(rng, 6, 3),
                   Wf = oracle::random_tensor(rng, 3, 3), b = oracle::random_tensor(rng, 1, 3);
      const ToeplitzDecoderVars p{g.constant(Wc), g.constant(Wf), g.constant(b)};
      const auto want = oracle::decode_toeplitz(oracle::to_mat(C), oracle::to_mat(Wc), oracle::to_mat(Wf),
                                                oracle::row_of(b));
      CHECK(max_abs_diff(decode_toeplitz(g.constant(C), p, InputFeeding::probabilities).value(),
                         oracle::to_tensor(want)) < 1e-12);
      std::vector<int> teacher(T);
      for (int& y : teacher) y = static_cast<int>(rng.uniform_int(0, 2));
      const auto forced = oracle::decode_toeplitz(oracle::to_mat(C), oracle::to_mat(Wc), oracle::to_mat(Wf),
                                                  oracle::row_of(b), teacher);
      CHECK(max_abs_diff(decode_toeplitz(g.constant(C), p, InputFeeding::probabilities, teacher).value(),
                         oracle::to_tensor(forced)) < 1e-12);
    }
  }
}

TEST_CASE("decode_global") {
  Rng rng(9);
  const ModelConfig cfg = small(AttentionKind::global);
  SUBCASE("zero decoder parameters give zero logits") {
    Graph g;
    const Model zero = make_zero_model(cfg);
    const auto vars = bind_params(g, zero, false);
    const auto out = decode_global(g.constant(oracle::random_tensor(rng, 4, 6)), vars.global,
                                   InputFeeding::probabilities);
    CHECK(out.logits.value() == Tensor::zeros(4, 3));
  }
  SUBCASE("single step") {
    Graph g;
    const Model m = random_model(cfg, 11);
    const auto vars = bind_params(g, m, false);
    const Tensor h = oracle::random_tensor(rng, 1, 6);
    const auto out = decode_global(g.constant(h), vars.global, InputFeeding::probabilities);
    CHECK(out.attention_map == Tensor::matrix(1, 1, {1.0}));
    const auto s = oracle::gru_cell(oracle::concat(oracle::row_of(h), oracle::Vec(3, 1.0 / 3.0)),
                                    oracle::Vec(4, 0.0), gru_of(m, "decoder_gru"));
    const auto want = oracle::affine(s, oracle::to_mat(m.params.get("decoder.W_out")),
                                     oracle::row_of(m.params.get("decoder.b_out")));
    CHECK(max_abs_diff(out.logits.value(), Tensor::row(want)) < 1e-12);
  }
  SUBCASE("three steps against the unrolled recurrence, rows of the map are convex") {
    Graph g;
    const Model m = random_model(cfg, 12);
    const auto vars = bind_params(g, m, false);
    const Tensor enc = oracle::random_tensor(rng, 3, 6);
    const auto out = decode_global(g.constant(enc), vars.global, InputFeeding::probabilities);
    oracle::Vec v;
    for (const auto& row : oracle::to_mat(m.params.get("attention.v"))) v.push_back(row[0]);
    const oracle::GlobalDecoder dec{{oracle::to_mat(m.params.get("attention.W")),
                                     oracle::to_mat(m.params.get("attention.U")),
                                     oracle::row_of(m.params.get("attention.b")), v},
                                    gru_of(m, "decoder_gru"), oracle::to_mat(m.params.get("decoder.W_out")),
                                    oracle::row_of(m.params.get("decoder.b_out"))};
    oracle::Mat alphas;
    const auto want = oracle::decode_global(oracle::to_mat(enc), dec, &alphas);
    CHECK(max_abs_diff(out.logits.value(), oracle::to_tensor(want)) < 1e-12);
    CHECK(max_abs_diff(out.attention_map, oracle::to_tensor(alphas)) < 1e-12);
    for (std::size_t t = 0; t < 3; ++t) {
      double total = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(out.attention_map.at(t, j) >= 0.0);
        total += out.attention_map.at(t, j);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("forward matches the composed oracle") {
  Rng rng(10);
  for (auto kind : {AttentionKind::toeplitz, AttentionKind::global}) {
    for (auto boundary : {Boundary::zero_pad, Boundary::renormalize}) {
      ModelConfig cfg = small(kind, 2);
      cfg.boundary = boundary;
      const Model m = random_model(cfg, 20 + static_cast<int>(kind));
      const StackSample s = random_stack(rng, 7, cfg.raw_dim);
      Graph g;
      const auto free = forward(m, g, s, DecodeMode::free_running);
      CHECK(max_abs_diff(free.logits.value(), oracle::to_tensor(forward_oracle(m, s))) < 1e-10);
      const auto forced = forward(m, g, s, DecodeMode::teacher_forcing);
      CHECK(max_abs_diff(forced.logits.value(), oracle::to_tensor(forward_oracle(m, s, s.labels))) < 1e-10);
    }
  }
  ModelConfig baseline = small(AttentionKind::toeplitz, 0);
  baseline.encoder_context = EncoderContext::single_slice;
  baseline.input_feeding = InputFeeding::none;
  const Model m = random_model(baseline, 30);
  const StackSample s = random_stack(rng, 6, baseline.raw_dim);
  Graph g;
  CHECK(max_abs_diff(forward(m, g, s, DecodeMode::free_running).logits.value(),
                     oracle::to_tensor(forward_oracle(m, s))) < 1e-10);
}

TEST_CASE("D = 0 with zero feed weights depends only on each slice's encoding") {
  Rng rng(11);
  Model m = random_model(small(AttentionKind::toeplitz, 0), 31);
  for (double& v : m.params.get("decoder.W_feed").data()) v = 0.0;
  const StackSample s = random_stack(rng, 6, 4);
  Graph g;
  const auto result = forward(m, g, s, DecodeMode::free_running);
  const auto enc = encode_oracle(m, s.features);
  const auto W = oracle::to_mat(m.params.get("decoder.W_ctx"));
  const auto b = oracle::row_of(m.params.get("decoder.b"));
  for (std::size_t t = 0; t < 6; ++t)
    CHECK(max_abs_diff(result.logits.value().row_copy(t), Tensor::row(oracle::affine(enc[t], W, b))) < 1e-12);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) CHECK(result.attention_map.at(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("teacher forcing and free running agree when predictions already match") {
  Rng rng(12);
  Model m = random_model(small(AttentionKind::toeplitz), 32);
  // A huge bias on class 0 saturates y_t to one-hot epidermis.
  m.params.get("decoder.b") = Tensor::row({200.0, 0.0, 0.0});
  StackSample s = random_stack(rng, 5, 4);
  s.labels.assign(5, 0);
  Graph g;
  const Tensor free = forward(m, g, s, DecodeMode::free_running).logits.value();
  const Tensor forced = forward(m, g, s, DecodeMode::teacher_forcing).logits.value();
  CHECK(max_abs_diff(free, forced) < 1e-12);
}

TEST_CASE("forward is deterministic and validates its input") {
  Rng rng(13);
  const Model m = random_model(small(AttentionKind::global), 33);
  const StackSample s = random_stack(rng, 9, 4);
  Graph g1, g2;
  CHECK(bit_equal(forward(m, g1, s, DecodeMode::free_running).logits.value(),
                  forward(m, g2, s, DecodeMode::free_running).logits.value()));
  StackSample wrong = random_stack(rng, 3, 5);
  Graph g3;
  CHECK_THROWS_AS(forward(m, g3, wrong, DecodeMode::free_running), DimensionError);
  Model broken = m;
  broken.config.half_width = -1;
  CHECK_THROWS_AS(parameter_specs(broken.config), ValidationError);
}

TEST_CASE("argmax readout") {
  CHECK(argmax_rows(Tensor::row({10, 0, 0})) == std::vector<int>{0});
  CHECK(argmax_rows(Tensor::row({1, 1, 0})) == std::vector<int>{0});
  CHECK(argmax_rows(Tensor::matrix(2, 3, {0, 1, 1, -1, -2, 3})) == std::vector<int>{1, 2});
}

TEST_CASE("parameter specs and enum names") {
  const auto toeplitz = parameter_specs(small(AttentionKind::toeplitz, 2));
  CHECK(toeplitz.size() == 2 + 18 + 4);
  ModelConfig no_feed = small(AttentionKind::toeplitz);
  no_feed.input_feeding = InputFeeding::none;
  CHECK(parameter_specs(no_feed).size() == 2 + 18 + 3);
  CHECK(parameter_specs(small(AttentionKind::global)).size() == 2 + 18 + 4 + 9 + 2);
  for (auto kind : {AttentionKind::global, AttentionKind::toeplitz})
    CHECK(parse_attention_kind(to_string(kind)) == kind);
  for (auto b : {Boundary::zero_pad, Boundary::renormalize}) CHECK(parse_boundary(to_string(b)) == b);
  CHECK_THROWS_AS(parse_attention_kind("local"), ValidationError);
  CHECK_THROWS_AS(parse_boundary("wrap"), ValidationError);
}
