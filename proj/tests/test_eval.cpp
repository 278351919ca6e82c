#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "oracles.hpp"
#include "strata/error.hpp"
#include "strata/eval.hpp"
#include "strata/synth.hpp"
#include "test_util.hpp"

using namespace strata;

namespace {

std::vector<int> random_labels(Rng& rng, std::size_t n) {
  std::vector<int> out(n);
  for (int& y : out) y = static_cast<int>(rng.uniform_int(0, 2));
  return out;
}

std::array<std::int64_t, 4> as_array(const ImpossibleCounts& c) {
  return {c.epidermis_to_dermis, c.dej_to_epidermis, c.dermis_to_epidermis, c.dermis_to_dej};
}

ConfusionMatrix cm_of(std::array<std::array<std::int64_t, 3>, 3> rows) { return {rows}; }

}  // namespace

TEST_CASE("confusion_matrix") {
  const std::vector<int> y{0, 0, 0, 1, 1, 1, 2, 2, 2};
  const auto cm = confusion_matrix(y, y);
  CHECK(cm == cm_of({{{3, 0, 0}, {0, 3, 0}, {0, 0, 3}}}));
  CHECK(cm.total() == 9);
  CHECK(cm.trace() == 9);
  CHECK(confusion_matrix({}, {}) == ConfusionMatrix{});

  // Rows are the truth, columns the prediction.
  const std::vector<int> pred{1}, truth{0};
  CHECK(confusion_matrix(pred, truth).counts[0][1] == 1);

  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0, 1}, std::vector<int>{0}), ValidationError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{3}, std::vector<int>{0}), ValidationError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0}, std::vector<int>{-1}), ValidationError);

  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(0, 80));
    const auto p = random_labels(rng, n), t = random_labels(rng, n);
    ConfusionMatrix want;
    for (std::size_t i = 0; i < n; ++i) ++want.counts[static_cast<std::size_t>(t[i])][static_cast<std::size_t>(p[i])];
    CHECK(confusion_matrix(p, t) == want);
    ConfusionMatrix acc;
    accumulate(acc, p, t);
    accumulate(acc, p, t);
    CHECK(acc.total() == 2 * static_cast<std::int64_t>(n));
  }
}

TEST_CASE("metrics") {
  const auto perfect = metrics(cm_of({{{5, 0, 0}, {0, 2, 0}, {0, 0, 7}}}));
  CHECK(perfect.accuracy == 1.0);
  for (int c = 0; c < 3; ++c) {
    CHECK(perfect.sensitivity[c] == 1.0);
    CHECK(perfect.specificity[c] == 1.0);
  }

  const auto worked = metrics(cm_of({{{4, 1, 0}, {1, 3, 1}, {0, 1, 4}}}));
  CHECK(worked.accuracy == doctest::Approx(11.0 / 15.0).epsilon(1e-15));
  CHECK(worked.sensitivity[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(worked.specificity[0] == doctest::Approx(0.9).epsilon(1e-15));

  const auto absent = metrics(cm_of({{{4, 1, 0}, {0, 0, 0}, {0, 1, 4}}}));
  CHECK(std::isnan(absent.sensitivity[1]));
  CHECK_FALSE(std::isnan(absent.specificity[1]));

  CHECK_THROWS_AS(metrics(ConfusionMatrix{}), ValidationError);

  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionMatrix cm;
    for (auto& row : cm.counts)
      for (auto& v : row) v = rng.uniform_int(0, 50);
    if (cm.total() == 0) continue;
    const auto got = metrics(cm);
    const auto want = oracle::direct_metrics(cm.counts);
    CHECK(std::abs(got.accuracy - want.accuracy) <= 1e-12);
    for (int c = 0; c < 3; ++c) {
      if (std::isnan(want.sensitivity[c])) {
        CHECK(std::isnan(got.sensitivity[c]));
      } else {
        CHECK(std::abs(got.sensitivity[c] - want.sensitivity[c]) <= 1e-12);
      }
      if (std::isnan(want.specificity[c])) {
        CHECK(std::isnan(got.specificity[c]));
      } else {
        CHECK(std::abs(got.specificity[c] - want.specificity[c]) <= 1e-12);
      }
      CHECK((std::isnan(got.sensitivity[c]) || (got.sensitivity[c] >= 0 && got.sensitivity[c] <= 1)));
    }
  }
}

TEST_CASE("count_impossible") {
  CHECK(count_impossible(std::vector<int>{0, 0, 1, 1, 2, 2}) == ImpossibleCounts{});
  CHECK(count_impossible(std::vector<int>{0, 2}) == ImpossibleCounts{1, 0, 0, 0});
  const auto back = count_impossible(std::vector<int>{2, 1, 0});
  CHECK(back == ImpossibleCounts{0, 1, 0, 1});
  CHECK(back.total() == 2);
  CHECK(count_impossible(std::vector<int>{2, 0}) == ImpossibleCounts{0, 0, 1, 0});
  CHECK(count_impossible(std::vector<int>{}) == ImpossibleCounts{});
  CHECK(count_impossible(std::vector<int>{1}) == ImpossibleCounts{});
  CHECK_THROWS_AS(count_impossible(std::vector<int>{0, 5}), ValidationError);

  ImpossibleCounts sum{1, 2, 3, 4};
  sum += ImpossibleCounts{1, 1, 1, 1};
  CHECK(sum == ImpossibleCounts{2, 3, 4, 5});
  CHECK(sum.total() == 14);
}

TEST_CASE("count_impossible against brute-force enumeration") {
  Rng rng(3);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto labels = random_labels(rng, static_cast<std::size_t>(rng.uniform_int(1, 50)));
    const auto got = count_impossible(labels);
    CHECK(as_array(got) == oracle::impossible_brute_force(labels));
    CHECK(got.total() <= static_cast<std::int64_t>(labels.size()) - 1);
  }
}

TEST_CASE("monotone sequences") {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    auto labels = random_labels(rng, static_cast<std::size_t>(rng.uniform_int(1, 50)));
    std::sort(labels.begin(), labels.end());
    // Sorted labels can still skip the junction; that step is the only possible error.
    const bool skips = std::count(labels.begin(), labels.end(), 0) > 0 &&
                       std::count(labels.begin(), labels.end(), 1) == 0 &&
                       std::count(labels.begin(), labels.end(), 2) > 0;
    CHECK(count_impossible(labels) == ImpossibleCounts{skips ? 1 : 0, 0, 0, 0});

    // Monotone with unit steps: never impossible.
    std::vector<int> stepped{static_cast<int>(rng.uniform_int(0, 2))};
    for (int i = 0; i < 30; ++i) stepped.push_back(std::min(2, stepped.back() + static_cast<int>(rng.uniform_int(0, 1))));
    CHECK(count_impossible(stepped) == ImpossibleCounts{});
  }
}

TEST_CASE("evaluate") {
  const Dataset data = generate_dataset(SynthConfig{}, 20, 6);
  std::int64_t slices = 0;
  for (const auto& s : data) slices += static_cast<std::int64_t>(s.length());

  const auto oracle_report = evaluate([](const StackSample& s) { return s.labels; }, data);
  CHECK(oracle_report.metrics.accuracy == 1.0);
  CHECK(oracle_report.impossible == ImpossibleCounts{});
  CHECK(oracle_report.confusion.total() == slices);
  CHECK(oracle_report.stacks.size() == data.size());

  const auto constant =
      evaluate([](const StackSample& s) { return std::vector<int>(s.length(), 0); }, data);
  CHECK(constant.impossible == ImpossibleCounts{});
  CHECK(constant.metrics.accuracy < 0.6);
  CHECK(constant.metrics.sensitivity[0] == 1.0);
  CHECK(constant.metrics.sensitivity[2] == 0.0);

  // Per-stack impossible counts add up to the pooled total.
  const auto reversed = evaluate(
      [](const StackSample& s) {
        auto y = s.labels;
        std::reverse(y.begin(), y.end());
        return y;
      },
      data);
  std::int64_t sum = 0;
  for (const auto& s : reversed.stacks) sum += s.impossible.total();
  CHECK(sum == reversed.impossible.total());
  CHECK(reversed.impossible.total() >= static_cast<std::int64_t>(2 * data.size()));

  CHECK_THROWS_AS(evaluate([](const StackSample& s) { return s.labels; }, Dataset{}), ValidationError);
  CHECK_THROWS_AS(evaluate([](const StackSample&) { return std::vector<int>{0}; }, data), ValidationError);
}

TEST_CASE("reports") {
  const Dataset data = generate_dataset(SynthConfig{}, 4, 6);
  const auto report = evaluate([](const StackSample& s) { return std::vector<int>(s.length(), 1); }, data);
  const std::string text = format_report(report);
  std::size_t last = 0;
  for (const char* name : kImpossibleNames) {
    const auto at = text.find(name);
    REQUIRE(at != std::string::npos);
    CHECK(at >= last);
    last = at;
  }
  const auto parsed = nlohmann::json::parse(report_json(report));
  CHECK(parsed["accuracy"].get<double>() == report.metrics.accuracy);
  CHECK(parsed["total_impossible"].get<std::int64_t>() == report.impossible.total());

  // An absent class is null in JSON, never 0 or 1.
  StackSample only_epi{"e", Tensor::zeros(3, 8), {0, 0, 0}};
  const auto partial = evaluate([](const StackSample& s) { return s.labels; }, {only_epi});
  CHECK(nlohmann::json::parse(report_json(partial))["sensitivity"][1].is_null());

  testutil::TempDir dir("report");
  write_report(report, dir / "out");
  CHECK(testutil::slurp(dir / "out" / "report.txt") == text);
  CHECK(nlohmann::json::parse(testutil::slurp(dir / "out" / "report.json")) == parsed);
}

TEST_CASE("attention map export") {
  testutil::TempDir dir("export");

  SUBCASE("identity map is a white diagonal on black") {
    const Tensor A = build_attention_map(ToeplitzKernel::uniform(0), 16, Boundary::zero_pad);
    export_attention_map(A, dir / "id.pgm", MapFormat::pgm);
    const auto img = read_pgm(dir / "id.pgm");
    CHECK(img.width == 16);
    CHECK(img.height == 16);
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c) CHECK(img.pixels[r * 16 + c] == (r == c ? 255 : 0));
  }
  SUBCASE("D = 7 gives a band of half-width 7") {
    Rng rng(5);
    ToeplitzKernel k{7, oracle::random_tensor(rng, 1, 15, 0.3)};
    const Tensor A = build_attention_map(k, 64, Boundary::zero_pad);
    export_attention_map(A, dir / "band.pgm", MapFormat::pgm);
    const auto img = read_pgm(dir / "band.pgm");
    REQUIRE(img.pixels.size() == 64 * 64);
    std::uint8_t peak = 0;
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 64; ++c) {
        const auto px = img.pixels[r * 64 + c];
        const long off = std::labs(static_cast<long>(r) - static_cast<long>(c));
        if (off > 7) CHECK(px == 0);
        if (off <= 7) CHECK(px > 0);
        peak = std::max(peak, px);
      }
    CHECK(peak == 255);
  }
  SUBCASE("csv round trip") {
    Rng rng(6);
    const Tensor A = build_attention_map(ToeplitzKernel{3, oracle::random_tensor(rng, 1, 7)}, 20,
                                         Boundary::renormalize);
    export_attention_map(A, dir / "a.csv", MapFormat::csv);
    CHECK(max_abs_diff(read_attention_csv(dir / "a.csv"), A) <= 1e-9);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(export_attention_map(Tensor::zeros(2, 2), dir / "no" / "such" / "x.pgm", MapFormat::pgm),
                    IoError);
    CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), IoError);
    testutil::spit(dir / "bad.csv", "1,2\n3\n");
    CHECK_THROWS_AS(read_attention_csv(dir / "bad.csv"), ParseError);
    testutil::spit(dir / "bad.pgm", "P2\n2 2\n255\n");
    CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), ParseError);
  }
}

TEST_CASE("benchmark_attention") {
  const auto r = benchmark_attention(64, 8, 2, 2, 1);
  CHECK(r.max_abs_diff <= 1e-9);
  CHECK(r.conv_seconds > 0.0);
  CHECK(r.dense_seconds > 0.0);
  CHECK(r.length == 64);
  CHECK(r.width == 8);
  CHECK(r.half_width == 2);
  // Band covering the whole stack.
  CHECK(benchmark_attention(8, 4, 7, 1, 2).max_abs_diff <= 1e-9);
  CHECK_THROWS_AS(benchmark_attention(0, 4, 1, 1), ValidationError);
  CHECK_THROWS_AS(benchmark_attention(8, 4, 1, 0), ValidationError);
}
