#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "strata/nn.hpp"
#include "strata/stack.hpp"

namespace strata {

/// Rows are true classes, columns predicted, in (epidermis, DEJ, dermis) order.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

  std::int64_t total() const noexcept;
  std::int64_t trace() const noexcept;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth);
void accumulate(ConfusionMatrix& cm, std::span<const int> predicted, std::span<const int> truth);

/// One-vs-rest rates. A rate whose denominator is zero (e.g. sensitivity of
/// a class absent from the truth) is NaN.
struct Metrics {
  double accuracy = 0.0;
  std::array<double, kNumClasses> sensitivity{};
  std::array<double, kNumClasses> specificity{};
};

Metrics metrics(const ConfusionMatrix& cm);

/// Disallowed adjacent pairs going deeper. Allowed: 0->0, 0->1, 1->1, 1->2, 2->2.
struct ImpossibleCounts {
  std::int64_t epidermis_to_dermis = 0;
  std::int64_t dej_to_epidermis = 0;
  std::int64_t dermis_to_epidermis = 0;
  std::int64_t dermis_to_dej = 0;

  std::int64_t total() const noexcept {
    return epidermis_to_dermis + dej_to_epidermis + dermis_to_epidermis + dermis_to_dej;
  }
  ImpossibleCounts& operator+=(const ImpossibleCounts& other) noexcept;

  friend bool operator==(const ImpossibleCounts&, const ImpossibleCounts&) = default;
};

inline constexpr std::array<const char*, 4> kImpossibleNames = {
    "Epidermis->Dermis", "DEJ->Epidermis", "Dermis->Epidermis", "Dermis->DEJ"};

ImpossibleCounts count_impossible(std::span<const int> predicted);

struct StackResult {
  std::string id;
  std::size_t length = 0;
  std::int64_t correct = 0;
  ImpossibleCounts impossible;
};

struct EvalReport {
  ConfusionMatrix confusion;
  Metrics metrics;
  ImpossibleCounts impossible;
  std::vector<StackResult> stacks;
};

using Predictor = std::function<std::vector<int>(const StackSample&)>;

/// Pools slices over all stacks; impossible transitions are summed per stack.
EvalReport evaluate(const Predictor& predictor, const Dataset& dataset);
EvalReport evaluate(const Model& model, const Dataset& dataset);

std::string format_report(const EvalReport& report);
std::string report_json(const EvalReport& report);
/// Writes report.txt and report.json into `directory`.
void write_report(const EvalReport& report, const std::filesystem::path& directory);

enum class MapFormat { csv, pgm };

void export_attention_map(const Tensor& map, const std::filesystem::path& path, MapFormat format);
Tensor read_attention_csv(const std::filesystem::path& path);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_pgm(const std::filesystem::path& path);

struct BenchResult {
  std::size_t length = 0;
  std::size_t width = 0;
  int half_width = 0;
  std::size_t reps = 0;
  double max_abs_diff = 0.0;
  double conv_seconds = 0.0;   // median
  double dense_seconds = 0.0;  // median, map construction included
  double speedup() const noexcept { return dense_seconds / conv_seconds; }
};

/// Times banded convolution against building the dense T x T map and
/// multiplying. Throws Error("gate") if the two disagree by more than 1e-9.
BenchResult benchmark_attention(std::size_t length, std::size_t width, int half_width,
                                std::size_t reps, std::uint64_t seed = 0);

}  // namespace strata
