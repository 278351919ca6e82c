#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "strata/stack.hpp"

namespace strata {

struct SynthConfig {
  std::size_t min_length = 20;
  std::size_t max_length = 40;
  std::size_t raw_dim = 8;
  /// One prototype per class; empty means default_prototypes(raw_dim).
  std::vector<std::vector<double>> prototypes;
  double noise_sigma = 0.5;
  /// Sigmoid temperature of the blend between neighbouring layers, in slices.
  double transition_softness = 0.75;
  std::size_t min_segment = 4;
  /// Permits stacks with no DEJ slices.
  bool allow_empty_dej = false;

  void validate() const;
  std::vector<std::vector<double>> resolved_prototypes() const;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Deterministic, pairwise distinct class prototypes for a feature width.
std::vector<std::vector<double>> default_prototypes(std::size_t raw_dim);

/// Draws one stack. Labels are three contiguous, depth-ordered runs;
/// features blend the class prototypes with sigmoid weights centred on the
/// two boundaries, plus Gaussian noise.
StackSample generate_stack(const SynthConfig& config, std::uint64_t seed);

/// n stacks; stack i uses derive_seed(seed, i).
Dataset generate_dataset(const SynthConfig& config, std::size_t n, std::uint64_t seed);

/// One JSON object per line: {"id", "features", "labels"}.
void save_dataset(const Dataset& samples, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Throws ValidationError if shapes disagree or a label is outside 0..2.
void validate_stack(const StackSample& stack);

}  // namespace strata
