#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "strata/adam.hpp"
#include "strata/nn.hpp"
#include "strata/stack.hpp"

namespace strata {

struct TrainConfig {
  std::size_t epochs = 50;
  AdamConfig adam{.lr = 5e-3};
  /// The learning rate decays linearly from adam.lr at the first epoch to
  /// adam.lr * final_lr_fraction at the last; 1 keeps it constant.
  double final_lr_fraction = 0.1;
  std::uint64_t seed = 1;
  bool teacher_forcing = true;
  double train_fraction = 0.8;
  double val_fraction = 0.2;
  /// Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;      // free-running; NaN without a validation split
  std::vector<double> val_accuracy;  // per-slice, free-running
};

inline constexpr int kCheckpointVersion = 1;

struct ModelCheckpoint {
  ModelConfig config;
  ParamStore params;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  int format_version = kCheckpointVersion;

  Model model() const { return {config, params}; }

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  TrainHistory history;
};

/// Glorot-uniform weights (s = sqrt(6 / (fan_in + fan_out))), zero biases,
/// zero kernel logits.
Model init_params(const ModelConfig& config, std::uint64_t seed);

struct DatasetSplit {
  Dataset train;
  Dataset validation;
};

/// First round(train_fraction * n) stacks train, the rest validate.
DatasetSplit split_dataset(const Dataset& dataset, const TrainConfig& config);

/// Cross-entropy of one stack and its gradient for every parameter, in
/// ParamStore order.
double loss_and_gradients(const Model& model, const StackSample& stack, DecodeMode mode,
                          std::vector<Tensor>& gradients);

double stack_loss(const Model& model, const StackSample& stack, DecodeMode mode);

/// Called after each epoch with its 1-based number.
using EpochCallback = std::function<void(std::size_t epoch, const TrainHistory& history)>;

/// Batch size one, stacks visited in a freshly shuffled order every epoch.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& train_set, const Dataset& validation_set,
                  const EpochCallback& on_epoch = {});
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& dataset, const EpochCallback& on_epoch = {});

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
/// As above, then throws ConfigMismatchError unless the stored attention
/// kind equals `expected`.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path, AttentionKind expected);

std::string checkpoint_to_string(const ModelCheckpoint& checkpoint);
ModelCheckpoint checkpoint_from_string(const std::string& text);

}  // namespace strata
