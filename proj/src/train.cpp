#include "strata/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "strata/error.hpp"
#include "strata/rng.hpp"

namespace strata {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train: epochs must be at least 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0) ||
      !(val_fraction > 0.0 && val_fraction < 1.0) ||
      std::abs(train_fraction + val_fraction - 1.0) > 1e-9) {
    throw ValidationError("train: split fractions must lie in (0,1) and sum to 1");
  }
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    throw ValidationError("train: final_lr_fraction must lie in [0,1]");
  }
  if (!(adam.lr >= 0.0) || !(clip_norm >= 0.0)) {
    throw ValidationError("train: learning rate and clip threshold must be non-negative");
  }
}

Model init_params(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  Model model{config, {}};
  for (const auto& spec : parameter_specs(config)) {
    Tensor t(spec.shape, 0.0);
    if (spec.kind == ParamKind::weight) {
      const double fan_in = static_cast<double>(spec.shape[0]);
      const double fan_out = static_cast<double>(spec.shape[1]);
      const double s = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : t.data()) v = rng.uniform(-s, s);
    }
    model.params.add(spec.name, std::move(t));
  }
  return model;
}

DatasetSplit split_dataset(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  const auto n = dataset.size();
  auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n);
  DatasetSplit split;
  split.train.assign(dataset.begin(), dataset.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(dataset.begin() + static_cast<std::ptrdiff_t>(n_train), dataset.end());
  return split;
}

double loss_and_gradients(const Model& model, const StackSample& stack, DecodeMode mode,
                          std::vector<Tensor>& gradients) {
  Graph graph;
  const auto result = forward(model, graph, stack, mode, /*trainable=*/true);
  const Var loss = cross_entropy(result.logits, stack.labels);
  graph.backward(loss);
  gradients.clear();
  for (const auto& v : result.vars.all) gradients.push_back(v.grad());
  return loss.value()[0];
}

double stack_loss(const Model& model, const StackSample& stack, DecodeMode mode) {
  Graph graph;
  const auto result = forward(model, graph, stack, mode);
  return cross_entropy(result.logits, stack.labels).value()[0];
}

namespace {

void clip_gradients(std::vector<Tensor>& grads, double threshold) {
  if (threshold <= 0.0) return;
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= threshold) return;
  const double factor = threshold / norm;
  for (auto& g : grads)
    for (auto& v : g.data()) v *= factor;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& train_set, const Dataset& validation_set,
                  const EpochCallback& on_epoch) {
  train_config.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  Model model = init_params(model_config, train_config.seed);
  AdamState adam;
  TrainHistory history;
  const auto mode =
      train_config.teacher_forcing ? DecodeMode::teacher_forcing : DecodeMode::free_running;

  std::vector<std::size_t> order(train_set.size());
  std::vector<Tensor> grads;
  AdamConfig adam_config = train_config.adam;
  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    if (train_config.epochs > 1) {
      const double progress =
          static_cast<double>(epoch) / static_cast<double>(train_config.epochs - 1);
      adam_config.lr =
          train_config.adam.lr * (1.0 - (1.0 - train_config.final_lr_fraction) * progress);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(train_config.seed, epoch + 1));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }

    double total = 0.0;
    for (auto idx : order) {
      const auto& stack = train_set[idx];
      const double loss = loss_and_gradients(model, stack, mode, grads);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                              ", stack '" + stack.id + "'");
      }
      total += loss;
      clip_gradients(grads, train_config.clip_norm);
      adam_step(model.params.tensors(), grads, adam, adam_config);
    }
    history.train_loss.push_back(total / static_cast<double>(train_set.size()));

    if (validation_set.empty()) {
      history.val_loss.push_back(std::numeric_limits<double>::quiet_NaN());
      history.val_accuracy.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      double val_total = 0.0;
      std::size_t correct = 0, slices = 0;
      for (const auto& stack : validation_set) {
        Graph graph;
        const auto result = forward(model, graph, stack, DecodeMode::free_running);
        val_total += cross_entropy(result.logits, stack.labels).value()[0];
        const auto predicted = argmax_rows(result.logits.value());
        for (std::size_t t = 0; t < predicted.size(); ++t) correct += predicted[t] == stack.labels[t];
        slices += predicted.size();
      }
      history.val_loss.push_back(val_total / static_cast<double>(validation_set.size()));
      history.val_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(slices));
    }
    if (on_epoch) on_epoch(epoch + 1, history);
  }

  ModelCheckpoint ckpt;
  ckpt.config = model_config;
  ckpt.params = std::move(model.params);
  ckpt.seed = train_config.seed;
  ckpt.epochs = train_config.epochs;
  return {std::move(ckpt), std::move(history)};
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Dataset& dataset, const EpochCallback& on_epoch) {
  const auto split = split_dataset(dataset, train_config);
  return train(model_config, train_config, split.train, split.validation, on_epoch);
}

// --- checkpoint container ---------------------------------------------------
//
// Line 1: "strata-checkpoint <version> <fnv1a64 of line 2, hex>"
// Line 2: compact JSON with the model config, seed, epochs and named tensors.

namespace {

constexpr const char* kMagic = "strata-checkpoint";

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json config_to_json(const ModelConfig& c) {
  return {{"attention", to_string(c.attention)},
          {"d", c.half_width},
          {"raw_dim", c.raw_dim},
          {"feature_dim", c.feature_dim},
          {"enc_hidden", c.enc_hidden},
          {"dec_hidden", c.dec_hidden},
          {"attn_hidden", c.attn_hidden},
          {"boundary", to_string(c.boundary)},
          {"input_feeding", to_string(c.input_feeding)},
          {"encoder_context", to_string(c.encoder_context)}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.attention = parse_attention_kind(j.at("attention").get<std::string>());
  c.half_width = j.at("d").get<int>();
  c.raw_dim = j.at("raw_dim").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.enc_hidden = j.at("enc_hidden").get<std::size_t>();
  c.dec_hidden = j.at("dec_hidden").get<std::size_t>();
  c.attn_hidden = j.at("attn_hidden").get<std::size_t>();
  c.boundary = parse_boundary(j.at("boundary").get<std::string>());
  c.input_feeding = parse_input_feeding(j.at("input_feeding").get<std::string>());
  c.encoder_context = parse_encoder_context(j.at("encoder_context").get<std::string>());
  c.validate();
  return c;
}

}  // namespace

std::string checkpoint_to_string(const ModelCheckpoint& ckpt) {
  json tensors = json::array();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& t = ckpt.params.tensors()[i];
    tensors.push_back({{"name", ckpt.params.names()[i]}, {"shape", t.shape()}, {"data", t.values()}});
  }
  const json payload = {{"config", config_to_json(ckpt.config)},
                        {"seed", ckpt.seed},
                        {"epochs", ckpt.epochs},
                        {"tensors", std::move(tensors)}};
  const std::string body = payload.dump();
  char header[96];
  std::snprintf(header, sizeof header, "%s %d %016llx\n", kMagic, ckpt.format_version,
                static_cast<unsigned long long>(fnv1a64(body)));
  return header + body + "\n";
}

ModelCheckpoint checkpoint_from_string(const std::string& text) {
  const auto eol = text.find('\n');
  if (eol == std::string::npos) throw IntegrityError("checkpoint: missing header line");
  std::istringstream header(text.substr(0, eol));
  std::string magic, hash_hex;
  int version = 0;
  header >> magic >> version >> hash_hex;
  if (magic != kMagic) throw IntegrityError("checkpoint: bad magic '" + magic + "'");
  if (version != kCheckpointVersion) {
    throw IntegrityError("checkpoint: unsupported format version " + std::to_string(version));
  }
  std::string body = text.substr(eol + 1);
  if (!body.empty() && body.back() == '\n') body.pop_back();
  std::uint64_t expected = 0;
  try {
    std::size_t used = 0;
    expected = std::stoull(hash_hex, &used, 16);
    if (used != hash_hex.size() || hash_hex.size() != 16) throw std::invalid_argument(hash_hex);
  } catch (const std::exception&) {
    throw IntegrityError("checkpoint: malformed checksum field");
  }
  if (fnv1a64(body) != expected) throw IntegrityError("checkpoint: checksum mismatch (corrupt file)");

  try {
    const json payload = json::parse(body);
    ModelCheckpoint ckpt;
    ckpt.format_version = version;
    ckpt.config = config_from_json(payload.at("config"));
    ckpt.seed = payload.at("seed").get<std::uint64_t>();
    ckpt.epochs = payload.at("epochs").get<std::size_t>();
    const auto specs = parameter_specs(ckpt.config);
    const auto& tensors = payload.at("tensors");
    if (tensors.size() != specs.size()) throw IntegrityError("checkpoint: wrong tensor count");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& entry = tensors[i];
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      if (name != specs[i].name || shape != specs[i].shape) {
        throw IntegrityError("checkpoint: tensor '" + name + "' does not fit the stored config");
      }
      ckpt.params.add(name, Tensor(shape, entry.at("data").get<std::vector<double>>()));
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint: bad payload (") + e.what() + ")");
  } catch (const ValidationError& e) {
    throw IntegrityError(std::string("checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw IntegrityError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_string(checkpoint);
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path, AttentionKind expected) {
  auto ckpt = load_checkpoint(path);
  if (ckpt.config.attention != expected) {
    throw ConfigMismatchError("checkpoint holds a " + to_string(ckpt.config.attention) +
                              "-attention model, but " + to_string(expected) + " was requested");
  }
  return ckpt;
}

}  // namespace strata
