#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "strata/nn.hpp"
#include "strata/synth.hpp"
#include "strata/train.hpp"

namespace strata {

enum class ValueType { text, integer, real, boolean, list };

struct ConfigKey {
  std::string_view name;
  ValueType type;
  std::string_view default_value;
  std::string_view help;
};

/// Every key a run understands, in the order they are written out.
const std::vector<ConfigKey>& config_schema();

/// Flat `key = value` configuration. Blank lines and `#` comments are
/// ignored; later assignments win.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::string_view text, std::string_view origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  /// Throws UsageError for unknown keys and ValidationError for values that
  /// do not parse as the key's type.
  void set(std::string_view key, std::string_view value);
  /// Applies every assignment in `text` on top of the current values.
  void merge(std::string_view text, std::string_view origin = "config");

  bool explicitly_set(std::string_view key) const;
  const std::string& get(std::string_view key) const;
  std::string text(std::string_view key) const { return get(key); }
  std::int64_t integer(std::string_view key) const;
  std::size_t count(std::string_view key) const;
  double real(std::string_view key) const;
  bool boolean(std::string_view key) const;
  std::vector<std::int64_t> list(std::string_view key) const;

  /// Every key with its resolved value; parse(to_text()) == *this.
  std::string to_text() const;

  SynthConfig synth() const;
  ModelConfig model() const;
  TrainConfig train() const;

  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.values_ == b.values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
  std::set<std::string, std::less<>> explicit_;
};

}  // namespace strata
