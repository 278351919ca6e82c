#include "strata/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "strata/error.hpp"

namespace strata {

namespace {

using enum ValueType;

const ConfigKey* find_key(std::string_view name) {
  const auto& schema = config_schema();
  const auto it = std::find_if(schema.begin(), schema.end(),
                               [&](const ConfigKey& k) { return k.name == name; });
  return it == schema.end() ? nullptr : &*it;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_int(std::string_view s, std::int64_t& out) {
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

bool parse_real(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

bool parse_bool(std::string_view s, bool& out) {
  if (s == "true" || s == "1") return out = true, true;
  if (s == "false" || s == "0") return out = false, true;
  return false;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> parts;
  while (!s.empty()) {
    const auto comma = s.find(',');
    parts.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return parts;
}

bool valid_value(const ConfigKey& key, std::string_view value) {
  std::int64_t i;
  double d;
  bool b;
  switch (key.type) {
    case text: return true;
    case integer: return parse_int(value, i);
    case real: return parse_real(value, d);
    case boolean: return parse_bool(value, b);
    case list: {
      const auto parts = split_list(value);
      return !parts.empty() &&
             std::all_of(parts.begin(), parts.end(), [&](auto p) { return parse_int(p, i); });
    }
  }
  return false;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      // data
      {"n", integer, "250", "stacks to generate"},
      {"seed", integer, "1", "dataset seed for generate, training seed for train"},
      {"t_min", integer, "20", "shortest stack"},
      {"t_max", integer, "40", "longest stack"},
      {"f_raw", integer, "8", "raw feature width per slice"},
      {"noise", real, "0.5", "Gaussian feature noise sigma"},
      {"softness", real, "0.75", "boundary blend temperature in slices (0 = hard)"},
      {"min_segment", integer, "4", "minimum slices per stratum"},
      {"allow_empty_dej", boolean, "false", "permit stacks without DEJ slices"},
      // model
      {"attention", text, "toeplitz", "toeplitz | global"},
      {"d", integer, "1", "Toeplitz half-width D"},
      {"boundary", text, "zero_pad", "zero_pad | renormalize"},
      {"input_feeding", text, "probabilities", "probabilities | none"},
      {"encoder_context", text, "bidirectional", "bidirectional | single_slice"},
      {"feature_dim", integer, "8", "slice encoder width"},
      {"enc_hidden", integer, "8", "encoder GRU width per direction"},
      {"dec_hidden", integer, "8", "global decoder GRU width"},
      {"attn_hidden", integer, "8", "global attention scoring width"},
      // training
      {"epochs", integer, "50", "passes over the training split"},
      {"lr", real, "0.005", "initial Adam learning rate"},
      {"final_lr_fraction", real, "0.1", "learning rate at the last epoch, relative to lr"},
      {"beta1", real, "0.9", "Adam beta1"},
      {"beta2", real, "0.999", "Adam beta2"},
      {"adam_eps", real, "1e-08", "Adam epsilon"},
      {"teacher_forcing", boolean, "true", "feed ground truth to the decoder while training"},
      {"train_fraction", real, "0.8", "share of the dataset used for training"},
      {"val_fraction", real, "0.2", "share of the dataset used for validation"},
      {"clip_norm", real, "0", "global gradient-norm clip (0 = off)"},
      // paths
      {"data", text, "", "dataset file (JSON lines)"},
      {"out", text, "", "output file for generate, output directory otherwise"},
      {"checkpoint", text, "", "checkpoint file to evaluate or export"},
      // eval
      {"oracle", boolean, "false", "evaluate the ground-truth labels as predictions"},
      // export-attention
      {"t", integer, "64", "stack length for Toeplitz maps"},
      {"format", text, "pgm", "pgm | csv"},
      {"stack", integer, "0", "dataset stack used for global maps"},
      // gradcheck
      {"only", text, "", "check only components whose name contains this"},
      {"seeds", integer, "1", "consecutive seeds to check, starting at seed"},
      // bench
      {"reps", integer, "5", "timed repetitions per cell (median reported)"},
      {"bench_t", list, "64,256,512", "stack lengths"},
      {"bench_d", list, "1,7", "half-widths"},
      {"bench_e", integer, "64", "encoding width"},
  };
  return schema;
}

RunConfig::RunConfig() {
  for (const auto& key : config_schema()) values_.emplace(key.name, key.default_value);
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
  RunConfig config;
  config.merge(text, origin);
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const ConfigKey* spec = find_key(key);
  if (!spec) throw UsageError("unknown config key '" + std::string(key) + "'");
  value = trim(value);
  if (!valid_value(*spec, value)) {
    throw ValidationError("config key '" + std::string(key) + "': invalid value '" +
                          std::string(value) + "'");
  }
  values_.find(key)->second = std::string(value);
  explicit_.emplace(key);
}

void RunConfig::merge(std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(std::string(origin) + ":" + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw ParseError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

bool RunConfig::explicitly_set(std::string_view key) const { return explicit_.contains(key); }

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

std::int64_t RunConfig::integer(std::string_view key) const {
  std::int64_t v = 0;
  if (!parse_int(get(key), v)) throw ValidationError("config key '" + std::string(key) + "' is not an integer");
  return v;
}

std::size_t RunConfig::count(std::string_view key) const {
  const auto v = integer(key);
  if (v < 0) throw ValidationError("config key '" + std::string(key) + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

double RunConfig::real(std::string_view key) const {
  double v = 0;
  if (!parse_real(get(key), v)) throw ValidationError("config key '" + std::string(key) + "' is not a number");
  return v;
}

bool RunConfig::boolean(std::string_view key) const {
  bool v = false;
  if (!parse_bool(get(key), v)) throw ValidationError("config key '" + std::string(key) + "' is not a boolean");
  return v;
}

std::vector<std::int64_t> RunConfig::list(std::string_view key) const {
  std::vector<std::int64_t> out;
  for (const auto part : split_list(get(key))) {
    std::int64_t v = 0;
    if (!parse_int(part, v)) throw ValidationError("config key '" + std::string(key) + "' is not an integer list");
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& key : config_schema()) {
    out += key.name;
    out += " = ";
    out += get(key.name);
    out += '\n';
  }
  return out;
}

SynthConfig RunConfig::synth() const {
  SynthConfig c;
  c.min_length = count("t_min");
  c.max_length = count("t_max");
  c.raw_dim = count("f_raw");
  c.noise_sigma = real("noise");
  c.transition_softness = real("softness");
  c.min_segment = count("min_segment");
  c.allow_empty_dej = boolean("allow_empty_dej");
  c.validate();
  return c;
}

ModelConfig RunConfig::model() const {
  ModelConfig c;
  c.attention = parse_attention_kind(get("attention"));
  c.half_width = static_cast<int>(integer("d"));
  c.boundary = parse_boundary(get("boundary"));
  c.input_feeding = parse_input_feeding(get("input_feeding"));
  c.encoder_context = parse_encoder_context(get("encoder_context"));
  c.raw_dim = count("f_raw");
  c.feature_dim = count("feature_dim");
  c.enc_hidden = count("enc_hidden");
  c.dec_hidden = count("dec_hidden");
  c.attn_hidden = count("attn_hidden");
  c.validate();
  return c;
}

TrainConfig RunConfig::train() const {
  TrainConfig c;
  c.epochs = count("epochs");
  c.adam.lr = real("lr");
  c.adam.beta1 = real("beta1");
  c.adam.beta2 = real("beta2");
  c.adam.eps = real("adam_eps");
  c.final_lr_fraction = real("final_lr_fraction");
  c.seed = static_cast<std::uint64_t>(integer("seed"));
  c.teacher_forcing = boolean("teacher_forcing");
  c.train_fraction = real("train_fraction");
  c.val_fraction = real("val_fraction");
  c.clip_norm = real("clip_norm");
  c.validate();
  return c;
}

}  // namespace strata
