#include "strata/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "strata/error.hpp"
#include "strata/rng.hpp"

namespace strata {

using nlohmann::json;

std::vector<std::vector<double>> default_prototypes(std::size_t raw_dim) {
  Rng rng(derive_seed(0x5157A7A, raw_dim));
  std::vector<std::vector<double>> out(kNumClasses, std::vector<double>(raw_dim));
  for (auto& proto : out)
    for (auto& v : proto) v = rng.uniform(-1.0, 1.0);
  return out;
}

std::vector<std::vector<double>> SynthConfig::resolved_prototypes() const {
  return prototypes.empty() ? default_prototypes(raw_dim) : prototypes;
}

void SynthConfig::validate() const {
  if (raw_dim == 0) throw ValidationError("synth: raw feature dimension must be positive");
  if (min_length < 3) throw ValidationError("synth: minimum stack length must be at least 3");
  if (max_length < min_length) throw ValidationError("synth: max length below min length");
  if (min_segment < 1) throw ValidationError("synth: minimum segment length must be at least 1");
  if (!(noise_sigma >= 0.0) || !(transition_softness >= 0.0)) {
    throw ValidationError("synth: noise and softness must be non-negative");
  }
  const std::size_t dej = allow_empty_dej ? 0 : min_segment;
  if (min_length < 2 * min_segment + dej) {
    throw ValidationError("synth: stacks of length " + std::to_string(min_length) +
                          " cannot fit three segments of at least " +
                          std::to_string(min_segment) + " slices");
  }
  const auto protos = resolved_prototypes();
  if (protos.size() != kNumClasses) throw ValidationError("synth: need exactly 3 prototypes");
  for (const auto& p : protos) {
    if (p.size() != raw_dim) throw ValidationError("synth: prototype width differs from raw_dim");
  }
  for (std::size_t a = 0; a < kNumClasses; ++a)
    for (std::size_t b = a + 1; b < kNumClasses; ++b)
      if (protos[a] == protos[b]) throw ValidationError("synth: prototypes must be distinct");
}

namespace {

// Fraction of "past the boundary" at slice t; the boundary sits between
// slices b-1 and b.
double past(std::size_t t, std::size_t boundary, double softness) {
  const double offset = static_cast<double>(t) - (static_cast<double>(boundary) - 0.5);
  if (softness == 0.0) return offset > 0.0 ? 1.0 : 0.0;
  return 1.0 / (1.0 + std::exp(-offset / softness));
}

std::string stack_id(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stack-%016llx", static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace

StackSample generate_stack(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const auto protos = config.resolved_prototypes();
  Rng rng(seed);

  const auto T = static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::int64_t>(config.min_length), static_cast<std::int64_t>(config.max_length)));
  const auto m = static_cast<std::int64_t>(config.min_segment);
  const std::int64_t m_dej = config.allow_empty_dej ? 0 : m;
  const auto len = static_cast<std::int64_t>(T);
  const auto dej_start = rng.uniform_int(m, len - m_dej - m);
  const auto dermis_start = rng.uniform_int(dej_start + m_dej, len - m);
  const auto b1 = static_cast<std::size_t>(dej_start), b2 = static_cast<std::size_t>(dermis_start);

  StackSample stack;
  stack.id = stack_id(seed);
  stack.labels.resize(T);
  stack.features = Tensor::zeros(T, config.raw_dim);
  for (std::size_t t = 0; t < T; ++t) {
    stack.labels[t] = t < b1 ? kEpidermis : (t < b2 ? kDej : kDermis);
    const double s1 = past(t, b1, config.transition_softness);
    const double s2 = past(t, b2, config.transition_softness);
    const double w[kNumClasses] = {1.0 - s1, s1 * (1.0 - s2), s1 * s2};
    for (std::size_t i = 0; i < config.raw_dim; ++i) {
      const double clean = w[0] * protos[0][i] + w[1] * protos[1][i] + w[2] * protos[2][i];
      // Always drawn so boundaries and noise streams do not depend on sigma.
      const double noise = rng.normal();
      stack.features.at(t, i) = clean + config.noise_sigma * noise;
    }
  }
  return stack;
}

Dataset generate_dataset(const SynthConfig& config, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("generate_dataset: n must be at least 1");
  config.validate();
  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_stack(config, derive_seed(seed, i)));
  return out;
}

void validate_stack(const StackSample& stack) {
  const auto T = stack.labels.size();
  if (T == 0) throw ValidationError("stack '" + stack.id + "' is empty");
  if (stack.features.rows() != T) {
    throw ValidationError("stack '" + stack.id + "': " + std::to_string(stack.features.rows()) +
                          " feature rows for " + std::to_string(T) + " labels");
  }
  for (int label : stack.labels) {
    if (label < 0 || label >= static_cast<int>(kNumClasses)) {
      throw ValidationError("stack '" + stack.id + "': label " + std::to_string(label) +
                            " out of range");
    }
  }
  if (!stack.features.all_finite()) {
    throw ValidationError("stack '" + stack.id + "' has non-finite features");
  }
}

void save_dataset(const Dataset& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& s : samples) {
    validate_stack(s);
    json features = json::array();
    for (std::size_t t = 0; t < s.features.rows(); ++t) {
      const auto row = s.features.row_copy(t);
      features.push_back(row.values());
    }
    json record = {{"id", s.id}, {"features", std::move(features)}, {"labels", s.labels}};
    out << record.dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

namespace {

StackSample parse_record(const std::string& line, std::size_t line_no) {
  const auto where = "line " + std::to_string(line_no) + ": ";
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where + "malformed record (" + e.what() + ")");
  }
  try {
    if (!record.is_object()) throw ParseError(where + "record is not an object");
    StackSample s;
    s.id = record.at("id").get<std::string>();
    s.labels = record.at("labels").get<std::vector<int>>();
    const auto rows = record.at("features").get<std::vector<std::vector<double>>>();
    if (rows.empty() || rows.size() != s.labels.size()) {
      throw ParseError(where + "features and labels differ in length");
    }
    const auto width = rows.front().size();
    if (width == 0) throw ParseError(where + "empty feature vector");
    std::vector<double> flat;
    flat.reserve(rows.size() * width);
    for (const auto& r : rows) {
      if (r.size() != width) throw ParseError(where + "ragged feature rows");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    s.features = Tensor({rows.size(), width}, std::move(flat));
    validate_stack(s);
    return s;
  } catch (const json::exception& e) {
    throw ParseError(where + "bad field (" + e.what() + ")");
  } catch (const ValidationError& e) {
    throw ParseError(where + e.what());
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line, line_no));
  }
  return out;
}

}  // namespace strata
