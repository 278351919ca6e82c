#include "strata/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "strata/error.hpp"
#include "strata/rng.hpp"

namespace strata {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_label(int label) {
  if (label < 0 || label >= static_cast<int>(kNumClasses)) {
    throw ValidationError("label " + std::to_string(label) + " out of range 0..2");
  }
}

}  // namespace

std::int64_t ConfusionMatrix::total() const noexcept {
  std::int64_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::int64_t ConfusionMatrix::trace() const noexcept {
  std::int64_t n = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) n += counts[c][c];
  return n;
}

void accumulate(ConfusionMatrix& cm, std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw ValidationError("confusion_matrix: " + std::to_string(predicted.size()) +
                          " predictions for " + std::to_string(truth.size()) + " labels");
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    check_label(predicted[i]);
    check_label(truth[i]);
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++cm.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
}

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth) {
  ConfusionMatrix cm;
  accumulate(cm, predicted, truth);
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total <= 0) throw ValidationError("metrics: empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::int64_t row = 0, col = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      row += cm.counts[c][k];
      col += cm.counts[k][c];
    }
    const auto tp = cm.counts[c][c];
    const auto fp = col - tp;
    const auto tn = total - row - col + tp;
    m.sensitivity[c] = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : kNaN;
    m.specificity[c] =
        tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : kNaN;
  }
  return m;
}

ImpossibleCounts& ImpossibleCounts::operator+=(const ImpossibleCounts& other) noexcept {
  epidermis_to_dermis += other.epidermis_to_dermis;
  dej_to_epidermis += other.dej_to_epidermis;
  dermis_to_epidermis += other.dermis_to_epidermis;
  dermis_to_dej += other.dermis_to_dej;
  return *this;
}

ImpossibleCounts count_impossible(std::span<const int> predicted) {
  for (int label : predicted) check_label(label);
  ImpossibleCounts out;
  for (std::size_t i = 1; i < predicted.size(); ++i) {
    const int from = predicted[i - 1], to = predicted[i];
    if (from == kEpidermis && to == kDermis) ++out.epidermis_to_dermis;
    else if (from == kDej && to == kEpidermis) ++out.dej_to_epidermis;
    else if (from == kDermis && to == kEpidermis) ++out.dermis_to_epidermis;
    else if (from == kDermis && to == kDej) ++out.dermis_to_dej;
  }
  return out;
}

EvalReport evaluate(const Predictor& predictor, const Dataset& dataset) {
  if (dataset.empty()) throw ValidationError("evaluate: empty dataset");
  EvalReport report;
  for (const auto& stack : dataset) {
    const auto predicted = predictor(stack);
    accumulate(report.confusion, predicted, stack.labels);
    StackResult r;
    r.id = stack.id;
    r.length = stack.length();
    for (std::size_t t = 0; t < predicted.size(); ++t) r.correct += predicted[t] == stack.labels[t];
    r.impossible = count_impossible(predicted);
    report.impossible += r.impossible;
    report.stacks.push_back(std::move(r));
  }
  report.metrics = metrics(report.confusion);
  return report;
}

EvalReport evaluate(const Model& model, const Dataset& dataset) {
  return evaluate([&model](const StackSample& s) { return predict(model, s); }, dataset);
}

namespace {

std::string percent(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string format_report(const EvalReport& report) {
  const auto& m = report.metrics;
  std::ostringstream out;
  out << "stacks: " << report.stacks.size() << "  slices: " << report.confusion.total() << "\n";
  out << "accuracy (%): " << percent(m.accuracy) << "\n\n";
  out << "class        sensitivity (%)  specificity (%)\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    char line[96];
    std::snprintf(line, sizeof line, "%-12s %15s  %15s\n", std::string(kClassNames[c]).c_str(),
                  percent(m.sensitivity[c]).c_str(), percent(m.specificity[c]).c_str());
    out << line;
  }
  out << "\nimpossible transitions\n";
  const std::int64_t counts[] = {report.impossible.epidermis_to_dermis,
                                 report.impossible.dej_to_epidermis,
                                 report.impossible.dermis_to_epidermis,
                                 report.impossible.dermis_to_dej};
  for (std::size_t i = 0; i < kImpossibleNames.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "  %-18s %lld\n", kImpossibleNames[i],
                  static_cast<long long>(counts[i]));
    out << line;
  }
  out << "  Total              " << report.impossible.total() << "\n";
  out << "\nconfusion (rows = true, cols = predicted)\n";
  for (const auto& row : report.confusion.counts) {
    out << " ";
    for (auto v : row) out << " " << v;
    out << "\n";
  }
  return out.str();
}

std::string report_json(const EvalReport& report) {
  using nlohmann::json;
  auto nullable = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json sens = json::array(), spec = json::array();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    sens.push_back(nullable(report.metrics.sensitivity[c]));
    spec.push_back(nullable(report.metrics.specificity[c]));
  }
  const auto& imp = report.impossible;
  json stacks = json::array();
  for (const auto& s : report.stacks) {
    stacks.push_back({{"id", s.id},
                      {"length", s.length},
                      {"correct", s.correct},
                      {"impossible", s.impossible.total()}});
  }
  json out = {
      {"accuracy", nullable(report.metrics.accuracy)},
      {"classes", {"epidermis", "DEJ", "dermis"}},
      {"sensitivity", sens},
      {"specificity", spec},
      {"impossible",
       {{"epidermis_to_dermis", imp.epidermis_to_dermis},
        {"dej_to_epidermis", imp.dej_to_epidermis},
        {"dermis_to_epidermis", imp.dermis_to_epidermis},
        {"dermis_to_dej", imp.dermis_to_dej}}},
      {"total_impossible", imp.total()},
      {"confusion", report.confusion.counts},
      {"stacks", stacks},
  };
  return out.dump(2);
}

void write_report(const EvalReport& report, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write '" + path.string() + "'");
  };
  write(directory / "report.txt", format_report(report));
  write(directory / "report.json", report_json(report) + "\n");
}

void export_attention_map(const Tensor& map, const std::filesystem::path& path, MapFormat format) {
  if (map.rank() != 2) throw DimensionError("attention map must be a matrix");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  if (format == MapFormat::csv) {
    char buf[40];
    for (std::size_t r = 0; r < map.rows(); ++r) {
      for (std::size_t c = 0; c < map.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", map.at(r, c));
        if (c) out << ',';
        out << buf;
      }
      out << '\n';
    }
  } else {
    double peak = 0.0;
    for (double v : map.data()) peak = std::max(peak, v);
    out << "P5\n" << map.cols() << ' ' << map.rows() << "\n255\n";
    for (double v : map.data()) {
      const double level = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) : 0.0;
      out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(255.0 * level))));
    }
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Tensor read_attention_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(rows + 1) + ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw ParseError("line " + std::to_string(rows + 1) + ": ragged row");
    ++rows;
  }
  if (rows == 0) throw ParseError("empty attention map file");
  return Tensor({rows, cols}, std::move(values));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string magic;
  int maxval = 0;
  GrayImage img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !in) throw ParseError("not an 8-bit binary PGM");
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw ParseError("truncated PGM pixel data");
  return img;
}

BenchResult benchmark_attention(std::size_t length, std::size_t width, int half_width,
                                std::size_t reps, std::uint64_t seed) {
  if (length == 0 || width == 0 || reps == 0 || half_width < 0) {
    throw ValidationError("benchmark: sizes must be positive");
  }
  Rng rng(seed);
  Tensor h = Tensor::zeros(length, width);
  for (auto& v : h.data()) v = rng.uniform(-1.0, 1.0);
  ToeplitzKernel kernel = ToeplitzKernel::uniform(half_width);
  for (auto& v : kernel.logits.data()) v = rng.uniform(-2.0, 2.0);
  const Tensor weights = kernel.weights();

  BenchResult result{length, width, half_width, reps};
  const Tensor conv = band_convolve(h, weights.data(), Boundary::zero_pad);
  const Tensor dense =
      dense_matmul(build_attention_map(weights.data(), length, Boundary::zero_pad), h);
  result.max_abs_diff = max_abs_diff(conv, dense);
  if (!(result.max_abs_diff <= 1e-9)) {
    throw Error("gate", "benchmark correctness gate failed: max |conv - dense| = " +
                            std::to_string(result.max_abs_diff));
  }

  using clock = std::chrono::steady_clock;
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::vector<double> conv_times, dense_times;
  volatile double sink = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    auto t0 = clock::now();
    const Tensor a = band_convolve(h, weights.data(), Boundary::zero_pad);
    auto t1 = clock::now();
    const Tensor b =
        dense_matmul(build_attention_map(weights.data(), length, Boundary::zero_pad), h);
    auto t2 = clock::now();
    sink = sink + a[0] + b[0];
    conv_times.push_back(std::chrono::duration<double>(t1 - t0).count());
    dense_times.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  result.conv_seconds = median(conv_times);
  result.dense_seconds = median(dense_times);
  return result;
}

}  // namespace strata
