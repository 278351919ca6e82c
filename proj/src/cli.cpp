#include "strata/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "strata/error.hpp"
#include "strata/eval.hpp"
#include "strata/run_config.hpp"
#include "strata/synth.hpp"
#include "strata/train.hpp"
#include "strata/verify.hpp"

namespace strata {

namespace fs = std::filesystem;

namespace {

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string s(static_cast<std::size_t>(n), '\0');
  std::snprintf(s.data(), s.size() + 1, fmt, args...);
  return s;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << contents;
    if (!out.flush()) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into '" + path.string() + "'");
  }
}

fs::path require_path(const RunConfig& cfg, const char* key) {
  const auto& value = cfg.get(key);
  if (value.empty()) throw UsageError(std::string("missing --") + key);
  return value;
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir = require_path(cfg, "out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
  write_file_atomic(dir / "config.resolved", cfg.to_text());
  return dir;
}

Dataset load_nonempty(const RunConfig& cfg) {
  const fs::path path = require_path(cfg, "data");
  if (!fs::exists(path)) throw IoError("dataset '" + path.string() + "' does not exist");
  Dataset data = load_dataset(path);
  if (data.empty()) throw ValidationError("dataset '" + path.string() + "' is empty");
  return data;
}

ModelCheckpoint load_model(const RunConfig& cfg) {
  const fs::path path = require_path(cfg, "checkpoint");
  if (cfg.explicitly_set("attention")) {
    return load_checkpoint(path, parse_attention_kind(cfg.get("attention")));
  }
  return load_checkpoint(path);
}

// Model keys in the echoed config describe the checkpoint actually used.
void adopt_model(RunConfig& cfg, const ModelConfig& m) {
  cfg.set("attention", to_string(m.attention));
  cfg.set("d", std::to_string(m.half_width));
  cfg.set("boundary", to_string(m.boundary));
  cfg.set("input_feeding", to_string(m.input_feeding));
  cfg.set("encoder_context", to_string(m.encoder_context));
  cfg.set("f_raw", std::to_string(m.raw_dim));
  cfg.set("feature_dim", std::to_string(m.feature_dim));
  cfg.set("enc_hidden", std::to_string(m.enc_hidden));
  cfg.set("dec_hidden", std::to_string(m.dec_hidden));
  cfg.set("attn_hidden", std::to_string(m.attn_hidden));
}

int cmd_generate(const RunConfig& cfg, std::ostream& out) {
  const fs::path path = require_path(cfg, "out");
  const auto synth = cfg.synth();
  const auto n = cfg.count("n");
  if (n == 0) throw ValidationError("--n must be positive");
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  const Dataset data = generate_dataset(synth, n, seed);

  const fs::path tmp = path.string() + ".tmp";
  save_dataset(data, tmp);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move dataset into '" + path.string() + "'");
  }
  write_file_atomic(path.string() + ".config", cfg.to_text());
  out << "generated " << n << " stacks with seed " << seed << " -> " << path.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = load_nonempty(cfg);
  const auto model_cfg = cfg.model();
  const auto train_cfg = cfg.train();
  if (data.front().features.cols() != model_cfg.raw_dim) {
    throw ConfigMismatchError(format("dataset has %zu features per slice, f_raw is %zu",
                                     data.front().features.cols(), model_cfg.raw_dim));
  }
  const fs::path dir = output_dir(cfg);

  const auto result = train(model_cfg, train_cfg, data, [&](std::size_t epoch, const TrainHistory& h) {
    out << format("epoch %zu/%zu train_loss=%.6f val_loss=%.6f val_accuracy=%.4f\n", epoch,
                  train_cfg.epochs, h.train_loss.back(), h.val_loss.back(), h.val_accuracy.back());
    out.flush();
  });

  save_checkpoint(result.checkpoint, dir / "checkpoint.ckpt");
  std::string csv = "epoch,train_loss,val_loss,val_accuracy\n";
  const auto& h = result.history;
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    csv += format("%zu,%.17g,%.17g,%.17g\n", e + 1, h.train_loss[e], h.val_loss[e], h.val_accuracy[e]);
  }
  write_file_atomic(dir / "history.csv", csv);
  out << "checkpoint -> " << (dir / "checkpoint.ckpt").string() << "\n";
  return 0;
}

int cmd_eval(RunConfig cfg, std::ostream& out) {
  const Dataset data = load_nonempty(cfg);
  EvalReport report;
  if (cfg.boolean("oracle")) {
    report = evaluate([](const StackSample& s) { return s.labels; }, data);
  } else {
    const auto ckpt = load_model(cfg);
    if (data.front().features.cols() != ckpt.config.raw_dim) {
      throw ConfigMismatchError(format("dataset has %zu features per slice, checkpoint expects %zu",
                                       data.front().features.cols(), ckpt.config.raw_dim));
    }
    report = evaluate(ckpt.model(), data);
    adopt_model(cfg, ckpt.config);
  }
  if (!cfg.get("out").empty()) write_report(report, output_dir(cfg));
  out << format_report(report);
  return 0;
}

int cmd_export_attention(RunConfig cfg, std::ostream& out) {
  const auto& fmt = cfg.get("format");
  if (fmt != "pgm" && fmt != "csv") throw ValidationError("--format must be pgm or csv");
  Tensor map;
  if (!cfg.get("checkpoint").empty()) {
    const auto ckpt = load_model(cfg);
    adopt_model(cfg, ckpt.config);
    if (ckpt.config.attention == AttentionKind::toeplitz) {
      const ToeplitzKernel kernel{ckpt.config.half_width, ckpt.params.get("kernel.logits")};
      map = build_attention_map(kernel, cfg.count("t"), ckpt.config.boundary);
    } else {
      if (cfg.get("data").empty()) {
        throw UsageError("global attention maps depend on the input: pass --data and --stack");
      }
      const Dataset data = load_nonempty(cfg);
      const auto index = cfg.count("stack");
      if (index >= data.size()) {
        throw ValidationError(format("--stack %zu is out of range (dataset has %zu)", index, data.size()));
      }
      map = attention_map(ckpt.model(), data[index]);
    }
  } else {
    if (cfg.get("attention") != "toeplitz") {
      throw UsageError("global attention maps need a trained --checkpoint and a --data stack");
    }
    const auto model_cfg = cfg.model();
    map = build_attention_map(ToeplitzKernel::uniform(model_cfg.half_width), cfg.count("t"),
                              model_cfg.boundary);
  }
  const fs::path dir = output_dir(cfg);
  const fs::path path = dir / ("attention." + fmt);
  export_attention_map(map, path, fmt == "pgm" ? MapFormat::pgm : MapFormat::csv);
  out << "wrote " << map.rows() << "x" << map.cols() << " attention map -> " << path.string() << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto first = static_cast<std::uint64_t>(cfg.integer("seed"));
  const auto seeds = cfg.count("seeds");
  const auto& only = cfg.get("only");
  std::size_t checked = 0, failed = 0;
  out << format("%-26s %6s %14s  %s\n", "component", "seed", "max_rel_error", "status");
  for (std::uint64_t s = first; s < first + seeds; ++s) {
    for (const auto& check : run_gradcheck_suite(s, only)) {
      ++checked;
      if (!check.passed()) ++failed;
      out << format("%-26s %6llu %14.3e  %s\n", check.name.c_str(),
                    static_cast<unsigned long long>(s), check.result.max_rel_error,
                    check.passed() ? "PASS" : "FAIL");
    }
  }
  if (checked == 0) throw UsageError("--only '" + only + "' matches no component");
  if (failed) {
    err << "error code=gradcheck: " << failed << " of " << checked << " checks exceeded "
        << kGradCheckTolerance << "\n";
    return 1;
  }
  out << "all " << checked << " checks below " << kGradCheckTolerance << "\n";
  return 0;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  const auto reps = cfg.count("reps");
  if (reps == 0) throw ValidationError("--reps must be positive");
  const auto width = cfg.count("bench_e");
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  out << format("%6s %4s %4s %12s %12s %9s %11s\n", "T", "E", "D", "conv_s", "dense_s", "speedup",
                "max_diff");
  for (const auto T : cfg.list("bench_t")) {
    for (const auto D : cfg.list("bench_d")) {
      if (T <= 0 || D < 0) throw ValidationError("bench lengths must be positive, widths non-negative");
      const auto r = benchmark_attention(static_cast<std::size_t>(T), width, static_cast<int>(D),
                                         reps, seed);
      out << format("%6zu %4zu %4d %12.3e %12.3e %8.1fx %11.2e\n", r.length, r.width, r.half_width,
                    r.conv_seconds, r.dense_seconds, r.speedup(), r.max_abs_diff);
      out.flush();
    }
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequence labeling of skin strata with Toeplitz and global attention", "strata"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> flags;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"generate", "write a synthetic dataset (--out file)"},
      {"train", "train a model on --data into the --out directory"},
      {"eval", "evaluate a --checkpoint (or --oracle) on --data"},
      {"export-attention", "write an attention map as PGM or CSV"},
      {"gradcheck", "finite-difference check of every layer and both models"},
      {"bench", "time banded convolution against the dense attention map"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value file; flags override it");
    for (const auto& key : config_schema()) {
      std::string desc(key.help);
      desc += " [default: " + std::string(key.default_value) + "]";
      sub->add_option("--" + std::string(key.name), flags[std::string(key.name)], desc);
    }
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error code=usage: " << e.what() << "\n";
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) {
        err << sub->help();
        return 2;
      }
    }
    err << app.help();
    return 2;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::load(config_path);
    for (const auto& key : config_schema()) {
      const std::string name(key.name);
      if (active->count("--" + name) > 0) cfg.set(name, flags[name]);
    }
    const std::string command = active->get_name();
    if (command == "generate") return cmd_generate(cfg, out);
    if (command == "train") return cmd_train(cfg, out);
    if (command == "eval") return cmd_eval(cfg, out);
    if (command == "export-attention") return cmd_export_attention(cfg, out);
    if (command == "gradcheck") return cmd_gradcheck(cfg, out, err);
    return cmd_bench(cfg, out);
  } catch (const UsageError& e) {
    err << "error code=" << e.code() << ": " << e.what() << "\n" << active->help();
    return 2;
  } catch (const Error& e) {
    err << "error code=" << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error code=internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace strata
