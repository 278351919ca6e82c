#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "strata/error.hpp"
#include "strata/eval.hpp"
#include "strata/synth.hpp"
#include "strata/train.hpp"
#include "strata/verify.hpp"

namespace py = pybind11;
using namespace strata;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) {
    return Tensor({1, static_cast<std::size_t>(a.shape(0))}, std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array");
  return Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Boundary boundary_of(const std::string& s) { return parse_boundary(s); }

py::dict sample_dict(const StackSample& s) {
  py::dict d;
  d["id"] = s.id;
  d["features"] = to_array(s.features);
  d["labels"] = s.labels;
  return d;
}

StackSample sample_of(const py::dict& d) {
  StackSample s;
  s.id = d.contains("id") ? d["id"].cast<std::string>() : std::string("stack");
  s.features = to_tensor(d["features"].cast<Array>());
  s.labels = d["labels"].cast<std::vector<int>>();
  validate_stack(s);
  return s;
}

Dataset dataset_of(const py::list& items) {
  Dataset out;
  for (const auto& item : items) out.push_back(sample_of(item.cast<py::dict>()));
  return out;
}

py::list dataset_list(const Dataset& data) {
  py::list out;
  for (const auto& s : data) out.append(sample_dict(s));
  return out;
}

py::dict impossible_dict(const ImpossibleCounts& c) {
  py::dict d;
  d["epidermis_to_dermis"] = c.epidermis_to_dermis;
  d["dej_to_epidermis"] = c.dej_to_epidermis;
  d["dermis_to_epidermis"] = c.dermis_to_epidermis;
  d["dermis_to_dej"] = c.dermis_to_dej;
  d["total"] = c.total();
  return d;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["sensitivity"] = std::vector<double>(m.sensitivity.begin(), m.sensitivity.end());
  d["specificity"] = std::vector<double>(m.specificity.begin(), m.specificity.end());
  return d;
}

ModelConfig model_config(const std::string& attention, int d, const std::string& boundary,
                         std::size_t f_raw, std::size_t hidden) {
  ModelConfig m;
  m.attention = parse_attention_kind(attention);
  m.half_width = d;
  m.boundary = parse_boundary(boundary);
  m.raw_dim = f_raw;
  m.feature_dim = m.enc_hidden = m.dec_hidden = m.attn_hidden = hidden;
  m.validate();
  return m;
}

}  // namespace

PYBIND11_MODULE(_strata, m) {
  m.doc() = "Toeplitz and global attention for skin-strata sequence labeling";

  static py::exception<Error> base(m, "StrataError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base, (std::string(e.code()) + ": " + e.what()).c_str());
    }
  });

  m.def(
      "build_attention_map",
      [](const Array& weights, std::size_t length, const std::string& boundary) {
        const Tensor w = to_tensor(weights);
        return to_array(build_attention_map(w.data(), length, boundary_of(boundary)));
      },
      py::arg("weights"), py::arg("length"), py::arg("boundary") = "zero_pad",
      "Explicit T x T Toeplitz map of a convex kernel of length 2D+1.");

  m.def(
      "kernel_weights",
      [](const Array& logits) {
        const Tensor l = to_tensor(logits);
        return to_array(ToeplitzKernel{static_cast<int>(l.numel() / 2), l}.weights());
      },
      py::arg("logits"));

  m.def(
      "toeplitz_attention",
      [](const Array& encodings, const Array& logits, const std::string& boundary) {
        Graph g;
        return to_array(
            toeplitz_attention(g.constant(to_tensor(encodings)), g.constant(to_tensor(logits)), boundary_of(boundary))
                .value());
      },
      py::arg("encodings"), py::arg("logits"), py::arg("boundary") = "zero_pad",
      "Banded-convolution contexts for a T x E encoding matrix.");

  m.def(
      "count_impossible", [](const std::vector<int>& labels) { return impossible_dict(count_impossible(labels)); },
      py::arg("labels"));

  m.def(
      "confusion_matrix",
      [](const std::vector<int>& predicted, const std::vector<int>& truth) {
        return confusion_matrix(predicted, truth).counts;
      },
      py::arg("predicted"), py::arg("truth"));

  m.def(
      "metrics",
      [](const std::array<std::array<std::int64_t, 3>, 3>& counts) { return metrics_dict(metrics({counts})); },
      py::arg("confusion"));

  m.def(
      "generate_dataset",
      [](std::size_t n, std::uint64_t seed, std::size_t t_min, std::size_t t_max, std::size_t f_raw, double noise,
         double softness) {
        SynthConfig cfg;
        cfg.min_length = t_min;
        cfg.max_length = t_max;
        cfg.raw_dim = f_raw;
        cfg.noise_sigma = noise;
        cfg.transition_softness = softness;
        return dataset_list(generate_dataset(cfg, n, seed));
      },
      py::arg("n"), py::arg("seed") = 1, py::arg("t_min") = 20, py::arg("t_max") = 40, py::arg("f_raw") = 8,
      py::arg("noise") = 0.5, py::arg("softness") = 0.75);

  m.def(
      "save_dataset", [](const py::list& data, const std::filesystem::path& path) { save_dataset(dataset_of(data), path); },
      py::arg("data"), py::arg("path"));
  m.def(
      "load_dataset", [](const std::filesystem::path& path) { return dataset_list(load_dataset(path)); },
      py::arg("path"));

  py::class_<ModelCheckpoint>(m, "Checkpoint")
      .def_static(
          "load", [](const std::filesystem::path& path) { return load_checkpoint(path); }, py::arg("path"))
      .def(
          "save", [](const ModelCheckpoint& c, const std::filesystem::path& path) { save_checkpoint(c, path); },
          py::arg("path"))
      .def_property_readonly("attention", [](const ModelCheckpoint& c) { return to_string(c.config.attention); })
      .def_property_readonly("half_width", [](const ModelCheckpoint& c) { return c.config.half_width; })
      .def_property_readonly("epochs", [](const ModelCheckpoint& c) { return c.epochs; })
      .def_property_readonly("parameter_names", [](const ModelCheckpoint& c) { return c.params.names(); })
      .def(
          "parameter", [](const ModelCheckpoint& c, const std::string& name) { return to_array(c.params.get(name)); },
          py::arg("name"))
      .def(
          "predict",
          [](const ModelCheckpoint& c, const Array& features) {
            StackSample s{"stack", to_tensor(features), {}};
            s.labels.assign(s.features.rows(), 0);
            return predict(c.model(), s);
          },
          py::arg("features"))
      .def(
          "attention_map",
          [](const ModelCheckpoint& c, const Array& features) {
            StackSample s{"stack", to_tensor(features), {}};
            s.labels.assign(s.features.rows(), 0);
            return to_array(attention_map(c.model(), s));
          },
          py::arg("features"))
      .def(
          "evaluate",
          [](const ModelCheckpoint& c, const py::list& data) {
            const auto report = evaluate(c.model(), dataset_of(data));
            py::dict d = metrics_dict(report.metrics);
            d["impossible"] = impossible_dict(report.impossible);
            d["confusion"] = report.confusion.counts;
            return d;
          },
          py::arg("data"))
      .def("__eq__", [](const ModelCheckpoint& a, const ModelCheckpoint& b) { return a == b; });

  m.def(
      "train",
      [](const py::list& data, const std::string& attention, int d, const std::string& boundary, std::size_t hidden,
         std::size_t epochs, double lr, std::uint64_t seed, bool teacher_forcing) {
        const Dataset dataset = dataset_of(data);
        if (dataset.empty()) throw ValidationError("train: empty dataset");
        const auto cfg = model_config(attention, d, boundary, dataset.front().features.cols(), hidden);
        TrainConfig t;
        t.epochs = epochs;
        t.adam.lr = lr;
        t.seed = seed;
        t.teacher_forcing = teacher_forcing;
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train(cfg, t, dataset);
        }
        py::dict history;
        history["train_loss"] = result.history.train_loss;
        history["val_loss"] = result.history.val_loss;
        history["val_accuracy"] = result.history.val_accuracy;
        return py::make_tuple(result.checkpoint, history);
      },
      py::arg("data"), py::arg("attention") = "toeplitz", py::arg("d") = 1, py::arg("boundary") = "zero_pad",
      py::arg("hidden") = 8, py::arg("epochs") = 50, py::arg("lr") = 5e-3, py::arg("seed") = 1,
      py::arg("teacher_forcing") = true);

  m.def(
      "gradcheck",
      [](std::uint64_t seed, const std::string& only) {
        py::list out;
        for (const auto& c : run_gradcheck_suite(seed, only))
          out.append(py::make_tuple(c.name, c.result.max_rel_error, c.passed()));
        return out;
      },
      py::arg("seed") = 1, py::arg("only") = "");

  m.def(
      "benchmark_attention",
      [](std::size_t length, std::size_t width, int half_width, std::size_t reps) {
        const auto r = benchmark_attention(length, width, half_width, reps);
        py::dict d;
        d["max_abs_diff"] = r.max_abs_diff;
        d["conv_seconds"] = r.conv_seconds;
        d["dense_seconds"] = r.dense_seconds;
        d["speedup"] = r.speedup();
        return d;
      },
      py::arg("length"), py::arg("width"), py::arg("half_width"), py::arg("reps") = 5);
}
