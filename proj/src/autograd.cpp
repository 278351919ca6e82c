#include "strata/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "strata/error.hpp"

namespace strata {

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }

Var Graph::leaf(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& p : parents) {
    if (p.graph() != this) throw UsageError("operand belongs to a different graph");
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::accumulate_grad(std::size_t id) {
  auto& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

const Tensor& Graph::grad(std::size_t id) const {
  const auto& node = nodes_[id];
  if (!node.has_grad) {
    throw UsageError("node " + std::to_string(id) + " has no gradient; call backward first");
  }
  return node.grad;
}

void Graph::backward(const Var& loss) {
  if (loss.graph() != this) throw UsageError("loss belongs to a different graph");
  if (loss.value().numel() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (auto& node : nodes_) {
    node.grad = Tensor();
    node.has_grad = false;
  }
  accumulate_grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (node.requires_grad && node.has_grad && node.backward) node.backward(*this, id);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].requires_grad) accumulate_grad(id);
  }
}

void Graph::assert_finite() const {
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].value.all_finite()) {
      throw ValidationError("non-finite value at graph node " + std::to_string(id));
    }
  }
}

namespace {

void check_same_graph(const Var& a, const Var& b) {
  if (!a.valid() || a.graph() != b.graph()) throw UsageError("operands must share one graph");
}

void check_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = fwd(v);
  const auto ia = a.id();
  Var parents[] = {a};
  return a.graph()->record(std::move(out), parents, [ia, deriv](Graph& g, std::size_t self) {
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    auto& ga = g.accumulate_grad(ia);
    for (std::size_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * deriv(y[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  check_same_graph(a, b);
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  Tensor out = dense_matmul(a.value(), b.value());
  const auto ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& gc = g.grad(self);
    if (g.requires_grad(ia)) {
      const auto& bv = g.value(ib);
      auto& ga = g.accumulate_grad(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gc.at(i, j) * bv.at(p, j);
          ga.at(i, p) += acc;
        }
    }
    if (g.requires_grad(ib)) {
      const auto& av = g.value(ia);
      auto& gb = g.accumulate_grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av.at(i, p);
          for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += aip * gc.at(i, j);
        }
    }
  });
}

namespace {

Var add_scaled(const Var& a, const Var& b, double sign, const char* name) {
  check_same_graph(a, b);
  const bool broadcast = b.rows() == 1 && a.rows() > 1 && a.cols() == b.cols();
  if (!broadcast) check_same_shape(name, a, b);
  Tensor out = a.value();
  const auto& bv = b.value();
  const auto cols = a.cols();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += sign * bv[broadcast ? i % cols : i];
  const auto ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& gy = g.grad(self);
    if (g.requires_grad(ia)) {
      auto& ga = g.accumulate_grad(ia);
      for (std::size_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
    }
    if (g.requires_grad(ib)) {
      auto& gb = g.accumulate_grad(ib);
      for (std::size_t i = 0; i < gy.numel(); ++i) gb[broadcast ? i % cols : i] += sign * gy[i];
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return add_scaled(a, b, 1.0, "add"); }
Var sub(const Var& a, const Var& b) { return add_scaled(a, b, -1.0, "sub"); }

Var hadamard(const Var& a, const Var& b) {
  check_same_graph(a, b);
  check_same_shape("hadamard", a, b);
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return a.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& gy = g.grad(self);
    if (g.requires_grad(ia)) {
      const auto& bv = g.value(ib);
      auto& ga = g.accumulate_grad(ia);
      for (std::size_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      const auto& av = g.value(ia);
      auto& gb = g.accumulate_grad(ib);
      for (std::size_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  const auto ia = a.id();
  Var parents[] = {a};
  return a.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& ga = g.accumulate_grad(ia);
    for (std::size_t i = 0; i < gy.numel(); ++i) ga[i] += factor * gy[i];
  });
}

Var one_minus(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = 1.0 - v;
  const auto ia = a.id();
  Var parents[] = {a};
  return a.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& ga = g.accumulate_grad(ia);
    for (std::size_t i = 0; i < gy.numel(); ++i) ga[i] -= gy[i];
  });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const auto cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    check_same_graph(parts[0], p);
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    const auto v = p.value().data();
    data.insert(data.end(), v.begin(), v.end());
    ids.push_back(p.id());
  }
  return parts[0].graph()->record(
      Tensor({rows, cols}, std::move(data)), parts,
      [ids = std::move(ids)](Graph& g, std::size_t self) {
        const auto& gy = g.grad(self);
        std::size_t offset = 0;
        for (auto id : ids) {
          const auto n = g.value(id).numel();
          if (g.requires_grad(id)) {
            auto& gp = g.accumulate_grad(id);
            for (std::size_t i = 0; i < n; ++i) gp[i] += gy[offset + i];
          }
          offset += n;
        }
      });
}

Var concat_rows(const Var& a, const Var& b) {
  const Var parts[] = {a, b};
  return concat_rows(parts);
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > a.rows()) {
    throw DimensionError("slice_rows: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + std::to_string(a.rows()) + " rows");
  }
  const auto cols = a.cols();
  const auto src = a.value().data();
  std::vector<double> data(src.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           src.begin() + static_cast<std::ptrdiff_t>(end * cols));
  Shape shape = a.value().rank() == 1 ? Shape{cols} : Shape{end - begin, cols};
  const auto ia = a.id();
  Var parents[] = {a};
  return a.graph()->record(Tensor(std::move(shape), std::move(data)), parents,
                           [=](Graph& g, std::size_t self) {
                             const auto& gy = g.grad(self);
                             auto& ga = g.accumulate_grad(ia);
                             for (std::size_t i = 0; i < gy.numel(); ++i)
                               ga[begin * cols + i] += gy[i];
                           });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const auto rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    check_same_graph(parts[0], p);
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out.at(r, offset + c) = v.at(r, c);
    offset += v.cols();
    ids.push_back(p.id());
  }
  return parts[0].graph()->record(
      std::move(out), parts, [ids = std::move(ids), rows](Graph& g, std::size_t self) {
        const auto& gy = g.grad(self);
        std::size_t offset = 0;
        for (auto id : ids) {
          const auto pc = g.value(id).cols();
          if (g.requires_grad(id)) {
            auto& gp = g.accumulate_grad(id);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < pc; ++c) gp.at(r, c) += gy.at(r, offset + c);
          }
          offset += pc;
        }
      });
}

Var concat_cols(const Var& a, const Var& b) {
  const Var parts[] = {a, b};
  return concat_cols(parts);
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > a.cols()) {
    throw DimensionError("slice_cols: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + std::to_string(a.cols()) + " columns");
  }
  const auto rows = a.rows(), width = end - begin;
  Tensor out = Tensor::zeros(rows, width);
  const auto& av = a.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = av.at(r, begin + c);
  const auto ia = a.id();
  Var parents[] = {a};
  return a.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& ga = g.accumulate_grad(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) ga.at(r, begin + c) += gy.at(r, c);
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out(std::move(shape), a.value().values());
  const auto ia = a.id();
  Var parents[] = {a};
  return a.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& ga = g.accumulate_grad(ia);
    for (std::size_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const auto ia = a.id();
  Var parents[] = {a};
  return a.graph()->record(Tensor({1}, {total}), parents, [=](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    auto& ga = g.accumulate_grad(ia);
    for (auto& v : ga.data()) v += gy;
  });
}

Tensor softmax_values(std::span<const double> x) {
  if (x.empty()) throw DimensionError("softmax: empty input");
  const double peak = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  const auto n = out.size();
  return Tensor({n}, std::move(out));
}

Var softmax(const Var& x) {
  if (x.rows() != 1) {
    throw DimensionError("softmax expects a vector, got " + shape_string(x.shape()));
  }
  Tensor out(x.shape(), softmax_values(x.value().data()).values());
  const auto ix = x.id();
  Var parents[] = {x};
  return x.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) dot += gy[i] * y[i];
    auto& gx = g.accumulate_grad(ix);
    for (std::size_t i = 0; i < y.numel(); ++i) gx[i] += y[i] * (gy[i] - dot);
  });
}

namespace {

std::size_t check_band(std::size_t rows, std::size_t kernel_len) {
  if (kernel_len % 2 == 0) {
    throw DimensionError("band kernel length must be odd (2D+1), got " + std::to_string(kernel_len));
  }
  const auto half = (kernel_len - 1) / 2;
  if (rows == 0 || half > rows - 1) {
    throw DimensionError("band kernel of length " + std::to_string(kernel_len) +
                         " exceeds 2T-1 for T=" + std::to_string(rows));
  }
  return half;
}

// In-range kernel taps for output row t: k in [lo, hi).
struct Taps {
  std::size_t lo, hi;
};

Taps taps_for(std::size_t t, std::size_t rows, std::size_t half) {
  const std::size_t lo = t < half ? half - t : 0;
  const std::size_t hi = std::min(2 * half + 1, rows + half - t);
  return {lo, hi};
}

}  // namespace

Tensor band_convolve(const Tensor& h, std::span<const double> kernel, Boundary boundary) {
  const auto rows = h.rows(), cols = h.cols();
  const auto half = check_band(rows, kernel.size());
  Tensor out = Tensor::zeros(rows, cols);
  for (std::size_t t = 0; t < rows; ++t) {
    const auto [lo, hi] = taps_for(t, rows, half);
    double* dst = &out.at(t, 0);
    const double* src = h.data().data() + (t + lo - half) * cols;
    const double w0 = kernel[lo];
    for (std::size_t e = 0; e < cols; ++e) dst[e] = w0 * src[e];
    double norm = w0;
    for (std::size_t k = lo + 1; k < hi; ++k) {
      const double w = kernel[k];
      src = h.data().data() + (t + k - half) * cols;
      for (std::size_t e = 0; e < cols; ++e) dst[e] += w * src[e];
      norm += w;
    }
    if (boundary == Boundary::renormalize) {
      for (std::size_t e = 0; e < cols; ++e) dst[e] /= norm;
    }
  }
  return out;
}

Var conv1d_band(const Var& h, const Var& kernel, Boundary boundary) {
  check_same_graph(h, kernel);
  if (kernel.rows() != 1) throw DimensionError("conv1d_band: kernel must be a vector");
  const auto rows = h.rows(), cols = h.cols();
  const auto half = check_band(rows, kernel.value().numel());
  Tensor out = band_convolve(h.value(), kernel.value().data(), boundary);
  const auto ih = h.id(), ik = kernel.id();
  Var parents[] = {h, kernel};
  return h.graph()->record(std::move(out), parents, [=](Graph& g, std::size_t self) {
    const auto& gy = g.grad(self);
    const auto& y = g.value(self);
    const auto& hv = g.value(ih);
    const auto& w = g.value(ik);
    const bool want_h = g.requires_grad(ih), want_k = g.requires_grad(ik);
    Tensor* gh = want_h ? &g.accumulate_grad(ih) : nullptr;
    Tensor* gk = want_k ? &g.accumulate_grad(ik) : nullptr;
    for (std::size_t t = 0; t < rows; ++t) {
      const auto [lo, hi] = taps_for(t, rows, half);
      double norm = 1.0;
      if (boundary == Boundary::renormalize) {
        norm = 0.0;
        for (std::size_t k = lo; k < hi; ++k) norm += w[k];
      }
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t s = t + k - half;
        if (gh) {
          const double coef = w[k] / norm;
          for (std::size_t e = 0; e < cols; ++e) gh->at(s, e) += coef * gy.at(t, e);
        }
        if (gk) {
          double acc = 0.0;
          if (boundary == Boundary::renormalize) {
            for (std::size_t e = 0; e < cols; ++e) acc += gy.at(t, e) * (hv.at(s, e) - y.at(t, e));
            acc /= norm;
          } else {
            for (std::size_t e = 0; e < cols; ++e) acc += gy.at(t, e) * hv.at(s, e);
          }
          (*gk)[k] += acc;
        }
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const auto rows = logits.rows(), classes = logits.cols();
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ValidationError("cross_entropy: label " + std::to_string(label) + " out of range");
    }
  }
  const auto& z = logits.value();
  Tensor probs = Tensor::zeros(rows, classes);
  double total = 0.0;
  for (std::size_t t = 0; t < rows; ++t) {
    double peak = z.at(t, 0);
    for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, z.at(t, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs.at(t, c) = std::exp(z.at(t, c) - peak);
      denom += probs.at(t, c);
    }
    for (std::size_t c = 0; c < classes; ++c) probs.at(t, c) /= denom;
    total += peak + std::log(denom) - z.at(t, static_cast<std::size_t>(labels[t]));
  }
  std::vector<int> targets(labels.begin(), labels.end());
  const auto il = logits.id();
  Var parents[] = {logits};
  return logits.graph()->record(
      Tensor({1}, {total / static_cast<double>(rows)}), parents,
      [=, probs = std::move(probs), targets = std::move(targets)](Graph& g, std::size_t self) {
        const double gy = g.grad(self)[0] / static_cast<double>(rows);
        auto& gl = g.accumulate_grad(il);
        for (std::size_t t = 0; t < rows; ++t) {
          for (std::size_t c = 0; c < classes; ++c) {
            const double target = static_cast<int>(c) == targets[t] ? 1.0 : 0.0;
            gl.at(t, c) += gy * (probs.at(t, c) - target);
          }
        }
      });
}

}  // namespace strata
