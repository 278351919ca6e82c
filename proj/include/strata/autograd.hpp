#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "strata/tensor.hpp"

namespace strata {

class Graph;

/// Handle to one node of a Graph. Cheap to copy; only valid while the
/// owning graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Graph* graph() const noexcept { return graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operations. Nodes are appended in creation order, which is a
/// topological order, so the reverse sweep walks ids from high to low and
/// visits every node once. Confined to a single thread.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Differentiable leaf (a parameter).
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);

  /// Populates grad() for every node that depends on a leaf. Gradients are
  /// reset first, so calling it twice yields identical results.
  void backward(const Var& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Used by operations: appends a node whose backward closure reads
  /// grad(self) and accumulates into its parents via accumulate_grad().
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);
  Tensor& accumulate_grad(std::size_t id);

  /// Debug check: throws ValidationError if any node value is non-finite.
  void assert_finite() const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
};

enum class Boundary { zero_pad, renormalize };

// --- primitives -----------------------------------------------------------

/// C = A·B for A [m,k], B [k,n].
Var matmul(const Var& a, const Var& b);
/// Elementwise sum; b may also be a single row broadcast over the rows of a.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// 1 - a, elementwise.
Var one_minus(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
/// Stacks operands vertically; all must have the same column count.
Var concat_rows(std::span<const Var> parts);
Var concat_rows(const Var& a, const Var& b);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
/// Joins operands side by side; all must have the same row count.
Var concat_cols(std::span<const Var> parts);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var reshape(const Var& a, Shape shape);
Var sum(const Var& a);

/// Softmax over all entries of a vector (rank 1 or a single row).
/// Max-subtracted, so strictly positive for finite input.
Var softmax(const Var& x);

/// Banded convolution: out[t] = sum_k kernel[k+D] * h[t+k], k in [-D, D].
/// Rows outside [0, T) contribute nothing (zero_pad) or the remaining
/// in-range weights are rescaled to sum to one (renormalize).
Var conv1d_band(const Var& h, const Var& kernel, Boundary boundary);

/// Mean over rows of -log softmax(logits[t])[labels[t]].
Var cross_entropy(const Var& logits, std::span<const int> labels);

/// Value-level banded convolution shared by conv1d_band and the benchmark.
Tensor band_convolve(const Tensor& h, std::span<const double> kernel, Boundary boundary);

Tensor softmax_values(std::span<const double> x);

}  // namespace strata
