#pragma once

// Reverse-mode automatic differentiation over dense row-major double tensors.
//
// A Graph is rebuilt for every step. Ops are free functions taking Var handles
// that remember their owning Graph; every op validates shapes, evaluates its
// value eagerly and records itself so backward() can replay the tape.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "stylelab/errors.hpp"

namespace stylelab::ad {

/// Dense tensor of rank 0, 1 or 2. Rank-1 tensors behave as a single row
/// wherever an op needs a matrix view.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data);
  static Tensor zeros_like(const Tensor& t);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty() && shape_.empty(); }

  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;
  std::vector<double> row(std::size_t r) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

enum class OpKind {
  leaf,
  matmul,
  add,
  add_row,
  sub,
  mul,
  scale,
  add_scalar,
  tanh,
  relu,
  exp,
  log,
  softmax,
  log_softmax,
  sum,
  mean,
  mean_rows,
  concat,
  slice,
  slice_cols,
  l2norm,
  rmsnorm,
  embedding_lookup,
  transpose,
  pick,
  grad_reverse,
};

const char* op_name(OpKind kind);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const noexcept { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
};

/// Gradients of one backward pass, indexed by node id.
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  bool has(Var v) const;
  /// Gradient of `v`; zeros when the loss does not depend on it.
  Tensor of(Var v) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

/// Op-specific payload attached to a graph node.
struct NodeAux {
  std::vector<std::size_t> indices;
  std::size_t begin = 0;
  std::size_t end = 0;
  double scalar = 0.0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  OpKind kind(Var v) const;
  std::span<const int> inputs(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Exact reverse-mode gradients of a scalar node. Buffers are freshly
  /// zeroed on every call, so repeated passes are bit-identical.
  Gradients backward(Var loss) const;

  using Aux = NodeAux;

  /// Records a node whose value has already been computed. Used by the op
  /// functions; not intended for direct use.
  Var record(OpKind kind, std::vector<int> inputs, Tensor value, Aux aux = {});

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<int> inputs;
    Tensor value;
    bool requires_grad = false;
    Aux aux;
  };

  void backprop_node(const Node& node, const Tensor& grad,
                     std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);

// Elementwise; `add` also broadcasts a scalar or a same-width row vector.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
/// Errors with DomainError on non-positive input.
Var log(Var a);

// Row-wise normalizers over the last axis.
Var softmax(Var a);
Var log_softmax(Var a);
/// Divides each row by its L2 norm; DomainError on a zero row.
Var l2norm(Var a);
Var rmsnorm(Var a, double eps = 1e-6);

// Reductions.
Var sum(Var a);
Var mean(Var a);
/// Column means of a matrix, producing a row vector.
Var mean_rows(Var a);

// Structural.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Rows [begin, end) of a matrix, or elements of a vector.
Var slice(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var embedding_lookup(Var table, std::span<const int> ids);
/// Element (r, indices[r]) of each row r, as a vector.
Var pick(Var a, std::span<const int> indices);
/// Identity forward; multiplies the incoming gradient by -factor.
Var grad_reverse(Var a, double factor = 1.0);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

/// Builds a scalar loss from leaf parameters placed on a fresh graph.
using LossBuilder = std::function<Var(Graph&, std::span<const Var>)>;

/// Max over all parameter elements of
/// |analytic - (f(p+h) - f(p-h)) / 2h| / (|analytic| + 1e-8).
double grad_check(const LossBuilder& f, std::vector<Tensor> params, double h);

}  // namespace stylelab::ad
