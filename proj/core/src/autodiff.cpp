#include "stylelab/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stylelab::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Graph& graph_of(Var v) {
  if (!v.valid()) throw ContractError("use of an invalid Var");
  return *v.graph;
}

Graph& common_graph(Var a, Var b) {
  graph_of(a);
  graph_of(b);
  if (a.graph != b.graph) {
    throw ContractError("operands belong to different graphs");
  }
  return *a.graph;
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

void require_rank_at_least_one(const char* op, const Tensor& a) {
  if (a.rank() == 0) {
    throw ShapeError(std::string(op) + ": needs a vector or matrix operand");
  }
}

Tensor with_shape_of(const Tensor& like, std::vector<double> data) {
  return Tensor(like.shape(), std::move(data));
}

template <typename F>
Var unary(Var a, OpKind kind, F&& f) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return g.record(kind, {a.id}, with_shape_of(x, std::move(out)));
}

void accumulate(std::vector<Tensor>& grads, int id, const Tensor& shape_like,
                auto&& fill) {
  Tensor& dst = grads[static_cast<std::size_t>(id)];
  if (dst.empty()) dst = Tensor::zeros_like(shape_like);
  fill(dst);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {
  if (shape_.size() > 2) throw ShapeError("tensors are limited to rank 2");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 2) throw ShapeError("tensors are limited to rank 2");
  if (product(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape()); }

std::size_t Tensor::rows() const noexcept {
  return shape_.size() == 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

std::vector<double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return {data_.begin() + static_cast<std::ptrdiff_t>(r * c),
          data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_row: return "add_row";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::tanh: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::l2norm: return "l2norm";
    case OpKind::rmsnorm: return "rmsnorm";
    case OpKind::embedding_lookup: return "embedding_lookup";
    case OpKind::transpose: return "transpose";
    case OpKind::pick: return "pick";
    case OpKind::grad_reverse: return "grad_reverse";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Graph

const Tensor& Var::value() const { return graph_of(*this).value(*this); }

bool Gradients::has(Var v) const {
  return v.id >= 0 && static_cast<std::size_t>(v.id) < grads_.size() &&
         !grads_[static_cast<std::size_t>(v.id)].empty();
}

Tensor Gradients::of(Var v) const {
  if (has(v)) return grads_[static_cast<std::size_t>(v.id)];
  return Tensor::zeros_like(v.value());
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf holds non-finite values");
  Node node;
  node.kind = OpKind::leaf;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::record(OpKind kind, std::vector<int> inputs, Tensor value, Aux aux) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output from ") + op_name(kind));
  }
  Node node;
  node.kind = kind;
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](int id) {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  });
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  node.aux = std::move(aux);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const {
  if (v.graph != this || v.id < 0 ||
      static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("Var does not belong to this graph");
  }
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

bool Graph::requires_grad(Var v) const {
  value(v);
  return nodes_[static_cast<std::size_t>(v.id)].requires_grad;
}

OpKind Graph::kind(Var v) const {
  value(v);
  return nodes_[static_cast<std::size_t>(v.id)].kind;
}

std::span<const int> Graph::inputs(Var v) const {
  value(v);
  return nodes_[static_cast<std::size_t>(v.id)].inputs;
}

Gradients Graph::backward(Var loss) const {
  const Tensor& out = value(loss);
  if (out.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(out.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.id)] = Tensor(out.shape(), {1.0});
  for (int id = loss.id; id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    if (g.empty() || !node.requires_grad || node.kind == OpKind::leaf) continue;
    backprop_node(node, g, grads);
  }
  return Gradients(std::move(grads));
}

void Graph::backprop_node(const Node& node, const Tensor& g,
                          std::vector<Tensor>& grads) const {
  auto in = [&](std::size_t k) -> const Node& {
    return nodes_[static_cast<std::size_t>(node.inputs[k])];
  };
  auto wants = [&](std::size_t k) { return in(k).requires_grad; };
  auto id = [&](std::size_t k) { return node.inputs[k]; };
  const Tensor& y = node.value;

  switch (node.kind) {
    case OpKind::leaf:
      return;
    case OpKind::matmul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      ConstMap G(g.data().data(), static_cast<Eigen::Index>(a.rows()),
                 static_cast<Eigen::Index>(b.cols()));
      ConstMap B(b.data().data(), static_cast<Eigen::Index>(b.rows()),
                 static_cast<Eigen::Index>(b.cols()));
      ConstMap A(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                 static_cast<Eigen::Index>(a.cols()));
      if (wants(0)) {
        accumulate(grads, id(0), a, [&](Tensor& d) {
          MutMap D(d.data().data(), static_cast<Eigen::Index>(a.rows()),
                   static_cast<Eigen::Index>(a.cols()));
          D.noalias() += G * B.transpose();
        });
      }
      if (wants(1)) {
        accumulate(grads, id(1), b, [&](Tensor& d) {
          MutMap D(d.data().data(), static_cast<Eigen::Index>(b.rows()),
                   static_cast<Eigen::Index>(b.cols()));
          D.noalias() += A.transpose() * G;
        });
      }
      return;
    }
    case OpKind::transpose: {
      const Tensor& a = in(0).value;
      accumulate(grads, id(0), a, [&](Tensor& d) {
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) d.at(r, c) += g.at(c, r);
      });
      return;
    }
    case OpKind::add:
    case OpKind::sub: {
      const double sign = node.kind == OpKind::sub ? -1.0 : 1.0;
      if (wants(0)) {
        accumulate(grads, id(0), in(0).value, [&](Tensor& d) {
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        });
      }
      if (wants(1)) {
        accumulate(grads, id(1), in(1).value, [&](Tensor& d) {
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += sign * g[i];
        });
      }
      return;
    }
    case OpKind::add_row: {
      if (wants(0)) {
        accumulate(grads, id(0), in(0).value, [&](Tensor& d) {
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        });
      }
      if (wants(1)) {
        const std::size_t cols = y.cols();
        accumulate(grads, id(1), in(1).value, [&](Tensor& d) {
          for (std::size_t i = 0; i < g.size(); ++i) d[i % cols] += g[i];
        });
      }
      return;
    }
    case OpKind::mul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      if (wants(0)) {
        accumulate(grads, id(0), a, [&](Tensor& d) {
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * b[i];
        });
      }
      if (wants(1)) {
        accumulate(grads, id(1), b, [&](Tensor& d) {
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * a[i];
        });
      }
      return;
    }
    case OpKind::scale:
    case OpKind::grad_reverse: {
      const double f = node.kind == OpKind::scale ? node.aux.scalar
                                                  : -node.aux.scalar;
      accumulate(grads, id(0), in(0).value, [&](Tensor& d) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += f * g[i];
      });
      return;
    }
    case OpKind::add_scalar: {
      accumulate(grads, id(0), in(0).value, [&](Tensor& d) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      });
      return;
    }
    case OpKind::tanh: {
      accumulate(grads, id(0), y, [&](Tensor& d) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
      });
      return;
    }
    case OpKind::relu: {
      const Tensor& x = in(0).value;
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += x[i] > 0.0 ? g[i] : 0.0;
      });
      return;
    }
    case OpKind::exp: {
      accumulate(grads, id(0), y, [&](Tensor& d) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
      });
      return;
    }
    case OpKind::log: {
      const Tensor& x = in(0).value;
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] / x[i];
      });
      return;
    }
    case OpKind::softmax: {
      const std::size_t rows = y.rows(), cols = y.cols();
      accumulate(grads, id(0), y, [&](Tensor& d) {
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            d[i] += y[i] * (g[i] - dot);
          }
        }
      });
      return;
    }
    case OpKind::log_softmax: {
      const std::size_t rows = y.rows(), cols = y.cols();
      accumulate(grads, id(0), y, [&](Tensor& d) {
        for (std::size_t r = 0; r < rows; ++r) {
          double total = 0.0;
          for (std::size_t c = 0; c < cols; ++c) total += g[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            d[i] += g[i] - std::exp(y[i]) * total;
          }
        }
      });
      return;
    }
    case OpKind::l2norm: {
      // y = x / |x|  =>  dx = (g - y (y.g)) / |x|
      const Tensor& x = in(0).value;
      const std::size_t rows = y.rows(), cols = y.cols();
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t r = 0; r < rows; ++r) {
          double norm = 0.0, dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            norm += x[i] * x[i];
            dot += y[i] * g[i];
          }
          norm = std::sqrt(norm);
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            d[i] += (g[i] - y[i] * dot) / norm;
          }
        }
      });
      return;
    }
    case OpKind::rmsnorm: {
      // y = x * s, s = (mean(x^2) + eps)^-1/2  =>  dx = s g - s^3 x (x.g) / n
      const Tensor& x = in(0).value;
      const std::size_t rows = y.rows(), cols = y.cols();
      const double eps = node.aux.scalar;
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t r = 0; r < rows; ++r) {
          double ms = 0.0, dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            ms += x[i] * x[i];
            dot += x[i] * g[i];
          }
          ms = ms / static_cast<double>(cols) + eps;
          const double s = 1.0 / std::sqrt(ms);
          const double k = s * s * s * dot / static_cast<double>(cols);
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            d[i] += s * g[i] - k * x[i];
          }
        }
      });
      return;
    }
    case OpKind::sum:
    case OpKind::mean: {
      const Tensor& x = in(0).value;
      const double f = node.kind == OpKind::mean ? 1.0 / static_cast<double>(x.size())
                                                 : 1.0;
      const double gv = g[0] * f;
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv;
      });
      return;
    }
    case OpKind::mean_rows: {
      const Tensor& x = in(0).value;
      const std::size_t rows = x.rows(), cols = x.cols();
      const double f = 1.0 / static_cast<double>(rows);
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] += f * g[c];
      });
      return;
    }
    case OpKind::concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& part = in(k).value;
        if (wants(k)) {
          accumulate(grads, id(k), part, [&](Tensor& d) {
            for (std::size_t i = 0; i < part.size(); ++i) d[i] += g[offset + i];
          });
        }
        offset += part.size();
      }
      return;
    }
    case OpKind::slice: {
      const Tensor& x = in(0).value;
      const std::size_t start = node.aux.begin * (x.rank() == 2 ? x.cols() : 1);
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t i = 0; i < g.size(); ++i) d[start + i] += g[i];
      });
      return;
    }
    case OpKind::slice_cols: {
      const Tensor& x = in(0).value;
      const std::size_t width = node.aux.end - node.aux.begin;
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < width; ++c)
            d[r * x.cols() + node.aux.begin + c] += g[r * width + c];
      });
      return;
    }
    case OpKind::embedding_lookup: {
      const Tensor& table = in(0).value;
      const std::size_t cols = table.cols();
      accumulate(grads, id(0), table, [&](Tensor& d) {
        for (std::size_t r = 0; r < node.aux.indices.size(); ++r) {
          const std::size_t src = node.aux.indices[r];
          for (std::size_t c = 0; c < cols; ++c) d[src * cols + c] += g[r * cols + c];
        }
      });
      return;
    }
    case OpKind::pick: {
      const Tensor& x = in(0).value;
      const std::size_t cols = x.cols();
      accumulate(grads, id(0), x, [&](Tensor& d) {
        for (std::size_t r = 0; r < node.aux.indices.size(); ++r)
          d[r * cols + node.aux.indices[r]] += g[r];
      });
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  Graph& g = common_graph(a, b);
  const Tensor& x = g.value(a);
  const Tensor& w = g.value(b);
  if (x.rank() == 0 || w.rank() != 2 || x.cols() != w.rows()) {
    shape_fail("matmul", x, w);
  }
  const std::size_t m = x.rows(), n = w.cols();
  std::vector<double> out(m * n);
  MutMap Y(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  Y.noalias() = ConstMap(x.data().data(), static_cast<Eigen::Index>(m),
                         static_cast<Eigen::Index>(x.cols())) *
                ConstMap(w.data().data(), static_cast<Eigen::Index>(w.rows()),
                         static_cast<Eigen::Index>(n));
  std::vector<std::size_t> shape =
      x.rank() == 2 ? std::vector<std::size_t>{m, n} : std::vector<std::size_t>{n};
  return g.record(OpKind::matmul, {a.id, b.id}, Tensor(std::move(shape), std::move(out)));
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  if (x.rank() != 2) throw ShapeError("transpose needs a matrix");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.at(i, j);
  return g.record(OpKind::transpose, {a.id}, Tensor({c, r}, std::move(out)));
}

Var add(Var a, Var b) {
  Graph& g = common_graph(a, b);
  const Tensor& x = g.value(a);
  const Tensor& y = g.value(b);
  if (x.shape() == y.shape()) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return g.record(OpKind::add, {a.id, b.id}, with_shape_of(x, std::move(out)));
  }
  if (x.rank() == 2 && y.rank() == 1 && y.size() == x.cols()) {
    std::vector<double> out(x.size());
    const std::size_t cols = x.cols();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i % cols];
    return g.record(OpKind::add_row, {a.id, b.id}, with_shape_of(x, std::move(out)));
  }
  shape_fail("add", x, y);
}

Var sub(Var a, Var b) {
  Graph& g = common_graph(a, b);
  const Tensor& x = g.value(a);
  const Tensor& y = g.value(b);
  if (x.shape() != y.shape()) shape_fail("sub", x, y);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return g.record(OpKind::sub, {a.id, b.id}, with_shape_of(x, std::move(out)));
}

Var mul(Var a, Var b) {
  Graph& g = common_graph(a, b);
  const Tensor& x = g.value(a);
  const Tensor& y = g.value(b);
  if (x.shape() != y.shape()) shape_fail("mul", x, y);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return g.record(OpKind::mul, {a.id, b.id}, with_shape_of(x, std::move(out)));
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  Graph::Aux aux;
  aux.scalar = factor;
  return g.record(OpKind::scale, {a.id}, with_shape_of(x, std::move(out)), std::move(aux));
}

Var add_scalar(Var a, double value) {
  return unary(a, OpKind::add_scalar, [value](double v) { return v + value; });
}

Var tanh(Var a) {
  return unary(a, OpKind::tanh, [](double v) { return std::tanh(v); });
}

Var relu(Var a) {
  return unary(a, OpKind::relu, [](double v) { return v > 0.0 ? v : 0.0; });
}

Var exp(Var a) {
  return unary(a, OpKind::exp, [](double v) { return std::exp(v); });
}

Var log(Var a) {
  const Tensor& x = graph_of(a).value(a);
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  }
  return unary(a, OpKind::log, [](double v) { return std::log(v); });
}

Var softmax(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  require_rank_at_least_one("softmax", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return g.record(OpKind::softmax, {a.id}, with_shape_of(x, std::move(out)));
}

Var log_softmax(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  require_rank_at_least_one("log_softmax", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - lse;
  }
  return g.record(OpKind::log_softmax, {a.id}, with_shape_of(x, std::move(out)));
}

Var l2norm(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  require_rank_at_least_one("l2norm", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    for (std::size_t c = 0; c < cols; ++c) norm += x[r * cols + c] * x[r * cols + c];
    if (!(norm > 0.0)) throw DomainError("l2norm of a zero vector");
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] / norm;
  }
  return g.record(OpKind::l2norm, {a.id}, with_shape_of(x, std::move(out)));
}

Var rmsnorm(Var a, double eps) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  require_rank_at_least_one("rmsnorm", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double ms = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ms += x[r * cols + c] * x[r * cols + c];
    const double s = 1.0 / std::sqrt(ms / static_cast<double>(cols) + eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] * s;
  }
  Graph::Aux aux;
  aux.scalar = eps;
  return g.record(OpKind::rmsnorm, {a.id}, with_shape_of(x, std::move(out)), std::move(aux));
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  double total = 0.0;
  for (double v : x.data()) total += v;
  return g.record(OpKind::sum, {a.id}, Tensor::scalar(total));
}

Var mean(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  double total = 0.0;
  for (double v : x.data()) total += v;
  return g.record(OpKind::mean, {a.id},
                  Tensor::scalar(total / static_cast<double>(x.size())));
}

Var mean_rows(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  require_rank_at_least_one("mean_rows", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (rows == 0) throw ShapeError("mean_rows of an empty matrix");
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += x[r * cols + c];
  for (double& v : out) v /= static_cast<double>(rows);
  return g.record(OpKind::mean_rows, {a.id}, Tensor::vector(std::move(out)));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Graph& g = graph_of(parts[0]);
  const std::size_t cols = g.value(parts[0]).cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  std::vector<double> out;
  for (Var p : parts) {
    if (p.graph != &g) throw ContractError("concat across graphs");
    const Tensor& t = g.value(p);
    if (t.rank() == 0 || t.cols() != cols) shape_fail("concat", g.value(parts[0]), t);
    rows += t.rows();
    out.insert(out.end(), t.data().begin(), t.data().end());
    ids.push_back(p.id);
  }
  return g.record(OpKind::concat, std::move(ids), Tensor({rows, cols}, std::move(out)));
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  require_rank_at_least_one("slice", x);
  const std::size_t extent = x.rank() == 2 ? x.rows() : x.size();
  if (begin >= end || end > extent) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t width = x.rank() == 2 ? x.cols() : 1;
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * width),
                          x.data().begin() + static_cast<std::ptrdiff_t>(end * width));
  std::vector<std::size_t> shape = x.rank() == 2
                                       ? std::vector<std::size_t>{end - begin, width}
                                       : std::vector<std::size_t>{end - begin};
  Graph::Aux aux;
  aux.begin = begin;
  aux.end = end;
  return g.record(OpKind::slice, {a.id}, Tensor(std::move(shape), std::move(out)),
                  std::move(aux));
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  require_rank_at_least_one("slice_cols", x);
  if (begin >= end || end > x.cols()) {
    throw ShapeError("slice_cols out of range for " + shape_string(x.shape()));
  }
  const std::size_t width = end - begin;
  std::vector<double> out;
  out.reserve(x.rows() * width);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out.push_back(x.at(r, c));
  std::vector<std::size_t> shape = x.rank() == 2
                                       ? std::vector<std::size_t>{x.rows(), width}
                                       : std::vector<std::size_t>{width};
  Graph::Aux aux;
  aux.begin = begin;
  aux.end = end;
  return g.record(OpKind::slice_cols, {a.id}, Tensor(std::move(shape), std::move(out)),
                  std::move(aux));
}

Var embedding_lookup(Var table, std::span<const int> ids) {
  Graph& g = graph_of(table);
  const Tensor& t = g.value(table);
  if (t.rank() != 2) throw ShapeError("embedding table must be a matrix");
  if (ids.empty()) throw ShapeError("embedding_lookup of no ids");
  const std::size_t cols = t.cols();
  Graph::Aux aux;
  std::vector<double> out;
  out.reserve(ids.size() * cols);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= t.rows()) {
      throw ShapeError("embedding id " + std::to_string(id) + " out of range");
    }
    const auto row = static_cast<std::size_t>(id);
    aux.indices.push_back(row);
    out.insert(out.end(), t.data().begin() + static_cast<std::ptrdiff_t>(row * cols),
               t.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * cols));
  }
  return g.record(OpKind::embedding_lookup, {table.id},
                  Tensor({ids.size(), cols}, std::move(out)), std::move(aux));
}

Var pick(Var a, std::span<const int> indices) {
  Graph& g = graph_of(a);
  const Tensor& x = g.value(a);
  require_rank_at_least_one("pick", x);
  if (indices.size() != x.rows()) {
    throw ShapeError("pick needs one index per row");
  }
  Graph::Aux aux;
  std::vector<double> out;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || static_cast<std::size_t>(indices[r]) >= x.cols()) {
      throw ShapeError("pick index out of range");
    }
    aux.indices.push_back(static_cast<std::size_t>(indices[r]));
    out.push_back(x.at(r, aux.indices.back()));
  }
  return g.record(OpKind::pick, {a.id}, Tensor::vector(std::move(out)), std::move(aux));
}

Var grad_reverse(Var a, double factor) {
  Graph& g = graph_of(a);
  Graph::Aux aux;
  aux.scalar = factor;
  return g.record(OpKind::grad_reverse, {a.id}, g.value(a), std::move(aux));
}

// ---------------------------------------------------------------------------

double grad_check(const LossBuilder& f, std::vector<Tensor> params, double h) {
  if (!(h > 0.0)) throw ContractError("grad_check step must be positive");
  auto evaluate = [&](const std::vector<Tensor>& ps) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(ps.size());
    for (const Tensor& p : ps) vars.push_back(g.leaf(p, true));
    return g.value(f(g, vars)).item();
  };

  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(g.leaf(p, true));
    const Var loss = f(g, vars);
    const Gradients grads = g.backward(loss);
    for (Var v : vars) analytic.push_back(grads.of(v));
  }

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = params[p][i];
      params[p][i] = orig + h;
      const double up = evaluate(params);
      params[p][i] = orig - h;
      const double down = evaluate(params);
      params[p][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + 1e-8));
    }
  }
  return worst;
}

}  // namespace stylelab::ad
