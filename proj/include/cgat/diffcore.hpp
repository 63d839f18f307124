#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every primitive in forward order. Each recorded node owns its
// value and gradient buffers; backward() replays the records in reverse order.
// Parameters live outside the tape in ParamTensor and are referenced by
// pointer, so the tape must not outlive the parameters it was built against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cgat::diff {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ParamTensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;

  ParamTensor() = default;
  explicit ParamTensor(std::vector<std::size_t> dims)
      : shape(std::move(dims)), values(element_count(shape), 0.0), grad(values.size(), 0.0) {}

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
  }

  std::size_t size() const { return values.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  bool consistent() const {
    return values.size() == element_count(shape) && grad.size() == values.size();
  }
};

/// Dense layer parameters: weights (out x in, row-major) and bias (out).
struct DenseParams {
  ParamTensor weights;
  ParamTensor bias;

  DenseParams() = default;
  DenseParams(std::size_t in, std::size_t out) : weights({out, in}), bias({out}) {}

  std::size_t in_dim() const { return weights.shape.at(1); }
  std::size_t out_dim() const { return weights.shape.at(0); }
};

/// Handle to a node on a tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

enum class ParamGrad {
  accumulate,  // dense backward adds into ParamTensor::grad
  frozen,      // parameters are read-only; only node gradients are produced
};

class Tape {
 public:
  explicit Tape(ParamGrad mode = ParamGrad::accumulate) : mode_(mode) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf holding a rows x cols matrix (a vector is a 1 x n matrix).
  Var input(std::span<const double> data, std::size_t rows, std::size_t cols) {
    if (data.size() != rows * cols) {
      throw ShapeError("input: expected " + std::to_string(rows * cols) + " values, got " +
                       std::to_string(data.size()));
    }
    return push(rows, cols, std::vector<double>(data.begin(), data.end()), nullptr);
  }

  Var input(std::span<const double> row) { return input(row, 1, row.size()); }

  /// Y = X W^T + b, applied to every row of X. Parameter gradients are
  /// accumulated unless the tape is frozen.
  Var dense(Var x, DenseParams& layer) {
    return dense_impl(x, layer, mode_ == ParamGrad::accumulate ? &layer : nullptr);
  }

  /// Read-only parameters: only the input gradient flows.
  Var dense(Var x, const DenseParams& layer) { return dense_impl(x, layer, nullptr); }

  Var tanh(Var x) {
    const auto& xn = node(x);
    std::vector<double> y(xn.value.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xn.value[i]);
    return push(xn.rows, xn.cols, std::move(y), [x](Tape& t, Node& self) {
      Node& xn = t.nodes_[x.id];
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const double v = self.value[i];
        xn.grad[i] += self.grad[i] * (1.0 - v * v);
      }
    });
  }

  /// log(1 + exp(x)), elementwise, evaluated without overflow.
  Var softplus(Var x) {
    const auto& xn = node(x);
    std::vector<double> y(xn.value.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double v = xn.value[i];
      y[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    }
    return push(xn.rows, xn.cols, std::move(y), [x](Tape& t, Node& self) {
      Node& xn = t.nodes_[x.id];
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const double v = xn.value[i];
        const double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        xn.grad[i] += self.grad[i] * sig;
      }
    });
  }

  /// A B^T for A (n x k), B (m x k).
  Var matmul_nt(Var a, Var b) {
    const auto& an = node(a);
    const auto& bn = node(b);
    if (an.cols != bn.cols) throw ShapeError("matmul_nt: inner dimensions differ");
    const std::size_t n = an.rows, m = bn.rows, k = an.cols;
    std::vector<double> y(n * m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < k; ++c) acc += an.value[i * k + c] * bn.value[j * k + c];
        y[i * m + j] = acc;
      }
    }
    return push(n, m, std::move(y), [a, b, n, m, k](Tape& t, Node& self) {
      Node& an = t.nodes_[a.id];
      Node& bn = t.nodes_[b.id];
      // Accumulate into temporaries first: a and b may be the same node.
      std::vector<double> ga(n * k, 0.0), gb(m * k, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          const double g = self.grad[i * m + j];
          if (g == 0.0) continue;
          for (std::size_t c = 0; c < k; ++c) {
            ga[i * k + c] += g * bn.value[j * k + c];
            gb[j * k + c] += g * an.value[i * k + c];
          }
        }
      }
      for (std::size_t i = 0; i < ga.size(); ++i) an.grad[i] += ga[i];
      for (std::size_t i = 0; i < gb.size(); ++i) bn.grad[i] += gb[i];
    });
  }

  Var add(Var a, Var b) { return binary(a, b, 1.0); }
  Var sub(Var a, Var b) { return binary(a, b, -1.0); }

  Var scale(Var x, double c) {
    const auto& xn = node(x);
    std::vector<double> y(xn.value);
    for (double& v : y) v *= c;
    return push(xn.rows, xn.cols, std::move(y), [x, c](Tape& t, Node& self) {
      Node& xn = t.nodes_[x.id];
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += c * self.grad[i];
    });
  }

  /// Elementwise product with a constant matrix of the same shape.
  Var mul_const(Var x, std::span<const double> c) {
    const auto& xn = node(x);
    if (c.size() != xn.value.size()) throw ShapeError("mul_const: shape mismatch");
    std::vector<double> y(xn.value.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xn.value[i] * c[i];
    std::vector<double> cc(c.begin(), c.end());
    return push(xn.rows, xn.cols, std::move(y), [x, cc = std::move(cc)](Tape& t, Node& self) {
      Node& xn = t.nodes_[x.id];
      for (std::size_t i = 0; i < cc.size(); ++i) xn.grad[i] += cc[i] * self.grad[i];
    });
  }

  /// x - c for a constant matrix c.
  Var sub_const(Var x, std::span<const double> c) {
    const auto& xn = node(x);
    if (c.size() != xn.value.size()) throw ShapeError("sub_const: shape mismatch");
    std::vector<double> y(xn.value.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xn.value[i] - c[i];
    return push(xn.rows, xn.cols, std::move(y), [x](Tape& t, Node& self) {
      Node& xn = t.nodes_[x.id];
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
    });
  }

  Var square(Var x) {
    const auto& xn = node(x);
    std::vector<double> y(xn.value.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xn.value[i] * xn.value[i];
    return push(xn.rows, xn.cols, std::move(y), [x](Tape& t, Node& self) {
      Node& xn = t.nodes_[x.id];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        xn.grad[i] += 2.0 * xn.value[i] * self.grad[i];
      }
    });
  }

  /// Scalar sum of all entries.
  Var sum(Var x) {
    const auto& xn = node(x);
    double acc = 0.0;
    for (double v : xn.value) acc += v;
    return push(1, 1, {acc}, [x](Tape& t, Node& self) {
      Node& xn = t.nodes_[x.id];
      const double g = self.grad[0];
      for (double& gx : xn.grad) gx += g;
    });
  }

  /// Runs the reverse sweep from a scalar node. Node gradients are reset on
  /// every call; parameter gradients are added to whatever the caller left.
  void backward(Var loss) {
    if (nodes_.empty()) throw TapeError("backward called on an empty tape");
    auto& ln = node(loss);
    if (ln.value.size() != 1) throw TapeError("backward requires a scalar loss");
    for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    ln.grad[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, n);
      if (trace_) trace_->push_back(i);
    }
  }

  std::span<const double> value(Var v) const { return node(v).value; }
  std::span<const double> grad(Var v) const { return node(v).grad; }
  double scalar(Var v) const {
    const auto& n = node(v);
    if (n.value.size() != 1) throw ShapeError("scalar: node is not 1x1");
    return n.value[0];
  }
  std::size_t rows(Var v) const { return node(v).rows; }
  std::size_t cols(Var v) const { return node(v).cols; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Records the node indices visited by backward(), for inspection in tests.
  void set_trace(std::vector<std::size_t>* sink) { trace_ = sink; }

 private:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    std::function<void(Tape&, Node&)> backward;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw TapeError("variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw TapeError("variable does not belong to this tape");
    return nodes_[v.id];
  }

  Var push(std::size_t rows, std::size_t cols, std::vector<double> value,
           std::function<void(Tape&, Node&)> bw) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.grad.assign(value.size(), 0.0);
    n.value = std::move(value);
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var dense_impl(Var x, const DenseParams& layer, DenseParams* grad_sink) {
    const auto& xn = node(x);
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    if (xn.cols != in || layer.bias.size() != out) {
      throw ShapeError("dense: input width " + std::to_string(xn.cols) +
                       " does not match layer input " + std::to_string(in));
    }
    const std::size_t rows = xn.rows;
    std::vector<double> y(rows * out);
    const double* w = layer.weights.values.data();
    const double* b = layer.bias.values.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = xn.value.data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = w + o * in;
        double acc = b[o];
        for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
        y[r * out + o] = acc;
      }
    }
    const DenseParams* lp = &layer;
    return push(rows, out, std::move(y), [lp, grad_sink, x, rows, in, out](Tape& t, Node& self) {
      Node& xn = t.nodes_[x.id];
      const double* w = lp->weights.values.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gy = self.grad.data() + r * out;
        double* gx = xn.grad.data() + r * in;
        for (std::size_t o = 0; o < out; ++o) {
          const double g = gy[o];
          if (g == 0.0) continue;
          const double* wo = w + o * in;
          for (std::size_t i = 0; i < in; ++i) gx[i] += g * wo[i];
        }
      }
      if (grad_sink == nullptr) return;
      double* gw = grad_sink->weights.grad.data();
      double* gb = grad_sink->bias.grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gy = self.grad.data() + r * out;
        const double* xr = xn.value.data() + r * in;
        for (std::size_t o = 0; o < out; ++o) {
          const double g = gy[o];
          gb[o] += g;
          double* gwo = gw + o * in;
          for (std::size_t i = 0; i < in; ++i) gwo[i] += g * xr[i];
        }
      }
    });
  }

  Var binary(Var a, Var b, double sign) {
    const auto& an = node(a);
    const auto& bn = node(b);
    if (an.rows != bn.rows || an.cols != bn.cols) throw ShapeError("elementwise: shape mismatch");
    std::vector<double> y(an.value.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = an.value[i] + sign * bn.value[i];
    return push(an.rows, an.cols, std::move(y), [a, b, sign](Tape& t, Node& self) {
      Node& an = t.nodes_[a.id];
      for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i];
      Node& bn = t.nodes_[b.id];
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn.grad[i] += sign * self.grad[i];
    });
  }

  ParamGrad mode_;
  std::vector<Node> nodes_;
  std::vector<std::size_t>* trace_ = nullptr;
};

}  // namespace cgat::diff
