/* Copyright 2026 The gmmda Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tensor is a shared handle to row-major storage. A Graph is an append-only
// tape of operation records; every operation whose inputs need gradients is
// recorded, and Graph::backward walks the tape in reverse append order. One
// Graph per training step and per thread; graphs share nothing.

#ifndef GMMDA_AUTODIFF_HPP_
#define GMMDA_AUTODIFF_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gmmda/error.hpp"

namespace gmmda {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(),
                     [](double x) { return std::isfinite(x); });
}

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  bool is_leaf = true;
  std::optional<std::vector<double>> grad;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : data_(std::make_shared<detail::TensorData>()) {
    for (std::size_t d : shape) {
      if (d == 0) {
        throw DimensionError("tensor dimensions must be positive, got " +
                             shape_string(shape));
      }
    }
    if (shape_size(shape) != values.size()) {
      throw DimensionError("shape " + shape_string(shape) + " needs " +
                           std::to_string(shape_size(shape)) +
                           " values, got " + std::to_string(values.size()));
    }
    if (!all_finite(values)) {
      throw NumericError("tensor constructed with non-finite values");
    }
    data_->shape = std::move(shape);
    data_->values = std::move(values);
    data_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, {v}, requires_grad);
  }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v), requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> v, bool requires_grad = false) {
    return Tensor(Shape{rows, cols}, std::move(v), requires_grad);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0),
                  requires_grad);
  }
  static Tensor filled(Shape shape, double v, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t size() const { return data_->values.size(); }
  std::size_t dim(std::size_t i) const { return data_->shape.at(i); }

  std::span<const double> values() const { return data_->values; }
  // Direct write access for optimizers and initializers. Writers must keep
  // the values finite.
  std::span<double> mutable_values() { return data_->values; }

  double operator[](std::size_t i) const { return data_->values[i]; }
  double at(std::size_t r, std::size_t c) const {
    return data_->values[r * data_->shape.at(1) + c];
  }
  double item() const {
    if (size() != 1) {
      throw DimensionError("item() on tensor of shape " +
                           shape_string(shape()));
    }
    return data_->values[0];
  }

  bool requires_grad() const { return data_->requires_grad; }
  bool is_leaf() const { return data_->is_leaf; }
  const std::optional<std::vector<double>>& grad() const {
    return data_->grad;
  }
  void zero_grad() { data_->grad.reset(); }

  // Copy of the values, cut off from any graph.
  Tensor detach() const { return Tensor(shape(), data_->values, false); }

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  friend class Graph;
  std::shared_ptr<detail::TensorData> data_;
};

enum class Reduction { kSum, kMean, kMax };

class Graph {
 public:
  // Receives the gradient of the node output and one buffer per input.
  // Buffers of inputs that do not require gradients are empty spans. Rules
  // must accumulate (+=) since one tensor may appear as several inputs.
  using BackwardFn = std::function<void(std::span<const double> out_grad,
                                        std::vector<std::span<double>>& in_grads)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  // Appends a custom operation. Fused ops (losses, distances) use this with a
  // hand-derived backward rule. The node is only recorded if some input
  // requires gradients.
  Tensor record(std::string op, std::vector<Tensor> inputs, Shape shape,
                std::vector<double> values, BackwardFn backward) {
    if (!all_finite(values)) {
      throw NumericError("non-finite output in forward of op '" + op + "'");
    }
    Tensor out(std::move(shape), std::move(values));
    const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
    if (needs) {
      out.data_->requires_grad = true;
      out.data_->is_leaf = false;
      nodes_.push_back(Node{std::move(op), std::move(inputs), out,
                            std::move(backward)});
    }
    return out;
  }

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
      throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) +
                           " * " + shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        if (aip == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
      }
    }
    return record("matmul", {a, b}, Shape{m, n}, std::move(out),
                  [a, b, m, k, n](std::span<const double> g,
                                  std::vector<std::span<double>>& in) {
                    const auto av = a.values();
                    const auto bv = b.values();
                    if (!in[0].empty()) {  // dA = G * B^T
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double s = 0.0;
                          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                          in[0][i * k + p] += s;
                        }
                    }
                    if (!in[1].empty()) {  // dB = A^T * G
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = av[i * k + p];
                          if (aip == 0.0) continue;
                          for (std::size_t j = 0; j < n; ++j) in[1][p * n + j] += aip * g[i * n + j];
                        }
                    }
                  });
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    return binary("add", a, b, [](double x, double y) { return x + y; },
                  [](double, double) { return 1.0; },
                  [](double, double) { return 1.0; });
  }
  Tensor sub(const Tensor& a, const Tensor& b) {
    return binary("sub", a, b, [](double x, double y) { return x - y; },
                  [](double, double) { return 1.0; },
                  [](double, double) { return -1.0; });
  }
  Tensor mul(const Tensor& a, const Tensor& b) {
    return binary("mul", a, b, [](double x, double y) { return x * y; },
                  [](double, double y) { return y; },
                  [](double x, double) { return x; });
  }

  Tensor relu(const Tensor& t) {
    return unary("relu", t, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
  }
  Tensor sigmoid(const Tensor& t) {
    return unary("sigmoid", t, stable_sigmoid,
                 [](double, double y) { return y * (1.0 - y); });
  }
  // Arguments in [0, 1e-12) are clamped to 1e-12 (zero gradient there);
  // negative arguments are a domain error.
  Tensor log(const Tensor& t) {
    check_nonnegative("log", t);
    return unary("log", t,
                 [](double x) { return std::log(std::max(x, kLogFloor)); },
                 [](double x, double) { return x >= kLogFloor ? 1.0 / x : 0.0; });
  }
  Tensor exp(const Tensor& t) {
    return unary("exp", t, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
  }
  Tensor sqrt(const Tensor& t) {
    check_nonnegative("sqrt", t);
    return unary("sqrt", t, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
  }
  Tensor square(const Tensor& t) {
    return unary("square", t, [](double x) { return x * x; },
                 [](double x, double) { return 2.0 * x; });
  }
  Tensor negate(const Tensor& t) {
    return unary("negate", t, [](double x) { return -x; },
                 [](double, double) { return -1.0; });
  }
  Tensor clamp_min(const Tensor& t, double lo) {
    return unary("clamp_min", t, [lo](double x) { return x > lo ? x : lo; },
                 [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
  }
  Tensor scale(const Tensor& t, double c) {
    return unary("scale", t, [c](double x) { return c * x; },
                 [c](double, double) { return c; });
  }

  // Identity forward; backward multiplies the upstream gradient by -lambda.
  Tensor grad_reverse(const Tensor& t, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw ConfigError("grad_reverse lambda must be finite and >= 0, got " +
                        std::to_string(lambda));
    }
    std::vector<double> v(t.values().begin(), t.values().end());
    return record("grad_reverse", {t}, t.shape(), std::move(v),
                  [lambda](std::span<const double> g,
                           std::vector<std::span<double>>& in) {
                    for (std::size_t i = 0; i < g.size(); ++i) in[0][i] -= lambda * g[i];
                  });
  }

  Tensor reshape(const Tensor& t, Shape shape) {
    if (shape_size(shape) != t.size()) {
      throw DimensionError("cannot reshape " + shape_string(t.shape()) +
                           " to " + shape_string(shape));
    }
    std::vector<double> v(t.values().begin(), t.values().end());
    return record("reshape", {t}, std::move(shape), std::move(v),
                  [](std::span<const double> g,
                     std::vector<std::span<double>>& in) {
                    for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                  });
  }

  // Reduces over all elements (scalar result) or along one axis (that axis
  // removed). Max ties route the gradient to the first maximal element.
  Tensor reduce(Reduction op, const Tensor& t,
                std::optional<std::size_t> axis = std::nullopt) {
    std::size_t outer = 1, len = t.size(), inner = 1;
    Shape out_shape;
    if (axis) {
      if (*axis >= t.rank()) {
        throw DimensionError("reduce axis " + std::to_string(*axis) +
                             " out of range for " + shape_string(t.shape()));
      }
      for (std::size_t i = 0; i < *axis; ++i) outer *= t.dim(i);
      len = t.dim(*axis);
      for (std::size_t i = *axis + 1; i < t.rank(); ++i) inner *= t.dim(i);
      out_shape = t.shape();
      out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
    }
    const auto v = t.values();
    std::vector<double> out(outer * inner);
    std::vector<std::size_t> argmax(op == Reduction::kMax ? out.size() : 0);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double acc = v[base];
        std::size_t best = 0;
        for (std::size_t l = 1; l < len; ++l) {
          const double x = v[base + l * inner];
          if (op == Reduction::kMax) {
            if (x > acc) {
              acc = x;
              best = l;
            }
          } else {
            acc += x;
          }
        }
        if (op == Reduction::kMean) acc /= static_cast<double>(len);
        out[o * inner + in] = acc;
        if (op == Reduction::kMax) argmax[o * inner + in] = best;
      }
    }
    const char* name = op == Reduction::kSum    ? "sum"
                       : op == Reduction::kMean ? "mean"
                                                : "max";
    return record(name, {t}, std::move(out_shape), std::move(out),
                  [op, outer, len, inner, argmax = std::move(argmax)](
                      std::span<const double> g,
                      std::vector<std::span<double>>& in) {
                    const double w = op == Reduction::kMean ? 1.0 / static_cast<double>(len) : 1.0;
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t i = 0; i < inner; ++i) {
                        const double gi = g[o * inner + i];
                        const std::size_t base = o * len * inner + i;
                        if (op == Reduction::kMax) {
                          in[0][base + argmax[o * inner + i] * inner] += gi;
                        } else {
                          for (std::size_t l = 0; l < len; ++l) in[0][base + l * inner] += w * gi;
                        }
                      }
                  });
  }
  Tensor sum(const Tensor& t, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(Reduction::kSum, t, axis);
  }
  Tensor mean(const Tensor& t, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(Reduction::kMean, t, axis);
  }
  Tensor max(const Tensor& t, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(Reduction::kMax, t, axis);
  }

  // Populates grad on every requires_grad tensor reachable from `loss`.
  // Leaf gradients accumulate across calls until Tensor::zero_grad();
  // intermediate gradients are reset on each call.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) {
      throw DimensionError("backward needs a scalar loss, got " +
                           shape_string(loss.shape()));
    }
    if (nodes_.empty()) throw Error("backward on an empty graph");
    if (!loss.requires_grad()) {
      throw Error("backward: loss does not depend on any tensor requiring grad");
    }
    if (loss.is_leaf()) throw Error("backward: loss was not produced by a graph op");

    std::unordered_set<const detail::TensorData*> live{loss.data_.get()};
    std::vector<bool> active(nodes_.size(), false);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (!live.count(nodes_[i].output.data_.get())) continue;
      active[i] = true;
      for (const Tensor& in : nodes_[i].inputs) {
        if (in.requires_grad()) live.insert(in.data_.get());
      }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!active[i]) continue;
      auto prepare = [](const Tensor& t) {
        auto& d = *t.data_;
        if (!d.is_leaf || !d.grad) d.grad.emplace(d.values.size(), 0.0);
      };
      prepare(nodes_[i].output);
      for (const Tensor& in : nodes_[i].inputs) {
        if (in.requires_grad() && !in.data_->grad) {
          in.data_->grad.emplace(in.size(), 0.0);
        }
      }
    }
    (*loss.data_->grad)[0] = 1.0;

    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (!active[i]) continue;
      Node& node = nodes_[i];
      std::vector<std::span<double>> in_grads;
      in_grads.reserve(node.inputs.size());
      for (const Tensor& in : node.inputs) {
        if (in.requires_grad()) {
          in_grads.emplace_back(*in.data_->grad);
        } else {
          in_grads.emplace_back();
        }
      }
      node.backward(*node.output.data_->grad, in_grads);
      for (const auto& g : in_grads) {
        if (!all_finite(g)) {
          throw NumericError("non-finite gradient in backward of node #" +
                             std::to_string(i) + " ('" + node.op + "')");
        }
      }
    }
  }

  static double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  static constexpr double kLogFloor = 1e-12;

 private:
  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  static void check_nonnegative(const char* op, const Tensor& t) {
    for (double x : t.values()) {
      if (x < 0.0) {
        throw DomainError(std::string(op) + " of negative argument " +
                          std::to_string(x));
      }
    }
  }

  // `dfdx(x, y)` is the derivative given input x and output y.
  template <typename F, typename D>
  Tensor unary(const char* op, const Tensor& t, F f, D dfdx) {
    const auto v = t.values();
    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), f);
    std::vector<double> y = out;
    return record(op, {t}, t.shape(), std::move(out),
                  [t, dfdx, y = std::move(y)](std::span<const double> g,
                                              std::vector<std::span<double>>& in) {
                    const auto x = t.values();
                    for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * dfdx(x[i], y[i]);
                  });
  }

  // Equal shapes, or one operand with a single element broadcast against
  // the other.
  template <typename F, typename DA, typename DB>
  Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA dfda,
                DB dfdb) {
    const bool a_bcast = a.size() == 1 && b.size() != 1;
    const bool b_bcast = b.size() == 1 && a.size() != 1;
    if (!a_bcast && !b_bcast && a.shape() != b.shape()) {
      if (!(a.size() == 1 && b.size() == 1)) {
        throw DimensionError(std::string(op) + " shape mismatch: " +
                             shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
      }
    }
    const Shape shape = a_bcast ? b.shape() : a.shape();
    const std::size_t n = std::max(a.size(), b.size());
    const auto av = a.values();
    const auto bv = b.values();
    auto ai = [a_bcast](std::size_t i) { return a_bcast ? 0 : i; };
    auto bi = [b_bcast](std::size_t i) { return b_bcast ? 0 : i; };
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[ai(i)], bv[bi(i)]);
    return record(op, {a, b}, shape, std::move(out),
                  [a, b, n, ai, bi, dfda, dfdb](std::span<const double> g,
                                                std::vector<std::span<double>>& in) {
                    const auto av = a.values();
                    const auto bv = b.values();
                    for (std::size_t i = 0; i < n; ++i) {
                      const double x = av[ai(i)], y = bv[bi(i)];
                      if (!in[0].empty()) in[0][ai(i)] += g[i] * dfda(x, y);
                      if (!in[1].empty()) in[1][bi(i)] += g[i] * dfdb(x, y);
                    }
                  });
  }

  std::vector<Node> nodes_;
};

}  // namespace gmmda

#endif  // GMMDA_AUTODIFF_HPP_
