#pragma once

// Tape-based reverse-mode differentiation over fiona::Tensor.
//
// A Graph records every operation in creation order, so node k only ever
// reads nodes with smaller ids and the tape itself is a topological order.
// Ops are free functions over Var handles; each records its forward value
// and a closure that scatters the output gradient into its inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fiona/error.hpp"
#include "fiona/rng.hpp"
#include "fiona/tensor.hpp"

namespace fiona {

class Graph;

struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Graph {
 public:
  // Receives the gradient of the node's output; accumulates into inputs.
  using BackwardFn = std::function<void(Graph&, std::span<const double>)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = false) {
    nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, requires_grad, {}});
    return Var{this, nodes_.size() - 1};
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool needs = false;
    for (auto in : inputs) needs = needs || nodes_.at(in).requires_grad;
    nodes_.push_back(Node{op, std::move(value), std::move(inputs),
                          needs ? std::move(fn) : nullptr, needs, {}});
    return Var{this, nodes_.size() - 1};
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const char* op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  // Gradient buffer for accumulation; empty span when the node needs none.
  std::span<double> grad_sink(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return {};
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  // Gradient after backward(). Nodes the loss does not depend on get zeros.
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor::zeros(n.value.shape());
    return Tensor(n.value.shape(), n.grad);
  }

  void backward(Var loss) {
    if (loss.graph != this) throw ContractError("backward: loss belongs to a different graph");
    const Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          to_string(root.value.shape()));
    }
    for (auto& n : nodes_) n.grad.clear();
    if (!root.requires_grad) return;
    grad_sink(loss.id)[0] = 1.0;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    const char* op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
    std::vector<double> grad;
  };

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

namespace detail {

inline Graph& same_graph(std::initializer_list<Var> vars) {
  Graph* g = vars.begin()->graph;
  if (!g) throw ContractError("operation on an unbound Var");
  for (const Var& v : vars)
    if (v.graph != g) throw ContractError("operands belong to different graphs");
  return *g;
}

inline void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(v.shape()));
  }
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

// Elementwise unary op with derivative expressed through input x and output y.
template <class F, class DF>
Var unary(Var a, const char* name, F f, DF df) {
  Graph& g = *a.graph;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id;
  return g.record(name, std::move(y), {ia}, [ia, df](Graph& g, std::span<const double> dy) {
    auto dx = g.grad_sink(ia);
    const Tensor& x = g.value(ia);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * df(x[i]);
  });
}

}  // namespace detail

// C = A B for A [n x k], B [k x m].
inline Var matmul(Var a, Var b) {
  Graph& g = detail::same_graph({a, b});
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(A.shape()) + " and " +
                         to_string(B.shape()));
  }
  const std::size_t n = A.dim(0), k = A.dim(1), m = B.dim(1);
  Tensor C({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* c = &C[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* br = &B[p * m];
      for (std::size_t j = 0; j < m; ++j) c[j] += av * br[j];
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return g.record("matmul", std::move(C), {ia, ib},
                  [ia, ib, n, k, m](Graph& g, std::span<const double> dc) {
                    const Tensor& A = g.value(ia);
                    const Tensor& B = g.value(ib);
                    if (auto da = g.grad_sink(ia); !da.empty()) {
                      // dA = dC B^T
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double s = 0.0;
                          for (std::size_t j = 0; j < m; ++j) s += dc[i * m + j] * B[p * m + j];
                          da[i * k + p] += s;
                        }
                    }
                    if (auto db = g.grad_sink(ib); !db.empty()) {
                      // dB = A^T dC
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double av = A[i * k + p];
                          for (std::size_t j = 0; j < m; ++j) db[p * m + j] += av * dc[i * m + j];
                        }
                    }
                  });
}

inline Var transpose(Var a) {
  detail::require_rank(a, 2, "transpose");
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const std::size_t n = A.dim(0), m = A.dim(1);
  Tensor T({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) T[j * n + i] = A[i * m + j];
  const std::size_t ia = a.id;
  return g.record("transpose", std::move(T), {ia}, [ia, n, m](Graph& g, std::span<const double> dt) {
    auto da = g.grad_sink(ia);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) da[i * m + j] += dt[j * n + i];
  });
}

// x W + b with b broadcast over rows; x [n x d], W [d x u], b [u].
inline Var dense(Var x, Var w, Var b) {
  Graph& g = detail::same_graph({x, w, b});
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const Tensor& B = b.value();
  if (X.rank() != 2 || W.rank() != 2 || X.dim(1) != W.dim(0) || B.size() != W.dim(1)) {
    throw DimensionError("dense: incompatible shapes x" + to_string(X.shape()) + " w" +
                         to_string(W.shape()) + " b" + to_string(B.shape()));
  }
  const std::size_t n = X.dim(0), d = X.dim(1), u = W.dim(1);
  Tensor Y({n, u});
  for (std::size_t i = 0; i < n; ++i) {
    double* y = &Y[i * u];
    for (std::size_t j = 0; j < u; ++j) y[j] = B[j];
    for (std::size_t p = 0; p < d; ++p) {
      const double xv = X[i * d + p];
      if (xv == 0.0) continue;
      const double* wr = &W[p * u];
      for (std::size_t j = 0; j < u; ++j) y[j] += xv * wr[j];
    }
  }
  const std::size_t ix = x.id, iw = w.id, ib = b.id;
  return g.record("dense", std::move(Y), {ix, iw, ib},
                  [ix, iw, ib, n, d, u](Graph& g, std::span<const double> dy) {
                    const Tensor& X = g.value(ix);
                    const Tensor& W = g.value(iw);
                    if (auto dx = g.grad_sink(ix); !dx.empty()) {
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < d; ++p) {
                          double s = 0.0;
                          const double* wr = &W[p * u];
                          const double* dyr = &dy[i * u];
                          for (std::size_t j = 0; j < u; ++j) s += dyr[j] * wr[j];
                          dx[i * d + p] += s;
                        }
                    }
                    if (auto dw = g.grad_sink(iw); !dw.empty()) {
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < d; ++p) {
                          const double xv = X[i * d + p];
                          if (xv == 0.0) continue;
                          double* dwr = &dw[p * u];
                          const double* dyr = &dy[i * u];
                          for (std::size_t j = 0; j < u; ++j) dwr[j] += xv * dyr[j];
                        }
                    }
                    if (auto db = g.grad_sink(ib); !db.empty()) {
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < u; ++j) db[j] += dy[i * u + j];
                    }
                  });
}

// Valid cross-correlation, stride 1.
// x [n x len x c_in], w [k x c_in x c_out], b [c_out] -> [n x (len-k+1) x c_out].
inline Var conv1d(Var x, Var w, Var b) {
  Graph& g = detail::same_graph({x, w, b});
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const Tensor& B = b.value();
  if (X.rank() != 3 || W.rank() != 3 || X.dim(2) != W.dim(1) || B.size() != W.dim(2)) {
    throw DimensionError("conv1d: incompatible shapes x" + to_string(X.shape()) + " w" +
                         to_string(W.shape()) + " b" + to_string(B.shape()));
  }
  const std::size_t n = X.dim(0), len = X.dim(1), cin = X.dim(2);
  const std::size_t k = W.dim(0), cout = W.dim(2);
  if (len < k) {
    throw DegenerateInputError("conv1d: input length " + std::to_string(len) +
                               " shorter than kernel " + std::to_string(k));
  }
  const std::size_t olen = len - k + 1;
  Tensor Y({n, olen, cout});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < olen; ++t) {
      double* y = &Y[(s * olen + t) * cout];
      for (std::size_t co = 0; co < cout; ++co) y[co] = B[co];
      for (std::size_t q = 0; q < k; ++q) {
        const double* xr = &X[(s * len + t + q) * cin];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double xv = xr[ci];
          const double* wr = &W[(q * cin + ci) * cout];
          for (std::size_t co = 0; co < cout; ++co) y[co] += xv * wr[co];
        }
      }
    }
  const std::size_t ix = x.id, iw = w.id, ib = b.id;
  return g.record(
      "conv1d", std::move(Y), {ix, iw, ib},
      [=](Graph& g, std::span<const double> dy) {
        const Tensor& X = g.value(ix);
        const Tensor& W = g.value(iw);
        auto dx = g.grad_sink(ix);
        auto dw = g.grad_sink(iw);
        auto db = g.grad_sink(ib);
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t t = 0; t < olen; ++t) {
            const double* dyr = &dy[(s * olen + t) * cout];
            if (!db.empty())
              for (std::size_t co = 0; co < cout; ++co) db[co] += dyr[co];
            for (std::size_t q = 0; q < k; ++q) {
              const std::size_t xoff = (s * len + t + q) * cin;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const std::size_t woff = (q * cin + ci) * cout;
                if (!dx.empty()) {
                  double acc = 0.0;
                  for (std::size_t co = 0; co < cout; ++co) acc += dyr[co] * W[woff + co];
                  dx[xoff + ci] += acc;
                }
                if (!dw.empty()) {
                  const double xv = X[xoff + ci];
                  for (std::size_t co = 0; co < cout; ++co) dw[woff + co] += xv * dyr[co];
                }
              }
            }
          }
      });
}

// Window 2, stride 2 along axis 1; a trailing odd element is dropped.
// Gradient goes to the first maximal element of each window.
inline Var maxpool1d(Var x) {
  detail::require_rank(x, 3, "maxpool1d");
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  const std::size_t n = X.dim(0), len = X.dim(1), c = X.dim(2);
  if (len < 2) {
    throw DegenerateInputError("maxpool1d: input length " + std::to_string(len) + " < 2");
  }
  const std::size_t olen = len / 2;
  Tensor Y({n, olen, c});
  std::vector<std::size_t> argmax(Y.size());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < olen; ++t)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i0 = (s * len + 2 * t) * c + ch;
        const std::size_t i1 = i0 + c;
        const std::size_t o = (s * olen + t) * c + ch;
        const bool second = X[i1] > X[i0];
        argmax[o] = second ? i1 : i0;
        Y[o] = X[argmax[o]];
      }
  const std::size_t ix = x.id;
  return g.record("maxpool1d", std::move(Y), {ix},
                  [ix, argmax = std::move(argmax)](Graph& g, std::span<const double> dy) {
                    auto dx = g.grad_sink(ix);
                    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
                  });
}

inline Var relu(Var a) {
  return detail::unary(
      a, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_value(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  return detail::unary(a, "sigmoid", sigmoid_value, [](double v) {
    const double s = sigmoid_value(v);
    return s * (1.0 - s);
  });
}

inline Var sqrt(Var a) {
  return detail::unary(
      a, "sqrt", [](double v) { return std::sqrt(v); },
      [](double v) { return 0.5 / std::sqrt(v); });
}

inline Var log(Var a) {
  return detail::unary(
      a, "log", [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

// Clamp to [lo, hi]; gradient passes where the input lies inside the interval.
inline Var clamp(Var a, double lo, double hi) {
  return detail::unary(
      a, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

inline Var scale(Var a, double c) {
  return detail::unary(
      a, "scale", [c](double v) { return c * v; }, [c](double) { return c; });
}

inline Var add_scalar(Var a, double c) {
  return detail::unary(
      a, "add_scalar", [c](double v) { return v + c; }, [](double) { return 1.0; });
}

namespace detail {

template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* name, F f, DA da_fn, DB db_fn) {
  Graph& g = same_graph({a, b});
  require_same_shape(a, b, name);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  Tensor Y(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) Y[i] = f(A[i], B[i]);
  const std::size_t ia = a.id, ib = b.id;
  return g.record(name, std::move(Y), {ia, ib},
                  [ia, ib, da_fn, db_fn](Graph& g, std::span<const double> dy) {
                    const Tensor& A = g.value(ia);
                    const Tensor& B = g.value(ib);
                    if (auto da = g.grad_sink(ia); !da.empty())
                      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * da_fn(A[i], B[i]);
                    if (auto db = g.grad_sink(ib); !db.empty())
                      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * db_fn(A[i], B[i]);
                  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var div(Var a, Var b) {
  return detail::binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

inline Var sum(Var a) {
  Graph& g = *a.graph;
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id;
  return g.record("sum", Tensor::scalar(s), {ia}, [ia](Graph& g, std::span<const double> dy) {
    auto da = g.grad_sink(ia);
    for (double& v : da) v += dy[0];
  });
}

// Sum of the elementwise product; equals trace(A B) when A, B are symmetric.
inline Var dot(Var a, Var b) { return sum(mul(a, b)); }

// Softmax over the last axis.
inline Var softmax(Var a) {
  Graph& g = *a.graph;
  const Tensor& X = a.value();
  const std::size_t c = X.shape().back();
  const std::size_t rows = X.size() / c;
  Tensor Y(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &X[r * c];
    double* y = &Y[r * c];
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  const std::size_t ia = a.id, out = g.size();
  return g.record("softmax", std::move(Y), {ia},
                  [ia, out, rows, c](Graph& g, std::span<const double> dy) {
                    auto dx = g.grad_sink(ia);
                    const Tensor& Y = g.value(out);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double inner = 0.0;
                      for (std::size_t j = 0; j < c; ++j) inner += dy[r * c + j] * Y[r * c + j];
                      for (std::size_t j = 0; j < c; ++j)
                        dx[r * c + j] += Y[r * c + j] * (dy[r * c + j] - inner);
                    }
                  });
}

inline Var reshape(Var a, Shape shape) {
  Graph& g = *a.graph;
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return g.record("reshape", std::move(y), {ia}, [ia](Graph& g, std::span<const double> dy) {
    auto dx = g.grad_sink(ia);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

// [n x ...] -> [n x prod(...)]
inline Var flatten(Var a) {
  const Shape& s = a.shape();
  return reshape(a, Shape{s[0], a.value().size() / s[0]});
}

// Joins 2-D tensors along the feature axis.
inline Var concat(Var a, Var b) {
  Graph& g = detail::same_graph({a, b});
  detail::require_rank(a, 2, "concat");
  detail::require_rank(b, 2, "concat");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.dim(0) != B.dim(0)) {
    throw DimensionError("concat: row mismatch " + to_string(A.shape()) + " vs " +
                         to_string(B.shape()));
  }
  const std::size_t n = A.dim(0), da = A.dim(1), db = B.dim(1), w = da + db;
  Tensor Y({n, w});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(&A[i * da], da, &Y[i * w]);
    std::copy_n(&B[i * db], db, &Y[i * w + da]);
  }
  const std::size_t ia = a.id, ib = b.id;
  return g.record("concat", std::move(Y), {ia, ib},
                  [ia, ib, n, da, db, w](Graph& g, std::span<const double> dy) {
                    if (auto ga = g.grad_sink(ia); !ga.empty())
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < da; ++j) ga[i * da + j] += dy[i * w + j];
                    if (auto gb = g.grad_sink(ib); !gb.empty())
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < db; ++j) gb[i * db + j] += dy[i * w + da + j];
                  });
}

// Inverted dropout. Identity at inference or when rate is 0.
inline Var dropout(Var x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(X.size());
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    Y[i] = X[i] * mask[i];
  }
  const std::size_t ix = x.id;
  return g.record("dropout", std::move(Y), {ix},
                  [ix, mask = std::move(mask)](Graph& g, std::span<const double> dy) {
                    auto dx = g.grad_sink(ix);
                    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
                  });
}

// HKH for a square matrix K with H = I - 11^T/n, computed as double mean
// subtraction. H is symmetric and idempotent, so the adjoint is the same map.
inline Tensor double_center(const Tensor& K) {
  const std::size_t n = K.dim(0);
  std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = K[i * n + j];
      row_mean[i] += v;
      col_mean[j] += v;
      grand += v;
    }
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    row_mean[i] *= inv;
    col_mean[i] *= inv;
  }
  grand *= inv * inv;
  Tensor C({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] = K[i * n + j] - row_mean[i] - col_mean[j] + grand;
  return C;
}

inline Var center(Var k) {
  detail::require_rank(k, 2, "center");
  const Tensor& K = k.value();
  if (K.dim(0) != K.dim(1)) throw DimensionError("center: matrix must be square, got " + to_string(K.shape()));
  Graph& g = *k.graph;
  const std::size_t ik = k.id, n = K.dim(0);
  return g.record("center", double_center(K), {ik}, [ik, n](Graph& g, std::span<const double> dy) {
    const Tensor G = double_center(Tensor({n, n}, std::vector<double>(dy.begin(), dy.end())));
    auto dk = g.grad_sink(ik);
    for (std::size_t i = 0; i < dk.size(); ++i) dk[i] += G[i];
  });
}

}  // namespace fiona
