#pragma once

// Reverse-mode automatic differentiation over dense arrays. The graph is
// define-by-run: every op returns a fresh Node holding its forward value and
// a closure that scatters the upstream gradient into its parents. backward()
// walks the graph once in reverse topological order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include <cblas.h>

#include "roomnerf/array.hpp"
#include "roomnerf/core.hpp"

namespace roomnerf {

// Pins BLAS to one thread so results are bit-reproducible regardless of host
// core count. Call once at process start in anything that wants determinism.
inline void use_single_thread_blas() { openblas_set_num_threads(1); }

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Array value;
  Array grad;  // materialized lazily, same shape as value
  const char* op = "leaf";
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;

  bool is_leaf() const { return parents.empty(); }

  void ensure_grad() {
    if (grad.data.empty()) grad = Array(value.shape);
  }

  void zero_grad() {
    if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0);
  }
};

inline NodePtr constant(Array v) {
  auto n = std::make_shared<Node>();
  n->op = "const";
  n->value = std::move(v);
  return n;
}

inline NodePtr constant(double v) { return constant(Array::scalar(v)); }

// A leaf that participates in differentiation (parameters, probe inputs).
inline NodePtr leaf(Array v) {
  auto n = std::make_shared<Node>();
  n->op = "leaf";
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

inline NodePtr make_op(const char* op, Array value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  n->parents = std::move(parents);
  n->requires_grad = needs;
  if (needs) n->backprop = std::move(back);
  return n;
}

// ---------------------------------------------------------------------------
// backward

namespace detail {

inline void topo_order(Node* root, std::vector<Node*>& order) {
  // iterative post-order DFS
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Accumulates d(root)/d(leaf) into every reachable differentiable leaf.
// Interior gradients are reset per call; leaf gradients accumulate across
// calls until explicitly zeroed.
inline void backward(const NodePtr& root) {
  require(root != nullptr, "backward: null root");
  require(root->value.size() == 1, "backward: root must be scalar, got shape ",
          root->value.shape_str());
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  detail::topo_order(root.get(), order);
  for (Node* n : order) {
    if (!n->is_leaf()) {
      n->ensure_grad();
      n->zero_grad();
    }
  }
  root->ensure_grad();
  root->grad.data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// broadcasting binary ops

namespace detail {

// Supported: identical shapes, scalar vs anything, or same-rank shapes where
// each dim matches or is 1. Anything wider is out of scope.
inline std::vector<int64_t> broadcast_shape(const char* op, const std::vector<int64_t>& a,
                                            const std::vector<int64_t>& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require(a.size() == b.size(), op, ": rank mismatch ", Array::shape_str(a), " vs ",
          Array::shape_str(b));
  std::vector<int64_t> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    require(a[i] == b[i] || a[i] == 1 || b[i] == 1, op, ": incompatible shapes ",
            Array::shape_str(a), " vs ", Array::shape_str(b));
    out[i] = std::max(a[i], b[i]);
  }
  return out;
}

inline std::vector<int64_t> broadcast_strides(const std::vector<int64_t>& shape,
                                              const std::vector<int64_t>& out_shape) {
  std::vector<int64_t> strides(out_shape.size(), 0);
  if (shape.empty()) return strides;  // scalar
  int64_t s = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    strides[static_cast<size_t>(i)] = (shape[static_cast<size_t>(i)] == 1 && out_shape[static_cast<size_t>(i)] != 1) ? 0 : s;
    s *= shape[static_cast<size_t>(i)];
  }
  return strides;
}

// Walks the broadcast output space calling fn(out_index, a_offset, b_offset).
template <typename Fn>
void broadcast_walk(const std::vector<int64_t>& out_shape, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, Fn&& fn) {
  const int rank = static_cast<int>(out_shape.size());
  int64_t total = 1;
  for (int64_t d : out_shape) total *= d;
  if (rank == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
  int64_t oa = 0, ob = 0;
  for (int64_t i = 0; i < total; ++i) {
    fn(i, oa, ob);
    for (int ax = rank - 1; ax >= 0; --ax) {
      idx[static_cast<size_t>(ax)]++;
      oa += sa[static_cast<size_t>(ax)];
      ob += sb[static_cast<size_t>(ax)];
      if (idx[static_cast<size_t>(ax)] < out_shape[static_cast<size_t>(ax)]) break;
      oa -= sa[static_cast<size_t>(ax)] * out_shape[static_cast<size_t>(ax)];
      ob -= sb[static_cast<size_t>(ax)] * out_shape[static_cast<size_t>(ax)];
      idx[static_cast<size_t>(ax)] = 0;
    }
  }
}

// FwdFn: double(double, double); DaFn/DbFn: double(u, a, b) contribution.
template <typename FwdFn, typename DaFn, typename DbFn>
NodePtr binary_op(const char* op, const NodePtr& a, const NodePtr& b, FwdFn fwd, DaFn da,
                  DbFn db) {
  const Array& av = a->value;
  const Array& bv = b->value;
  Array out;
  if (av.same_shape(bv)) {
    out = Array(av.shape);
    const size_t n = av.data.size();
    for (size_t i = 0; i < n; ++i) out.data[i] = fwd(av.data[i], bv.data[i]);
  } else {
    auto os = broadcast_shape(op, av.shape, bv.shape);
    auto sa = broadcast_strides(av.shape, os);
    auto sb = broadcast_strides(bv.shape, os);
    out = Array(os);
    broadcast_walk(os, sa, sb, [&](int64_t i, int64_t ia, int64_t ib) {
      out.data[static_cast<size_t>(i)] =
          fwd(av.data[static_cast<size_t>(ia)], bv.data[static_cast<size_t>(ib)]);
    });
  }
  return make_op(op, std::move(out), {a, b}, [fwd, da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const Array& u = self.grad;
    if (pa.value.same_shape(pb.value)) {
      const size_t n = u.data.size();
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (size_t i = 0; i < n; ++i)
          pa.grad.data[i] += da(u.data[i], pa.value.data[i], pb.value.data[i]);
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (size_t i = 0; i < n; ++i)
          pb.grad.data[i] += db(u.data[i], pa.value.data[i], pb.value.data[i]);
      }
      return;
    }
    auto os = self.value.shape;
    auto sa = broadcast_strides(pa.value.shape, os);
    auto sb = broadcast_strides(pb.value.shape, os);
    if (pa.requires_grad) pa.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    broadcast_walk(os, sa, sb, [&](int64_t i, int64_t ia, int64_t ib) {
      double uv = u.data[static_cast<size_t>(i)];
      double avv = pa.value.data[static_cast<size_t>(ia)];
      double bvv = pb.value.data[static_cast<size_t>(ib)];
      if (pa.requires_grad) pa.grad.data[static_cast<size_t>(ia)] += da(uv, avv, bvv);
      if (pb.requires_grad) pb.grad.data[static_cast<size_t>(ib)] += db(uv, avv, bvv);
    });
  });
}

template <typename FwdFn, typename BackFn>
NodePtr unary_op(const char* op, const NodePtr& x, FwdFn fwd, BackFn back) {
  Array out(x->value.shape);
  const size_t n = out.data.size();
  for (size_t i = 0; i < n; ++i) out.data[i] = fwd(x->value.data[i]);
  return make_op(op, std::move(out), {x}, [back](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const size_t m = self.grad.data.size();
    for (size_t i = 0; i < m; ++i)
      // back(upstream, input, output)
      p.grad.data[i] += back(self.grad.data[i], p.value.data[i], self.value.data[i]);
  });
}

}  // namespace detail

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  return detail::binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double u, double, double) { return u; }, [](double u, double, double) { return u; });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  return detail::binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double u, double, double) { return u; }, [](double u, double, double) { return -u; });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  return detail::binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double u, double, double y) { return u * y; },
      [](double u, double x, double) { return u * x; });
}

inline NodePtr div(const NodePtr& a, const NodePtr& b) {
  return detail::binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double u, double, double y) { return u / y; },
      [](double u, double x, double y) { return -u * x / (y * y); });
}

inline NodePtr scale(const NodePtr& x, double c) {
  return detail::unary_op(
      "scale", x, [c](double v) { return c * v; },
      [c](double u, double, double) { return c * u; });
}

inline NodePtr add_const(const NodePtr& x, double c) {
  return detail::unary_op(
      "add_const", x, [c](double v) { return v + c; },
      [](double u, double, double) { return u; });
}

inline NodePtr relu(const NodePtr& x) {
  return detail::unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double u, double v, double) { return v > 0.0 ? u : 0.0; });
}

// Stable in both tails: softplus(x) = max(x, 0) + log1p(exp(-|x|)).
inline NodePtr softplus(const NodePtr& x) {
  return detail::unary_op(
      "softplus", x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double u, double v, double) {
        double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return u * s;
      });
}

inline NodePtr sigmoid(const NodePtr& x) {
  return detail::unary_op(
      "sigmoid", x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double u, double, double y) { return u * y * (1.0 - y); });
}

inline NodePtr exp(const NodePtr& x) {
  return detail::unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double u, double, double y) { return u * y; });
}

inline NodePtr log(const NodePtr& x) {
  return detail::unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double u, double v, double) { return u / v; });
}

inline NodePtr sin(const NodePtr& x) {
  return detail::unary_op(
      "sin", x, [](double v) { return std::sin(v); },
      [](double u, double v, double) { return u * std::cos(v); });
}

inline NodePtr cos(const NodePtr& x) {
  return detail::unary_op(
      "cos", x, [](double v) { return std::cos(v); },
      [](double u, double v, double) { return -u * std::sin(v); });
}

inline NodePtr square(const NodePtr& x) {
  return detail::unary_op(
      "square", x, [](double v) { return v * v; },
      [](double u, double v, double) { return 2.0 * u * v; });
}

inline NodePtr sqrt(const NodePtr& x) {
  return detail::unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double u, double, double y) { return y > 0.0 ? u / (2.0 * y) : 0.0; });
}

inline NodePtr abs(const NodePtr& x) {
  return detail::unary_op(
      "abs", x, [](double v) { return std::abs(v); },
      [](double u, double v, double) { return v > 0.0 ? u : (v < 0.0 ? -u : 0.0); });
}

// Values below the threshold are clamped and receive zero gradient.
inline NodePtr clamp_min(const NodePtr& x, double lo) {
  return detail::unary_op(
      "clamp_min", x, [lo](double v) { return v < lo ? lo : v; },
      [lo](double u, double v, double) { return v > lo ? u : 0.0; });
}

// ---------------------------------------------------------------------------
// matmul

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  const Array& av = a->value;
  const Array& bv = b->value;
  require(av.rank() == 2 && bv.rank() == 2, "matmul: expects rank-2 operands, got ",
          av.shape_str(), " and ", bv.shape_str());
  require(av.shape[1] == bv.shape[0], "matmul: inner dimensions differ, ", av.shape_str(), " x ",
          bv.shape_str());
  const int64_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Array out({m, n});
  if (m && n && k)
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), 1.0, av.data.data(),
                static_cast<int>(k), bv.data.data(), static_cast<int>(n), 0.0, out.data.data(),
                static_cast<int>(n));
  return make_op("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* u = self.grad.data.data();
    if (pa.requires_grad && m && n && k) {
      pa.ensure_grad();
      // dA += U * B^T
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m),
                  static_cast<int>(k), static_cast<int>(n), 1.0, u, static_cast<int>(n),
                  pb.value.data.data(), static_cast<int>(n), 1.0, pa.grad.data.data(),
                  static_cast<int>(k));
    }
    if (pb.requires_grad && m && n && k) {
      pb.ensure_grad();
      // dB += A^T * U
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(k),
                  static_cast<int>(n), static_cast<int>(m), 1.0, pa.value.data.data(),
                  static_cast<int>(k), u, static_cast<int>(n), 1.0, pb.grad.data.data(),
                  static_cast<int>(n));
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

inline NodePtr sum(const NodePtr& x) {
  double s = 0.0;
  for (double v : x->value.data) s += v;
  return make_op("sum", Array::scalar(s), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const double u = self.grad.data[0];
    for (double& g : p.grad.data) g += u;
  });
}

inline NodePtr mean(const NodePtr& x) {
  require(x->value.size() > 0, "mean: empty input");
  double s = 0.0;
  for (double v : x->value.data) s += v;
  const double inv = 1.0 / static_cast<double>(x->value.size());
  return make_op("mean", Array::scalar(s * inv), {x}, [inv](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const double u = self.grad.data[0] * inv;
    for (double& g : p.grad.data) g += u;
  });
}

// Sum over one axis, keeping that axis with extent 1 (broadcast-friendly).
inline NodePtr sum_axis(const NodePtr& x, int axis) {
  const Array& xv = x->value;
  require(axis >= 0 && axis < xv.rank(), "sum_axis: axis ", axis, " out of range for ",
          xv.shape_str());
  auto os = xv.shape;
  const int64_t extent = os[static_cast<size_t>(axis)];
  os[static_cast<size_t>(axis)] = 1;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= xv.shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < xv.rank(); ++i) inner *= xv.shape[static_cast<size_t>(i)];
  Array out(os);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t e = 0; e < extent; ++e) {
      const double* src = xv.data.data() + (o * extent + e) * inner;
      double* dst = out.data.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  return make_op("sum_axis", std::move(out), {x}, [outer, extent, inner](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t e = 0; e < extent; ++e) {
        double* dst = p.grad.data.data() + (o * extent + e) * inner;
        const double* src = self.grad.data.data() + o * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
}

// Exclusive prefix sum along the last axis of a rank-2 array; row r, column k
// gets sum of entries strictly before k.
inline NodePtr cumsum_exclusive(const NodePtr& x) {
  const Array& xv = x->value;
  require(xv.rank() == 2, "cumsum_exclusive: expects rank-2, got ", xv.shape_str());
  const int64_t rows = xv.shape[0], cols = xv.shape[1];
  Array out({rows, cols});
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      out.at2(r, c) = acc;
      acc += xv.at2(r, c);
    }
  }
  return make_op("cumsum_exclusive", std::move(out), {x}, [rows, cols](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    // d/dx_j = sum of upstream over columns strictly after j
    for (int64_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int64_t c = cols - 1; c >= 0; --c) {
        p.grad.at2(r, c) += acc;
        acc += self.grad.at2(r, c);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// shape ops

inline NodePtr reshape(const NodePtr& x, std::vector<int64_t> shape) {
  require(Array::count(shape) == x->value.size(), "reshape: cannot reshape ",
          x->value.shape_str(), " to ", Array::shape_str(shape));
  Array out;
  out.shape = std::move(shape);
  out.data = x->value.data;
  return make_op("reshape", std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += self.grad.data[i];
  });
}

inline NodePtr concat(const std::vector<NodePtr>& xs, int axis) {
  require(!xs.empty(), "concat: no inputs");
  const int rank = xs[0]->value.rank();
  require(axis >= 0 && axis < rank, "concat: axis ", axis, " out of range");
  int64_t axis_total = 0;
  for (const auto& x : xs) {
    require(x->value.rank() == rank, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      require(i == axis || x->value.shape[static_cast<size_t>(i)] ==
                               xs[0]->value.shape[static_cast<size_t>(i)],
              "concat: shape mismatch ", x->value.shape_str(), " vs ",
              xs[0]->value.shape_str(), " on axis ", i);
    axis_total += x->value.shape[static_cast<size_t>(axis)];
  }
  auto os = xs[0]->value.shape;
  os[static_cast<size_t>(axis)] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= os[static_cast<size_t>(i)];
  Array out(os);
  std::vector<int64_t> blocks;
  for (const auto& x : xs) blocks.push_back(x->value.shape[static_cast<size_t>(axis)] * inner);
  const int64_t out_stride = axis_total * inner;
  {
    int64_t off = 0;
    for (size_t xi = 0; xi < xs.size(); ++xi) {
      const Array& v = xs[xi]->value;
      for (int64_t o = 0; o < outer; ++o)
        std::copy_n(v.data.data() + o * blocks[xi], blocks[xi],
                    out.data.data() + o * out_stride + off);
      off += blocks[xi];
    }
  }
  return make_op("concat", std::move(out), xs, [outer, out_stride, blocks](Node& self) {
    int64_t off = 0;
    for (size_t xi = 0; xi < self.parents.size(); ++xi) {
      Node& p = *self.parents[xi];
      if (p.requires_grad) {
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data.data() + o * out_stride + off;
          double* dst = p.grad.data.data() + o * blocks[xi];
          for (int64_t i = 0; i < blocks[xi]; ++i) dst[i] += src[i];
        }
      }
      off += blocks[xi];
    }
  });
}

inline NodePtr slice(const NodePtr& x, int axis, int64_t start, int64_t len) {
  const Array& xv = x->value;
  require(axis >= 0 && axis < xv.rank(), "slice: axis ", axis, " out of range for ",
          xv.shape_str());
  const int64_t extent = xv.shape[static_cast<size_t>(axis)];
  require(start >= 0 && len >= 0 && start + len <= extent, "slice: range [", start, ",",
          start + len, ") exceeds axis extent ", extent);
  auto os = xv.shape;
  os[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= xv.shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < xv.rank(); ++i) inner *= xv.shape[static_cast<size_t>(i)];
  Array out(os);
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(xv.data.data() + (o * extent + start) * inner, len * inner,
                out.data.data() + o * len * inner);
  return make_op("slice", std::move(out), {x}, [outer, extent, inner, start, len](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = self.grad.data.data() + o * len * inner;
      double* dst = p.grad.data.data() + (o * extent + start) * inner;
      for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
}

// Row lookup into a rank-2 table; duplicate indices accumulate on backward.
inline NodePtr gather_rows(const NodePtr& table, std::vector<int64_t> indices) {
  const Array& tv = table->value;
  require(tv.rank() == 2, "gather_rows: table must be rank-2, got ", tv.shape_str());
  const int64_t rows = tv.shape[0], width = tv.shape[1];
  for (int64_t i : indices)
    require(i >= 0 && i < rows, "gather_rows: index ", i, " out of range [0,", rows, ")");
  Array out({static_cast<int64_t>(indices.size()), width});
  for (size_t r = 0; r < indices.size(); ++r)
    std::copy_n(tv.data.data() + indices[r] * width, width, out.data.data() + static_cast<int64_t>(r) * width);
  return make_op("gather_rows", std::move(out), {table},
                 [indices = std::move(indices), width](Node& self) {
                   Node& p = *self.parents[0];
                   p.ensure_grad();
                   for (size_t r = 0; r < indices.size(); ++r) {
                     const double* src = self.grad.data.data() + static_cast<int64_t>(r) * width;
                     double* dst = p.grad.data.data() + indices[r] * width;
                     for (int64_t i = 0; i < width; ++i) dst[i] += src[i];
                   }
                 });
}

// Sums rows of a rank-2 input into their segment: out[seg[r], :] += x[r, :].
// The inverse of gather_rows in the sense that the backward pass is a gather.
inline NodePtr segment_sum(const NodePtr& x, std::vector<int64_t> segments,
                           int64_t n_segments) {
  const Array& xv = x->value;
  require(xv.rank() == 2, "segment_sum: input must be rank-2, got ", xv.shape_str());
  require(static_cast<int64_t>(segments.size()) == xv.shape[0], "segment_sum: ",
          segments.size(), " segment ids for ", xv.shape[0], " rows");
  require(n_segments >= 1, "segment_sum: need at least one segment");
  const int64_t width = xv.shape[1];
  for (int64_t s : segments)
    require(s >= 0 && s < n_segments, "segment_sum: segment id ", s, " out of range [0,",
            n_segments, ")");
  Array out({n_segments, width});
  for (size_t r = 0; r < segments.size(); ++r) {
    const double* src = xv.data.data() + static_cast<int64_t>(r) * width;
    double* dst = out.data.data() + segments[r] * width;
    for (int64_t i = 0; i < width; ++i) dst[i] += src[i];
  }
  return make_op("segment_sum", std::move(out), {x},
                 [segments = std::move(segments), width](Node& self) {
                   Node& p = *self.parents[0];
                   p.ensure_grad();
                   for (size_t r = 0; r < segments.size(); ++r) {
                     const double* src = self.grad.data.data() + segments[r] * width;
                     double* dst = p.grad.data.data() + static_cast<int64_t>(r) * width;
                     for (int64_t i = 0; i < width; ++i) dst[i] += src[i];
                   }
                 });
}

// ---------------------------------------------------------------------------
// positional encoding

// Maps [N,3] coordinates to [N, 3 + 6L]: the raw coordinates followed, per
// frequency l, by sin(2^l pi x) then cos(2^l pi x) for each coordinate.
// Sinusoids are built by double-angle recursion from the base frequency, so
// only two transcendentals per coordinate are evaluated.
inline NodePtr positional_encoding(const NodePtr& x, int freqs) {
  const Array& xv = x->value;
  require(xv.rank() == 2 && xv.shape[1] == 3, "positional_encoding: expects [N,3], got ",
          xv.shape_str());
  require(freqs >= 0, "positional_encoding: negative frequency count");
  const int64_t n = xv.shape[0];
  const int64_t width = 3 + 6 * static_cast<int64_t>(freqs);
  Array out({n, width});
  for (int64_t r = 0; r < n; ++r) {
    const double* in = xv.data.data() + r * 3;
    double* o = out.data.data() + r * width;
    o[0] = in[0];
    o[1] = in[1];
    o[2] = in[2];
    double s[3], c[3];
    for (int j = 0; j < 3; ++j) {
      s[j] = std::sin(kPi * in[j]);
      c[j] = std::cos(kPi * in[j]);
    }
    for (int l = 0; l < freqs; ++l) {
      double* blk = o + 3 + 6 * l;
      for (int j = 0; j < 3; ++j) {
        blk[j] = s[j];
        blk[3 + j] = c[j];
      }
      for (int j = 0; j < 3; ++j) {
        double s2 = 2.0 * s[j] * c[j];
        double c2 = c[j] * c[j] - s[j] * s[j];
        s[j] = s2;
        c[j] = c2;
      }
    }
  }
  return make_op("positional_encoding", std::move(out), {x}, [n, freqs, width](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t r = 0; r < n; ++r) {
      const double* u = self.grad.data.data() + r * width;
      const double* o = self.value.data.data() + r * width;
      double* g = p.grad.data.data() + r * 3;
      for (int j = 0; j < 3; ++j) {
        double acc = u[j];
        double f = kPi;
        for (int l = 0; l < freqs; ++l) {
          const double sv = o[3 + 6 * l + j];
          const double cv = o[3 + 6 * l + 3 + j];
          acc += f * (u[3 + 6 * l + j] * cv - u[3 + 6 * l + 3 + j] * sv);
          f *= 2.0;
        }
        g[j] += acc;
      }
    }
  });
}

}  // namespace roomnerf
