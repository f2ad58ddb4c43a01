#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "medformer/macs.hpp"

namespace mf {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValueError : std::runtime_error {
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Reverse-mode tape node. A node owns its forward value and, when it
// participates in differentiation, a closure that scatters the node's
// gradient into its parents. The recorded graph is acyclic; backward()
// replays closures in reverse topological order.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::function<void()> backward;
  std::vector<std::shared_ptr<Node>> parents;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : node_(std::make_shared<Node<T>>()) {}

  explicit Tensor(Shape shape, T fill = T(0))
      : node_(std::make_shared<Node<T>>()) {
    node_->shape = std::move(shape);
    node_->data.assign(numel(node_->shape), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : node_(std::make_shared<Node<T>>()) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }

  static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }

  static Tensor randn(Shape shape, std::mt19937_64& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.node_->data) v = static_cast<T>(dist(rng)) * stddev;
    return t;
  }

  static Tensor uniform(Shape shape, std::mt19937_64& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.node_->data) v = static_cast<T>(dist(rng));
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }

  T* data() { return node_->data.data(); }
  const T* data() const { return node_->data.data(); }
  std::vector<T>& vec() { return node_->data; }
  const std::vector<T>& vec() const { return node_->data; }

  T& operator[](std::size_t i) { return node_->data[i]; }
  T operator[](std::size_t i) const { return node_->data[i]; }

  T item() const {
    if (size() != 1) throw ValueError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    node_->requires_grad = b;
    return *this;
  }

  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<T>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  // Value copy detached from the tape.
  Tensor detached() const {
    Tensor t;
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    return t;
  }

  std::shared_ptr<Node<T>> node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Wires the result node into the tape when any input needs gradients.
// `bwd` receives the finished output node.
template <class T, class F>
void attach(Tensor<T>& out, std::initializer_list<Tensor<T>> inputs, F bwd) {
  bool need = false;
  for (const auto& in : inputs) need = need || in.requires_grad();
  if (!need) return;
  auto n = out.node();
  n->requires_grad = true;
  for (const auto& in : inputs) n->parents.push_back(in.node());
  Node<T>* raw = n.get();
  n->backward = [raw, bwd]() { bwd(*raw); };
}

}  // namespace detail

// Runs the reverse pass from a scalar loss. Every reachable requires_grad
// node receives its accumulated gradient exactly once.
template <class T>
void backward(Tensor<T> loss) {
  if (loss.size() != 1)
    throw ValueError("backward() requires a scalar, got " + shape_str(loss.shape()));
  // Iterative post-order topological sort.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (auto* n : order) n->ensure_grad();
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward();
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic. No broadcasting: shape mismatches are errors.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  detail::attach(out, {a, b}, [a = a.node(), b = b.node()](Node<T>& o) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) b->grad[i] += o.grad[i];
    }
  });
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  detail::attach(out, {a, b}, [a = a.node(), b = b.node()](Node<T>& o) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) b->grad[i] -= o.grad[i];
    }
  });
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  detail::attach(out, {a, b}, [a = a.node(), b = b.node()](Node<T>& o) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i] * b->data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) b->grad[i] += o.grad[i] * a->data[i];
    }
  });
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  detail::attach(out, {a}, [a = a.node(), s](Node<T>& o) {
    a->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) a->grad[i] += o.grad[i] * s;
  });
  return out;
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  // tanh approximation: 0.5 x (1 + tanh(c (x + a x^3))),
  // c = sqrt(2/pi), a = 0.044715.
  constexpr double kC = 0.7978845608028654;
  constexpr double kA = 0.044715;
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = x[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
  }
  detail::attach(out, {x}, [x = x.node()](Node<T>& o) {
    constexpr double kC = 0.7978845608028654;
    constexpr double kA = 0.044715;
    x->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      double v = x->data[i];
      double u = kC * (v + kA * v * v * v);
      double t = std::tanh(u);
      double du = kC * (1.0 + 3.0 * kA * v * v);
      double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      x->grad[i] += o.grad[i] * static_cast<T>(d);
    }
  });
  return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  Tensor<T> out(Shape{1}, std::vector<T>{s});
  detail::attach(out, {x}, [x = x.node()](Node<T>& o) {
    x->ensure_grad();
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += o.grad[0];
  });
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// ---------------------------------------------------------------------------
// Shape ops. reshape is a copy with trivial gradient; transpose and the
// slice/concat family move data and scatter gradients back.
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  check(numel(shape) == x.size(),
        "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<T> out(std::move(shape), x.vec());
  detail::attach(out, {x}, [x = x.node()](Node<T>& o) {
    x->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) x->grad[i] += o.grad[i];
  });
  return out;
}

template <class T>
Tensor<T> flatten(const Tensor<T>& x) {
  return reshape(x, Shape{x.size()});
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  check(x.rank() == 2, "transpose: rank-2 required, got " + shape_str(x.shape()));
  std::size_t m = x.dim(0), n = x.dim(1);
  Tensor<T> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  detail::attach(out, {x}, [x = x.node(), m, n](Node<T>& o) {
    x->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) x->grad[i * n + j] += o.grad[j * m + i];
  });
  return out;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t j0, std::size_t j1) {
  check(x.rank() == 2 && j0 < j1 && j1 <= x.dim(1),
        "slice_cols: bad range on " + shape_str(x.shape()));
  std::size_t m = x.dim(0), n = x.dim(1), w = j1 - j0;
  Tensor<T> out(Shape{m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * n + j0 + j];
  detail::attach(out, {x}, [x = x.node(), m, n, w, j0](Node<T>& o) {
    x->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) x->grad[i * n + j0 + j] += o.grad[i * w + j];
  });
  return out;
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_cols: empty list");
  std::size_t m = parts[0].dim(0), n = 0;
  for (const auto& p : parts) {
    check(p.rank() == 2 && p.dim(0) == m, "concat_cols: row mismatch");
    n += p.dim(1);
  }
  Tensor<T> out(Shape{m, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + off + j] = p[i * w + j];
    off += w;
  }
  bool need = false;
  for (const auto& p : parts) need = need || p.requires_grad();
  if (need) {
    auto on = out.node();
    on->requires_grad = true;
    for (const auto& p : parts) on->parents.push_back(p.node());
    Node<T>* raw = on.get();
    on->backward = [raw, m, n]() {
      std::size_t off = 0;
      for (auto& pn : raw->parents) {
        std::size_t w = pn->shape[1];
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j)
              pn->grad[i * w + j] += raw->grad[i * n + off + j];
        }
        off += w;
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_rows: empty list");
  std::size_t n = parts[0].dim(1), m = 0;
  for (const auto& p : parts) {
    check(p.rank() == 2 && p.dim(1) == n, "concat_rows: column mismatch");
    m += p.dim(0);
  }
  Tensor<T> out(Shape{m, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + off);
    off += p.size();
  }
  bool need = false;
  for (const auto& p : parts) need = need || p.requires_grad();
  if (need) {
    auto on = out.node();
    on->requires_grad = true;
    for (const auto& p : parts) on->parents.push_back(p.node());
    Node<T>* raw = on.get();
    on->backward = [raw]() {
      std::size_t off = 0;
      for (auto& pn : raw->parents) {
        std::size_t sz = pn->data.size();
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::size_t i = 0; i < sz; ++i) pn->grad[i] += raw->grad[off + i];
        }
        off += sz;
      }
    };
  }
  return out;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t i0, std::size_t i1) {
  check(x.rank() == 2 && i0 < i1 && i1 <= x.dim(0),
        "slice_rows: bad range on " + shape_str(x.shape()));
  std::size_t n = x.dim(1), h = i1 - i0;
  Tensor<T> out(Shape{h, n});
  std::copy(x.data() + i0 * n, x.data() + i1 * n, out.data());
  detail::attach(out, {x}, [x = x.node(), i0, n, h](Node<T>& o) {
    x->ensure_grad();
    for (std::size_t i = 0; i < h * n; ++i) x->grad[i0 * n + i] += o.grad[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// matmul and softmax
// ---------------------------------------------------------------------------

namespace detail {

// C[m x n] += A[m x k] * B[k x n], ikj order for contiguous inner loop.
template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B^T where Bt is [n x k].
template <class T>
void gemm_bt_acc(const T* a, const T* bt, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = bt + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[m x n] += A^T * B where At is [k x m], B is [k x n].
template <class T>
void gemm_at_acc(const T* at, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = at + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
        "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out(Shape{m, n});
  detail::gemm_acc(a.data(), b.data(), out.data(), m, k, n);
  mac_counter() += static_cast<std::uint64_t>(m) * k * n;
  detail::attach(out, {a, b}, [a = a.node(), b = b.node(), m, k, n](Node<T>& o) {
    // dA = dC B^T, dB = A^T dC
    if (a->requires_grad) {
      a->ensure_grad();
      detail::gemm_bt_acc(o.grad.data(), b->data.data(), a->grad.data(), m, n, k);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      detail::gemm_at_acc(a->data.data(), o.grad.data(), b->grad.data(), k, m, n);
    }
  });
  return out;
}

// Row-wise softmax of a rank-2 tensor, stabilized by max subtraction.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  check(x.rank() == 2, "softmax_rows: rank-2 required, got " + shape_str(x.shape()));
  std::size_t m = x.dim(0), n = x.dim(1);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data() + i * n;
    T* orow = out.data() + i * n;
    T mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= z;
  }
  detail::attach(out, {x}, [x = x.node(), m, n](Node<T>& o) {
    x->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = o.data.data() + i * n;
      const T* dy = o.grad.data() + i * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      T* dx = x->grad.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dx[j] += (dy[j] - dot) * y[j];
    }
  });
  return out;
}

}  // namespace mf
