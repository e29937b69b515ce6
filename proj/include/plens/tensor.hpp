#pragma once

// Minimal dense 2-D tensor with reverse-mode differentiation. Scalar type is
// a template parameter: float for training, double for finite-difference
// gradient checks. Scalars are 1x1 tensors.
//
// Graphs are built eagerly; backward() walks the recorded tape. Leaf tensors
// created with requires_grad participate; every op captures its parents'
// version counters, and mutating a parameter afterwards (optimizer steps bump
// the counter) invalidates recorded graphs, caught at backward time.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "plens/common.hpp"

namespace plens {

/// NaN/Inf detection on op outputs. Defaults on in debug builds; tests flip
/// it on explicitly where they rely on it.
inline std::atomic<bool>& finite_checks() {
#ifdef NDEBUG
  static std::atomic<bool> on{false};
#else
  static std::atomic<bool> on{true};
#endif
  return on;
}

template <class S>
struct Node {
  std::size_t r = 0, c = 0;
  std::vector<S> v;
  std::vector<S> g;
  bool needs_grad = false;
  std::uint64_t version = 0;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void()> backprop;  // accumulates into parents' g

  std::size_t size() const { return r * c; }
  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), S(0));
  }
};

template <class S>
using NodePtr = std::shared_ptr<Node<S>>;

template <class S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr<S> n) : node_(std::move(n)) {}

  static Tensor constant(std::size_t r, std::size_t c, std::vector<S> v) {
    auto n = std::make_shared<Node<S>>();
    n->r = r;
    n->c = c;
    if (v.empty()) v.assign(r * c, S(0));
    if (v.size() != r * c) throw ValidationError("tensor data length mismatch");
    n->v = std::move(v);
    return Tensor(std::move(n));
  }
  static Tensor zeros(std::size_t r, std::size_t c) { return constant(r, c, {}); }
  static Tensor full(std::size_t r, std::size_t c, S value) {
    return constant(r, c, std::vector<S>(r * c, value));
  }
  static Tensor param(std::size_t r, std::size_t c, std::vector<S> v) {
    Tensor t = constant(r, c, std::move(v));
    t.node_->needs_grad = true;
    t.node_->ensure_grad();
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->r; }
  std::size_t cols() const { return node_->c; }
  std::size_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->needs_grad; }

  std::vector<S>& values() { return node_->v; }
  const std::vector<S>& values() const { return node_->v; }
  const std::vector<S>& grad() const { return node_->g; }

  S at(std::size_t i, std::size_t j) const { return node_->v[i * node_->c + j]; }
  S grad_at(std::size_t i, std::size_t j) const {
    return node_->g.empty() ? S(0) : node_->g[i * node_->c + j];
  }
  S item() const {
    if (node_->size() != 1) throw ValidationError("item() on non-scalar tensor");
    return node_->v[0];
  }

  void zero_grad() { node_->g.assign(node_->v.size(), S(0)); }
  /// Marks in-place value mutation (optimizer updates), invalidating any
  /// recorded graph that still references this tensor.
  void bump_version() { ++node_->version; }

  NodePtr<S> node() const { return node_; }

 private:
  NodePtr<S> node_;
};

namespace detail {

template <class S>
void maybe_check_finite(const std::vector<S>& v, const char* op) {
  if (!finite_checks().load(std::memory_order_relaxed)) return;
  for (S x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw RuntimeFailure(std::string("non-finite value out of ") + op);
}

template <class S>
NodePtr<S> new_node(std::size_t r, std::size_t c, std::vector<NodePtr<S>> parents) {
  auto n = std::make_shared<Node<S>>();
  n->r = r;
  n->c = c;
  n->v.assign(r * c, S(0));
  for (const auto& p : parents)
    if (p->needs_grad) n->needs_grad = true;
  n->parents = std::move(parents);
  return n;
}

/// Guards a recorded closure against later parameter mutation.
template <class S>
struct VersionGuard {
  std::vector<std::pair<Node<S>*, std::uint64_t>> seen;
  explicit VersionGuard(std::initializer_list<Node<S>*> nodes) {
    for (auto* n : nodes) seen.emplace_back(n, n->version);
  }
  void check() const {
    for (const auto& [n, ver] : seen)
      if (n->version != ver)
        throw RuntimeFailure("backward on a graph recorded before a parameter mutation");
  }
};

// a (m,k) x b (k,n) -> out (m,n), accumulating.
template <class S>
void mm_nn(const S* a, const S* b, S* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const S av = a[i * k + p];
      if (av == S(0)) continue;
      const S* brow = b + p * n;
      S* orow = out + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
}

// a (m,k) x b^T, b (n,k) -> out (m,n), accumulating.
template <class S>
void mm_nt(const S* a, const S* b, S* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      S acc = 0;
      const S* arow = a + i * k;
      const S* brow = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] += acc;
    }
}

// a^T, a (k,m) x b (k,n) -> out (m,n), accumulating.
template <class S>
void mm_tn(const S* a, const S* b, S* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const S* arow = a + p * m;
    const S* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const S av = arow[i];
      if (av == S(0)) continue;
      S* orow = out + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  auto A = a.node(), B = b.node();
  if (A->c != B->r) throw ValidationError("matmul shape mismatch");
  auto n = detail::new_node<S>(A->r, B->c, {A, B});
  detail::mm_nn(A->v.data(), B->v.data(), n->v.data(), A->r, A->c, B->c);
  detail::maybe_check_finite(n->v, "matmul");
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), B.get()};
    n->backprop = [self, A, B, guard] {
      guard.check();
      if (A->needs_grad) {
        A->ensure_grad();
        detail::mm_nt(self->g.data(), B->v.data(), A->g.data(), self->r, self->c, A->c);
      }
      if (B->needs_grad) {
        B->ensure_grad();
        detail::mm_tn(A->v.data(), self->g.data(), B->g.data(), B->r, A->r, B->c);
      }
    };
  }
  return Tensor<S>(n);
}

/// a x b^T.
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  auto A = a.node(), B = b.node();
  if (A->c != B->c) throw ValidationError("matmul_nt shape mismatch");
  auto n = detail::new_node<S>(A->r, B->r, {A, B});
  detail::mm_nt(A->v.data(), B->v.data(), n->v.data(), A->r, A->c, B->r);
  detail::maybe_check_finite(n->v, "matmul_nt");
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), B.get()};
    n->backprop = [self, A, B, guard] {
      guard.check();
      // C = A B^T: dA = dC B, dB = dC^T A.
      if (A->needs_grad) {
        A->ensure_grad();
        detail::mm_nn(self->g.data(), B->v.data(), A->g.data(), self->r, self->c, A->c);
      }
      if (B->needs_grad) {
        B->ensure_grad();
        detail::mm_tn(self->g.data(), A->v.data(), B->g.data(), B->r, self->r, B->c);
      }
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  auto A = a.node(), B = b.node();
  if (A->r != B->r || A->c != B->c) throw ValidationError("add shape mismatch");
  auto n = detail::new_node<S>(A->r, A->c, {A, B});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = A->v[i] + B->v[i];
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), B.get()};
    n->backprop = [self, A, B, guard] {
      guard.check();
      for (auto* P : {A.get(), B.get()}) {
        if (!P->needs_grad) continue;
        P->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i) P->g[i] += self->g[i];
      }
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  auto A = a.node(), B = b.node();
  if (A->r != B->r || A->c != B->c) throw ValidationError("sub shape mismatch");
  auto n = detail::new_node<S>(A->r, A->c, {A, B});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = A->v[i] - B->v[i];
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), B.get()};
    n->backprop = [self, A, B, guard] {
      guard.check();
      if (A->needs_grad) {
        A->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i];
      }
      if (B->needs_grad) {
        B->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i) B->g[i] -= self->g[i];
      }
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  auto A = a.node(), B = b.node();
  if (A->r != B->r || A->c != B->c) throw ValidationError("mul shape mismatch");
  auto n = detail::new_node<S>(A->r, A->c, {A, B});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = A->v[i] * B->v[i];
  detail::maybe_check_finite(n->v, "mul");
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), B.get()};
    n->backprop = [self, A, B, guard] {
      guard.check();
      if (A->needs_grad) {
        A->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i] * B->v[i];
      }
      if (B->needs_grad) {
        B->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i) B->g[i] += self->g[i] * A->v[i];
      }
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  auto A = a.node();
  auto n = detail::new_node<S>(A->r, A->c, {A});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = A->v[i] * factor;
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, factor, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i] * factor;
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, S value) {
  auto A = a.node();
  auto n = detail::new_node<S>(A->r, A->c, {A});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = A->v[i] + value;
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i];
    };
  }
  return Tensor<S>(n);
}

/// a (m,n) + row (1,n), broadcast over rows.
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& a, const Tensor<S>& row) {
  auto A = a.node(), B = row.node();
  if (B->r != 1 || A->c != B->c) throw ValidationError("add_rowvec shape mismatch");
  auto n = detail::new_node<S>(A->r, A->c, {A, B});
  for (std::size_t i = 0; i < A->r; ++i)
    for (std::size_t j = 0; j < A->c; ++j) n->v[i * A->c + j] = A->v[i * A->c + j] + B->v[j];
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), B.get()};
    n->backprop = [self, A, B, guard] {
      guard.check();
      if (A->needs_grad) {
        A->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i];
      }
      if (B->needs_grad) {
        B->ensure_grad();
        for (std::size_t i = 0; i < self->r; ++i)
          for (std::size_t j = 0; j < self->c; ++j) B->g[j] += self->g[i * self->c + j];
      }
    };
  }
  return Tensor<S>(n);
}

/// Row i of a scaled by s[i]; s is (m,1).
template <class S>
Tensor<S> scale_rows(const Tensor<S>& a, const Tensor<S>& s) {
  auto A = a.node(), Sn = s.node();
  if (Sn->c != 1 || Sn->r != A->r) throw ValidationError("scale_rows shape mismatch");
  auto n = detail::new_node<S>(A->r, A->c, {A, Sn});
  for (std::size_t i = 0; i < A->r; ++i)
    for (std::size_t j = 0; j < A->c; ++j) n->v[i * A->c + j] = A->v[i * A->c + j] * Sn->v[i];
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), Sn.get()};
    n->backprop = [self, A, Sn, guard] {
      guard.check();
      if (A->needs_grad) {
        A->ensure_grad();
        for (std::size_t i = 0; i < self->r; ++i)
          for (std::size_t j = 0; j < self->c; ++j)
            A->g[i * self->c + j] += self->g[i * self->c + j] * Sn->v[i];
      }
      if (Sn->needs_grad) {
        Sn->ensure_grad();
        for (std::size_t i = 0; i < self->r; ++i) {
          S acc = 0;
          for (std::size_t j = 0; j < self->c; ++j)
            acc += self->g[i * self->c + j] * A->v[i * self->c + j];
          Sn->g[i] += acc;
        }
      }
    };
  }
  return Tensor<S>(n);
}

/// Rows of a selected by idx (repeats allowed); gradient scatter-adds.
template <class S>
Tensor<S> gather_rows(const Tensor<S>& a, std::vector<std::size_t> idx) {
  auto A = a.node();
  for (std::size_t i : idx)
    if (i >= A->r) throw ValidationError("gather_rows index out of range");
  auto n = detail::new_node<S>(idx.size(), A->c, {A});
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::size_t j = 0; j < A->c; ++j) n->v[k * A->c + j] = A->v[idx[k] * A->c + j];
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, idx = std::move(idx), guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t k = 0; k < idx.size(); ++k)
        for (std::size_t j = 0; j < self->c; ++j)
          A->g[idx[k] * self->c + j] += self->g[k * self->c + j];
    };
  }
  return Tensor<S>(n);
}

/// Mean over all rows -> (1,n).
template <class S>
Tensor<S> mean_rows(const Tensor<S>& a) {
  auto A = a.node();
  if (A->r == 0) throw ValidationError("mean_rows on empty tensor");
  auto n = detail::new_node<S>(1, A->c, {A});
  for (std::size_t i = 0; i < A->r; ++i)
    for (std::size_t j = 0; j < A->c; ++j) n->v[j] += A->v[i * A->c + j];
  const S inv = S(1) / static_cast<S>(A->r);
  for (std::size_t j = 0; j < A->c; ++j) n->v[j] *= inv;
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, inv, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < A->r; ++i)
        for (std::size_t j = 0; j < self->c; ++j) A->g[i * self->c + j] += self->g[j] * inv;
    };
  }
  return Tensor<S>(n);
}

/// Horizontal concatenation of same-row-count tensors.
template <class S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols of nothing");
  std::vector<NodePtr<S>> nodes;
  std::size_t total = 0;
  const std::size_t r = parts[0].rows();
  for (const auto& t : parts) {
    if (t.rows() != r) throw ValidationError("concat_cols row mismatch");
    nodes.push_back(t.node());
    total += t.cols();
  }
  auto n = detail::new_node<S>(r, total, nodes);
  std::size_t off = 0;
  for (const auto& p : nodes) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p->c; ++j) n->v[i * total + off + j] = p->v[i * p->c + j];
    off += p->c;
  }
  if (n->needs_grad) {
    auto* self = n.get();
    std::vector<std::pair<Node<S>*, std::uint64_t>> seen;
    for (const auto& p : nodes) seen.emplace_back(p.get(), p->version);
    n->backprop = [self, nodes, seen] {
      for (const auto& [p, ver] : seen)
        if (p->version != ver)
          throw RuntimeFailure("backward on a graph recorded before a parameter mutation");
      std::size_t off = 0;
      for (const auto& p : nodes) {
        if (p->needs_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < self->r; ++i)
            for (std::size_t j = 0; j < p->c; ++j)
              p->g[i * p->c + j] += self->g[i * self->c + off + j];
        }
        off += p->c;
      }
    };
  }
  return Tensor<S>(n);
}

/// Vertical stack of (1,c) rows (or general same-width blocks).
template <class S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ValidationError("stack_rows of nothing");
  std::vector<NodePtr<S>> nodes;
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& t : parts) {
    if (t.cols() != c) throw ValidationError("stack_rows column mismatch");
    nodes.push_back(t.node());
    total += t.rows();
  }
  auto n = detail::new_node<S>(total, c, nodes);
  std::size_t off = 0;
  for (const auto& p : nodes) {
    for (std::size_t i = 0; i < p->v.size(); ++i) n->v[off * c + i] = p->v[i];
    off += p->r;
  }
  if (n->needs_grad) {
    auto* self = n.get();
    std::vector<std::pair<Node<S>*, std::uint64_t>> seen;
    for (const auto& p : nodes) seen.emplace_back(p.get(), p->version);
    n->backprop = [self, nodes, seen] {
      for (const auto& [p, ver] : seen)
        if (p->version != ver)
          throw RuntimeFailure("backward on a graph recorded before a parameter mutation");
      std::size_t off = 0;
      for (const auto& p : nodes) {
        if (p->needs_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < p->v.size(); ++i) p->g[i] += self->g[off * self->c + i];
        }
        off += p->r;
      }
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> slice_rows(const Tensor<S>& a, std::size_t r0, std::size_t r1) {
  auto A = a.node();
  if (r0 >= r1 || r1 > A->r) throw ValidationError("slice_rows range invalid");
  auto n = detail::new_node<S>(r1 - r0, A->c, {A});
  for (std::size_t i = 0; i < n->r; ++i)
    for (std::size_t j = 0; j < A->c; ++j) n->v[i * A->c + j] = A->v[(r0 + i) * A->c + j];
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, r0, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->r; ++i)
        for (std::size_t j = 0; j < self->c; ++j)
          A->g[(r0 + i) * self->c + j] += self->g[i * self->c + j];
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> slice_cols(const Tensor<S>& a, std::size_t c0, std::size_t c1) {
  auto A = a.node();
  if (c0 >= c1 || c1 > A->c) throw ValidationError("slice_cols range invalid");
  auto n = detail::new_node<S>(A->r, c1 - c0, {A});
  for (std::size_t i = 0; i < A->r; ++i)
    for (std::size_t j = 0; j < n->c; ++j) n->v[i * n->c + j] = A->v[i * A->c + c0 + j];
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, c0, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->r; ++i)
        for (std::size_t j = 0; j < self->c; ++j)
          A->g[i * A->c + c0 + j] += self->g[i * self->c + j];
    };
  }
  return Tensor<S>(n);
}

/// Row-wise softmax. `mask`, when given, holds additive logit offsets (0 keeps
/// a position, a large negative number removes it); no gradient flows into it.
/// A row whose every position is masked off is an error.
template <class S>
Tensor<S> softmax_rows(const Tensor<S>& a, const std::vector<S>* mask = nullptr) {
  auto A = a.node();
  if (mask && mask->size() != A->v.size()) throw ValidationError("softmax mask shape mismatch");
  auto n = detail::new_node<S>(A->r, A->c, {A});
  constexpr S kMaskFloor = S(-1e29);
  for (std::size_t i = 0; i < A->r; ++i) {
    S mx = -std::numeric_limits<S>::infinity();
    for (std::size_t j = 0; j < A->c; ++j) {
      S x = A->v[i * A->c + j] + (mask ? (*mask)[i * A->c + j] : S(0));
      n->v[i * A->c + j] = x;
      if (x > mx) mx = x;
    }
    if (mx < kMaskFloor) throw RuntimeFailure("softmax row fully masked");
    S z = 0;
    for (std::size_t j = 0; j < A->c; ++j) {
      S e = std::exp(n->v[i * A->c + j] - mx);
      n->v[i * A->c + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < A->c; ++j) n->v[i * A->c + j] /= z;
  }
  detail::maybe_check_finite(n->v, "softmax_rows");
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->r; ++i) {
        S dot = 0;
        for (std::size_t j = 0; j < self->c; ++j)
          dot += self->g[i * self->c + j] * self->v[i * self->c + j];
        for (std::size_t j = 0; j < self->c; ++j)
          A->g[i * self->c + j] +=
              self->v[i * self->c + j] * (self->g[i * self->c + j] - dot);
      }
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> log_softmax_rows(const Tensor<S>& a) {
  auto A = a.node();
  auto n = detail::new_node<S>(A->r, A->c, {A});
  for (std::size_t i = 0; i < A->r; ++i) {
    S mx = A->v[i * A->c];
    for (std::size_t j = 1; j < A->c; ++j) mx = std::max(mx, A->v[i * A->c + j]);
    S z = 0;
    for (std::size_t j = 0; j < A->c; ++j) z += std::exp(A->v[i * A->c + j] - mx);
    const S lz = mx + std::log(z);
    for (std::size_t j = 0; j < A->c; ++j) n->v[i * A->c + j] = A->v[i * A->c + j] - lz;
  }
  detail::maybe_check_finite(n->v, "log_softmax_rows");
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->r; ++i) {
        S gsum = 0;
        for (std::size_t j = 0; j < self->c; ++j) gsum += self->g[i * self->c + j];
        for (std::size_t j = 0; j < self->c; ++j)
          A->g[i * self->c + j] +=
              self->g[i * self->c + j] - std::exp(self->v[i * self->c + j]) * gsum;
      }
    };
  }
  return Tensor<S>(n);
}

/// Row-wise layer normalization with learned gain/bias (1,n).
template <class S>
Tensor<S> layer_norm(const Tensor<S>& a, const Tensor<S>& gain, const Tensor<S>& bias,
                     S eps = S(1e-5)) {
  auto A = a.node(), G = gain.node(), B = bias.node();
  if (G->r != 1 || B->r != 1 || G->c != A->c || B->c != A->c)
    throw ValidationError("layer_norm shape mismatch");
  auto n = detail::new_node<S>(A->r, A->c, {A, G, B});
  // xhat retained for the backward pass.
  auto xhat = std::make_shared<std::vector<S>>(A->v.size());
  auto inv_std = std::make_shared<std::vector<S>>(A->r);
  const std::size_t C = A->c;
  for (std::size_t i = 0; i < A->r; ++i) {
    S mu = 0;
    for (std::size_t j = 0; j < C; ++j) mu += A->v[i * C + j];
    mu /= static_cast<S>(C);
    S var = 0;
    for (std::size_t j = 0; j < C; ++j) {
      S d = A->v[i * C + j] - mu;
      var += d * d;
    }
    var /= static_cast<S>(C);
    const S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < C; ++j) {
      S xh = (A->v[i * C + j] - mu) * is;
      (*xhat)[i * C + j] = xh;
      n->v[i * C + j] = G->v[j] * xh + B->v[j];
    }
  }
  detail::maybe_check_finite(n->v, "layer_norm");
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), G.get(), B.get()};
    n->backprop = [self, A, G, B, xhat, inv_std, guard] {
      guard.check();
      const std::size_t C = self->c;
      if (G->needs_grad) G->ensure_grad();
      if (B->needs_grad) B->ensure_grad();
      if (A->needs_grad) A->ensure_grad();
      for (std::size_t i = 0; i < self->r; ++i) {
        S sum_dxh = 0, sum_dxh_xh = 0;
        for (std::size_t j = 0; j < C; ++j) {
          const S dy = self->g[i * C + j];
          const S xh = (*xhat)[i * C + j];
          if (G->needs_grad) G->g[j] += dy * xh;
          if (B->needs_grad) B->g[j] += dy;
          const S dxh = dy * G->v[j];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
        }
        if (A->needs_grad) {
          const S is = (*inv_std)[i];
          const S invC = S(1) / static_cast<S>(C);
          for (std::size_t j = 0; j < C; ++j) {
            const S dxh = self->g[i * C + j] * G->v[j];
            const S xh = (*xhat)[i * C + j];
            A->g[i * C + j] += is * (dxh - invC * sum_dxh - xh * invC * sum_dxh_xh);
          }
        }
      }
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  auto A = a.node();
  auto n = detail::new_node<S>(A->r, A->c, {A});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = A->v[i] > S(0) ? A->v[i] : S(0);
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->g.size(); ++i)
        if (A->v[i] > S(0)) A->g[i] += self->g[i];
    };
  }
  return Tensor<S>(n);
}

/// Inverted dropout: training keeps each unit with probability 1-p and scales
/// by 1/(1-p); evaluation is the identity.
template <class S>
Tensor<S> dropout(const Tensor<S>& a, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout rate must lie in [0,1)");
  if (!training || p == 0.0) return a;
  auto A = a.node();
  auto n = detail::new_node<S>(A->r, A->c, {A});
  auto keep = std::make_shared<std::vector<S>>(A->v.size());
  const S inv = S(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < A->v.size(); ++i) {
    const S m = bernoulli(rng, p) ? S(0) : inv;
    (*keep)[i] = m;
    n->v[i] = A->v[i] * m;
  }
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, keep, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i] * (*keep)[i];
    };
  }
  return Tensor<S>(n);
}

/// Same data, new shape (r*c must match); gradient passes through.
template <class S>
Tensor<S> reshape(const Tensor<S>& a, std::size_t r, std::size_t c) {
  auto A = a.node();
  if (r * c != A->v.size()) throw ValidationError("reshape size mismatch");
  auto n = detail::new_node<S>(r, c, {A});
  n->v = A->v;
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i];
    };
  }
  return Tensor<S>(n);
}

/// Elementwise division, same shapes.
template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  auto A = a.node(), B = b.node();
  if (A->r != B->r || A->c != B->c) throw ValidationError("div shape mismatch");
  auto n = detail::new_node<S>(A->r, A->c, {A, B});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = A->v[i] / B->v[i];
  detail::maybe_check_finite(n->v, "div");
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), B.get()};
    n->backprop = [self, A, B, guard] {
      guard.check();
      if (A->needs_grad) {
        A->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i] / B->v[i];
      }
      if (B->needs_grad) {
        B->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i)
          B->g[i] -= self->g[i] * A->v[i] / (B->v[i] * B->v[i]);
      }
    };
  }
  return Tensor<S>(n);
}

/// Whole tensor scaled by a 1x1 graph scalar.
template <class S>
Tensor<S> scale_by(const Tensor<S>& a, const Tensor<S>& s) {
  auto A = a.node(), Sn = s.node();
  if (Sn->size() != 1) throw ValidationError("scale_by expects a scalar");
  auto n = detail::new_node<S>(A->r, A->c, {A, Sn});
  const S f = Sn->v[0];
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = A->v[i] * f;
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get(), Sn.get()};
    n->backprop = [self, A, Sn, guard] {
      guard.check();
      if (A->needs_grad) {
        A->ensure_grad();
        for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i] * Sn->v[0];
      }
      if (Sn->needs_grad) {
        Sn->ensure_grad();
        S acc = 0;
        for (std::size_t i = 0; i < self->g.size(); ++i) acc += self->g[i] * A->v[i];
        Sn->g[0] += acc;
      }
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> clamp_max(const Tensor<S>& a, S hi) {
  auto A = a.node();
  auto n = detail::new_node<S>(A->r, A->c, {A});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = std::min(A->v[i], hi);
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, hi, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->g.size(); ++i)
        if (A->v[i] < hi) A->g[i] += self->g[i];
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> clamp_min(const Tensor<S>& a, S lo) {
  auto A = a.node();
  auto n = detail::new_node<S>(A->r, A->c, {A});
  for (std::size_t i = 0; i < n->v.size(); ++i) n->v[i] = std::max(A->v[i], lo);
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, lo, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->g.size(); ++i)
        if (A->v[i] > lo) A->g[i] += self->g[i];
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> log_t(const Tensor<S>& a) {
  auto A = a.node();
  auto n = detail::new_node<S>(A->r, A->c, {A});
  for (std::size_t i = 0; i < n->v.size(); ++i) {
    if (A->v[i] <= S(0)) throw RuntimeFailure("log of non-positive value");
    n->v[i] = std::log(A->v[i]);
  }
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < self->g.size(); ++i) A->g[i] += self->g[i] / A->v[i];
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  auto A = a.node();
  auto n = detail::new_node<S>(1, 1, {A});
  S acc = 0;
  for (S x : A->v) acc += x;
  n->v[0] = acc;
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, guard] {
      guard.check();
      A->ensure_grad();
      for (std::size_t i = 0; i < A->g.size(); ++i) A->g[i] += self->g[0];
    };
  }
  return Tensor<S>(n);
}

template <class S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.size()));
}

/// Single element as a scalar tensor.
template <class S>
Tensor<S> pick(const Tensor<S>& a, std::size_t i, std::size_t j) {
  auto A = a.node();
  if (i >= A->r || j >= A->c) throw ValidationError("pick index out of range");
  auto n = detail::new_node<S>(1, 1, {A});
  n->v[0] = A->v[i * A->c + j];
  if (n->needs_grad) {
    auto* self = n.get();
    detail::VersionGuard<S> guard{A.get()};
    n->backprop = [self, A, i, j, guard] {
      guard.check();
      A->ensure_grad();
      A->g[i * A->c + j] += self->g[0];
    };
  }
  return Tensor<S>(n);
}

/// Cuts the tape: same values, no history, no gradient.
template <class S>
Tensor<S> detach(const Tensor<S>& a) {
  return Tensor<S>::constant(a.rows(), a.cols(), a.values());
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable tensor with requires_grad; callers zero parameter grads between
/// steps.
template <class S>
void backward(const Tensor<S>& loss) {
  auto root = loss.node();
  if (!root) throw ValidationError("backward on empty tensor");
  if (root->size() != 1) throw ValidationError("backward requires a scalar loss");
  if (!root->needs_grad) return;

  // Iterative post-order DFS for the topological order.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (p->needs_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->g[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backprop && !n->g.empty()) n->backprop();
  }
}

}  // namespace plens
