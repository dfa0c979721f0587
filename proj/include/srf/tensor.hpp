#pragma once

// Reverse-mode autodiff over dense row-major arrays. The graph is a dynamic
// tape: every op allocates a node holding its value plus a closure that pushes
// adjoints into its parents. backward() walks the tape in reverse topological
// order, accumulates into .grad, then releases the saved intermediates.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "srf/common.hpp"

namespace srf {

// Thread-local tape switch. Inference paths (rendering, meshing, metrics)
// disable it so no closures or parent links are recorded.
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
  bool prev;
};

template <class T>
struct Node {
  std::vector<size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  bool is_leaf = true;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  size_t size() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(std::vector<size_t> shape, T v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    size_t total = numel(shape);
    n->shape = std::move(shape);
    n->value.assign(total, v);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor from_data(std::vector<size_t> shape, std::vector<T> data,
                          bool requires_grad = false) {
    if (numel(shape) != data.size()) {
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<size_t>& shape() const { return node_->shape; }
  size_t size() const { return node_->value.size(); }
  const std::vector<T>& value() const { return node_->value; }
  // Leaf initialization only; mutating a non-leaf invalidates the tape.
  std::vector<T>& raw_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  const std::vector<T>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() {
    if (node_->grad.size()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  std::shared_ptr<Node<T>> node() const { return node_; }

  // Reverse sweep from a scalar root. Grads accumulate (+=) into every
  // reachable node that requires them; saved closures are freed afterwards,
  // so a second backward on the same graph throws.
  void backward() {
    if (size() != 1) throw std::invalid_argument("backward() requires a scalar root");
    if (!node_->requires_grad) throw std::logic_error("backward() on a graph with no gradients");
    if (node_->backward_done) throw std::logic_error("second backward on the same graph");
    node_->backward_done = true;

    // Iterative post-order DFS; order is deterministic (parent list order).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    struct Frame {
      Node<T>* n;
      size_t next_parent;
    };
    std::vector<Frame> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.n->parents.size()) {
        Node<T>* p = f.n->parents[f.next_parent++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }

    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn) {
        n->ensure_grad();
        n->backward_fn(*n);
        n->backward_fn = nullptr;  // release saved intermediates
      }
      if (!n->is_leaf && n != node_.get()) {
        n->grad.clear();
        n->grad.shrink_to_fit();
      }
    }
    // Drop parent links so intermediate values can be reclaimed.
    for (Node<T>* n : order) {
      if (!n->is_leaf) n->parents.clear();
    }
  }

  static size_t numel(const std::vector<size_t>& shape) {
    size_t total = 1;
    for (size_t e : shape) {
      if (e == 0) throw std::invalid_argument("zero extent in shape " + shape_str(shape));
      total *= e;
    }
    return total;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Allocates the result node and wires the tape when enabled.
template <class T>
Tensor<T> make_op(std::vector<size_t> shape, std::vector<T> value,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  if (Tensor<T>::numel(shape) != value.size()) {
    throw std::logic_error("op produced value of wrong length for " + shape_str(shape));
  }
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->is_leaf = false;
  if (grad_enabled()) {
    for (const auto& p : parents) {
      if (p->requires_grad) {
        n->requires_grad = true;
        break;
      }
    }
    if (n->requires_grad) {
      n->parents = std::move(parents);
      n->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>(n);
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

template <class T>
void accum(Node<T>& p, size_t i, T v) {
  p.grad[i] += v;
}

}  // namespace detail

// ---- elementwise suite ----

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node<T>& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node<T>& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node<T>& self) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

// y = scale * x + shift, elementwise with scalar coefficients.
template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = scale * x.value()[i] + shift;
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px, scale](Node<T>& self) {
    px->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += scale * self.grad[i];
  });
}

template <class T>
Tensor<T> vexp(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.value()[i]);
  auto px = x.node();
  std::vector<T> saved = out;
  return detail::make_op<T>(x.shape(), std::move(out), {px},
                            [px, saved = std::move(saved)](Node<T>& self) {
                              px->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                px->grad[i] += self.grad[i] * saved[i];
                            });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) {
    T v = x.value()[i];
    out[i] = v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  }
  auto px = x.node();
  std::vector<T> saved = out;
  return detail::make_op<T>(x.shape(), std::move(out), {px},
                            [px, saved = std::move(saved)](Node<T>& self) {
                              px->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                px->grad[i] += self.grad[i] * saved[i] * (T(1) - saved[i]);
                            });
}

// Subgradient at 0 is 0.
template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > T(0) ? x.value()[i] : T(0);
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px](Node<T>& self) {
    px->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (px->value[i] > T(0)) px->grad[i] += self.grad[i];
    }
  });
}

// Concatenation along the last axis; all leading extents must match.
template <class T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<size_t> lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  size_t rows = 1;
  for (size_t e : lead) rows *= e;
  size_t total_last = 0;
  std::vector<size_t> widths;
  for (const auto& p : parts) {
    std::vector<size_t> pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) {
      throw std::invalid_argument("concat: leading shape mismatch " + shape_str(p.shape()) +
                                  " vs " + shape_str(parts[0].shape()));
    }
    widths.push_back(p.shape().back());
    total_last += p.shape().back();
  }
  std::vector<size_t> out_shape = lead;
  out_shape.push_back(total_last);
  std::vector<T> out(rows * total_last);
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  size_t off = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (size_t r = 0; r < rows; ++r) {
      for (size_t c = 0; c < widths[k]; ++c) out[r * total_last + off + c] = v[r * widths[k] + c];
    }
    off += widths[k];
  }
  return detail::make_op<T>(std::move(out_shape), std::move(out), parents,
                            [parents, widths, rows, total_last](Node<T>& self) {
                              size_t off = 0;
                              for (size_t k = 0; k < parents.size(); ++k) {
                                auto& p = *parents[k];
                                if (p.requires_grad) {
                                  p.ensure_grad();
                                  for (size_t r = 0; r < rows; ++r)
                                    for (size_t c = 0; c < widths[k]; ++c)
                                      p.grad[r * widths[k] + c] +=
                                          self.grad[r * total_last + off + c];
                                }
                                off += widths[k];
                              }
                            });
}

// Slice along the last axis: keeps [start, start+len).
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, size_t start, size_t len) {
  size_t last = x.shape().back();
  if (start + len > last) throw std::invalid_argument("slice: out of range on " + shape_str(x.shape()));
  size_t rows = x.size() / last;
  std::vector<size_t> out_shape(x.shape().begin(), x.shape().end() - 1);
  out_shape.push_back(len);
  std::vector<T> out(rows * len);
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < len; ++c) out[r * len + c] = x.value()[r * last + start + c];
  auto px = x.node();
  return detail::make_op<T>(std::move(out_shape), std::move(out), {px},
                            [px, start, len, last, rows](Node<T>& self) {
                              px->ensure_grad();
                              for (size_t r = 0; r < rows; ++r)
                                for (size_t c = 0; c < len; ++c)
                                  px->grad[r * last + start + c] += self.grad[r * len + c];
                            });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = std::accumulate(x.value().begin(), x.value().end(), T(0));
  auto px = x.node();
  return detail::make_op<T>({1}, {total}, {px}, [px](Node<T>& self) {
    px->ensure_grad();
    for (size_t i = 0; i < px->grad.size(); ++i) px->grad[i] += self.grad[0];
  });
}

template <class T>
Tensor<T> mean_squared_error(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mse");
  T acc = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  T n = static_cast<T>(a.size());
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>({1}, {acc / n}, {pa, pb}, [pa, pb, n](Node<T>& self) {
    T g = self.grad[0] * T(2) / n;
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < pa->grad.size(); ++i)
        pa->grad[i] += g * (pa->value[i] - pb->value[i]);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < pb->grad.size(); ++i)
        pb->grad[i] -= g * (pa->value[i] - pb->value[i]);
    }
  });
}

// Exclusive prefix sum over a 1-D tensor: y_i = sum_{j<i} x_j.
template <class T>
Tensor<T> cumsum_exclusive(const Tensor<T>& x) {
  if (x.shape().size() != 1) throw std::invalid_argument("cumsum_exclusive: expects 1-D input");
  size_t n = x.size();
  std::vector<T> out(n);
  T acc = 0;
  for (size_t i = 0; i < n; ++i) {
    out[i] = acc;
    acc += x.value()[i];
  }
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px, n](Node<T>& self) {
    px->ensure_grad();
    T acc = 0;
    for (size_t i = n; i-- > 0;) {
      px->grad[i] += acc;
      acc += self.grad[i];
    }
  });
}

// Stacks 1-D tensors of equal length into an [N, D] matrix.
template <class T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  size_t d = rows[0].size();
  std::vector<T> out;
  out.reserve(rows.size() * d);
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& r : rows) {
    if (r.shape().size() != 1 || r.size() != d) {
      throw std::invalid_argument("stack_rows: row shape mismatch " + shape_str(r.shape()));
    }
    out.insert(out.end(), r.value().begin(), r.value().end());
    parents.push_back(r.node());
  }
  return detail::make_op<T>({rows.size(), d}, std::move(out), parents,
                            [parents, d](Node<T>& self) {
                              for (size_t r = 0; r < parents.size(); ++r) {
                                auto& p = *parents[r];
                                if (!p.requires_grad) continue;
                                p.ensure_grad();
                                for (size_t c = 0; c < d; ++c) p.grad[c] += self.grad[r * d + c];
                              }
                            });
}

// out_j = sum_i w_i * m_{ij} for m: [N, D], w: [N].
template <class T>
Tensor<T> weighted_sum_rows(const Tensor<T>& m, const Tensor<T>& w) {
  if (m.shape().size() != 2 || w.shape().size() != 1 || m.shape()[0] != w.shape()[0]) {
    throw std::invalid_argument("weighted_sum_rows: incompatible shapes " + shape_str(m.shape()) +
                                " and " + shape_str(w.shape()));
  }
  size_t n = m.shape()[0], d = m.shape()[1];
  std::vector<T> out(d, T(0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) out[j] += w.value()[i] * m.value()[i * d + j];
  auto pm = m.node(), pw = w.node();
  return detail::make_op<T>({d}, std::move(out), {pm, pw}, [pm, pw, n, d](Node<T>& self) {
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) pm->grad[i * d + j] += pw->value[i] * self.grad[j];
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      for (size_t i = 0; i < n; ++i) {
        T acc = 0;
        for (size_t j = 0; j < d; ++j) acc += pm->value[i * d + j] * self.grad[j];
        pw->grad[i] += acc;
      }
    }
  });
}

}  // namespace srf
