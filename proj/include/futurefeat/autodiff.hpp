#pragma once

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Tape records operations in execution order; backward() replays them in
// reverse.  Signals use the [batch, channels, length] layout, vectors use
// [batch, features].  Parameters are borrowed by pointer, never copied, and
// their gradients are handed back through a Gradients map so that models can
// stay const during a forward pass.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "futurefeat/errors.hpp"

namespace futurefeat::ad {

template <std::floating_point T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T{0}) : shape(std::move(s)) {
    data.assign(count(shape), fill);
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  T& at3(std::size_t b, std::size_t c, std::size_t l) { return data[(b * shape[1] + c) * shape[2] + l]; }
  const T& at3(std::size_t b, std::size_t c, std::size_t l) const {
    return data[(b * shape[1] + c) * shape[2] + l];
  }

  bool operator==(const Tensor&) const = default;
};

/// A named, trainable tensor owned by a model.
template <std::floating_point T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

/// Parameter gradients produced by one backward pass, keyed by parameter.
template <std::floating_point T>
class Gradients {
 public:
  void accumulate(const Parameter<T>* p, const Tensor<T>& g) {
    auto [it, inserted] = map_.try_emplace(p, g);
    if (!inserted) {
      auto& dst = it->second.data;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.data[i];
    }
  }
  const Tensor<T>* find(const Parameter<T>& p) const {
    auto it = map_.find(&p);
    return it == map_.end() ? nullptr : &it->second;
  }
  std::size_t size() const { return map_.size(); }

 private:
  std::unordered_map<const Parameter<T>*, Tensor<T>> map_;
};

/// Handle to a tape node.
struct Var {
  std::size_t id = 0;
};

template <std::floating_point T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <std::floating_point T>
using MatMap = Eigen::Map<RowMat<T>>;
template <std::floating_point T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <std::floating_point T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var)>;

  /// Gradients are only tracked when enabled; inference tapes skip closures.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor<T> t) {
    Node n;
    n.own = std::move(t);
    return push(std::move(n));
  }

  Var param(const Parameter<T>& p) {
    Node n;
    n.borrowed = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_ && !frozen_.contains(&p);
    return push(std::move(n));
  }

  /// Parameters passed here are read as constants on this tape.
  void freeze(std::span<const Parameter<T>* const> params) {
    for (const auto* p : params) frozen_.insert(p);
  }

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value(); }
  const std::vector<std::size_t>& shape(Var v) const { return value(v).shape; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() != n.value().size()) n.grad = Tensor<T>(n.value().shape);
    return n.grad;
  }

  /// Records a computed node; `fn(tape, self)` runs during backward() when
  /// any input requires a gradient.
  Var record(Tensor<T> value, std::span<const Var> inputs, Backward fn) {
    Node n;
    n.own = std::move(value);
    if (grad_enabled_) {
      for (Var in : inputs) n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
      if (n.requires_grad) n.backward = std::move(fn);
    }
    return push(std::move(n));
  }
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward fn) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }

  /// Back-propagates from a scalar node and returns parameter gradients.
  Gradients<T> backward(Var loss) {
    futurefeat::detail::require(value(loss).size() == 1, "backward() needs a scalar loss");
    Gradients<T> out;
    if (!nodes_[loss.id].requires_grad) return out;
    grad(loss)[0] = T{1};
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, Var{i});
      if (n.param) out.accumulate(n.param, n.grad);
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* borrowed = nullptr;
    const Parameter<T>* param = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;

    const Tensor<T>& value() const { return borrowed ? *borrowed : own; }
  };

  Var push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_set<const Parameter<T>*> frozen_;
};

namespace detail {

template <std::floating_point T>
void add_into(Tape<T>& tape, Var dst, const Tensor<T>& g, T scale = T{1}) {
  if (!tape.requires_grad(dst)) return;
  auto& d = tape.grad(dst);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and arithmetic ops

/// wa·a + wb·b for equal shapes.
template <std::floating_point T>
Var sum(Tape<T>& tape, Var a, Var b, T wa = T{1}, T wb = T{1}) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  futurefeat::detail::require(va.shape == vb.shape, "sum: shape mismatch");
  Tensor<T> out(va.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = wa * va[i] + wb * vb[i];
  return tape.record(std::move(out), {a, b}, [a, b, wa, wb](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    detail::add_into(t, a, g, wa);
    detail::add_into(t, b, g, wb);
  });
}

template <std::floating_point T>
Var add(Tape<T>& tape, Var a, Var b) {
  return sum(tape, a, b);
}

template <std::floating_point T>
Var scale(Tape<T>& tape, Var a, T s) {
  Tensor<T> out = tape.value(a);
  for (auto& x : out.data) x *= s;
  return tape.record(std::move(out), {a}, [a, s](Tape<T>& t, Var self) {
    detail::add_into(t, a, t.grad(self), s);
  });
}

template <std::floating_point T>
Var relu(Tape<T>& tape, Var a) {
  Tensor<T> out = tape.value(a);
  for (auto& x : out.data) x = x > T{0} ? x : T{0};
  return tape.record(std::move(out), {a}, [a](Tape<T>& t, Var self) {
    if (!t.requires_grad(a)) return;
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    auto& d = t.grad(a);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += y[i] > T{0} ? g[i] : T{0};
  });
}

template <std::floating_point T>
Var leaky_relu(Tape<T>& tape, Var a, T slope) {
  Tensor<T> out = tape.value(a);
  for (auto& x : out.data) x = x > T{0} ? x : slope * x;
  return tape.record(std::move(out), {a}, [a, slope](Tape<T>& t, Var self) {
    if (!t.requires_grad(a)) return;
    const auto& x = t.value(a);
    const auto& g = t.grad(self);
    auto& d = t.grad(a);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += x[i] > T{0} ? g[i] : slope * g[i];
  });
}

// ---------------------------------------------------------------------------
// Shape ops

template <std::floating_point T>
Var reshape(Tape<T>& tape, Var a, std::vector<std::size_t> shape) {
  futurefeat::detail::require(Tensor<T>::count(shape) == tape.value(a).size(), "reshape: element count mismatch");
  Tensor<T> out;
  out.shape = std::move(shape);
  out.data = tape.value(a).data;
  return tape.record(std::move(out), {a}, [a](Tape<T>& t, Var self) {
    detail::add_into(t, a, t.grad(self));
  });
}

/// Concatenates along axis 0; trailing dims must agree.
template <std::floating_point T>
Var concat_batch(Tape<T>& tape, const std::vector<Var>& parts) {
  futurefeat::detail::require(!parts.empty(), "concat_batch: no inputs");
  std::vector<std::size_t> shape = tape.shape(parts[0]);
  std::size_t rows = 0;
  for (Var p : parts) {
    const auto& s = tape.shape(p);
    futurefeat::detail::require(s.size() == shape.size() && std::equal(s.begin() + 1, s.end(), shape.begin() + 1),
                    "concat_batch: trailing shape mismatch");
    rows += s[0];
  }
  shape[0] = rows;
  Tensor<T> out(shape);
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  return tape.record(std::move(out), std::span<const Var>(parts), [parts](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        auto& d = t.grad(p);
        for (std::size_t i = 0; i < n; ++i) d[i] += g[off + i];
      }
      off += n;
    }
  });
}

/// Rows [start, start+count) along axis 0.
template <std::floating_point T>
Var slice_batch(Tape<T>& tape, Var a, std::size_t start, std::size_t count) {
  const auto& v = tape.value(a);
  futurefeat::detail::require(v.rank() >= 1 && start + count <= v.dim(0), "slice_batch: range out of bounds");
  const std::size_t row = v.size() / v.dim(0);
  std::vector<std::size_t> shape = v.shape;
  shape[0] = count;
  Tensor<T> out(shape);
  std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(start * row), count * row, out.data.begin());
  return tape.record(std::move(out), {a}, [a, start, row](Tape<T>& t, Var self) {
    if (!t.requires_grad(a)) return;
    const auto& g = t.grad(self);
    auto& d = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) d[start * row + i] += g[i];
  });
}

/// Positions [start, start+count) along the last axis of a [B,C,L] signal.
template <std::floating_point T>
Var slice_length(Tape<T>& tape, Var a, std::size_t start, std::size_t count) {
  const auto& v = tape.value(a);
  futurefeat::detail::require(v.rank() == 3 && start + count <= v.dim(2), "slice_length: range out of bounds");
  const std::size_t bc = v.dim(0) * v.dim(1), len = v.dim(2);
  Tensor<T> out({v.dim(0), v.dim(1), count});
  for (std::size_t r = 0; r < bc; ++r)
    for (std::size_t l = 0; l < count; ++l) out[r * count + l] = v[r * len + start + l];
  return tape.record(std::move(out), {a}, [a, start, count, bc, len](Tape<T>& t, Var self) {
    if (!t.requires_grad(a)) return;
    const auto& g = t.grad(self);
    auto& d = t.grad(a);
    for (std::size_t r = 0; r < bc; ++r)
      for (std::size_t l = 0; l < count; ++l) d[r * len + start + l] += g[r * count + l];
  });
}

/// Concatenates [B,C,L_i] signals along the last axis.
template <std::floating_point T>
Var concat_length(Tape<T>& tape, const std::vector<Var>& parts) {
  futurefeat::detail::require(!parts.empty(), "concat_length: no inputs");
  const auto& s0 = tape.shape(parts[0]);
  futurefeat::detail::require(s0.size() == 3, "concat_length: rank-3 inputs expected");
  std::size_t total = 0;
  for (Var p : parts) {
    const auto& s = tape.shape(p);
    futurefeat::detail::require(s.size() == 3 && s[0] == s0[0] && s[1] == s0[1], "concat_length: shape mismatch");
    total += s[2];
  }
  const std::size_t bc = s0[0] * s0[1];
  Tensor<T> out({s0[0], s0[1], total});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    const std::size_t len = v.dim(2);
    for (std::size_t r = 0; r < bc; ++r)
      for (std::size_t l = 0; l < len; ++l) out[r * total + off + l] = v[r * len + l];
    off += len;
  }
  return tape.record(std::move(out), std::span<const Var>(parts), [parts, bc, total](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t len = t.value(p).dim(2);
      if (t.requires_grad(p)) {
        auto& d = t.grad(p);
        for (std::size_t r = 0; r < bc; ++r)
          for (std::size_t l = 0; l < len; ++l) d[r * len + l] += g[r * total + off + l];
      }
      off += len;
    }
  });
}

/// Reverses the last axis of a [B,C,L] signal.
template <std::floating_point T>
Var reverse_length(Tape<T>& tape, Var a) {
  const auto& v = tape.value(a);
  futurefeat::detail::require(v.rank() == 3, "reverse_length: rank-3 input expected");
  const std::size_t bc = v.dim(0) * v.dim(1), len = v.dim(2);
  Tensor<T> out(v.shape);
  for (std::size_t r = 0; r < bc; ++r)
    for (std::size_t l = 0; l < len; ++l) out[r * len + l] = v[r * len + len - 1 - l];
  return tape.record(std::move(out), {a}, [a, bc, len](Tape<T>& t, Var self) {
    if (!t.requires_grad(a)) return;
    const auto& g = t.grad(self);
    auto& d = t.grad(a);
    for (std::size_t r = 0; r < bc; ++r)
      for (std::size_t l = 0; l < len; ++l) d[r * len + len - 1 - l] += g[r * len + l];
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

/// Mean over the last axis: [B,C,L] -> [B,C].
template <std::floating_point T>
Var mean_length(Tape<T>& tape, Var a) {
  const auto& v = tape.value(a);
  futurefeat::detail::require(v.rank() == 3 && v.dim(2) > 0, "mean_length: rank-3 input expected");
  const std::size_t bc = v.dim(0) * v.dim(1), len = v.dim(2);
  Tensor<T> out({v.dim(0), v.dim(1)});
  for (std::size_t r = 0; r < bc; ++r) {
    T acc{0};
    for (std::size_t l = 0; l < len; ++l) acc += v[r * len + l];
    out[r] = acc / static_cast<T>(len);
  }
  return tape.record(std::move(out), {a}, [a, bc, len](Tape<T>& t, Var self) {
    if (!t.requires_grad(a)) return;
    const auto& g = t.grad(self);
    auto& d = t.grad(a);
    const T inv = T{1} / static_cast<T>(len);
    for (std::size_t r = 0; r < bc; ++r)
      for (std::size_t l = 0; l < len; ++l) d[r * len + l] += g[r] * inv;
  });
}

/// Mean of squared differences over all elements; returns shape [1].
template <std::floating_point T>
Var mse(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  futurefeat::detail::require(va.shape == vb.shape && va.size() > 0, "mse: shape mismatch");
  T acc{0};
  for (std::size_t i = 0; i < va.size(); ++i) {
    const T d = va[i] - vb[i];
    acc += d * d;
  }
  Tensor<T> out({1});
  out[0] = acc / static_cast<T>(va.size());
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    const T k = T{2} * g / static_cast<T>(va.size());
    if (t.requires_grad(a)) {
      auto& d = t.grad(a);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * (va[i] - vb[i]);
    }
    if (t.requires_grad(b)) {
      auto& d = t.grad(b);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= k * (va[i] - vb[i]);
    }
  });
}

/// Mean of (a - target)^2 against a constant target; returns shape [1].
template <std::floating_point T>
Var mse_to(Tape<T>& tape, Var a, T target) {
  const auto& va = tape.value(a);
  futurefeat::detail::require(va.size() > 0, "mse_to: empty input");
  T acc{0};
  for (T x : va.data) acc += (x - target) * (x - target);
  Tensor<T> out({1});
  out[0] = acc / static_cast<T>(va.size());
  return tape.record(std::move(out), {a}, [a, target](Tape<T>& t, Var self) {
    if (!t.requires_grad(a)) return;
    const T g = t.grad(self)[0];
    const auto& va = t.value(a);
    auto& d = t.grad(a);
    const T k = T{2} * g / static_cast<T>(va.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * (va[i] - target);
  });
}

/// Mean softmax cross-entropy of [B,C,L] logits against B*L integer labels
/// laid out batch-major; the class axis is 1.
template <std::floating_point T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels) {
  const auto& v = tape.value(logits);
  futurefeat::detail::require(v.rank() == 3, "cross_entropy: rank-3 logits expected");
  const std::size_t B = v.dim(0), C = v.dim(1), L = v.dim(2);
  futurefeat::detail::require(labels.size() == B * L, "cross_entropy: label count mismatch");
  auto probs = std::make_shared<std::vector<T>>(v.size());
  T loss{0};
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t l = 0; l < L; ++l) {
      T mx = v.at3(b, 0, l);
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, v.at3(b, c, l));
      T z{0};
      for (std::size_t c = 0; c < C; ++c) z += std::exp(v.at3(b, c, l) - mx);
      const int y = labels[b * L + l];
      futurefeat::detail::require(y >= 0 && static_cast<std::size_t>(y) < C, "cross_entropy: label out of range");
      for (std::size_t c = 0; c < C; ++c) (*probs)[(b * C + c) * L + l] = std::exp(v.at3(b, c, l) - mx) / z;
      loss -= v.at3(b, static_cast<std::size_t>(y), l) - mx - std::log(z);
    }
  Tensor<T> out({1});
  out[0] = loss / static_cast<T>(B * L);
  std::vector<int> ys(labels.begin(), labels.end());
  return tape.record(std::move(out), {logits}, [logits, probs, ys = std::move(ys), B, C, L](Tape<T>& t, Var self) {
    if (!t.requires_grad(logits)) return;
    const T g = t.grad(self)[0] / static_cast<T>(B * L);
    auto& d = t.grad(logits);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = (b * C + c) * L + l;
          const T onehot = static_cast<std::size_t>(ys[b * L + l]) == c ? T{1} : T{0};
          d[i] += g * ((*probs)[i] - onehot);
        }
  });
}

/// Softmax over the channel axis of a [B,C,L] signal.
template <std::floating_point T>
Var softmax_channels(Tape<T>& tape, Var a) {
  const auto& v = tape.value(a);
  futurefeat::detail::require(v.rank() == 3, "softmax_channels: rank-3 input expected");
  const std::size_t B = v.dim(0), C = v.dim(1), L = v.dim(2);
  Tensor<T> out(v.shape);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t l = 0; l < L; ++l) {
      T mx = v.at3(b, 0, l);
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, v.at3(b, c, l));
      T z{0};
      for (std::size_t c = 0; c < C; ++c) z += (out.at3(b, c, l) = std::exp(v.at3(b, c, l) - mx));
      for (std::size_t c = 0; c < C; ++c) out.at3(b, c, l) /= z;
    }
  return tape.record(std::move(out), {a}, [a, B, C, L](Tape<T>& t, Var self) {
    if (!t.requires_grad(a)) return;
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    auto& d = t.grad(a);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l) {
        T dot{0};
        for (std::size_t c = 0; c < C; ++c) dot += g.at3(b, c, l) * y.at3(b, c, l);
        for (std::size_t c = 0; c < C; ++c) d.at3(b, c, l) += y.at3(b, c, l) * (g.at3(b, c, l) - dot);
      }
  });
}

// ---------------------------------------------------------------------------
// Dense layers

/// x[B,F] · Wᵀ + bias, with W shaped [O,F] and bias [O] (optional).
template <std::floating_point T>
Var linear(Tape<T>& tape, Var x, Var w, const Var* bias = nullptr) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(w);
  futurefeat::detail::require(vx.rank() == 2 && vw.rank() == 2 && vx.dim(1) == vw.dim(1), "linear: shape mismatch");
  const std::size_t B = vx.dim(0), F = vx.dim(1), O = vw.dim(0);
  Tensor<T> out({B, O});
  MatMap<T> Y(out.data.data(), B, O);
  Y.noalias() = ConstMatMap<T>(vx.data.data(), B, F) * ConstMatMap<T>(vw.data.data(), O, F).transpose();
  std::vector<Var> inputs{x, w};
  Var b{};
  if (bias) {
    b = *bias;
    const auto& vb = tape.value(b);
    futurefeat::detail::require(vb.size() == O, "linear: bias size mismatch");
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t o = 0; o < O; ++o) out[i * O + o] += vb[o];
    inputs.push_back(b);
  }
  const bool has_bias = bias != nullptr;
  return tape.record(std::move(out), std::span<const Var>(inputs), [x, w, b, has_bias, B, F, O](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    ConstMatMap<T> G(g.data.data(), B, O);
    if (t.requires_grad(x)) {
      auto& dx = t.grad(x);
      MatMap<T>(dx.data.data(), B, F).noalias() += G * ConstMatMap<T>(t.value(w).data.data(), O, F);
    }
    if (t.requires_grad(w)) {
      auto& dw = t.grad(w);
      MatMap<T>(dw.data.data(), O, F).noalias() += G.transpose() * ConstMatMap<T>(t.value(x).data.data(), B, F);
    }
    if (has_bias && t.requires_grad(b)) {
      auto& db = t.grad(b);
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t o = 0; o < O; ++o) db[o] += g[i * O + o];
    }
  });
}

/// Applies a fixed matrix M[G,F] to each row of x[B,F]: y = x · Mᵀ.
template <std::floating_point T>
Var apply_fixed(Tape<T>& tape, Var x, RowMat<T> m) {
  const auto& vx = tape.value(x);
  futurefeat::detail::require(vx.rank() == 2 && static_cast<std::size_t>(m.cols()) == vx.dim(1), "apply_fixed: shape mismatch");
  const std::size_t B = vx.dim(0), F = vx.dim(1), G = static_cast<std::size_t>(m.rows());
  Tensor<T> out({B, G});
  MatMap<T>(out.data.data(), B, G).noalias() = ConstMatMap<T>(vx.data.data(), B, F) * m.transpose();
  return tape.record(std::move(out), {x}, [x, m = std::move(m), B, F, G](Tape<T>& t, Var self) {
    if (!t.requires_grad(x)) return;
    auto& dx = t.grad(x);
    MatMap<T>(dx.data.data(), B, F).noalias() += ConstMatMap<T>(t.grad(self).data.data(), B, G) * m;
  });
}

// ---------------------------------------------------------------------------
// Convolutions

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t dilation = 1;
};

inline std::size_t conv_output_length(std::size_t len, std::size_t kernel, const ConvOptions& o) {
  const std::size_t padded = len + o.pad_left + o.pad_right;
  const std::size_t span = o.dilation * (kernel - 1) + 1;
  if (padded < span) return 0;
  return (padded - span) / o.stride + 1;
}

/// "Same"-style padding giving output length ceil(len / stride).
inline ConvOptions same_padding(std::size_t len, std::size_t kernel, std::size_t stride) {
  const std::size_t out = (len + stride - 1) / stride;
  const std::size_t need = (out - 1) * stride + kernel;
  const std::size_t total = need > len ? need - len : 0;
  return ConvOptions{stride, total / 2, total - total / 2, 1};
}

/// 1D cross-correlation.  x[B,Cin,L], w[Cout,Cin,K], optional bias[Cout].
template <std::floating_point T>
Var conv1d(Tape<T>& tape, Var x, Var w, const Var* bias, ConvOptions opt) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(w);
  futurefeat::detail::require(vx.rank() == 3 && vw.rank() == 3 && vx.dim(1) == vw.dim(1), "conv1d: shape mismatch");
  const std::size_t B = vx.dim(0), Cin = vx.dim(1), L = vx.dim(2);
  const std::size_t Cout = vw.dim(0), K = vw.dim(2);
  const std::size_t Lo = conv_output_length(L, K, opt);
  futurefeat::detail::require(Lo > 0 && opt.stride > 0, "conv1d: output length would be zero");
  const std::size_t rows = Cin * K, cols = B * Lo;

  auto col = std::make_shared<RowMat<T>>(rows, cols);
  col->setZero();
  for (std::size_t ci = 0; ci < Cin; ++ci)
    for (std::size_t kk = 0; kk < K; ++kk) {
      T* dst = col->data() + (ci * K + kk) * cols;
      for (std::size_t b = 0; b < B; ++b) {
        const T* src = vx.data.data() + (b * Cin + ci) * L;
        for (std::size_t o = 0; o < Lo; ++o) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * opt.stride + kk * opt.dilation) -
                                     static_cast<std::ptrdiff_t>(opt.pad_left);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) dst[b * Lo + o] = src[pos];
        }
      }
    }
  RowMat<T> Y = ConstMatMap<T>(vw.data.data(), Cout, rows) * (*col);
  Tensor<T> out({B, Cout, Lo});
  const T* bv = bias ? tape.value(*bias).data.data() : nullptr;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co) {
      const T add = bv ? bv[co] : T{0};
      const T* src = Y.data() + co * cols + b * Lo;
      T* dst = out.data.data() + (b * Cout + co) * Lo;
      for (std::size_t o = 0; o < Lo; ++o) dst[o] = src[o] + add;
    }

  std::vector<Var> inputs{x, w};
  Var bvar{};
  if (bias) {
    bvar = *bias;
    inputs.push_back(bvar);
  }
  const bool has_bias = bias != nullptr;
  if (!tape.grad_enabled()) col.reset();
  return tape.record(std::move(out), std::span<const Var>(inputs),
                     [x, w, bvar, has_bias, col, opt, B, Cin, L, Cout, K, Lo, rows, cols](Tape<T>& t, Var self) {
                       const auto& g = t.grad(self);
                       RowMat<T> G(Cout, cols);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t co = 0; co < Cout; ++co)
                           std::copy_n(g.data.data() + (b * Cout + co) * Lo, Lo, G.data() + co * cols + b * Lo);
                       if (has_bias && t.requires_grad(bvar)) {
                         auto& db = t.grad(bvar);
                         for (std::size_t co = 0; co < Cout; ++co) db[co] += G.row(co).sum();
                       }
                       if (t.requires_grad(w)) {
                         auto& dw = t.grad(w);
                         MatMap<T>(dw.data.data(), Cout, rows).noalias() += G * col->transpose();
                       }
                       if (t.requires_grad(x)) {
                         RowMat<T> dcol = ConstMatMap<T>(t.value(w).data.data(), Cout, rows).transpose() * G;
                         auto& dx = t.grad(x);
                         for (std::size_t ci = 0; ci < Cin; ++ci)
                           for (std::size_t kk = 0; kk < K; ++kk) {
                             const T* src = dcol.data() + (ci * K + kk) * cols;
                             for (std::size_t b = 0; b < B; ++b) {
                               T* dst = dx.data.data() + (b * Cin + ci) * L;
                               for (std::size_t o = 0; o < Lo; ++o) {
                                 const std::ptrdiff_t pos =
                                     static_cast<std::ptrdiff_t>(o * opt.stride + kk * opt.dilation) -
                                     static_cast<std::ptrdiff_t>(opt.pad_left);
                                 if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) dst[pos] += src[b * Lo + o];
                               }
                             }
                           }
                       }
                     });
}

/// 1D transposed convolution.  x[B,Cin,L], w[Cin,Cout,K], optional bias[Cout];
/// output length (L-1)·stride - 2·pad + K + output_padding.
template <std::floating_point T>
Var conv_transpose1d(Tape<T>& tape, Var x, Var w, const Var* bias, std::size_t stride, std::size_t pad,
                     std::size_t output_padding) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(w);
  futurefeat::detail::require(vx.rank() == 3 && vw.rank() == 3 && vx.dim(1) == vw.dim(0), "conv_transpose1d: shape mismatch");
  const std::size_t B = vx.dim(0), Cin = vx.dim(1), L = vx.dim(2);
  const std::size_t Cout = vw.dim(1), K = vw.dim(2);
  const std::ptrdiff_t lo_signed = static_cast<std::ptrdiff_t>((L - 1) * stride + K + output_padding) -
                                   static_cast<std::ptrdiff_t>(2 * pad);
  futurefeat::detail::require(lo_signed > 0, "conv_transpose1d: output length would be zero");
  const std::size_t Lo = static_cast<std::size_t>(lo_signed);
  const std::size_t cols = B * L, rows = Cout * K;

  auto X = std::make_shared<RowMat<T>>(Cin, cols);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t ci = 0; ci < Cin; ++ci)
      std::copy_n(vx.data.data() + (b * Cin + ci) * L, L, X->data() + ci * cols + b * L);
  RowMat<T> P = ConstMatMap<T>(vw.data.data(), Cin, rows).transpose() * (*X);

  auto target = [stride, pad, Lo](std::size_t i, std::size_t kk) -> std::ptrdiff_t {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i * stride + kk) - static_cast<std::ptrdiff_t>(pad);
    return pos >= 0 && pos < static_cast<std::ptrdiff_t>(Lo) ? pos : -1;
  };

  Tensor<T> out({B, Cout, Lo});
  const T* bv = bias ? tape.value(*bias).data.data() : nullptr;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co) {
      T* dst = out.data.data() + (b * Cout + co) * Lo;
      if (bv) std::fill_n(dst, Lo, bv[co]);
      for (std::size_t kk = 0; kk < K; ++kk) {
        const T* src = P.data() + (co * K + kk) * cols + b * L;
        for (std::size_t i = 0; i < L; ++i) {
          const auto pos = target(i, kk);
          if (pos >= 0) dst[pos] += src[i];
        }
      }
    }

  std::vector<Var> inputs{x, w};
  Var bvar{};
  if (bias) {
    bvar = *bias;
    inputs.push_back(bvar);
  }
  const bool has_bias = bias != nullptr;
  if (!tape.grad_enabled()) X.reset();
  return tape.record(std::move(out), std::span<const Var>(inputs),
                     [x, w, bvar, has_bias, X, target, B, Cin, L, Cout, K, Lo, rows, cols](Tape<T>& t, Var self) {
                       const auto& g = t.grad(self);
                       if (has_bias && t.requires_grad(bvar)) {
                         auto& db = t.grad(bvar);
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t co = 0; co < Cout; ++co) {
                             const T* src = g.data.data() + (b * Cout + co) * Lo;
                             for (std::size_t o = 0; o < Lo; ++o) db[co] += src[o];
                           }
                       }
                       RowMat<T> dP = RowMat<T>::Zero(rows, cols);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t co = 0; co < Cout; ++co) {
                           const T* src = g.data.data() + (b * Cout + co) * Lo;
                           for (std::size_t kk = 0; kk < K; ++kk) {
                             T* dst = dP.data() + (co * K + kk) * cols + b * L;
                             for (std::size_t i = 0; i < L; ++i) {
                               const auto pos = target(i, kk);
                               if (pos >= 0) dst[i] = src[pos];
                             }
                           }
                         }
                       if (t.requires_grad(w)) {
                         auto& dw = t.grad(w);
                         MatMap<T>(dw.data.data(), Cin, rows).noalias() += (*X) * dP.transpose();
                       }
                       if (t.requires_grad(x)) {
                         RowMat<T> dX = ConstMatMap<T>(t.value(w).data.data(), Cin, rows) * dP;
                         auto& dx = t.grad(x);
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t ci = 0; ci < Cin; ++ci) {
                             T* dst = dx.data.data() + (b * Cin + ci) * L;
                             const T* src = dX.data() + ci * cols + b * L;
                             for (std::size_t i = 0; i < L; ++i) dst[i] += src[i];
                           }
                       }
                     });
}

/// Per-sample, per-channel normalisation over the length axis with a
/// learned affine map.  x[B,C,L], gamma[C], beta[C].
template <std::floating_point T>
Var instance_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps = T(1e-5)) {
  const auto& vx = tape.value(x);
  futurefeat::detail::require(vx.rank() == 3, "instance_norm: rank-3 input expected");
  const std::size_t B = vx.dim(0), C = vx.dim(1), L = vx.dim(2);
  futurefeat::detail::require(tape.value(gamma).size() == C && tape.value(beta).size() == C, "instance_norm: affine size mismatch");
  const auto& g = tape.value(gamma);
  const auto& bt = tape.value(beta);
  auto xhat = std::make_shared<Tensor<T>>(vx.shape);
  auto rstd = std::make_shared<std::vector<T>>(B * C);
  Tensor<T> out(vx.shape);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (b * C + c) * L;
      T mean{0};
      for (std::size_t l = 0; l < L; ++l) mean += vx[base + l];
      mean /= static_cast<T>(L);
      T var{0};
      for (std::size_t l = 0; l < L; ++l) var += (vx[base + l] - mean) * (vx[base + l] - mean);
      var /= static_cast<T>(L);
      const T r = T{1} / std::sqrt(var + eps);
      (*rstd)[b * C + c] = r;
      for (std::size_t l = 0; l < L; ++l) {
        const T h = (vx[base + l] - mean) * r;
        (*xhat)[base + l] = h;
        out[base + l] = g[c] * h + bt[c];
      }
    }
  return tape.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, rstd, B, C, L](Tape<T>& t, Var self) {
    const auto& dy = t.grad(self);
    const auto& gv = t.value(gamma);
    const bool want_g = t.requires_grad(gamma), want_b = t.requires_grad(beta), want_x = t.requires_grad(x);
    Tensor<T>* dg = want_g ? &t.grad(gamma) : nullptr;
    Tensor<T>* db = want_b ? &t.grad(beta) : nullptr;
    Tensor<T>* dx = want_x ? &t.grad(x) : nullptr;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t base = (b * C + c) * L;
        T s_dy{0}, s_dyh{0};
        for (std::size_t l = 0; l < L; ++l) {
          s_dy += dy[base + l];
          s_dyh += dy[base + l] * (*xhat)[base + l];
        }
        if (dg) (*dg)[c] += s_dyh;
        if (db) (*db)[c] += s_dy;
        if (dx) {
          const T k = gv[c] * (*rstd)[b * C + c] / static_cast<T>(L);
          for (std::size_t l = 0; l < L; ++l)
            (*dx)[base + l] +=
                k * (static_cast<T>(L) * dy[base + l] - s_dy - (*xhat)[base + l] * s_dyh);
        }
      }
  });
}

}  // namespace futurefeat::ad
