#pragma once

// Dense row-major tensors plus a reverse-mode tape.
//
// Forward ops are free functions on TapeT: each validates shapes, computes
// the output, and (when the tape is recording) pushes a closure that scatters
// gradients back into its inputs. backward(loss) seeds d(loss)=1 and replays
// the closures in reverse record order, accumulating into .grad buffers.
//
// Everything is templated on the scalar type; float is the production path,
// double exists for the 64-bit finite-difference verification mode.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "snn/gemm.hpp"
#include "snn/rng.hpp"

namespace snn {

enum class Mode { kTrain, kInfer };

inline std::string shape_str(const std::vector<size_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<size_t> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), T{0}) {}

  TensorT(std::vector<size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_))
      throw std::runtime_error("tensor: data size " + std::to_string(data_.size()) +
                               " does not match shape " + shape_str(shape_));
  }

  static TensorT full(std::vector<size_t> shape, T v) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t dim(size_t i) const { return shape_[i]; }
  size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }
  T& operator[](size_t i) { return data_[i]; }
  T operator[](size_t i) const { return data_[i]; }

  bool has_grad() const { return grad_.has_value(); }
  void ensure_grad() {
    if (!grad_) grad_.emplace(data_.size(), T{0});
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T{0});
  }
  void drop_grad() { grad_.reset(); }
  std::vector<T>& grad() {
    if (!grad_) throw std::runtime_error("tensor: gradient not allocated");
    return *grad_;
  }
  const std::vector<T>& grad() const {
    if (!grad_) throw std::runtime_error("tensor: gradient not allocated");
    return *grad_;
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  static size_t checked_size(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) {
      if (d == 0) throw std::runtime_error("tensor: zero dimension in shape " + shape_str(shape));
      n *= d;
    }
    return n;
  }

  std::vector<size_t> shape_;
  std::vector<T> data_;
  std::optional<std::vector<T>> grad_;
};

template <typename T>
class TapeT {
 public:
  using Tensor = TensorT<T>;
  using NodePtr = std::shared_ptr<Tensor>;

  explicit TapeT(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  size_t op_count() const { return ops_.size(); }

  // --- leaves ---------------------------------------------------------

  NodePtr leaf(Tensor value, bool trainable = false) {
    return leaf(std::make_shared<Tensor>(std::move(value)), trainable);
  }

  // Register an existing tensor (e.g. a persistent model parameter) on this
  // tape. Safe to call repeatedly with the same tensor.
  NodePtr leaf(NodePtr t, bool trainable = false) {
    if (trainable && recording_ && !needs_.count(t.get())) {
      needs_.insert(t.get());
      trainable_.push_back(t);
    }
    return t;
  }

  // --- extension points (used by the built-in ops and the loss op) -----

  // Wrap a freshly computed output tensor in a node, propagating the
  // needs-gradient flag from its inputs.
  NodePtr adopt(Tensor out, std::initializer_list<const Tensor*> inputs) {
    NodePtr node = std::make_shared<Tensor>(std::move(out));
    if (recording_) {
      for (const Tensor* in : inputs)
        if (needs_.count(in)) {
          needs_.insert(node.get());
          break;
        }
    }
    return node;
  }

  bool needs_grad(const NodePtr& t) const { return needs_.count(t.get()) > 0; }

  void record(const char* name, std::function<void()> backward) {
    if (recording_) ops_.push_back({name, std::move(backward)});
  }

  // --- ops -------------------------------------------------------------

  // 2-D convolution, NHWC, stride 1, odd square kernel, zero "same" padding.
  // x: [N,H,W,Cin], k: [kh,kw,Cin,Cout] with kh == kw odd. Output [N,H,W,Cout].
  // Lowered to im2col + GEMM; the column matrix is cached for the backward
  // products dW = cols^T * dY and dX = col2im(dY * K^T).
  NodePtr conv2d(const NodePtr& x, const NodePtr& k) {
    if (x->rank() != 4)
      throw std::runtime_error("conv2d: input must be rank-4 NHWC, got " + shape_str(x->shape()));
    if (k->rank() != 4)
      throw std::runtime_error("conv2d: kernel must be rank-4 [kh,kw,cin,cout], got " +
                               shape_str(k->shape()));
    const size_t n = x->dim(0), h = x->dim(1), w = x->dim(2), cin = x->dim(3);
    const size_t kh = k->dim(0), kw = k->dim(1), cout = k->dim(3);
    if (kh != kw || kh % 2 == 0)
      throw std::runtime_error("conv2d: kernel must be square with odd side, got " +
                               shape_str(k->shape()));
    if (k->dim(2) != cin)
      throw std::runtime_error("conv2d: kernel expects " + std::to_string(k->dim(2)) +
                               " input channels, input has " + std::to_string(cin) +
                               " (input " + shape_str(x->shape()) + ", kernel " +
                               shape_str(k->shape()) + ")");

    const size_t ck = kh * kw * cin;     // column width
    const size_t rows = n * h * w;       // one column row per output position
    auto cols = std::make_shared<std::vector<T>>(rows * ck, T{0});
    im2col(x->data(), n, h, w, cin, kh, cols->data());

    Tensor out({n, h, w, cout});
    gemm(false, false, rows, cout, ck, T{1}, cols->data(), ck, k->data(), cout,
         T{0}, out.data(), cout);

    NodePtr y = adopt(std::move(out), {x.get(), k.get()});
    if (recording_) {
      const bool need_x = needs_.count(x.get()), need_k = needs_.count(k.get());
      if (need_x || need_k)
        record("conv2d", [x, k, y, cols, n, h, w, cin, kh, cout, ck, rows, need_x, need_k] {
          if (!y->has_grad()) return;
          const T* dy = y->grad().data();
          if (need_k) {
            k->ensure_grad();
            gemm(true, false, ck, cout, rows, T{1}, cols->data(), ck, dy, cout,
                 T{1}, k->grad().data(), cout);
          }
          if (need_x) {
            std::vector<T> dcol(rows * ck);
            gemm(false, true, rows, ck, cout, T{1}, dy, cout, k->data(), cout,
                 T{0}, dcol.data(), ck);
            x->ensure_grad();
            col2im_add(dcol.data(), n, h, w, cin, kh, x->grad().data());
          }
        });
    }
    return y;
  }

  // Add a per-channel bias along the last axis (the only broadcast op).
  NodePtr bias_channels(const NodePtr& x, const NodePtr& b) {
    if (b->rank() != 1 || x->rank() < 1 || b->dim(0) != x->dim(x->rank() - 1))
      throw std::runtime_error("bias_channels: bias " + shape_str(b->shape()) +
                               " does not match last axis of " + shape_str(x->shape()));
    const size_t c = b->dim(0), total = x->size();
    Tensor out(x->shape());
    const T* xp = x->data();
    const T* bp = b->data();
    T* op = out.data();
    for (size_t i = 0; i < total; i += c)
      for (size_t j = 0; j < c; ++j) op[i + j] = xp[i + j] + bp[j];

    NodePtr y = adopt(std::move(out), {x.get(), b.get()});
    if (recording_) {
      const bool need_x = needs_.count(x.get()), need_b = needs_.count(b.get());
      if (need_x || need_b)
        record("bias_channels", [x, b, y, c, total, need_x, need_b] {
          if (!y->has_grad()) return;
          const T* dy = y->grad().data();
          if (need_x) {
            x->ensure_grad();
            T* dx = x->grad().data();
            for (size_t i = 0; i < total; ++i) dx[i] += dy[i];
          }
          if (need_b) {
            b->ensure_grad();
            T* db = b->grad().data();
            for (size_t i = 0; i < total; i += c)
              for (size_t j = 0; j < c; ++j) db[j] += dy[i + j];
          }
        });
    }
    return y;
  }

  // 2x2 max pooling, stride 2, NHWC. Odd trailing rows/columns are padded
  // with -inf, i.e. the output is ceil(H/2) x ceil(W/2) and edge windows
  // shrink. Ties resolve to the first element in row-major scan order.
  NodePtr maxpool2d(const NodePtr& x) {
    if (x->rank() != 4)
      throw std::runtime_error("maxpool2d: input must be rank-4 NHWC, got " +
                               shape_str(x->shape()));
    const size_t n = x->dim(0), h = x->dim(1), w = x->dim(2), c = x->dim(3);
    const size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor out({n, oh, ow, c});
    auto argmax = std::make_shared<std::vector<uint32_t>>(out.size());
    const T* xp = x->data();
    T* op = out.data();
    uint32_t* am = argmax->data();
    size_t oi = 0;
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t r = 0; r < oh; ++r)
        for (size_t col = 0; col < ow; ++col) {
          const size_t r0 = 2 * r, c0 = 2 * col;
          const size_t r1 = std::min(r0 + 2, h), c1 = std::min(c0 + 2, w);
          for (size_t ch = 0; ch < c; ++ch) {
            T best = -std::numeric_limits<T>::infinity();
            size_t best_idx = 0;
            for (size_t ir = r0; ir < r1; ++ir)
              for (size_t ic = c0; ic < c1; ++ic) {
                const size_t idx = ((ni * h + ir) * w + ic) * c + ch;
                if (xp[idx] > best) {
                  best = xp[idx];
                  best_idx = idx;
                }
              }
            op[oi] = best;
            am[oi] = static_cast<uint32_t>(best_idx);
            ++oi;
          }
        }

    NodePtr y = adopt(std::move(out), {x.get()});
    if (recording_ && needs_.count(x.get()))
      record("maxpool2d", [x, y, argmax] {
        if (!y->has_grad()) return;
        x->ensure_grad();
        T* dx = x->grad().data();
        const T* dy = y->grad().data();
        const uint32_t* am = argmax->data();
        const size_t m = y->size();
        for (size_t i = 0; i < m; ++i) dx[am[i]] += dy[i];
      });
    return y;
  }

  NodePtr relu(const NodePtr& x) {
    Tensor out(x->shape());
    const T* xp = x->data();
    T* op = out.data();
    const size_t m = x->size();
    for (size_t i = 0; i < m; ++i) op[i] = xp[i] > T{0} ? xp[i] : T{0};

    NodePtr y = adopt(std::move(out), {x.get()});
    if (recording_ && needs_.count(x.get()))
      record("relu", [x, y, m] {
        if (!y->has_grad()) return;
        x->ensure_grad();
        T* dx = x->grad().data();
        const T* dy = y->grad().data();
        const T* xp = x->data();
        for (size_t i = 0; i < m; ++i)
          if (xp[i] > T{0}) dx[i] += dy[i];
      });
    return y;
  }

  // Fully connected: x [N,Din] * w [Din,Dout] + b [Dout].
  NodePtr dense(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
    if (x->rank() != 2 || w->rank() != 2 || b->rank() != 1 ||
        x->dim(1) != w->dim(0) || w->dim(1) != b->dim(0))
      throw std::runtime_error("dense: incompatible shapes x" + shape_str(x->shape()) +
                               " w" + shape_str(w->shape()) + " b" + shape_str(b->shape()));
    const size_t n = x->dim(0), din = x->dim(1), dout = w->dim(1);
    Tensor out({n, dout});
    const T* bp = b->data();
    T* op = out.data();
    for (size_t i = 0; i < n; ++i)
      std::memcpy(op + i * dout, bp, dout * sizeof(T));
    gemm(false, false, n, dout, din, T{1}, x->data(), din, w->data(), dout,
         T{1}, op, dout);

    NodePtr y = adopt(std::move(out), {x.get(), w.get(), b.get()});
    if (recording_) {
      const bool nx = needs_.count(x.get()), nw = needs_.count(w.get()),
                 nb = needs_.count(b.get());
      if (nx || nw || nb)
        record("dense", [x, w, b, y, n, din, dout, nx, nw, nb] {
          if (!y->has_grad()) return;
          const T* dy = y->grad().data();
          if (nx) {
            x->ensure_grad();
            gemm(false, true, n, din, dout, T{1}, dy, dout, w->data(), dout,
                 T{1}, x->grad().data(), din);
          }
          if (nw) {
            w->ensure_grad();
            gemm(true, false, din, dout, n, T{1}, x->data(), din, dy, dout,
                 T{1}, w->grad().data(), dout);
          }
          if (nb) {
            b->ensure_grad();
            T* db = b->grad().data();
            for (size_t i = 0; i < n; ++i)
              for (size_t j = 0; j < dout; ++j) db[j] += dy[i * dout + j];
          }
        });
    }
    return y;
  }

  // Inverted dropout: in train mode each element is kept with probability
  // keep_prob and scaled by 1/keep_prob, so the expectation matches the
  // input. Identity in inference mode. keep_prob must lie in (0, 1].
  NodePtr dropout(const NodePtr& x, double keep_prob, Mode mode, Rng& rng) {
    if (!(keep_prob > 0.0) || keep_prob > 1.0)
      throw std::runtime_error("dropout: keep_prob must be in (0,1], got " +
                               std::to_string(keep_prob));
    const size_t m = x->size();
    if (mode == Mode::kInfer || keep_prob == 1.0) {
      Tensor out(x->shape(), x->values());
      NodePtr y = adopt(std::move(out), {x.get()});
      if (recording_ && needs_.count(x.get()))
        record("dropout", [x, y, m] {
          if (!y->has_grad()) return;
          x->ensure_grad();
          T* dx = x->grad().data();
          const T* dy = y->grad().data();
          for (size_t i = 0; i < m; ++i) dx[i] += dy[i];
        });
      return y;
    }

    auto mask = std::make_shared<std::vector<uint8_t>>(m);
    for (size_t i = 0; i < m; ++i) (*mask)[i] = rng.bernoulli(keep_prob) ? 1 : 0;
    const T inv = static_cast<T>(1.0 / keep_prob);
    Tensor out(x->shape());
    const T* xp = x->data();
    T* op = out.data();
    for (size_t i = 0; i < m; ++i) op[i] = (*mask)[i] ? xp[i] * inv : T{0};

    NodePtr y = adopt(std::move(out), {x.get()});
    if (recording_ && needs_.count(x.get()))
      record("dropout", [x, y, mask, inv, m] {
        if (!y->has_grad()) return;
        x->ensure_grad();
        T* dx = x->grad().data();
        const T* dy = y->grad().data();
        for (size_t i = 0; i < m; ++i)
          if ((*mask)[i]) dx[i] += dy[i] * inv;
      });
    return y;
  }

  NodePtr reshape(const NodePtr& x, std::vector<size_t> new_shape) {
    size_t n = 1;
    for (size_t d : new_shape) n *= d;
    if (n != x->size())
      throw std::runtime_error("reshape: cannot view " + shape_str(x->shape()) +
                               " as " + shape_str(new_shape));
    Tensor out(std::move(new_shape), x->values());
    NodePtr y = adopt(std::move(out), {x.get()});
    if (recording_ && needs_.count(x.get())) {
      const size_t m = x->size();
      record("reshape", [x, y, m] {
        if (!y->has_grad()) return;
        x->ensure_grad();
        T* dx = x->grad().data();
        const T* dy = y->grad().data();
        for (size_t i = 0; i < m; ++i) dx[i] += dy[i];
      });
    }
    return y;
  }

  // Scale each row of x [N,D] to unit Euclidean norm. Rows with norm below
  // 1e-12 are passed through a clamped norm (result ~0) rather than dividing
  // by zero.
  NodePtr l2_normalize_rows(const NodePtr& x) {
    if (x->rank() != 2)
      throw std::runtime_error("l2_normalize_rows: input must be rank-2, got " +
                               shape_str(x->shape()));
    const size_t n = x->dim(0), d = x->dim(1);
    Tensor out({n, d});
    auto norms = std::make_shared<std::vector<T>>(n);
    const T* xp = x->data();
    T* op = out.data();
    for (size_t i = 0; i < n; ++i) {
      double acc = 0;
      for (size_t j = 0; j < d; ++j) {
        const double v = xp[i * d + j];
        acc += v * v;
      }
      const T norm = static_cast<T>(std::max(std::sqrt(acc), 1e-12));
      (*norms)[i] = norm;
      for (size_t j = 0; j < d; ++j) op[i * d + j] = xp[i * d + j] / norm;
    }

    NodePtr y = adopt(std::move(out), {x.get()});
    if (recording_ && needs_.count(x.get()))
      record("l2_normalize_rows", [x, y, norms, n, d] {
        if (!y->has_grad()) return;
        x->ensure_grad();
        T* dx = x->grad().data();
        const T* dy = y->grad().data();
        const T* yp = y->data();
        for (size_t i = 0; i < n; ++i) {
          double dot = 0;
          for (size_t j = 0; j < d; ++j) dot += static_cast<double>(dy[i * d + j]) * yp[i * d + j];
          const T norm = (*norms)[i];
          for (size_t j = 0; j < d; ++j)
            dx[i * d + j] += (dy[i * d + j] - static_cast<T>(dot) * yp[i * d + j]) / norm;
        }
      });
    return y;
  }

  NodePtr add(const NodePtr& a, const NodePtr& b) {
    return binary_elementwise("add", a, b, [](T u, T v) { return u + v; },
                              [](const T* dy, T* da, T* db, size_t m) {
                                for (size_t i = 0; i < m; ++i) {
                                  if (da) da[i] += dy[i];
                                  if (db) db[i] += dy[i];
                                }
                              });
  }

  NodePtr sub(const NodePtr& a, const NodePtr& b) {
    return binary_elementwise("sub", a, b, [](T u, T v) { return u - v; },
                              [](const T* dy, T* da, T* db, size_t m) {
                                for (size_t i = 0; i < m; ++i) {
                                  if (da) da[i] += dy[i];
                                  if (db) db[i] -= dy[i];
                                }
                              });
  }

  NodePtr mul(const NodePtr& a, const NodePtr& b) {
    if (a->shape() != b->shape())
      throw std::runtime_error("mul: shape mismatch " + shape_str(a->shape()) + " vs " +
                               shape_str(b->shape()));
    const size_t m = a->size();
    Tensor out(a->shape());
    const T* ap = a->data();
    const T* bp = b->data();
    T* op = out.data();
    for (size_t i = 0; i < m; ++i) op[i] = ap[i] * bp[i];
    NodePtr y = adopt(std::move(out), {a.get(), b.get()});
    if (recording_) {
      const bool na = needs_.count(a.get()), nb = needs_.count(b.get());
      if (na || nb)
        record("mul", [a, b, y, m, na, nb] {
          if (!y->has_grad()) return;
          const T* dy = y->grad().data();
          if (na) {
            a->ensure_grad();
            T* da = a->grad().data();
            const T* bp = b->data();
            for (size_t i = 0; i < m; ++i) da[i] += dy[i] * bp[i];
          }
          if (nb) {
            b->ensure_grad();
            T* db = b->grad().data();
            const T* ap = a->data();
            for (size_t i = 0; i < m; ++i) db[i] += dy[i] * ap[i];
          }
        });
    }
    return y;
  }

  NodePtr square(const NodePtr& x) { return mul(x, x); }

  NodePtr scale(const NodePtr& x, T factor) {
    const size_t m = x->size();
    Tensor out(x->shape());
    const T* xp = x->data();
    T* op = out.data();
    for (size_t i = 0; i < m; ++i) op[i] = xp[i] * factor;
    NodePtr y = adopt(std::move(out), {x.get()});
    if (recording_ && needs_.count(x.get()))
      record("scale", [x, y, factor, m] {
        if (!y->has_grad()) return;
        x->ensure_grad();
        T* dx = x->grad().data();
        const T* dy = y->grad().data();
        for (size_t i = 0; i < m; ++i) dx[i] += dy[i] * factor;
      });
    return y;
  }

  // Sum of all elements, returned as a [1] tensor. Accumulates in double
  // regardless of T to keep large reductions well conditioned.
  NodePtr sum(const NodePtr& x) {
    double acc = 0;
    const T* xp = x->data();
    const size_t m = x->size();
    for (size_t i = 0; i < m; ++i) acc += xp[i];
    Tensor out({1});
    out[0] = static_cast<T>(acc);
    NodePtr y = adopt(std::move(out), {x.get()});
    if (recording_ && needs_.count(x.get()))
      record("sum", [x, y, m] {
        if (!y->has_grad()) return;
        x->ensure_grad();
        T* dx = x->grad().data();
        const T dy = y->grad()[0];
        for (size_t i = 0; i < m; ++i) dx[i] += dy;
      });
    return y;
  }

  // Seed d(loss)/d(loss) = 1 and replay all recorded closures in reverse
  // order. Gradients accumulate (+=); trainable leaf gradients are zeroed
  // first, and every trainable leaf ends with an allocated gradient even if
  // the loss never touched it. Returns the number of ops replayed.
  size_t backward(const NodePtr& loss) {
    if (!recording_)
      throw std::runtime_error("backward: tape was created in non-recording mode");
    if (loss->size() != 1)
      throw std::runtime_error("backward: loss must be scalar, got shape " +
                               shape_str(loss->shape()));
    for (auto& t : trainable_) {
      t->ensure_grad();
      t->zero_grad();
    }
    loss->ensure_grad();
    loss->grad()[0] = T{1};
    for (size_t i = ops_.size(); i > 0; --i) ops_[i - 1].backward();
    return ops_.size();
  }

 private:
  struct OpRecord {
    const char* name;
    std::function<void()> backward;
  };

  template <typename Fwd, typename Bwd>
  NodePtr binary_elementwise(const char* name, const NodePtr& a, const NodePtr& b,
                             Fwd fwd, Bwd bwd) {
    if (a->shape() != b->shape())
      throw std::runtime_error(std::string(name) + ": shape mismatch " +
                               shape_str(a->shape()) + " vs " + shape_str(b->shape()));
    const size_t m = a->size();
    Tensor out(a->shape());
    const T* ap = a->data();
    const T* bp = b->data();
    T* op = out.data();
    for (size_t i = 0; i < m; ++i) op[i] = fwd(ap[i], bp[i]);
    NodePtr y = adopt(std::move(out), {a.get(), b.get()});
    if (recording_) {
      const bool na = needs_.count(a.get()), nb = needs_.count(b.get());
      if (na || nb)
        record(name, [a, b, y, m, na, nb, bwd] {
          if (!y->has_grad()) return;
          if (na) a->ensure_grad();
          if (nb) b->ensure_grad();
          bwd(y->grad().data(), na ? a->grad().data() : nullptr,
              nb ? b->grad().data() : nullptr, m);
        });
    }
    return y;
  }

  // Gather 3x3 (generally kxk) input patches into a [N*H*W, k*k*cin] matrix.
  // The buffer arrives zeroed, so out-of-bounds taps are simply skipped.
  static void im2col(const T* x, size_t n, size_t h, size_t w, size_t cin,
                     size_t k, T* cols) {
    const size_t pad = k / 2;
    const size_t ck = k * k * cin;
    const size_t seg = k * cin;  // one kh-row of a patch
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t oh = 0; oh < h; ++oh)
        for (size_t kh = 0; kh < k; ++kh) {
          const ptrdiff_t ih = static_cast<ptrdiff_t>(oh + kh) - static_cast<ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<ptrdiff_t>(h)) continue;
          const T* src = x + ((ni * h + static_cast<size_t>(ih)) * w) * cin;
          T* dst_row = cols + ((ni * h + oh) * w) * ck + kh * seg;
          // interior: the whole kh-row of the patch is in bounds
          const size_t lo = pad, hi = w > pad ? w - pad : 0;
          for (size_t ow = lo; ow < hi; ++ow)
            std::memcpy(dst_row + ow * ck, src + (ow - pad) * cin, seg * sizeof(T));
          // edges: clip tap by tap
          for (size_t ow = 0; ow < w; ++ow) {
            if (ow >= lo && ow < hi) continue;
            T* dst = dst_row + ow * ck;
            for (size_t kw = 0; kw < k; ++kw) {
              const ptrdiff_t iw = static_cast<ptrdiff_t>(ow + kw) - static_cast<ptrdiff_t>(pad);
              if (iw < 0 || iw >= static_cast<ptrdiff_t>(w)) continue;
              std::memcpy(dst + kw * cin, src + static_cast<size_t>(iw) * cin,
                          cin * sizeof(T));
            }
          }
        }
  }

  // Scatter-add the column-matrix gradient back onto the input layout.
  static void col2im_add(const T* dcol, size_t n, size_t h, size_t w, size_t cin,
                         size_t k, T* dx) {
    const size_t pad = k / 2;
    const size_t ck = k * k * cin;
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t oh = 0; oh < h; ++oh)
        for (size_t kh = 0; kh < k; ++kh) {
          const ptrdiff_t ih = static_cast<ptrdiff_t>(oh + kh) - static_cast<ptrdiff_t>(pad);
          if (ih < 0 || ih >= static_cast<ptrdiff_t>(h)) continue;
          T* dst = dx + ((ni * h + static_cast<size_t>(ih)) * w) * cin;
          const T* src_row = dcol + ((ni * h + oh) * w) * ck + kh * k * cin;
          for (size_t ow = 0; ow < w; ++ow) {
            const T* src = src_row + ow * ck;
            for (size_t kw = 0; kw < k; ++kw) {
              const ptrdiff_t iw = static_cast<ptrdiff_t>(ow + kw) - static_cast<ptrdiff_t>(pad);
              if (iw < 0 || iw >= static_cast<ptrdiff_t>(w)) continue;
              T* d = dst + static_cast<size_t>(iw) * cin;
              const T* s = src + kw * cin;
              for (size_t ci = 0; ci < cin; ++ci) d[ci] += s[ci];
            }
          }
        }
  }

  bool recording_;
  std::vector<OpRecord> ops_;
  std::vector<NodePtr> trainable_;
  std::unordered_set<const Tensor*> needs_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

}  // namespace snn
