#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spg/errors.hpp"

// Dense row-major tensors with tape-based reverse-mode differentiation.
// No broadcasting: every op states its shapes and rejects anything else.

namespace spg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    for (auto d : shape) require(d > 0, "tensor dims must be positive, got " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->data.assign(shape_numel(shape), T(0));
    t.impl_->shape = std::move(shape);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    require(shape_numel(shape) == data.size(),
            "tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    Tensor t = zeros(std::move(shape), requires_grad);
    t.impl_->data = std::move(data);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }
  T item() const {
    require(numel() == 1, "item() on a tensor with more than one element");
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }

  /// Gradient buffer, allocated (zero) on first access.
  std::span<T> grad() {
    if (impl_->grad.empty()) impl_->grad.assign(numel(), T(0));
    return impl_->grad;
  }
  std::span<const T> grad() const { return impl_->grad; }

  void zero_grad() { impl_->grad.clear(); }

  /// Same storage handle; identity comparison for tests.
  bool same(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of backward closures. Ops append in forward order;
/// backward() replays them once each in reverse.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }
  std::size_t size() const { return ops_.size(); }

  void backward(Tensor<T>& scalar_out) {
    require(scalar_out.numel() == 1, "backward() needs a scalar output");
    if (!scalar_out.requires_grad()) return;
    scalar_out.grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void()>> ops_;
};

namespace ops {

namespace detail {

template <typename T>
Tensor<T> result(Shape shape, bool requires_grad) {
  return Tensor<T>::zeros(std::move(shape), requires_grad);
}

inline void check(bool ok, const char* op, const std::string& why) {
  if (!ok) throw InvariantError(std::string(op) + ": " + why);
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul",
                "shape mismatch " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = detail::result<T>({m, n}, a.requires_grad() || b.requires_grad());
  {
    const T* A = a.data().data();
    const T* B = b.data().data();
    T* C = out.data().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const T av = A[i * k + p];
        if (av == T(0)) continue;
        const T* brow = B + p * n;
        T* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
  }
  if (out.requires_grad()) {
    tape.record([a, b, out, m, k, n]() mutable {
      const T* G = out.grad().data();
      if (a.requires_grad()) {
        T* GA = a.grad().data();
        const T* B = b.data().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
            GA[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        T* GB = b.grad().data();
        const T* A = a.data().data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
          }
      }
    });
  }
  return out;
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(Tape<T>& tape, Tensor<T> x, Fwd fwd, Bwd dfdx) {
  auto out = detail::result<T>(x.shape(), x.requires_grad());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
  if (out.requires_grad()) {
    tape.record([x, out, dfdx]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xd = x.data();
      auto od = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xd[i], od[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, Tensor<T> x) {
  return unary(tape, x, [](T v) { return v > T(0) ? v : T(0); },
               [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
T sigmoid_value(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, Tensor<T> x) {
  return unary(tape, x, [](T v) { return sigmoid_value(v); }, [](T, T s) { return s * (T(1) - s); });
}

template <typename T>
Tensor<T> log(Tape<T>& tape, Tensor<T> x) {
  for (auto v : x.data()) detail::check(v > T(0), "log", "input must be positive");
  return unary(tape, x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, Tensor<T> x, T s) {
  return unary(tape, x, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::check(a.shape() == b.shape(), "add", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = detail::result<T>(a.shape(), a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::check(a.shape() == b.shape(), "mul", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = detail::result<T>(a.shape(), a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

/// out = x * mul + add elementwise; `mul` and `add` are constants of x's size.
template <typename T>
Tensor<T> affine_const(Tape<T>& tape, Tensor<T> x, std::vector<T> mul, std::vector<T> add) {
  detail::check(mul.size() == x.numel() && add.size() == x.numel(), "affine_const", "constant size mismatch");
  auto out = detail::result<T>(x.shape(), x.requires_grad());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * mul[i] + add[i];
  if (out.requires_grad()) {
    tape.record([x, out, mul = std::move(mul)]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mul[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, Tensor<T> x) {
  auto out = detail::result<T>({1}, x.requires_grad());
  T acc = 0;
  for (auto v : x.data()) acc += v;
  out[0] = acc;
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      const T g = out.grad()[0];
      for (auto& gx : x.grad()) gx += g;
    });
  }
  return out;
}

/// x[m x n] + b[n] added to every row.
template <typename T>
Tensor<T> add_row_bias(Tape<T>& tape, Tensor<T> x, Tensor<T> b) {
  detail::check(x.rank() == 2 && b.rank() == 1 && b.dim(0) == x.dim(1), "add_row_bias",
                shape_str(x.shape()) + " + " + shape_str(b.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  auto out = detail::result<T>(x.shape(), x.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + b[j];
  if (out.requires_grad()) {
    tape.record([x, b, out, m, n]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return out;
}

/// x[C x H x W] + b[C] added to every spatial cell of channel c.
template <typename T>
Tensor<T> add_channel_bias(Tape<T>& tape, Tensor<T> x, Tensor<T> b) {
  detail::check(x.rank() == 3 && b.rank() == 1 && b.dim(0) == x.dim(0), "add_channel_bias",
                shape_str(x.shape()) + " + " + shape_str(b.shape()));
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  auto out = detail::result<T>(x.shape(), x.requires_grad() || b.requires_grad());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = x[ch * hw + i] + b[ch];
  if (out.requires_grad()) {
    tape.record([x, b, out, c, hw]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
          T acc = 0;
          for (std::size_t i = 0; i < hw; ++i) acc += g[ch * hw + i];
          gb[ch] += acc;
        }
      }
    });
  }
  return out;
}

/// Output spatial extent of a convolution.
inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// 2D cross-correlation. x[Cin x H x W], w[Cout x Cin x kh x kw], zero padding.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, Tensor<T> x, Tensor<T> w, std::size_t stride, std::size_t pad) {
  detail::check(x.rank() == 3 && w.rank() == 4 && w.dim(1) == x.dim(0), "conv2d",
                "shape mismatch " + shape_str(x.shape()) + " (*) " + shape_str(w.shape()));
  detail::check(stride == 1 || stride == 2, "conv2d", "stride must be 1 or 2");
  const std::size_t ci_n = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t co_n = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  detail::check(pad < kh && pad < kw, "conv2d", "padding must be smaller than the kernel");
  detail::check(H + 2 * pad >= kh && W + 2 * pad >= kw, "conv2d", "kernel does not fit the padded input");
  const std::size_t OH = conv_out_size(H, kh, stride, pad), OW = conv_out_size(W, kw, stride, pad);
  auto out = detail::result<T>({co_n, OH, OW}, x.requires_grad() || w.requires_grad());

  // Valid output column range [lo, hi) for kernel column kx.
  auto ox_range = [=](std::size_t kx) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + static_cast<std::ptrdiff_t>(stride) - 1) / static_cast<std::ptrdiff_t>(stride);
    std::ptrdiff_t hi_excl = static_cast<std::ptrdiff_t>(W) - off;  // need ox*stride < hi_excl
    std::ptrdiff_t hi = hi_excl <= 0 ? 0 : (hi_excl + static_cast<std::ptrdiff_t>(stride) - 1) / static_cast<std::ptrdiff_t>(stride);
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(OW));
    return std::pair<std::ptrdiff_t, std::ptrdiff_t>{lo, std::max(lo, hi)};
  };
  auto iy_of = [=](std::size_t oy, std::size_t ky) {
    return static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
  };

  {
    const T* X = x.data().data();
    const T* Wt = w.data().data();
    T* O = out.data().data();
    for (std::size_t co = 0; co < co_n; ++co)
      for (std::size_t ci = 0; ci < ci_n; ++ci)
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T wv = Wt[((co * ci_n + ci) * kh + ky) * kw + kx];
            const auto [lo, hi] = ox_range(kx);
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const std::ptrdiff_t iy = iy_of(oy, ky);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              const T* xrow = X + (ci * H + static_cast<std::size_t>(iy)) * W;
              T* orow = O + (co * OH + oy) * OW;
              for (std::ptrdiff_t ox = lo; ox < hi; ++ox) orow[ox] += wv * xrow[ox * static_cast<std::ptrdiff_t>(stride) + off];
            }
          }
  }

  if (out.requires_grad()) {
    tape.record([=]() mutable {
      const T* G = out.grad().data();
      const T* X = x.data().data();
      const T* Wt = w.data().data();
      T* GX = x.requires_grad() ? x.grad().data() : nullptr;
      T* GW = w.requires_grad() ? w.grad().data() : nullptr;
      for (std::size_t co = 0; co < co_n; ++co)
        for (std::size_t ci = 0; ci < ci_n; ++ci)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::size_t widx = ((co * ci_n + ci) * kh + ky) * kw + kx;
              const T wv = Wt[widx];
              const auto [lo, hi] = ox_range(kx);
              const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
              const auto s = static_cast<std::ptrdiff_t>(stride);
              T wacc = 0;
              for (std::size_t oy = 0; oy < OH; ++oy) {
                const std::ptrdiff_t iy = iy_of(oy, ky);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                const std::size_t xbase = (ci * H + static_cast<std::size_t>(iy)) * W;
                const T* grow = G + (co * OH + oy) * OW;
                if (GX) {
                  T* gxrow = GX + xbase;
                  for (std::ptrdiff_t ox = lo; ox < hi; ++ox) gxrow[ox * s + off] += wv * grow[ox];
                }
                if (GW) {
                  const T* xrow = X + xbase;
                  for (std::ptrdiff_t ox = lo; ox < hi; ++ox) wacc += xrow[ox * s + off] * grow[ox];
                }
              }
              if (GW) GW[widx] += wacc;
            }
    });
  }
  return out;
}

/// Nearest-neighbour x2 upsampling of x[C x H x W].
template <typename T>
Tensor<T> upsample_nearest(Tape<T>& tape, Tensor<T> x, std::size_t factor = 2) {
  detail::check(x.rank() == 3, "upsample_nearest", "expects C x H x W");
  detail::check(factor == 2, "upsample_nearest", "only factor 2 is supported");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  auto out = detail::result<T>({C, 2 * H, 2 * W}, x.requires_grad());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t xx = 0; xx < 2 * W; ++xx) out[(c * 2 * H + y) * 2 * W + xx] = x[(c * H + y / 2) * W + xx / 2];
  if (out.requires_grad()) {
    tape.record([x, out, C, H, W]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < 2 * H; ++y)
          for (std::size_t xx = 0; xx < 2 * W; ++xx) gx[(c * H + y / 2) * W + xx / 2] += g[(c * 2 * H + y) * 2 * W + xx];
    });
  }
  return out;
}

/// Column-wise max of each row segment [offsets[s], offsets[s+1]) of rows[n x d].
/// Ties resolve to the lowest row; backward routes gradient to that row only.
template <typename T>
Tensor<T> segment_max(Tape<T>& tape, Tensor<T> rows, std::vector<std::size_t> offsets) {
  detail::check(rows.rank() == 2, "segment_max", "expects n x d");
  detail::check(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == rows.dim(0), "segment_max",
                "offsets must span all rows");
  const std::size_t d = rows.dim(1), segs = offsets.size() - 1;
  auto out = detail::result<T>({segs, d}, rows.requires_grad());
  std::vector<std::size_t> arg(segs * d);
  for (std::size_t s = 0; s < segs; ++s) {
    detail::check(offsets[s + 1] > offsets[s], "segment_max", "empty segment");
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = offsets[s];
      for (std::size_t i = offsets[s] + 1; i < offsets[s + 1]; ++i) {
        if (rows[i * d + j] > rows[best * d + j]) best = i;
      }
      arg[s * d + j] = best;
      out[s * d + j] = rows[best * d + j];
    }
  }
  if (out.requires_grad()) {
    tape.record([rows, out, arg = std::move(arg), d]() mutable {
      auto g = out.grad();
      auto gr = rows.grad();
      for (std::size_t k = 0; k < arg.size(); ++k) gr[arg[k] * d + k % d] += g[k];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, Tensor<T> x, Shape shape);

/// Column-wise max over a set of rows[n x d], n >= 1. Returns the max and argmax rows.
template <typename T>
std::pair<Tensor<T>, std::vector<std::size_t>> setmax(Tape<T>& tape, Tensor<T> rows) {
  detail::check(rows.rank() == 2 && rows.dim(0) >= 1, "setmax", "needs at least one row");
  const std::size_t n = rows.dim(0), d = rows.dim(1);
  auto m = segment_max(tape, rows, {0, n});
  std::vector<std::size_t> arg(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (rows[i * d + j] > rows[best * d + j]) best = i;
    }
    arg[j] = best;
  }
  auto flat = reshape(tape, m, {d});
  return {flat, arg};
}

/// Concatenation along the leading axis; trailing dims must agree.
template <typename T>
Tensor<T> concat0(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::check(a.rank() == b.rank() && a.rank() >= 1 &&
                    std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1),
                "concat0", shape_str(a.shape()) + " ++ " + shape_str(b.shape()));
  Shape s = a.shape();
  s[0] += b.dim(0);
  auto out = detail::result<T>(s, a.requires_grad() || b.requires_grad());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.numel()));
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[a.numel() + i];
      }
    });
  }
  return out;
}

/// Zero tensor of `shape` with out[positions[i]] = x[i]. Positions must be distinct.
template <typename T>
Tensor<T> index_scatter(Tape<T>& tape, Tensor<T> x, Shape shape, std::vector<std::size_t> positions) {
  detail::check(positions.size() == x.numel(), "index_scatter", "one position per input element required");
  auto out = detail::result<T>(std::move(shape), x.requires_grad());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    detail::check(positions[i] < out.numel(), "index_scatter", "position out of range");
    out[positions[i]] = x[i];
  }
  if (out.requires_grad()) {
    tape.record([x, out, positions = std::move(positions)]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < positions.size(); ++i) gx[i] += g[positions[i]];
    });
  }
  return out;
}

/// Tensor of `shape` with out[j] = x[positions[j]].
template <typename T>
Tensor<T> index_gather(Tape<T>& tape, Tensor<T> x, Shape shape, std::vector<std::size_t> positions) {
  detail::check(positions.size() == shape_numel(shape), "index_gather", "one position per output element required");
  auto out = detail::result<T>(std::move(shape), x.requires_grad());
  for (std::size_t j = 0; j < positions.size(); ++j) {
    detail::check(positions[j] < x.numel(), "index_gather", "position out of range");
    out[j] = x[positions[j]];
  }
  if (out.requires_grad()) {
    tape.record([x, out, positions = std::move(positions)]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t j = 0; j < positions.size(); ++j) gx[positions[j]] += g[j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, Tensor<T> x, Shape shape) {
  detail::check(shape_numel(shape) == x.numel(), "reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  auto out = Tensor<T>::from(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()), x.requires_grad());
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

}  // namespace ops
}  // namespace spg
