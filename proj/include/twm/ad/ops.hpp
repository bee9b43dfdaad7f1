#pragma once

// Differentiable tensor operations. Every op checks shapes explicitly; there
// is no implicit broadcasting.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "twm/ad/conv_kernels.hpp"
#include "twm/ad/graph.hpp"

namespace twm::ad {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T, typename F, typename G>
Var<T> unary(const Var<T>& x, F forward, G derivative) {
  Tensor<T> out(x.shape());
  const T* in = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_result<T>(std::move(out), {x}, [derivative](Node<T>& n) {
    Tensor<T>* gx = n.parent_grad(0);
    if (!gx) return;
    const T* xin = n.parent_value(0).data();
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i] * derivative(xin[i], n.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t p = 0; p < 2; ++p)
      if (Tensor<T>* g = n.parent_grad(p))
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (Tensor<T>* g = n.parent_grad(0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    if (Tensor<T>* g = n.parent_grad(1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] -= n.grad[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = n.parent_value(0);
    const auto& bv = n.parent_value(1);
    if (Tensor<T>* g = n.parent_grad(0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * bv[i];
    if (Tensor<T>* g = n.parent_grad(1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * av[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  return detail::unary<T>(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T alpha) {
  return detail::unary<T>(
      a, [alpha](T x) { return x > T(0) ? x : alpha * x; }, [alpha](T x, T) { return x > T(0) ? T(1) : alpha; });
}

/// max(x, 0); used to keep magnitudes non-negative.
template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::unary<T>(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
T sigmoid_scalar(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

namespace detail {

// Branch-free float sigmoid that the compiler can vectorize: exp(-|x|) by
// range reduction to [-ln2/2, ln2/2] and a degree-7 polynomial (Cephes expf
// coefficients), accurate to a few ulp.
inline void sigmoid_array(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float a = -std::abs(x[i]);
    const float z = a < -87.0f ? -87.0f : a;
    // Round to nearest via the 1.5 * 2^23 shifter.
    const float nf = (z * 1.44269504f + 12582912.0f) - 12582912.0f;
    const float r = (z - nf * 0.693359375f) + nf * 2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    const float e = p * std::bit_cast<float>(static_cast<std::uint32_t>(static_cast<int>(nf) + 127) << 23);
    const float num = x[i] >= 0.0f ? 1.0f : e;
    y[i] = num / (1.0f + e);
  }
}

inline void sigmoid_array(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid_scalar(x[i]);
}

}  // namespace detail

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a.shape());
  detail::sigmoid_array(a.value().data(), out.data(), out.size());
  return make_result<T>(std::move(out), {a}, [](Node<T>& n) {
    Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * n.value[i] * (T(1) - n.value[i]);
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary<T>(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

/// Clamp with zero gradient outside [lo, hi].
template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary<T>(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return detail::unary<T>(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
  double s = 0.0;
  for (T v : a.value().values()) s += v;
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(s)), {a}, [](Node<T>& n) {
    if (Tensor<T>* g = n.parent_grad(0))
      for (auto& v : g->values()) v += n.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  detail::require(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

/// Mean squared difference against a constant target.
template <typename T>
Var<T> mse(const Var<T>& a, const Tensor<T>& target) {
  detail::require(a.shape() == target.shape() && a.size() > 0,
                  "mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(target.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.value()[i]) - target[i];
    s += d * d;
  }
  const auto count = static_cast<double>(a.size());
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(s / count)), {a}, [target, count](Node<T>& n) {
    Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    const auto& av = n.parent_value(0);
    const T c = static_cast<T>(2.0 / count) * n.grad[0];
    for (std::size_t i = 0; i < av.size(); ++i) (*g)[i] += c * (av[i] - target[i]);
  });
}

/// Mean squared difference of two graph values.
template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "mse");
  const Var<T> d = sub(a, b);
  return mean(mul(d, d));
}

/// Sum of c_i * x_i over scalars.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& xs, const std::vector<T>& weights) {
  detail::require(xs.size() == weights.size() && !xs.empty(), "weighted_sum: arity mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    detail::require(xs[i].size() == 1, "weighted_sum: non-scalar term");
    s += static_cast<double>(weights[i]) * xs[i].value()[0];
  }
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(s)), xs, [weights](Node<T>& n) {
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (Tensor<T>* g = n.parent_grad(i)) (*g)[0] += weights[i] * n.grad[0];
  });
}

/// max_i |x_i| as a scalar. The subgradient goes to the first index attaining
/// the maximum.
template <typename T>
Var<T> abs_max(const Var<T>& a) {
  detail::require(a.size() > 0, "abs_max: empty tensor");
  std::size_t best = 0;
  T m = std::abs(a.value()[0]);
  for (std::size_t i = 1; i < a.size(); ++i)
    if (std::abs(a.value()[i]) > m) {
      m = std::abs(a.value()[i]);
      best = i;
    }
  return make_result<T>(Tensor<T>::scalar(m), {a}, [best](Node<T>& n) {
    Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    const T x = n.parent_value(0)[best];
    (*g)[best] += n.grad[0] * (x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)));
  });
}

/// x / s for a scalar graph value s.
template <typename T>
Var<T> div_scalar(const Var<T>& x, const Var<T>& s) {
  detail::require(s.size() == 1, "div_scalar: divisor must be scalar");
  const T d = s.value()[0];
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] / d;
  return make_result<T>(std::move(out), {x, s}, [d](Node<T>& n) {
    if (Tensor<T>* g = n.parent_grad(0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] / d;
    if (Tensor<T>* g = n.parent_grad(1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += static_cast<double>(n.grad[i]) * n.value[i];
      (*g)[0] -= static_cast<T>(acc / d);
    }
  });
}

// ---------------------------------------------------------------- shape ops

template <typename T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a.value().reshaped(std::move(s));
  return make_result<T>(std::move(out), {a}, [](Node<T>& n) {
    if (Tensor<T>* g = n.parent_grad(0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
  });
}

/// Concatenates C_i x T x H tensors along the channel axis.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  detail::require(!xs.empty(), "concat_channels: no inputs");
  const Shape& s0 = xs[0].shape();
  detail::require(s0.size() == 3, "concat_channels: inputs must be C x T x H");
  std::size_t channels = 0;
  for (const auto& x : xs) {
    detail::require(x.shape().size() == 3 && x.shape()[1] == s0[1] && x.shape()[2] == s0[2],
                    "concat_channels: incompatible " + shape_str(x.shape()) + " vs " + shape_str(s0));
    channels += x.shape()[0];
  }
  Tensor<T> out(Shape{channels, s0[1], s0[2]});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    std::copy(x.value().data(), x.value().data() + x.size(), out.data() + off);
    off += x.size();
  }
  return make_result<T>(std::move(out), xs, [offsets](Node<T>& n) {
    for (std::size_t p = 0; p < offsets.size(); ++p)
      if (Tensor<T>* g = n.parent_grad(p))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[offsets[p] + i];
  });
}

/// Tiles a C x 1 x H tensor to C x frames x H.
template <typename T>
Var<T> repeat_time(const Var<T>& x, std::size_t frames) {
  const Shape& s = x.shape();
  detail::require(s.size() == 3 && s[1] == 1, "repeat_time: input must be C x 1 x H, got " + shape_str(s));
  detail::require(frames >= 1, "repeat_time: frames must be >= 1");
  const std::size_t c = s[0], h = s[2];
  Tensor<T> out(Shape{c, frames, h});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t t = 0; t < frames; ++t)
      std::copy(x.value().data() + ci * h, x.value().data() + (ci + 1) * h, out.data() + (ci * frames + t) * h);
  return make_result<T>(std::move(out), {x}, [c, frames, h](Node<T>& n) {
    Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t k = 0; k < h; ++k) {
        double acc = 0.0;
        for (std::size_t t = 0; t < frames; ++t) acc += n.grad[(ci * frames + t) * h + k];
        (*g)[ci * h + k] += static_cast<T>(acc);
      }
  });
}

/// C x T x H -> C x (T + 2r) x H, edge frames repeated r times on each side.
template <typename T>
Var<T> pad_time_replicate(const Var<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  detail::require(s.size() == 3 && s[1] >= 1, "pad_time_replicate: input must be C x T x H, got " + shape_str(s));
  const std::size_t c = s[0], frames = s[1], h = s[2], out_frames = frames + 2 * r;
  Tensor<T> out(Shape{c, out_frames, h});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t t = 0; t < out_frames; ++t) {
      const std::size_t src = t < r ? 0 : std::min(t - r, frames - 1);
      const T* row = x.value().data() + (ci * frames + src) * h;
      std::copy(row, row + h, out.data() + (ci * out_frames + t) * h);
    }
  return make_result<T>(std::move(out), {x}, [c, frames, h, r, out_frames](Node<T>& n) {
    Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t t = 0; t < out_frames; ++t) {
        const std::size_t src = t < r ? 0 : std::min(t - r, frames - 1);
        const T* gin = n.grad.data() + (ci * out_frames + t) * h;
        T* gout = g->data() + (ci * frames + src) * h;
        for (std::size_t k = 0; k < h; ++k) gout[k] += gin[k];
      }
  });
}

/// Frames [begin, begin + count) of a C x T x H tensor.
template <typename T>
Var<T> crop_time(const Var<T>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  detail::require(s.size() == 3 && begin + count <= s[1] && count >= 1,
                  "crop_time: frames [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") of " +
                      shape_str(s));
  const std::size_t c = s[0], frames = s[1], h = s[2];
  Tensor<T> out(Shape{c, count, h});
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* src = x.value().data() + (ci * frames + begin) * h;
    std::copy(src, src + count * h, out.data() + ci * count * h);
  }
  return make_result<T>(std::move(out), {x}, [c, frames, h, begin, count](Node<T>& n) {
    Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    for (std::size_t ci = 0; ci < c; ++ci) {
      const T* gin = n.grad.data() + ci * count * h;
      T* gout = g->data() + (ci * frames + begin) * h;
      for (std::size_t i = 0; i < count * h; ++i) gout[i] += gin[i];
    }
  });
}

/// Arithmetic mean over the time axis: C x T x H -> C x 1 x H.
template <typename T>
Var<T> mean_time(const Var<T>& x) {
  const Shape& s = x.shape();
  detail::require(s.size() == 3 && s[1] >= 1, "mean_time: input must be C x T x H, got " + shape_str(s));
  const std::size_t c = s[0], frames = s[1], h = s[2];
  Tensor<T> out(Shape{c, 1, h});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t k = 0; k < h; ++k) {
      // Extended accumulator: identical frames average back to within one ulp.
      long double acc = 0.0L;
      for (std::size_t t = 0; t < frames; ++t) acc += x.value()[(ci * frames + t) * h + k];
      out[ci * h + k] = static_cast<T>(acc / static_cast<long double>(frames));
    }
  return make_result<T>(std::move(out), {x}, [c, frames, h](Node<T>& n) {
    Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    const T inv = T(1) / static_cast<T>(frames);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t k = 0; k < h; ++k) (*g)[(ci * frames + t) * h + k] += n.grad[ci * h + k] * inv;
  });
}

/// Global average per channel: C x T x H -> C.
template <typename T>
Var<T> avg_pool_all(const Var<T>& x) {
  const Shape& s = x.shape();
  detail::require(s.size() == 3 && s[1] * s[2] >= 1, "avg_pool_all: input must be C x T x H");
  const std::size_t c = s[0], plane = s[1] * s[2];
  Tensor<T> out(Shape{c});
  for (std::size_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x.value()[ci * plane + i];
    out[ci] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return make_result<T>(std::move(out), {x}, [c, plane](Node<T>& n) {
    Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    for (std::size_t ci = 0; ci < c; ++ci) {
      const T v = n.grad[ci] / static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) (*g)[ci * plane + i] += v;
    }
  });
}

// ---------------------------------------------------------------- affine

/// Affine map on the last dimension: x (... x d_in), w (d_out x d_in), b (d_out).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Shape& xs = x.shape();
  detail::require(!xs.empty() && w.shape().size() == 2 && b.shape().size() == 1, "linear: bad ranks");
  const std::size_t din = xs.back(), dout = w.shape()[0];
  detail::require(w.shape()[1] == din && b.shape()[0] == dout,
                  "linear: input " + shape_str(xs) + " weights " + shape_str(w.shape()) + " bias " +
                      shape_str(b.shape()));
  const std::size_t rows = x.size() / din;
  Shape os = xs;
  os.back() = dout;
  Tensor<T> out(os);
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < dout; ++o) {
      T acc = b.value()[o];
      for (std::size_t i = 0; i < din; ++i) acc += wv[o * din + i] * xv[r * din + i];
      out[r * dout + o] = acc;
    }
  return make_result<T>(std::move(out), {x, w, b}, [rows, din, dout](Node<T>& n) {
    const T* xv = n.parent_value(0).data();
    const T* wv = n.parent_value(1).data();
    if (Tensor<T>* gx = n.parent_grad(0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < dout; ++o) {
          const T go = n.grad[r * dout + o];
          for (std::size_t i = 0; i < din; ++i) (*gx)[r * din + i] += go * wv[o * din + i];
        }
    if (Tensor<T>* gw = n.parent_grad(1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < dout; ++o) {
          const T go = n.grad[r * dout + o];
          for (std::size_t i = 0; i < din; ++i) (*gw)[o * din + i] += go * xv[r * din + i];
        }
    if (Tensor<T>* gb = n.parent_grad(2))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < dout; ++o) (*gb)[o] += n.grad[r * dout + o];
  });
}

/// x (... x d_in) times a constant matrix m (d_out x d_in) transposed.
template <typename T>
Var<T> matmul_const(const Var<T>& x, const Tensor<T>& m) {
  const Shape& xs = x.shape();
  detail::require(!xs.empty() && m.rank() == 2 && m.dim(1) == xs.back(),
                  "matmul_const: " + shape_str(xs) + " vs " + shape_str(m.shape()));
  const std::size_t din = xs.back(), dout = m.dim(0), rows = x.size() / din;
  Shape os = xs;
  os.back() = dout;
  Tensor<T> out(os);
  const T* xv = x.value().data();
  // Row-times-transposed-matrix as a sequence of axpys so the loop vectorizes
  // without reassociating any sum.
  std::vector<T> mt(din * dout);
  for (std::size_t o = 0; o < dout; ++o)
    for (std::size_t i = 0; i < din; ++i) mt[i * dout + o] = m.data()[o * din + i];
  for (std::size_t r = 0; r < rows; ++r) {
    T* orow = out.data() + r * dout;
    for (std::size_t i = 0; i < din; ++i) {
      const T xi = xv[r * din + i];
      if (xi == T(0)) continue;
      const T* mrow = mt.data() + i * dout;
      for (std::size_t o = 0; o < dout; ++o) orow[o] += xi * mrow[o];
    }
  }
  return make_result<T>(std::move(out), {x}, [m, rows, din, dout](Node<T>& n) {
    Tensor<T>* gx = n.parent_grad(0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < dout; ++o) {
        const T go = n.grad[r * dout + o];
        if (go == T(0)) continue;
        const T* mr = m.data() + o * din;
        T* gr = gx->data() + r * din;
        for (std::size_t i = 0; i < din; ++i) gr[i] += go * mr[i];
      }
  });
}

// ---------------------------------------------------------------- convolution

/// Stride-1 cross-correlation with zero "same" padding.
/// x: C_in x T x H, w: C_out x C_in x k x k (k odd), b: C_out.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  detail::require(xs.size() == 3 && ws.size() == 4 && b.shape().size() == 1, "conv2d: bad ranks");
  detail::require(ws[1] == xs[0] && ws[2] == ws[3] && ws[2] % 2 == 1 && b.shape()[0] == ws[0],
                  "conv2d: input " + shape_str(xs) + " weights " + shape_str(ws) + " bias " + shape_str(b.shape()));
  const ConvGeometry geo{xs[0], ws[0], xs[1], xs[2], ws[2]};
  Tensor<T> out(Shape{geo.c_out, geo.frames, geo.height});
  conv_forward(geo, x.value().data(), w.value().data(), b.value().data(), out.data());
  return make_result<T>(std::move(out), {x, w, b}, [geo](Node<T>& n) {
    const T* xv = n.parent_value(0).data();
    const T* wv = n.parent_value(1).data();
    if (Tensor<T>* gx = n.parent_grad(0)) conv_backward_input(geo, n.grad.data(), wv, gx->data());
    if (Tensor<T>* gw = n.parent_grad(1)) conv_backward_weight(geo, n.grad.data(), xv, gw->data());
    if (Tensor<T>* gb = n.parent_grad(2)) conv_backward_bias(geo, n.grad.data(), gb->data());
  });
}

/// conv(x, wa, ba) * sigmoid(conv(x, wb, bb)), fused so that the two
/// pre-activations are the only saved intermediates.
template <typename T>
Var<T> gated_conv(const Var<T>& x, const Var<T>& wa, const Var<T>& ba, const Var<T>& wb, const Var<T>& bb) {
  const Shape& xs = x.shape();
  detail::require(xs.size() == 3 && wa.shape().size() == 4 && wa.shape() == wb.shape() &&
                      ba.shape() == bb.shape() && wa.shape()[1] == xs[0] && wa.shape()[2] % 2 == 1 &&
                      ba.shape().size() == 1 && ba.shape()[0] == wa.shape()[0],
                  "gated_conv: input " + shape_str(xs) + " weights " + shape_str(wa.shape()));
  const Shape& ws = wa.shape();
  const ConvGeometry geo{xs[0], ws[0], xs[1], xs[2], ws[2]};
  const Shape os{geo.c_out, geo.frames, geo.height};
  Tensor<T> pre_a(os), gate(os);
  conv_forward(geo, x.value().data(), wa.value().data(), ba.value().data(), pre_a.data());
  conv_forward(geo, x.value().data(), wb.value().data(), bb.value().data(), gate.data());
  Tensor<T> out(os);
  detail::sigmoid_array(gate.data(), gate.data(), gate.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pre_a[i] * gate[i];
  return make_result<T>(
      std::move(out), {x, wa, ba, wb, bb},
      [geo, pre_a = std::move(pre_a), gate = std::move(gate)](Node<T>& n) {
        const std::size_t count = n.grad.size();
        Tensor<T> da(n.value.shape()), db(n.value.shape());
        for (std::size_t i = 0; i < count; ++i) {
          da[i] = n.grad[i] * gate[i];
          db[i] = n.grad[i] * pre_a[i] * gate[i] * (T(1) - gate[i]);
        }
        const T* xv = n.parent_value(0).data();
        if (Tensor<T>* gx = n.parent_grad(0)) {
          conv_backward_input(geo, da.data(), n.parent_value(1).data(), gx->data());
          conv_backward_input(geo, db.data(), n.parent_value(3).data(), gx->data());
        }
        if (Tensor<T>* g = n.parent_grad(1)) conv_backward_weight(geo, da.data(), xv, g->data());
        if (Tensor<T>* g = n.parent_grad(2)) conv_backward_bias(geo, da.data(), g->data());
        if (Tensor<T>* g = n.parent_grad(3)) conv_backward_weight(geo, db.data(), xv, g->data());
        if (Tensor<T>* g = n.parent_grad(4)) conv_backward_bias(geo, db.data(), g->data());
      });
}

/// Per-channel standardization over T x H followed by gamma/beta.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5) {
  const Shape& s = x.shape();
  detail::require(s.size() == 3 && s[1] * s[2] >= 1, "instance_norm: input must be C x T x H");
  const std::size_t c = s[0], plane = s[1] * s[2];
  detail::require(gamma.shape() == Shape{c} && beta.shape() == Shape{c}, "instance_norm: affine shape mismatch");
  Tensor<T> out(s), xhat(s);
  std::vector<double> inv_std(c);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* xv = x.value().data() + ci * plane;
    double m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) m += xv[i];
    m /= static_cast<double>(plane);
    double v = 0.0;
    for (std::size_t i = 0; i < plane; ++i) v += (xv[i] - m) * (xv[i] - m);
    v /= static_cast<double>(plane);
    inv_std[ci] = 1.0 / std::sqrt(v + eps);
    const T g = gamma.value()[ci], bt = beta.value()[ci];
    for (std::size_t i = 0; i < plane; ++i) {
      const T xh = static_cast<T>((xv[i] - m) * inv_std[ci]);
      xhat[ci * plane + i] = xh;
      out[ci * plane + i] = g * xh + bt;
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [c, plane, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node<T>& n) {
        Tensor<T>* gx = n.parent_grad(0);
        Tensor<T>* gg = n.parent_grad(1);
        Tensor<T>* gb = n.parent_grad(2);
        const auto& gamma_v = n.parent_value(1);
        for (std::size_t ci = 0; ci < c; ++ci) {
          const T* dy = n.grad.data() + ci * plane;
          const T* xh = xhat.data() + ci * plane;
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += dy[i];
            sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
          }
          if (gg) (*gg)[ci] += static_cast<T>(sum_dy_xh);
          if (gb) (*gb)[ci] += static_cast<T>(sum_dy);
          if (gx) {
            // dx = g/sigma * (dy - mean(dy) - xhat * mean(dy * xhat))
            const double k = gamma_v[ci] * inv_std[ci];
            const double mdy = sum_dy / static_cast<double>(plane);
            const double mdyx = sum_dy_xh / static_cast<double>(plane);
            T* g = gx->data() + ci * plane;
            for (std::size_t i = 0; i < plane; ++i) g[i] += static_cast<T>(k * (dy[i] - mdy - xh[i] * mdyx));
          }
        }
      });
}

}  // namespace twm::ad
