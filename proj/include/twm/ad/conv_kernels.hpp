#pragma once

// Direct stride-1 "same" convolution kernels over C x T x H planes (H
// contiguous). Inputs are copied into a zero-bordered buffer so the inner
// loops run without bounds checks; accumulation order is fixed, which keeps
// results bit-reproducible.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace twm::ad {

struct ConvGeometry {
  std::size_t c_in, c_out, frames, height, kernel;
  std::size_t radius() const { return kernel / 2; }
  std::size_t padded_frames() const { return frames + 2 * radius(); }
  std::size_t padded_height() const { return height + 2 * radius(); }
};

namespace detail {

template <typename T>
std::vector<T> pad_planes(const T* src, std::size_t channels, std::size_t frames, std::size_t height,
                          std::size_t r) {
  const std::size_t pf = frames + 2 * r, ph = height + 2 * r;
  std::vector<T> out(channels * pf * ph, T(0));
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < frames; ++t)
      std::copy(src + (c * frames + t) * height, src + (c * frames + t + 1) * height,
                out.data() + (c * pf + t + r) * ph + r);
  return out;
}

// Accumulates NC output channels of one output row segment [h0, h0 + W).
// K > 0 fixes the kernel size at compile time; K == 0 reads it from g.
template <typename T, std::size_t NC, std::size_t W, std::size_t K>
inline void conv_tile(const ConvGeometry& g, const T* padded, const T* weights, const T* bias, std::size_t co0,
                      std::size_t t, std::size_t h0, T* out, bool accumulate) {
  const std::size_t k = K ? K : g.kernel, pf = g.padded_frames(), ph = g.padded_height();
  const std::size_t wstride = g.c_in * k * k;
  T acc[NC][W];
  for (std::size_t c = 0; c < NC; ++c)
    for (std::size_t j = 0; j < W; ++j) acc[c][j] = bias ? bias[co0 + c] : T(0);
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    const T* wbase = weights + co0 * wstride + ci * k * k;
    for (std::size_t kt = 0; kt < k; ++kt) {
      const T* row = padded + (ci * pf + t + kt) * ph + h0;
#pragma GCC unroll 8
      for (std::size_t kh = 0; kh < k; ++kh) {
        const T* src = row + kh;
        T wv[NC];
#pragma GCC unroll 8
        for (std::size_t c = 0; c < NC; ++c) wv[c] = wbase[c * wstride + kt * k + kh];
#pragma GCC unroll 32
        for (std::size_t j = 0; j < W; ++j) {
          const T v = src[j];
#pragma GCC unroll 8
          for (std::size_t c = 0; c < NC; ++c) acc[c][j] += wv[c] * v;
        }
      }
    }
  }
  for (std::size_t c = 0; c < NC; ++c) {
    T* dst = out + ((co0 + c) * g.frames + t) * g.height + h0;
    if (accumulate)
      for (std::size_t j = 0; j < W; ++j) dst[j] += acc[c][j];
    else
      std::copy(acc[c], acc[c] + W, dst);
  }
}

template <typename T, std::size_t NC, std::size_t K>
inline void conv_row(const ConvGeometry& g, const T* padded, const T* weights, const T* bias, std::size_t co0,
                     std::size_t t, T* out, bool accumulate) {
  constexpr std::size_t kBlock = 32;
  std::size_t h0 = 0;
  for (; h0 + kBlock <= g.height; h0 += kBlock)
    conv_tile<T, NC, kBlock, K>(g, padded, weights, bias, co0, t, h0, out, accumulate);
  for (; h0 + 8 <= g.height; h0 += 8) conv_tile<T, NC, 8, K>(g, padded, weights, bias, co0, t, h0, out, accumulate);
  for (; h0 < g.height; ++h0) conv_tile<T, NC, 1, K>(g, padded, weights, bias, co0, t, h0, out, accumulate);
}

template <typename T, std::size_t K>
void conv_padded_k(const ConvGeometry& g, const T* padded, const T* weights, const T* bias, T* out,
                   bool accumulate) {
  std::size_t co = 0;
  for (; co + 4 <= g.c_out; co += 4)
    for (std::size_t t = 0; t < g.frames; ++t) conv_row<T, 4, K>(g, padded, weights, bias, co, t, out, accumulate);
  for (; co + 2 <= g.c_out; co += 2)
    for (std::size_t t = 0; t < g.frames; ++t) conv_row<T, 2, K>(g, padded, weights, bias, co, t, out, accumulate);
  for (; co < g.c_out; ++co)
    for (std::size_t t = 0; t < g.frames; ++t) conv_row<T, 1, K>(g, padded, weights, bias, co, t, out, accumulate);
}

template <typename T>
void conv_padded(const ConvGeometry& g, const T* padded, const T* weights, const T* bias, T* out,
                 bool accumulate) {
  switch (g.kernel) {
    case 1: conv_padded_k<T, 1>(g, padded, weights, bias, out, accumulate); break;
    case 3: conv_padded_k<T, 3>(g, padded, weights, bias, out, accumulate); break;
    default: conv_padded_k<T, 0>(g, padded, weights, bias, out, accumulate); break;
  }
}

// 64-byte SIMD value (GCC/Clang vector extension); plain arrays of these keep
// the weight-gradient accumulators in registers.
template <typename T>
struct LanesOf;
template <>
struct LanesOf<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct LanesOf<double> {
  typedef double type __attribute__((vector_size(64)));
};
template <typename T>
using Lanes = typename LanesOf<T>::type;

template <typename T>
inline Lanes<T> load_lanes(const T* p) {
  Lanes<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

// Weight-gradient partials for NC output channels and one kernel row:
// lanes[c][kh][l] += sum_j gout[c][j] * prow[j + kh] over j = l mod L. Each
// row is summed in float registers, then folded into double lanes.
template <typename T, std::size_t NC, std::size_t K, std::size_t L>
inline void weight_grad_row(const T* const* orows, const T* prow, std::size_t height, double* lanes, double* tail) {
  static_assert(L * sizeof(T) == sizeof(Lanes<T>));
  Lanes<T> acc[NC][K] = {};
  std::size_t j = 0;
  for (; j + L <= height; j += L) {
    Lanes<T> o[NC];
#pragma GCC unroll 8
    for (std::size_t c = 0; c < NC; ++c) o[c] = load_lanes(orows[c] + j);
#pragma GCC unroll 8
    for (std::size_t kh = 0; kh < K; ++kh) {
      const Lanes<T> src = load_lanes(prow + j + kh);
#pragma GCC unroll 8
      for (std::size_t c = 0; c < NC; ++c) acc[c][kh] += o[c] * src;
    }
  }
  for (std::size_t c = 0; c < NC; ++c)
    for (std::size_t kh = 0; kh < K; ++kh) {
      double* dst = lanes + (c * K + kh) * L;
      for (std::size_t l = 0; l < L; ++l) dst[l] += acc[c][kh][l];
      for (std::size_t jj = j; jj < height; ++jj) tail[c * K + kh] += static_cast<double>(orows[c][jj]) * prow[jj + kh];
    }
}

template <typename T, std::size_t NC, std::size_t K>
void weight_grad_group(const ConvGeometry& g, const T* gout, const T* padded, std::size_t ci, std::size_t co0,
                       double* sums) {
  constexpr std::size_t L = 64 / sizeof(T);
  const std::size_t pf = g.padded_frames(), ph = g.padded_height();
  std::vector<double> lanes(K * NC * K * L, 0.0), tail(K * NC * K, 0.0);
  for (std::size_t t = 0; t < g.frames; ++t) {
    const T* orows[NC];
    for (std::size_t c = 0; c < NC; ++c) orows[c] = gout + ((co0 + c) * g.frames + t) * g.height;
    for (std::size_t kt = 0; kt < K; ++kt)
      weight_grad_row<T, NC, K, L>(orows, padded + (ci * pf + t + kt) * ph, g.height,
                                   lanes.data() + kt * NC * K * L, tail.data() + kt * NC * K);
  }
  for (std::size_t kt = 0; kt < K; ++kt)
    for (std::size_t c = 0; c < NC; ++c)
      for (std::size_t kh = 0; kh < K; ++kh) {
        const double* ln = lanes.data() + ((kt * NC + c) * K + kh) * L;
        double s = tail[(kt * NC + c) * K + kh];
        for (std::size_t l = 0; l < L; ++l) s += ln[l];
        sums[(((co0 + c) * g.c_in + ci) * K + kt) * K + kh] += s;
      }
}

template <typename T, std::size_t K>
void weight_grad(const ConvGeometry& g, const T* gout, const T* padded, T* gw) {
  std::vector<double> sums(g.c_out * g.c_in * K * K, 0.0);
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    std::size_t co = 0;
    for (; co + 4 <= g.c_out; co += 4) weight_grad_group<T, 4, K>(g, gout, padded, ci, co, sums.data());
    for (; co + 2 <= g.c_out; co += 2) weight_grad_group<T, 2, K>(g, gout, padded, ci, co, sums.data());
    for (; co < g.c_out; ++co) weight_grad_group<T, 1, K>(g, gout, padded, ci, co, sums.data());
  }
  for (std::size_t i = 0; i < sums.size(); ++i) gw[i] += static_cast<T>(sums[i]);
}

}  // namespace detail

/// out = conv(x, w) + b; out is overwritten.
template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* out) {
  const auto padded = detail::pad_planes(x, g.c_in, g.frames, g.height, g.radius());
  detail::conv_padded(g, padded.data(), w, b, out, false);
}

/// gx += d(out)/dx applied to gout. Correlation with the flipped,
/// channel-transposed kernel.
template <typename T>
void conv_backward_input(const ConvGeometry& g, const T* gout, const T* w, T* gx) {
  const std::size_t k = g.kernel;
  std::vector<T> wt(g.c_in * g.c_out * k * k);
  for (std::size_t co = 0; co < g.c_out; ++co)
    for (std::size_t ci = 0; ci < g.c_in; ++ci)
      for (std::size_t kt = 0; kt < k; ++kt)
        for (std::size_t kh = 0; kh < k; ++kh)
          wt[((ci * g.c_out + co) * k + (k - 1 - kt)) * k + (k - 1 - kh)] = w[((co * g.c_in + ci) * k + kt) * k + kh];
  const ConvGeometry gt{g.c_out, g.c_in, g.frames, g.height, k};
  const auto padded = detail::pad_planes(gout, g.c_out, g.frames, g.height, g.radius());
  detail::conv_padded(gt, padded.data(), wt.data(), static_cast<const T*>(nullptr), gx, true);
}

/// gw += sum over positions of gout * shifted input.
template <typename T>
void conv_backward_weight(const ConvGeometry& g, const T* gout, const T* x, T* gw) {
  const auto padded = detail::pad_planes(x, g.c_in, g.frames, g.height, g.radius());
  switch (g.kernel) {
    case 1: detail::weight_grad<T, 1>(g, gout, padded.data(), gw); break;
    case 3: detail::weight_grad<T, 3>(g, gout, padded.data(), gw); break;
    case 5: detail::weight_grad<T, 5>(g, gout, padded.data(), gw); break;
    default: throw std::invalid_argument("conv2d: supported kernel sizes are 1, 3 and 5");
  }
}

template <typename T>
void conv_backward_bias(const ConvGeometry& g, const T* gout, T* gb) {
  const std::size_t plane = g.frames * g.height;
  for (std::size_t co = 0; co < g.c_out; ++co) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += gout[co * plane + i];
    gb[co] += static_cast<T>(s);
  }
}

}  // namespace twm::ad
