#pragma once

// Network building blocks on top of the tape: affine layers, 2-D
// cross-correlation, view-axis max pooling and bilinear map lookups.

#include <algorithm>
#include <cmath>

#include "srf/tensor.hpp"

namespace srf {

enum class Padding { kValid, kSameZero };

// Affine map over the last axis: out = x W^T + b.
// x: [..., D_in], weight: [D_out, D_in], bias: [D_out].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.shape().size() != 2) {
    throw std::invalid_argument("linear: weight must be 2-D, got " + shape_str(weight.shape()));
  }
  size_t d_out = weight.shape()[0], d_in = weight.shape()[1];
  if (x.shape().back() != d_in) {
    throw std::invalid_argument("linear: input width " + std::to_string(x.shape().back()) +
                                " != weight D_in " + std::to_string(d_in));
  }
  if (bias.shape().size() != 1 || bias.shape()[0] != d_out) {
    throw std::invalid_argument("linear: bias shape " + shape_str(bias.shape()) +
                                " != [D_out=" + std::to_string(d_out) + "]");
  }
  size_t rows = x.size() / d_in;
  std::vector<size_t> out_shape(x.shape().begin(), x.shape().end() - 1);
  out_shape.push_back(d_out);
  std::vector<T> out(rows * d_out);
  const T* xv = x.value().data();
  const T* wv = weight.value().data();
  const T* bv = bias.value().data();
  for (size_t r = 0; r < rows; ++r) {
    for (size_t o = 0; o < d_out; ++o) {
      T acc = bv[o];
      const T* wrow = wv + o * d_in;
      const T* xrow = xv + r * d_in;
      for (size_t i = 0; i < d_in; ++i) acc += wrow[i] * xrow[i];
      out[r * d_out + o] = acc;
    }
  }
  auto px = x.node(), pw = weight.node(), pb = bias.node();
  return detail::make_op<T>(std::move(out_shape), std::move(out), {px, pw, pb},
                            [px, pw, pb, rows, d_in, d_out](Node<T>& self) {
                              if (px->requires_grad) {
                                px->ensure_grad();
                                for (size_t r = 0; r < rows; ++r)
                                  for (size_t o = 0; o < d_out; ++o) {
                                    T g = self.grad[r * d_out + o];
                                    if (g == T(0)) continue;
                                    for (size_t i = 0; i < d_in; ++i)
                                      px->grad[r * d_in + i] += g * pw->value[o * d_in + i];
                                  }
                              }
                              if (pw->requires_grad) {
                                pw->ensure_grad();
                                for (size_t r = 0; r < rows; ++r)
                                  for (size_t o = 0; o < d_out; ++o) {
                                    T g = self.grad[r * d_out + o];
                                    if (g == T(0)) continue;
                                    for (size_t i = 0; i < d_in; ++i)
                                      pw->grad[o * d_in + i] += g * px->value[r * d_in + i];
                                  }
                              }
                              if (pb->requires_grad) {
                                pb->ensure_grad();
                                for (size_t r = 0; r < rows; ++r)
                                  for (size_t o = 0; o < d_out; ++o)
                                    pb->grad[o] += self.grad[r * d_out + o];
                              }
                            });
}

namespace detail {

inline size_t conv_out_extent(size_t in, size_t k, size_t stride, Padding pad) {
  if (pad == Padding::kSameZero) return (in + stride - 1) / stride;
  if (in < k) throw std::invalid_argument("conv2d: kernel larger than input under valid padding");
  return (in - k) / stride + 1;
}

inline long conv_pad_before(size_t in, size_t out, size_t k, size_t stride, Padding pad) {
  if (pad == Padding::kValid) return 0;
  long total = static_cast<long>((out - 1) * stride + k) - static_cast<long>(in);
  if (total < 0) total = 0;
  return total / 2;
}

}  // namespace detail

// Cross-correlation. input: [C_in, H, W], kernel: [C_out, C_in, kh, kw],
// bias: [C_out]. Zero padding in "same" mode.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 size_t stride_h, size_t stride_w, Padding pad) {
  if (input.shape().size() != 3 || kernel.shape().size() != 4) {
    throw std::invalid_argument("conv2d: expected input [C,H,W] and kernel [Co,Ci,kh,kw], got " +
                                shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  size_t c_in = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  size_t c_out = kernel.shape()[0], kh = kernel.shape()[2], kw = kernel.shape()[3];
  if (kernel.shape()[1] != c_in) {
    throw std::invalid_argument("conv2d: kernel C_in " + std::to_string(kernel.shape()[1]) +
                                " != input channels " + std::to_string(c_in));
  }
  if (bias.shape().size() != 1 || bias.shape()[0] != c_out) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                " != [C_out=" + std::to_string(c_out) + "]");
  }
  if (stride_h == 0 || stride_w == 0) throw std::invalid_argument("conv2d: zero stride");
  size_t oh = detail::conv_out_extent(h, kh, stride_h, pad);
  size_t ow = detail::conv_out_extent(w, kw, stride_w, pad);
  long ph = detail::conv_pad_before(h, oh, kh, stride_h, pad);
  long pw_ = detail::conv_pad_before(w, ow, kw, stride_w, pad);

  std::vector<T> out(c_out * oh * ow);
  const T* in_v = input.value().data();
  const T* k_v = kernel.value().data();
  const T* b_v = bias.value().data();
  parallel_for(c_out, [&](size_t co) {
    for (size_t oy = 0; oy < oh; ++oy) {
      for (size_t ox = 0; ox < ow; ++ox) {
        T acc = b_v[co];
        long iy0 = static_cast<long>(oy * stride_h) - ph;
        long ix0 = static_cast<long>(ox * stride_w) - pw_;
        for (size_t ci = 0; ci < c_in; ++ci) {
          const T* kp = k_v + ((co * c_in + ci) * kh) * kw;
          const T* ip = in_v + ci * h * w;
          for (size_t ky = 0; ky < kh; ++ky) {
            long iy = iy0 + static_cast<long>(ky);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (size_t kx = 0; kx < kw; ++kx) {
              long ix = ix0 + static_cast<long>(kx);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += kp[ky * kw + kx] * ip[iy * w + ix];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  });

  auto pi = input.node(), pk = kernel.node(), pb = bias.node();
  return detail::make_op<T>(
      {c_out, oh, ow}, std::move(out), {pi, pk, pb},
      [pi, pk, pb, c_in, h, w, c_out, kh, kw, oh, ow, stride_h, stride_w, ph, pw_](Node<T>& self) {
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (size_t co = 0; co < c_out; ++co) {
            T acc = 0;
            for (size_t p = 0; p < oh * ow; ++p) acc += self.grad[co * oh * ow + p];
            pb->grad[co] += acc;
          }
        }
        if (pi->requires_grad) {
          pi->ensure_grad();
          parallel_for(c_in, [&](size_t ci) {
            for (size_t co = 0; co < c_out; ++co) {
              const T* kp = pk->value.data() + ((co * c_in + ci) * kh) * kw;
              for (size_t oy = 0; oy < oh; ++oy)
                for (size_t ox = 0; ox < ow; ++ox) {
                  T g = self.grad[(co * oh + oy) * ow + ox];
                  if (g == T(0)) continue;
                  long iy0 = static_cast<long>(oy * stride_h) - ph;
                  long ix0 = static_cast<long>(ox * stride_w) - pw_;
                  for (size_t ky = 0; ky < kh; ++ky) {
                    long iy = iy0 + static_cast<long>(ky);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (size_t kx = 0; kx < kw; ++kx) {
                      long ix = ix0 + static_cast<long>(kx);
                      if (ix < 0 || ix >= static_cast<long>(w)) continue;
                      pi->grad[(ci * h + iy) * w + ix] += g * kp[ky * kw + kx];
                    }
                  }
                }
            }
          });
        }
        if (pk->requires_grad) {
          pk->ensure_grad();
          parallel_for(c_out, [&](size_t co) {
            for (size_t ci = 0; ci < c_in; ++ci) {
              T* kg = pk->grad.data() + ((co * c_in + ci) * kh) * kw;
              const T* ip = pi->value.data() + ci * h * w;
              for (size_t oy = 0; oy < oh; ++oy)
                for (size_t ox = 0; ox < ow; ++ox) {
                  T g = self.grad[(co * oh + oy) * ow + ox];
                  if (g == T(0)) continue;
                  long iy0 = static_cast<long>(oy * stride_h) - ph;
                  long ix0 = static_cast<long>(ox * stride_w) - pw_;
                  for (size_t ky = 0; ky < kh; ++ky) {
                    long iy = iy0 + static_cast<long>(ky);
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (size_t kx = 0; kx < kw; ++kx) {
                      long ix = ix0 + static_cast<long>(kx);
                      if (ix < 0 || ix >= static_cast<long>(w)) continue;
                      kg[ky * kw + kx] += g * ip[iy * w + ix];
                    }
                  }
                }
            }
          });
        }
      });
}

// Column-wise maximum over the rows of an [R, K] matrix. Ties route the
// gradient to the lowest row index.
template <class T>
Tensor<T> max_pool_rows(const Tensor<T>& x) {
  if (x.shape().size() != 2) {
    throw std::invalid_argument("max_pool_rows: expected [R,K], got " + shape_str(x.shape()));
  }
  size_t r = x.shape()[0], k = x.shape()[1];
  std::vector<T> out(k);
  std::vector<size_t> arg(k, 0);
  for (size_t c = 0; c < k; ++c) {
    T best = x.value()[c];
    for (size_t row = 1; row < r; ++row) {
      T v = x.value()[row * k + c];
      if (v > best) {
        best = v;
        arg[c] = row;
      }
    }
    out[c] = best;
  }
  auto px = x.node();
  return detail::make_op<T>({k}, std::move(out), {px},
                            [px, k, arg = std::move(arg)](Node<T>& self) {
                              px->ensure_grad();
                              for (size_t c = 0; c < k; ++c)
                                px->grad[arg[c] * k + c] += self.grad[c];
                            });
}

// Bilinear lookup in pixel-center convention: integer (u,v) addresses a texel
// center. Texels outside [0,W)x[0,H) contribute zero. Differentiable w.r.t.
// the feature map only.
template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& featmap, double u, double v) {
  if (featmap.shape().size() != 3) {
    throw std::invalid_argument("bilinear_sample: expected [C,H,W], got " +
                                shape_str(featmap.shape()));
  }
  size_t c = featmap.shape()[0], h = featmap.shape()[1], w = featmap.shape()[2];
  long x0 = static_cast<long>(std::floor(u));
  long y0 = static_cast<long>(std::floor(v));
  T fx = static_cast<T>(u - static_cast<double>(x0));
  T fy = static_cast<T>(v - static_cast<double>(y0));
  // (texel x, texel y, weight)
  struct Tap {
    long x, y;
    T w;
  };
  Tap taps[4] = {{x0, y0, (T(1) - fx) * (T(1) - fy)},
                 {x0 + 1, y0, fx * (T(1) - fy)},
                 {x0, y0 + 1, (T(1) - fx) * fy},
                 {x0 + 1, y0 + 1, fx * fy}};
  std::vector<T> out(c, T(0));
  for (const Tap& t : taps) {
    if (t.x < 0 || t.y < 0 || t.x >= static_cast<long>(w) || t.y >= static_cast<long>(h)) continue;
    const T* base = featmap.value().data() + t.y * w + t.x;
    for (size_t ch = 0; ch < c; ++ch) out[ch] += t.w * base[ch * h * w];
  }
  auto pf = featmap.node();
  std::vector<Tap> saved(taps, taps + 4);
  return detail::make_op<T>({c}, std::move(out), {pf},
                            [pf, c, h, w, saved = std::move(saved)](Node<T>& self) {
                              pf->ensure_grad();
                              for (const Tap& t : saved) {
                                if (t.x < 0 || t.y < 0 || t.x >= static_cast<long>(w) ||
                                    t.y >= static_cast<long>(h))
                                  continue;
                                for (size_t ch = 0; ch < c; ++ch)
                                  pf->grad[(ch * h + t.y) * w + t.x] += t.w * self.grad[ch];
                              }
                            });
}

// Pads an [R, K] matrix with zero rows at the bottom up to target_rows.
template <class T>
Tensor<T> pad_rows(const Tensor<T>& x, size_t target_rows) {
  if (x.shape().size() != 2) {
    throw std::invalid_argument("pad_rows: expected [R,K], got " + shape_str(x.shape()));
  }
  size_t r = x.shape()[0], k = x.shape()[1];
  if (target_rows < r) throw std::invalid_argument("pad_rows: target smaller than input");
  if (target_rows == r) return x;
  std::vector<T> out(target_rows * k, T(0));
  std::copy(x.value().begin(), x.value().end(), out.begin());
  auto px = x.node();
  return detail::make_op<T>({target_rows, k}, std::move(out), {px}, [px, r, k](Node<T>& self) {
    px->ensure_grad();
    for (size_t i = 0; i < r * k; ++i) px->grad[i] += self.grad[i];
  });
}

// [R, C] -> [C, R].
template <class T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  if (x.shape().size() != 2) {
    throw std::invalid_argument("transpose2d: expected 2-D, got " + shape_str(x.shape()));
  }
  size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<T> out(r * c);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out[j * r + i] = x.value()[i * c + j];
  auto px = x.node();
  return detail::make_op<T>({c, r}, std::move(out), {px}, [px, r, c](Node<T>& self) {
    px->ensure_grad();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) px->grad[i * c + j] += self.grad[j * r + i];
  });
}

// Reinterprets the buffer with a new shape of equal length.
template <class T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<size_t> shape) {
  if (Tensor<T>::numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  }
  auto px = x.node();
  return detail::make_op<T>(std::move(shape), std::vector<T>(x.value()), {px},
                            [px](Node<T>& self) {
                              px->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                px->grad[i] += self.grad[i];
                            });
}

}  // namespace srf
