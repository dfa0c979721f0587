#pragma once

// Image metrics on [0,1] tensors: PSNR (capped sentinel for identical images)
// and SSIM with the standard 11x11 Gaussian window (sigma 1.5) and
// stabilizers C1 = 0.01^2, C2 = 0.03^2 from the SSIM literature.

#include <cmath>
#include <vector>

#include "srf/tensor.hpp"

namespace srf {

inline constexpr double kPsnrCap = 99.0;

template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a.value()[i]) - static_cast<double>(b.value()[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> gaussian_window(size_t size, double sigma) {
  std::vector<double> w(size);
  double sum = 0;
  double half = (static_cast<double>(size) - 1.0) / 2.0;
  for (size_t i = 0; i < size; ++i) {
    double d = static_cast<double>(i) - half;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable valid-region Gaussian filter of one channel plane.
inline std::vector<double> gauss_filter_valid(const std::vector<double>& img, size_t h, size_t w,
                                              const std::vector<double>& win) {
  size_t k = win.size();
  size_t ow = w - k + 1, oh = h - k + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (size_t i = 0; i < k; ++i) acc += win[i] * img[y * w + x + i];
      tmp[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (size_t y = 0; y < oh; ++y)
    for (size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (size_t i = 0; i < k; ++i) acc += win[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape() || a.shape().size() != 3) {
    throw std::invalid_argument("ssim: expected matching [C,H,W] images");
  }
  size_t c = a.shape()[0], h = a.shape()[1], w = a.shape()[2];
  const size_t win_size = 11;
  if (h < win_size || w < win_size) throw std::invalid_argument("ssim: image smaller than window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  auto win = detail::gaussian_window(win_size, 1.5);

  double total = 0;
  size_t count = 0;
  for (size_t ch = 0; ch < c; ++ch) {
    std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
    for (size_t i = 0; i < h * w; ++i) {
      x[i] = static_cast<double>(a.value()[ch * h * w + i]);
      y[i] = static_cast<double>(b.value()[ch * h * w + i]);
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    auto mu_x = detail::gauss_filter_valid(x, h, w, win);
    auto mu_y = detail::gauss_filter_valid(y, h, w, win);
    auto m_xx = detail::gauss_filter_valid(xx, h, w, win);
    auto m_yy = detail::gauss_filter_valid(yy, h, w, win);
    auto m_xy = detail::gauss_filter_valid(xy, h, w, win);
    for (size_t i = 0; i < mu_x.size(); ++i) {
      double var_x = m_xx[i] - mu_x[i] * mu_x[i];
      double var_y = m_yy[i] - mu_y[i] * mu_y[i];
      double cov = m_xy[i] - mu_x[i] * mu_y[i];
      double num = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2);
      double den = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (var_x + var_y + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace srf
