// SPDX-License-Identifier: Apache-2.0
#include "maskfill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace maskfill {

double psnr(const Image &a, const Image &b, double peak) {
  expects(a.same_shape(b), "psnr: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  expects(!a.empty(), "psnr: empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  if (acc == 0.0)
    return kPsnrCap;
  const double mse = acc / static_cast<double>(a.numel());
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(window));
  const double center = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    const double x = i - center;
    k[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    total += k[static_cast<std::size_t>(i)];
  }
  for (auto &v : k)
    v /= total;
  return k;
}

// Separable 'valid' filtering of one plane.
std::vector<double> filter_valid(const std::vector<double> &plane, std::size_t h, std::size_t w,
                                 const std::vector<double> &k) {
  const std::size_t n = k.size();
  const std::size_t oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t)
        acc += k[t] * plane[i * w + j + t];
      tmp[i * ow + j] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t)
        acc += k[t] * tmp[(i + t) * ow + j];
      out[i * ow + j] = acc;
    }
  return out;
}

} // namespace

double ssim(const Image &a, const Image &b, const SsimOptions &options) {
  expects(a.same_shape(b), "ssim: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  expect_image_shape(a, "ssim");
  const std::size_t h = a.dim(2), w = a.dim(3);
  const std::size_t window = static_cast<std::size_t>(options.window);
  expects(h >= window && w >= window, "ssim: image smaller than the " +
                                          std::to_string(window) + "x" +
                                          std::to_string(window) + " window");
  const auto kernel = gaussian_kernel(options.window, options.sigma);
  const double c1 = (options.k1 * options.peak) * (options.k1 * options.peak);
  const double c2 = (options.k2 * options.peak) * (options.k2 * options.peak);
  const std::size_t planes = a.dim(0) * a.dim(1);
  const std::size_t plane_size = h * w;

  double total = 0.0;
  std::vector<double> x(plane_size), y(plane_size), xx(plane_size), yy(plane_size),
      xy(plane_size);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < plane_size; ++i) {
      x[i] = a[p * plane_size + i];
      y[i] = b[p * plane_size + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mu_x = filter_valid(x, h, w, kernel);
    const auto mu_y = filter_valid(y, h, w, kernel);
    const auto e_xx = filter_valid(xx, h, w, kernel);
    const auto e_yy = filter_valid(yy, h, w, kernel);
    const auto e_xy = filter_valid(xy, h, w, kernel);
    double plane_sum = 0.0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
      const double var_x = e_xx[i] - mu_x[i] * mu_x[i];
      const double var_y = e_yy[i] - mu_y[i] * mu_y[i];
      const double cov = e_xy[i] - mu_x[i] * mu_y[i];
      const double num = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2);
      const double den = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (var_x + var_y + c2);
      plane_sum += num / den;
    }
    total += plane_sum / static_cast<double>(mu_x.size());
  }
  return total / static_cast<double>(planes);
}

Image quantize8(const Image &img) {
  Image out = img;
  for (auto &v : out.values()) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    v = std::floor(c * 255.0f + 0.5f) / 255.0f;
  }
  return out;
}

double QualityReport::mean_psnr() const {
  double acc = 0.0;
  for (const auto &r : rows)
    acc += r.psnr_db;
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

double QualityReport::mean_ssim() const {
  double acc = 0.0;
  for (const auto &r : rows)
    acc += r.ssim;
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

std::string QualityReport::to_csv() const {
  std::string out = "path,noise_kind,param,psnr,ssim\n";
  char buf[128];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, ",%.4f,%.6f\n", r.psnr_db, r.ssim);
    out += r.path + "," + r.noise_kind + "," + r.noise_param + buf;
  }
  if (!rows.empty()) {
    std::snprintf(buf, sizeof buf, "mean,,,%.4f,%.6f\n", mean_psnr(), mean_ssim());
    out += buf;
  }
  return out;
}

} // namespace maskfill
