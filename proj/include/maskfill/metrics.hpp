// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "maskfill/tensor.hpp"

namespace maskfill {

/// Returned by psnr() for identical inputs.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE) over every sample of every channel, on unclipped values.
double psnr(const Image &a, const Image &b, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Mean SSIM over all valid window positions of every channel plane (no
/// padding), averaged across planes.
double ssim(const Image &a, const Image &b, const SsimOptions &options = {});

/// Rounds values to the nearest 8-bit level after clamping to [0,1].
Image quantize8(const Image &img);

struct QualityRow {
  std::string path;
  std::string noise_kind;
  std::string noise_param;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct QualityReport {
  std::vector<QualityRow> rows;

  double mean_psnr() const;
  double mean_ssim() const;
  /// "path,noise_kind,param,psnr,ssim" rows followed by a "mean" row.
  std::string to_csv() const;
};

} // namespace maskfill
