#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library: plain loops, explicit 2-D windows, closed forms.

#include <cmath>
#include <vector>

#include <torch/torch.h>

namespace reference {

inline double luma(const torch::Tensor& img, std::int64_t i, std::int64_t j) {
  auto px = [&](std::int64_t c) { return (img[c][i][j].item<double>() + 1.0) / 2.0; };
  return 0.299 * px(0) + 0.587 * px(1) + 0.114 * px(2);
}

// Mean SSIM over every fully contained 11x11 window, with two-pass weighted moments.
inline double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  const int win = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  std::vector<double> w(win * win);
  double total = 0;
  for (int u = 0; u < win; ++u) {
    for (int v = 0; v < win; ++v) {
      const double du = u - 5, dv = v - 5;
      w[u * win + v] = std::exp(-(du * du + dv * dv) / (2 * sigma * sigma));
      total += w[u * win + v];
    }
  }
  for (auto& x : w) x /= total;
  const auto h = a.size(1), wd = a.size(2);
  std::vector<double> la(h * wd), lb(h * wd);
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < wd; ++j) {
      la[i * wd + j] = luma(a, i, j);
      lb[i * wd + j] = luma(b, i, j);
    }
  }
  double sum = 0;
  int count = 0;
  for (std::int64_t i = 0; i + win <= h; ++i) {
    for (std::int64_t j = 0; j + win <= wd; ++j) {
      double ma = 0, mb = 0;
      for (int u = 0; u < win; ++u) {
        for (int v = 0; v < win; ++v) {
          ma += w[u * win + v] * la[(i + u) * wd + j + v];
          mb += w[u * win + v] * lb[(i + u) * wd + j + v];
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int u = 0; u < win; ++u) {
        for (int v = 0; v < win; ++v) {
          const double da = la[(i + u) * wd + j + v] - ma, db = lb[(i + u) * wd + j + v] - mb;
          va += w[u * win + v] * da * da;
          vb += w[u * win + v] * db * db;
          cov += w[u * win + v] * da * db;
        }
      }
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / count;
}

inline double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  double se = 0;
  const auto fa = a.flatten(), fb = b.flatten();
  for (std::int64_t i = 0; i < fa.numel(); ++i) {
    const double d = (fa[i].item<double>() - fb[i].item<double>()) / 2.0;
    se += d * d;
  }
  const double mse = se / static_cast<double>(fa.numel());
  return mse == 0 ? 100.0 : std::min(100.0, -10.0 * std::log10(mse));
}

// Gaussian fit with the unbiased covariance; feature dimension 1 or 2.
struct Fit {
  std::vector<double> mean;
  std::vector<double> cov;  // row-major dim x dim
};

inline Fit fit(const torch::Tensor& f) {
  const auto n = f.size(0), d = f.size(1);
  Fit out{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0)};
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t k = 0; k < d; ++k) out.mean[k] += f[i][k].item<double>() / n;
  }
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t k = 0; k < d; ++k) {
      for (std::int64_t l = 0; l < d; ++l) {
        out.cov[k * d + l] += (f[i][k].item<double>() - out.mean[k]) * (f[i][l].item<double>() - out.mean[l]) / (n - 1);
      }
    }
  }
  return out;
}

// 1-D: (m1 - m2)^2 + (s1 - s2)^2. 2-D: Tr sqrt(M) = sqrt(tr M + 2 sqrt(det M))
// for M = S1 S2, whose eigenvalues are real and non-negative.
inline double frechet_closed_form(const torch::Tensor& a, const torch::Tensor& b) {
  const auto fa = fit(a), fb = fit(b);
  const auto d = a.size(1);
  double mean_term = 0;
  for (std::int64_t k = 0; k < d; ++k) mean_term += (fa.mean[k] - fb.mean[k]) * (fa.mean[k] - fb.mean[k]);
  if (d == 1) {
    const double s = std::sqrt(fa.cov[0]) - std::sqrt(fb.cov[0]);
    return mean_term + s * s;
  }
  const auto& p = fa.cov;
  const auto& q = fb.cov;
  const double m00 = p[0] * q[0] + p[1] * q[2], m01 = p[0] * q[1] + p[1] * q[3];
  const double m10 = p[2] * q[0] + p[3] * q[2], m11 = p[2] * q[1] + p[3] * q[3];
  const double tr = m00 + m11, det = m00 * m11 - m01 * m10;
  const double tr_sqrt = std::sqrt(tr + 2 * std::sqrt(std::max(0.0, det)));
  return std::max(0.0, mean_term + p[0] + p[3] + q[0] + q[3] - 2 * tr_sqrt);
}

}  // namespace reference
