#pragma once

// Loop-level metric references. Nothing here calls into the library except
// for the Image/Mask containers.

#include <cmath>
#include <cstddef>
#include <vector>

#include "camo/image.hpp"

namespace oracle {

inline double psnr_loop(const camo::Image& a, const camo::Image& b, const camo::Mask& fg) {
  long double sse = 0;
  long double n = 0;
  for (int y = 0; y < fg.height; ++y)
    for (int x = 0; x < fg.width; ++x)
      if (fg.at(y, x))
        for (int c = 0; c < a.channels; ++c) {
          const long double d = 255.0L * a.at(y, x, c) - 255.0L * b.at(y, x, c);
          sse += d * d;
          n += 1;
        }
  return static_cast<double>(10.0L * std::log10(255.0L * 255.0L * n / sse));
}

// Filter-map formulation: separable Gaussian blur of the masked planes and of
// a ones plane, ratios give the clipped, renormalized local moments.
inline double ssim_by_maps(const camo::Image& a, const camo::Image& b, const camo::Mask& fg) {
  const int h = fg.height, w = fg.width;
  std::vector<double> g(11);
  for (int i = 0; i < 11; ++i) g[static_cast<std::size_t>(i)] = std::exp(-(i - 5.0) * (i - 5.0) / 4.5);
  auto at = [w](int y, int x) { return static_cast<std::size_t>(y * w + x); };
  auto blur = [&](const std::vector<double>& in) {
    std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int d = -5; d <= 5; ++d)
          if (x + d >= 0 && x + d < w) tmp[at(y, x)] += g[static_cast<std::size_t>(d + 5)] * in[at(y, x + d)];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int d = -5; d <= 5; ++d)
          if (y + d >= 0 && y + d < h) out[at(y, x)] += g[static_cast<std::size_t>(d + 5)] * tmp[at(y + d, x)];
    return out;
  };
  const auto n = static_cast<std::size_t>(h * w);
  const auto norm = blur(std::vector<double>(n, 1.0));
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0;
  int count = 0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int py = static_cast<int>(i) / w, px = static_cast<int>(i) % w;
      x[i] = fg.fg[i] ? 255.0 * a.at(py, px, c) : 0.0;
      y[i] = fg.fg[i] ? 255.0 * b.at(py, px, c) : 0.0;
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = blur(x), my = blur(y), sxx = blur(xx), syy = blur(yy), sxy = blur(xy);
    for (std::size_t i = 0; i < n; ++i) {
      if (!fg.fg[i]) continue;
      const double ux = mx[i] / norm[i], uy = my[i] / norm[i];
      const double vx = sxx[i] / norm[i] - ux * ux, vy = syy[i] / norm[i] - uy * uy, cxy = sxy[i] / norm[i] - ux * uy;
      total += (2 * ux * uy + c1) * (2 * cxy + c2) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

inline double poly_kernel(const std::vector<double>& x, const std::vector<double>& y) {
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d += x[i] * y[i];
  return std::pow(d / static_cast<double>(x.size()) + 1.0, 3);
}

// Equal sizes: paired U-statistic. Otherwise the two-sample form.
inline double mmd_loops(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  const double m = static_cast<double>(a.size()), n = static_cast<double>(b.size());
  if (a.size() == b.size()) {
    double h = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a.size(); ++j)
        if (i != j)
          h += poly_kernel(a[i], a[j]) + poly_kernel(b[i], b[j]) - poly_kernel(a[i], b[j]) - poly_kernel(a[j], b[i]);
    return h / (m * (m - 1));
  }
  double kaa = 0, kbb = 0, kab = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (i != j) kaa += poly_kernel(a[i], a[j]);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j) kbb += poly_kernel(b[i], b[j]);
  for (const auto& x : a)
    for (const auto& y : b) kab += poly_kernel(x, y);
  return kaa / (m * (m - 1)) + kbb / (n * (n - 1)) - 2 * kab / (m * n);
}

using Matrix = std::vector<std::vector<double>>;

// Cyclic Jacobi rotations; returns eigenvalues, fills eigenvectors as columns.
inline std::vector<double> jacobi_eigen(Matrix a, Matrix& vectors) {
  const std::size_t n = a.size();
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k][p], vkq = vectors[k][q];
          vectors[k][p] = c * vkp - s * vkq;
          vectors[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a[i][i];
  return values;
}

inline Matrix mat_mul(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

struct Moments {
  std::vector<double> mean;
  Matrix cov;
};

inline Moments moments(const std::vector<std::vector<double>>& xs) {
  const std::size_t n = xs.size(), d = xs[0].size();
  Moments m{std::vector<double>(d, 0.0), Matrix(d, std::vector<double>(d, 0.0))};
  for (const auto& x : xs)
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += x[i] / static_cast<double>(n);
  for (const auto& x : xs)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m.cov[i][j] += (x[i] - m.mean[i]) * (x[j] - m.mean[j]) / static_cast<double>(n - 1);
  return m;
}

// |mu_a - mu_b|^2 + tr(A) + tr(B) - 2 sum sqrt(eig(sqrt(A) B sqrt(A))).
inline double frechet_jacobi(const Moments& a, const Moments& b) {
  const std::size_t d = a.mean.size();
  double out = 0;
  for (std::size_t i = 0; i < d; ++i) out += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]) + a.cov[i][i] + b.cov[i][i];
  Matrix v;
  const auto lam = jacobi_eigen(a.cov, v);
  Matrix root(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) root[i][j] += v[i][k] * std::sqrt(std::max(lam[k], 0.0)) * v[j][k];
  const auto inner = mat_mul(mat_mul(root, b.cov), root);
  Matrix unused;
  for (double l : jacobi_eigen(inner, unused)) out -= 2 * std::sqrt(std::max(l, 0.0));
  return out;
}

}  // namespace oracle
