#include "camo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "camo/errors.hpp"
#include "camo/png_io.hpp"

namespace camo {
namespace {

void check_pair(const Image& a, const Image& b, const Mask& fg, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw DimensionError(std::string(what) + ": image dims differ");
  }
  if (fg.height != a.height || fg.width != a.width) throw DimensionError(std::string(what) + ": mask dims differ");
  if (fg.count() == 0) throw InputError(std::string(what) + ": empty foreground mask");
}

std::vector<double> gaussian_window() {
  std::vector<double> g(11);
  for (int i = 0; i < 11; ++i) g[static_cast<std::size_t>(i)] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
  return g;
}

}  // namespace

double masked_psnr(const Image& generated, const Image& reference, const Mask& fg) {
  check_pair(generated, reference, fg, "masked_psnr");
  double sse = 0;
  std::size_t n = 0;
  for (int y = 0; y < fg.height; ++y) {
    for (int x = 0; x < fg.width; ++x) {
      if (!fg.at(y, x)) continue;
      for (int c = 0; c < generated.channels; ++c) {
        const double d = 255.0 * (static_cast<double>(generated.at(y, x, c)) - reference.at(y, x, c));
        sse += d * d;
        ++n;
      }
    }
  }
  const double mse = sse / static_cast<double>(n);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double masked_ssim(const Image& generated, const Image& reference, const Mask& fg) {
  check_pair(generated, reference, fg, "masked_ssim");
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);
  const auto g = gaussian_window();
  const int h = fg.height, w = fg.width;
  auto value = [&](const Image& img, int y, int x, int c) {
    return fg.at(y, x) ? 255.0 * img.at(y, x, c) : 0.0;
  };
  double total = 0;
  std::size_t windows = 0;
  for (int c = 0; c < generated.channels; ++c) {
    for (int cy = 0; cy < h; ++cy) {
      for (int cx = 0; cx < w; ++cx) {
        if (!fg.at(cy, cx)) continue;
        double wsum = 0, mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = -5; dy <= 5; ++dy) {
          const int y = cy + dy;
          if (y < 0 || y >= h) continue;
          for (int dx = -5; dx <= 5; ++dx) {
            const int x = cx + dx;
            if (x < 0 || x >= w) continue;
            const double k = g[static_cast<std::size_t>(dy + 5)] * g[static_cast<std::size_t>(dx + 5)];
            const double a = value(generated, y, x, c), b = value(reference, y, x, c);
            wsum += k;
            mx += k * a;
            my += k * b;
            sxx += k * a * a;
            syy += k * b * b;
            sxy += k * a * b;
          }
        }
        mx /= wsum;
        my /= wsum;
        const double vx = sxx / wsum - mx * mx;
        const double vy = syy / wsum - my * my;
        const double cov = sxy / wsum - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    }
  }
  return total / static_cast<double>(windows);
}

bool is_small_object(const Mask& fg) {
  return fg.count() * 64 < static_cast<std::size_t>(fg.height) * static_cast<std::size_t>(fg.width);
}

std::vector<double> image_features(const Image& image) {
  if (image.height < 4 || image.width < 4) throw DimensionError("image_features: image smaller than 4x4");
  const int h = image.height, w = image.width;
  std::vector<double> luma(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int c = 0; c < image.channels; ++c) s += image.at(y, x, c);
      luma[static_cast<std::size_t>(y) * w + x] = s / image.channels;
    }
  }
  auto L = [&](int y, int x) { return luma[static_cast<std::size_t>(y) * w + x]; };
  std::vector<double> out;
  out.reserve(kFeatureDim);
  for (int gy = 0; gy < 4; ++gy) {
    for (int gx = 0; gx < 4; ++gx) {
      const int y0 = gy * h / 4, y1 = (gy + 1) * h / 4;
      const int x0 = gx * w / 4, x1 = (gx + 1) * w / 4;
      double sum = 0, sq = 0, edge = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double v = L(y, x);
          sum += v;
          sq += v * v;
          // forward differences, clamped at the image border
          const double gxv = L(y, std::min(x + 1, w - 1)) - v;
          const double gyv = L(std::min(y + 1, h - 1), x) - v;
          edge += gxv * gxv + gyv * gyv;
        }
      }
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      const double m = sum / n;
      out.push_back(m);
      out.push_back(std::max(0.0, sq / n - m * m));
      out.push_back(edge / n);
    }
  }
  return out;
}

FeatureStats feature_stats(const std::vector<std::vector<double>>& features) {
  if (features.empty()) throw InputError("feature_stats: no samples");
  const auto dim = static_cast<Eigen::Index>(features.front().size());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(features.size()), dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (static_cast<Eigen::Index>(features[i].size()) != dim) throw InputError("feature_stats: ragged features");
    for (Eigen::Index j = 0; j < dim; ++j) X(static_cast<Eigen::Index>(i), j) = features[i][static_cast<std::size_t>(j)];
  }
  FeatureStats s;
  s.count = features.size();
  s.mean = X.colwise().mean().transpose();
  if (s.count < 2) {
    s.covariance = Eigen::MatrixXd::Zero(dim, dim);
  } else {
    const Eigen::MatrixXd centred = X.rowwise() - s.mean.transpose();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(s.count - 1);
    s.covariance = 0.5 * (cov + cov.transpose());
  }
  return s;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_proxy(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows() ||
      a.covariance.rows() != a.mean.size()) {
    throw InputError("frechet_proxy: feature dims differ");
  }
  // tr((Sa Sb)^1/2) = tr((Sa^1/2 Sb Sa^1/2)^1/2), which keeps everything symmetric.
  const Eigen::MatrixXd ra = psd_sqrt(a.covariance);
  const Eigen::MatrixXd cross = psd_sqrt(ra * b.covariance * ra);
  const double d2 = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * cross.trace();
  return std::max(0.0, d2);
}

double mmd_proxy(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  if (a.size() < 2 || b.size() < 2) throw InputError("mmd_proxy: need at least 2 samples per set");
  const std::size_t dim = a.front().size();
  auto kernel = [dim](const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != dim || y.size() != dim) throw InputError("mmd_proxy: feature dims differ");
    double dot = 0;
    for (std::size_t i = 0; i < dim; ++i) dot += x[i] * y[i];
    const double base = dot / static_cast<double>(dim) + 1.0;
    return base * base * base;
  };
  const double m = static_cast<double>(a.size()), n = static_cast<double>(b.size());
  if (a.size() == b.size()) {
    // paired U-statistic: h(i,j) = k(a_i,a_j) + k(b_i,b_j) - k(a_i,b_j) - k(a_j,b_i)
    double total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (i == j) continue;
        total += kernel(a[i], a[j]) + kernel(b[i], b[j]) - kernel(a[i], b[j]) - kernel(a[j], b[i]);
      }
    }
    return total / (m * (m - 1));
  }
  auto within = [&](const std::vector<std::vector<double>>& s) {
    double total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) total += kernel(s[i], s[j]);
    }
    const double k = static_cast<double>(s.size());
    return 2.0 * total / (k * (k - 1));
  };
  double cross = 0;
  for (const auto& x : a) {
    for (const auto& y : b) cross += kernel(x, y);
  }
  return within(a) + within(b) - 2.0 * cross / (m * n);
}

MetricReport evaluate_images(const std::vector<EvalItem>& items) {
  if (items.empty()) throw InputError("evaluate: no images");
  MetricReport r;
  std::vector<std::vector<double>> fa, fb;
  double psnr_small = 0, ssim_small = 0, psnr_full = 0, ssim_full = 0;
  for (const auto& item : items) {
    ImageScore s;
    s.name = item.name;
    s.psnr = masked_psnr(item.generated, item.reference, item.fg);
    s.ssim = masked_ssim(item.generated, item.reference, item.fg);
    s.small = item.small.value_or(is_small_object(item.fg));
    psnr_full += s.psnr;
    ssim_full += s.ssim;
    if (s.small) {
      psnr_small += s.psnr;
      ssim_small += s.ssim;
      ++r.n_small;
    }
    fa.push_back(image_features(item.generated));
    fb.push_back(image_features(item.reference));
    r.per_image.push_back(std::move(s));
  }
  r.n_images = items.size();
  r.psnr_full = psnr_full / static_cast<double>(r.n_images);
  r.ssim_full = ssim_full / static_cast<double>(r.n_images);
  if (r.n_small > 0) {
    r.psnr_small = psnr_small / static_cast<double>(r.n_small);
    r.ssim_small = ssim_small / static_cast<double>(r.n_small);
  } else {
    r.psnr_small = std::nan("");
    r.ssim_small = std::nan("");
  }
  if (r.n_images >= 2) {
    r.frechet_proxy = frechet_proxy(feature_stats(fa), feature_stats(fb));
    r.mmd_proxy = mmd_proxy(fa, fb);
  }
  return r;
}

MetricReport evaluate_dataset(const std::filesystem::path& generated_dir, const std::filesystem::path& reference_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(generated_dir)) throw InputError(generated_dir.string() + ": not a directory");
  if (!fs::is_directory(reference_dir)) throw InputError(reference_dir.string() + ": not a directory");
  std::map<std::string, fs::path> references;
  for (const auto& entry : fs::directory_iterator(reference_dir)) {
    const auto p = entry.path();
    if (p.extension() != ".png") continue;
    const auto stem = p.stem().string();
    if (stem.size() > 5 && stem.ends_with("_mask")) continue;
    references[stem] = p;
  }
  if (references.empty()) throw InputError(reference_dir.string() + ": no samples");
  std::vector<EvalItem> items;
  for (const auto& [name, ref_path] : references) {
    const auto gen_path = generated_dir / (name + ".png");
    const auto mask_path = reference_dir / (name + "_mask.png");
    if (!fs::exists(gen_path)) throw InputError("missing generated image " + gen_path.string());
    if (!fs::exists(mask_path)) throw InputError("missing mask " + mask_path.string());
    EvalItem item;
    item.name = name;
    item.generated = read_png_rgb(gen_path);
    item.reference = read_png_rgb(ref_path);
    item.fg = gray_to_mask(read_png_gray(mask_path));
    items.push_back(std::move(item));
  }
  return evaluate_images(items);
}

namespace {

std::string fmt(double v, int precision = 4) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v, 6) : "insufficient samples"; }

}  // namespace

std::string report_table(const MetricReport& r) {
  std::ostringstream s;
  s << "metric          full        small\n";
  s << "PSNR (dB)   " << std::setw(10) << fmt(r.psnr_full) << "  " << std::setw(10) << fmt(r.psnr_small) << "\n";
  s << "SSIM        " << std::setw(10) << fmt(r.ssim_full) << "  " << std::setw(10) << fmt(r.ssim_small) << "\n";
  s << "images      " << std::setw(10) << r.n_images << "  " << std::setw(10) << r.n_small << "\n";
  s << "frechet_proxy " << fmt(r.frechet_proxy) << "\n";
  s << "mmd_proxy     " << fmt(r.mmd_proxy) << "\n";
  return s.str();
}

std::string report_key_values(const MetricReport& r) {
  std::ostringstream s;
  s << std::setprecision(17);
  auto num = [&](const char* key, double v) {
    s << key << '=';
    if (std::isnan(v)) {
      s << "nan";
    } else {
      s << v;
    }
    s << '\n';
  };
  num("psnr_full", r.psnr_full);
  num("psnr_small", r.psnr_small);
  num("ssim_full", r.ssim_full);
  num("ssim_small", r.ssim_small);
  s << "frechet_proxy=";
  if (r.frechet_proxy) {
    s << *r.frechet_proxy;
  } else {
    s << "insufficient_samples";
  }
  s << "\nmmd_proxy=";
  if (r.mmd_proxy) {
    s << *r.mmd_proxy;
  } else {
    s << "insufficient_samples";
  }
  s << "\nn_images=" << r.n_images << "\nn_small=" << r.n_small << '\n';
  return s.str();
}

}  // namespace camo
