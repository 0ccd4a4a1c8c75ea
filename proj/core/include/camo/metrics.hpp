#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "camo/image.hpp"

namespace camo {

inline constexpr double kPsnrCap = 100.0;
inline constexpr std::size_t kFeatureDim = 48;

/// PSNR over foreground pixels in the 0..255 domain, capped at kPsnrCap.
double masked_psnr(const Image& generated, const Image& reference, const Mask& fg);

/// Mean SSIM (11x11 Gaussian, sigma 1.5, K1 0.01, K2 0.03, L 255) over
/// windows centred on foreground pixels, after zeroing the background of both
/// images. Windows are clipped at the border and their weights renormalized.
double masked_ssim(const Image& generated, const Image& reference, const Mask& fg);

/// Foreground strictly below 1/64 of the frame.
bool is_small_object(const Mask& fg);

/// 48 proxy features: for each cell of a 4x4 grid, the mean, variance and
/// mean squared gradient of the per-pixel channel average.
std::vector<double> image_features(const Image& image);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased; zero for a single sample
  std::size_t count = 0;
};

FeatureStats feature_stats(const std::vector<std::vector<double>>& features);

/// Squared Frechet distance between Gaussians with the given moments.
double frechet_proxy(const FeatureStats& a, const FeatureStats& b);

/// Unbiased MMD^2 with k(x, y) = (x.y / dim + 1)^3. Equal-size sets use the
/// paired U-statistic (exactly zero for identical lists), others the two-sample form.
double mmd_proxy(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

struct ImageScore {
  std::string name;
  double psnr = 0;
  double ssim = 0;
  bool small = false;
};

struct MetricReport {
  double psnr_full = 0;
  double psnr_small = 0;
  double ssim_full = 0;
  double ssim_small = 0;
  std::optional<double> frechet_proxy;  // empty: insufficient samples
  std::optional<double> mmd_proxy;
  std::size_t n_images = 0;
  std::size_t n_small = 0;
  std::vector<ImageScore> per_image;
};

struct EvalItem {
  std::string name;
  Image generated;
  Image reference;
  Mask fg;
  /// Small-object flag from the source-resolution mask; derived from `fg` when unset.
  std::optional<bool> small;
};

MetricReport evaluate_images(const std::vector<EvalItem>& items);

/// Pairs `<name>.png` in `generated_dir` with `<name>.png` and
/// `<name>_mask.png` in `reference_dir`.
MetricReport evaluate_dataset(const std::filesystem::path& generated_dir, const std::filesystem::path& reference_dir);

std::string report_table(const MetricReport& report);
std::string report_key_values(const MetricReport& report);

}  // namespace camo
