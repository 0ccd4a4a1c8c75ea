#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "camo/codec.hpp"
#include "camo/conditioning.hpp"
#include "camo/optim.hpp"
#include "camo/unet.hpp"

namespace camo {

struct ScheduleConfig {
  int steps = 200;
  double beta_min = 1e-4;
  double beta_max = 0.02;
};

/// Variance schedule indexed by t in [1, T].
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps, double beta_min, double beta_max);
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(index(t)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(index(t)); }

 private:
  std::size_t index(int t) const;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule make_schedule(const ScheduleConfig& config);

/// z_t = sqrt(alpha_bar) z0 + sqrt(1 - alpha_bar) eps.
template <typename Real>
Tensor<Real> forward_diffuse(const Tensor<Real>& z0, const Tensor<Real>& eps, double alpha_bar);
template <typename Real>
Tensor<Real> forward_diffuse(const Tensor<Real>& z0, int t, const Tensor<Real>& eps, const NoiseSchedule& schedule);

enum class WeightingFn { kShifted, kLinear, kLog, kReciprocal, kUniform };
/// Mask reading for the loss terms. kObject upweights the object region and
/// supervises z_rec on the editable background; kEditable swaps both regions.
enum class MaskPolarity { kObject, kEditable };

std::string to_string(WeightingFn fn);
WeightingFn parse_weighting(const std::string& name);
std::string to_string(MaskPolarity polarity);
MaskPolarity parse_polarity(const std::string& name);

struct LossConfig {
  double alpha = 0.125;
  double lambda = 1.0;
  WeightingFn weighting = WeightingFn::kShifted;
  MaskPolarity polarity = MaskPolarity::kObject;
};

/// Foreground weight for area ratio r in (0, 1].
///   shifted    1 / (alpha + r)
///   linear     1/alpha - (1/alpha - 1) r
///   log        1 - 2 log10(r)
///   reciprocal 1 / r
///   uniform    1
double foreground_weight(double r, double alpha, WeightingFn fn);

struct LossBreakdown {
  double fadl_fg = 0;
  double fadl_bg = 0;
  double fadl_total = 0;
  double bgrec = 0;
  double total = 0;
  double w = 0;
};

template <typename Real>
struct FadlTerms {
  Tensor<Real> fg;
  Tensor<Real> bg;
};

/// Foreground-weighted denoising loss. `md` is the editable-background
/// indicator, [h,w,1] or [B,h,w,1]; `weights` holds one w per batch item.
/// Both terms are means over all elements of the squared masked residual.
template <typename Real>
FadlTerms<Real> fadl_loss(const Tensor<Real>& eps, const Tensor<Real>& eps_hat, const Tensor<Real>& md,
                          const std::vector<double>& weights, MaskPolarity polarity = MaskPolarity::kObject);

/// Mean squared z_rec - z0 over the editable background (kObject).
template <typename Real>
Tensor<Real> bgrec_loss(const Tensor<Real>& z_rec, const Tensor<Real>& z0, const Tensor<Real>& md,
                        MaskPolarity polarity = MaskPolarity::kObject);

/// lambda * fadl_total + bgrec; stores the value in breakdown.total.
double total_loss(LossBreakdown& breakdown, double lambda);

struct ModelConfig {
  CodecConfig codec;
  ConditioningConfig conditioning;
  UNetConfig unet;
  ScheduleConfig schedule;
  LossConfig loss;

  void validate() const;
};

/// Registers every stage-2 trainable parameter (bkrm.*, fafim.*, unet.*).
template <typename Real>
ParamStore<Real> init_model(const ModelConfig& config, std::uint64_t seed);

template <typename Real>
struct LossOutput {
  Tensor<Real> total;
  LossBreakdown breakdown;
};

/// Stage-2 objective for a batch with given timesteps and noise [B,h,w,3].
/// `codebook` must be a constant (detached) tensor.
template <typename Real>
LossOutput<Real> compute_loss(const ParamStore<Real>& params, const ModelConfig& config,
                              const Tensor<Real>& codebook, std::span<const SampleFeatures* const> batch,
                              const std::vector<int>& t, const Tensor<Real>& eps, const NoiseSchedule& schedule);

struct StepResult {
  LossBreakdown loss;
  double t_mean = 0;
};

/// Draws t ~ U{1..T} and eps ~ N(0, I) from `rng`, backpropagates the total
/// loss and applies one Adam update.
StepResult train_step(ParamStore<float>& params, AdamState<float>& adam, const ModelConfig& config,
                      const AdamConfig& adam_config, const Tensor<float>& codebook,
                      std::span<const SampleFeatures* const> batch, const NoiseSchedule& schedule, Rng rng);

template <typename Real>
using NoisePredictor = std::function<Tensor<Real>(const Tensor<Real>& z_t, int t)>;

/// Ancestral sampling from z_T ~ N(0, I) with sigma_t = sqrt(beta_t) and no
/// noise at t = 1.
template <typename Real>
Tensor<Real> sample_latent(const NoisePredictor<Real>& predictor, const NoiseSchedule& schedule, Shape shape,
                           std::uint64_t seed);

/// Samples z'_0 [h,w,3] under a condition with the trained denoiser.
template <typename Real>
Tensor<Real> sample(const ParamStore<Real>& params, const UNetConfig& unet, const ConditionBundle<Real>& condition,
                    const NoiseSchedule& schedule, std::uint64_t seed);

}  // namespace camo
