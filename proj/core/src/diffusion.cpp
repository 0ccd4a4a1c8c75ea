#include "camo/diffusion.hpp"

#include <cmath>
#include <sstream>

#include "camo/errors.hpp"
#include "camo/ops.hpp"

namespace camo {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ConfigError("schedule: steps must be >= 1, got " + std::to_string(steps));
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    std::ostringstream msg;
    msg << "schedule: need 0 < beta_min <= beta_max < 1, got " << beta_min << ", " << beta_max;
    throw ConfigError(msg.str());
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    betas[static_cast<std::size_t>(i)] =
        steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * i / static_cast<double>(steps - 1);
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("schedule: no betas");
  NoiseSchedule s;
  double running = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("schedule: beta outside (0, 1)");
    running *= 1.0 - b;
    s.alpha_bars_.push_back(running);
  }
  s.betas_ = std::move(betas);
  return s;
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps()) {
    throw InputError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

NoiseSchedule make_schedule(const ScheduleConfig& config) {
  return NoiseSchedule::linear(config.steps, config.beta_min, config.beta_max);
}

template <typename Real>
Tensor<Real> forward_diffuse(const Tensor<Real>& z0, const Tensor<Real>& eps, double alpha_bar) {
  if (z0.shape() != eps.shape()) {
    throw DimensionError("forward_diffuse: z0 " + shape_string(z0.shape()) + " vs eps " + shape_string(eps.shape()));
  }
  return add(scale(z0, static_cast<Real>(std::sqrt(alpha_bar))),
             scale(eps, static_cast<Real>(std::sqrt(1.0 - alpha_bar))));
}

template <typename Real>
Tensor<Real> forward_diffuse(const Tensor<Real>& z0, int t, const Tensor<Real>& eps, const NoiseSchedule& schedule) {
  return forward_diffuse(z0, eps, schedule.alpha_bar(t));
}

std::string to_string(WeightingFn fn) {
  switch (fn) {
    case WeightingFn::kShifted: return "shifted";
    case WeightingFn::kLinear: return "linear";
    case WeightingFn::kLog: return "log";
    case WeightingFn::kReciprocal: return "reciprocal";
    case WeightingFn::kUniform: return "uniform";
  }
  return "?";
}

WeightingFn parse_weighting(const std::string& name) {
  for (auto fn : {WeightingFn::kShifted, WeightingFn::kLinear, WeightingFn::kLog, WeightingFn::kReciprocal,
                  WeightingFn::kUniform}) {
    if (to_string(fn) == name) return fn;
  }
  throw ConfigError("unknown weighting function '" + name + "'");
}

std::string to_string(MaskPolarity polarity) { return polarity == MaskPolarity::kObject ? "object" : "editable"; }

MaskPolarity parse_polarity(const std::string& name) {
  if (name == "object") return MaskPolarity::kObject;
  if (name == "editable") return MaskPolarity::kEditable;
  throw ConfigError("unknown mask polarity '" + name + "'");
}

double foreground_weight(double r, double alpha, WeightingFn fn) {
  if (!(r > 0.0)) throw InputError("foreground ratio must be > 0");
  if (r > 1.0) throw InputError("foreground ratio must be <= 1");
  switch (fn) {
    case WeightingFn::kShifted:
      if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
      return 1.0 / (alpha + r);
    case WeightingFn::kLinear:
      if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
      return 1.0 / alpha - (1.0 / alpha - 1.0) * r;
    case WeightingFn::kLog: return 1.0 - 2.0 * std::log10(r);
    case WeightingFn::kReciprocal: return 1.0 / r;
    case WeightingFn::kUniform: return 1.0;
  }
  return 1.0;
}

namespace {

// Per-element (region, weight) patterns from an editable-background map. The
// map has one value per spatial cell; channels of `like` share it.
template <typename Real>
void region_patterns(const Tensor<Real>& like, const Tensor<Real>& md, const std::vector<double>& weights,
                     MaskPolarity polarity, std::vector<Real>& weighted, std::vector<Real>& plain) {
  const auto& shape = like.shape();
  if (shape.size() < 2) throw DimensionError("loss: tensor must be at least rank 2");
  const std::size_t channels = shape.back();
  const std::size_t cells = like.size() / channels;
  if (md.size() != cells) {
    throw DimensionError("loss: mask " + shape_string(md.shape()) + " does not match " + shape_string(shape));
  }
  const std::size_t batch = shape.size() == 4 ? shape[0] : 1;
  if (weights.size() != batch) {
    throw DimensionError("loss: " + std::to_string(weights.size()) + " weights for batch of " +
                         std::to_string(batch));
  }
  const std::size_t per_item = cells / batch;
  weighted.assign(like.size(), Real(0));
  plain.assign(like.size(), Real(0));
  auto mv = md.values();
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const Real m = mv[cell];
    if (m != Real(0) && m != Real(1)) throw InputError("loss: mask values must be 0 or 1");
    const bool editable = m == Real(1);
    // kObject: the object (m = 0) gets the weight.
    const bool upweighted = polarity == MaskPolarity::kObject ? !editable : editable;
    const Real w = static_cast<Real>(weights[cell / per_item]);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = cell * channels + c;
      if (upweighted) {
        weighted[i] = w;
      } else {
        plain[i] = Real(1);
      }
    }
  }
}

}  // namespace

template <typename Real>
FadlTerms<Real> fadl_loss(const Tensor<Real>& eps, const Tensor<Real>& eps_hat, const Tensor<Real>& md,
                          const std::vector<double>& weights, MaskPolarity polarity) {
  if (eps.shape() != eps_hat.shape()) {
    throw DimensionError("fadl: eps " + shape_string(eps.shape()) + " vs eps_hat " + shape_string(eps_hat.shape()));
  }
  for (double w : weights) {
    if (!(w >= 0.0)) throw InputError("fadl: weights must be >= 0");
  }
  std::vector<Real> weighted, plain;
  region_patterns(eps, md, weights, polarity, weighted, plain);
  const auto residual = sub(eps, eps_hat);
  return {mean(square(masked(residual, weighted))), mean(square(masked(residual, plain)))};
}

template <typename Real>
Tensor<Real> bgrec_loss(const Tensor<Real>& z_rec, const Tensor<Real>& z0, const Tensor<Real>& md,
                        MaskPolarity polarity) {
  if (z_rec.shape() != z0.shape()) {
    throw DimensionError("bgrec: z_rec " + shape_string(z_rec.shape()) + " vs z0 " + shape_string(z0.shape()));
  }
  const std::size_t batch = z0.rank() == 4 ? z0.dim(0) : 1;
  std::vector<Real> weighted, plain;
  region_patterns(z0, md, std::vector<double>(batch, 1.0), polarity, weighted, plain);
  // The supervised cells are the ones fadl leaves unweighted.
  return mean(square(masked(sub(z_rec, z0), plain)));
}

double total_loss(LossBreakdown& breakdown, double lambda) {
  breakdown.total = lambda * breakdown.fadl_total + breakdown.bgrec;
  return breakdown.total;
}

void ModelConfig::validate() const {
  codec.validate();
  conditioning.fafim.validate(codec.latent_size());
  conditioning.slic.validate();
  unet.validate();
  if (unet.latent_channels != codec.latent_channels) throw ConfigError("unet/codec latent channel mismatch");
  if (unet.cond_channels != codec.latent_channels + 1) throw ConfigError("unet condition channels must be latent+1");
  if (codec.latent_size() % 2 != 0) throw ConfigError("latent size must be even for the U-Net");
  make_schedule(schedule);
  if (!(loss.alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(loss.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
}

template <typename Real>
ParamStore<Real> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParamStore<Real> store;
  Rng root(seed);
  Rng cond_rng = root.split("conditioning");
  Rng unet_rng = root.split("unet");
  init_conditioning(store, config.conditioning, config.codec, cond_rng);
  init_unet(store, config.unet, unet_rng);
  return store;
}

template <typename Real>
LossOutput<Real> compute_loss(const ParamStore<Real>& params, const ModelConfig& config,
                              const Tensor<Real>& codebook, std::span<const SampleFeatures* const> batch,
                              const std::vector<int>& t, const Tensor<Real>& eps, const NoiseSchedule& schedule) {
  if (batch.empty()) throw InputError("compute_loss: empty batch");
  if (t.size() != batch.size()) throw DimensionError("compute_loss: one timestep per sample required");
  const int size = batch.front()->latent_size;
  const auto channels = static_cast<std::size_t>(config.codec.latent_channels);
  const Shape item_shape{static_cast<std::size_t>(size), static_cast<std::size_t>(size), channels};
  if (eps.shape() != Shape{batch.size(), item_shape[0], item_shape[1], channels}) {
    throw DimensionError("compute_loss: noise shape " + shape_string(eps.shape()));
  }

  std::vector<Tensor<Real>> z_t_parts, cond_parts, md_parts, z_rec_parts, z0_parts;
  std::vector<double> weights;
  const auto eps_item = item_shape[0] * item_shape[1] * channels;
  auto ev = eps.values();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SampleFeatures& f = *batch[b];
    if (f.latent_size != size) throw DimensionError("compute_loss: mixed latent sizes in batch");
    auto bundle = condition_from_features(params, config.conditioning, codebook, f);
    auto z0 = latent_tensor<Real>(f.z0, size, static_cast<int>(channels));
    Tensor<Real> e(item_shape, std::vector<Real>(ev.begin() + b * eps_item, ev.begin() + (b + 1) * eps_item));
    z_t_parts.push_back(forward_diffuse(z0, t[b], e, schedule));
    cond_parts.push_back(bundle.c);
    md_parts.push_back(bundle.md);
    z_rec_parts.push_back(bundle.z_rec);
    z0_parts.push_back(z0);
    weights.push_back(foreground_weight(f.fg_ratio, config.loss.alpha, config.loss.weighting));
  }
  const auto z_t = stack(z_t_parts);
  const auto cond = stack(cond_parts);
  const auto md = stack(md_parts);
  const auto eps_hat = predict_noise(params, config.unet, z_t, cond, t);
  auto fadl = fadl_loss(eps, eps_hat, md, weights, config.loss.polarity);
  auto bgrec = bgrec_loss(stack(z_rec_parts), stack(z0_parts), md, config.loss.polarity);
  auto total = add(scale(add(fadl.fg, fadl.bg), static_cast<Real>(config.loss.lambda)), bgrec);
  require_finite(total, "training loss");

  LossBreakdown log;
  log.fadl_fg = static_cast<double>(fadl.fg.item());
  log.fadl_bg = static_cast<double>(fadl.bg.item());
  log.fadl_total = log.fadl_fg + log.fadl_bg;
  log.bgrec = static_cast<double>(bgrec.item());
  total_loss(log, config.loss.lambda);
  double wsum = 0;
  for (double w : weights) wsum += w;
  log.w = wsum / static_cast<double>(weights.size());
  return {total, log};
}

StepResult train_step(ParamStore<float>& params, AdamState<float>& adam, const ModelConfig& config,
                      const AdamConfig& adam_config, const Tensor<float>& codebook,
                      std::span<const SampleFeatures* const> batch, const NoiseSchedule& schedule, Rng rng) {
  if (batch.empty()) throw InputError("train_step: empty batch");
  const auto size = static_cast<std::size_t>(batch.front()->latent_size);
  const auto channels = static_cast<std::size_t>(config.codec.latent_channels);
  std::vector<int> t(batch.size());
  Rng t_rng = rng.split("t");
  for (auto& v : t) v = static_cast<int>(t_rng.uniform_int(1, schedule.steps()));
  Rng eps_rng = rng.split("eps");
  std::vector<float> noise(batch.size() * size * size * channels);
  for (auto& v : noise) v = static_cast<float>(eps_rng.normal());
  Tensor<float> eps({batch.size(), size, size, channels}, std::move(noise));

  params.clear_grads();
  auto out = compute_loss(params, config, codebook.detach(), batch, t, eps, schedule);
  out.total.backward();
  adam_step(params, adam, adam_config);

  StepResult result;
  result.loss = out.breakdown;
  double tsum = 0;
  for (int v : t) tsum += v;
  result.t_mean = tsum / static_cast<double>(t.size());
  return result;
}

template <typename Real>
Tensor<Real> sample_latent(const NoisePredictor<Real>& predictor, const NoiseSchedule& schedule, Shape shape,
                           std::uint64_t seed) {
  NoGradGuard no_grad;
  Rng rng(seed);
  const std::size_t n = numel(shape);
  std::vector<Real> z(n);
  for (auto& v : z) v = static_cast<Real>(rng.normal());
  for (int t = schedule.steps(); t >= 1; --t) {
    const Tensor<Real> z_t(shape, z);
    const auto eps_hat = predictor(z_t, t);
    if (eps_hat.shape() != shape) throw DimensionError("sampler: predictor returned " + shape_string(eps_hat.shape()));
    require_finite(eps_hat, "predicted noise");
    const double beta = schedule.beta(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
    const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
    const double sigma = t > 1 ? std::sqrt(beta) : 0.0;
    auto ev = eps_hat.values();
    for (std::size_t i = 0; i < n; ++i) {
      const double mean_i = inv_sqrt_alpha * (static_cast<double>(z[i]) - coef * static_cast<double>(ev[i]));
      const double xi = t > 1 ? rng.normal() : 0.0;
      z[i] = static_cast<Real>(mean_i + sigma * xi);
    }
  }
  Tensor<Real> out(std::move(shape), std::move(z));
  require_finite(out, "sampled latent");
  return out;
}

template <typename Real>
Tensor<Real> sample(const ParamStore<Real>& params, const UNetConfig& unet, const ConditionBundle<Real>& condition,
                    const NoiseSchedule& schedule, std::uint64_t seed) {
  const auto& cs = condition.c.shape();
  if (cs.size() != 3) throw DimensionError("sample: condition must be [h,w,C]");
  const Shape latent{cs[0], cs[1], static_cast<std::size_t>(unet.latent_channels)};
  const Shape batched{1, cs[0], cs[1], cs[2]};
  const auto cond = reshape(condition.c.detach(), batched);
  NoisePredictor<Real> predictor = [&](const Tensor<Real>& z_t, int t) {
    auto z = reshape(z_t, Shape{1, latent[0], latent[1], latent[2]});
    return reshape(predict_noise(params, unet, z, cond, std::vector<int>{t}), latent);
  };
  return sample_latent(predictor, schedule, latent, seed);
}

#define CAMO_INSTANTIATE_DIFFUSION(R)                                                                           \
  template Tensor<R> forward_diffuse(const Tensor<R>&, const Tensor<R>&, double);                              \
  template Tensor<R> forward_diffuse(const Tensor<R>&, int, const Tensor<R>&, const NoiseSchedule&);           \
  template FadlTerms<R> fadl_loss(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,                        \
                                  const std::vector<double>&, MaskPolarity);                                  \
  template Tensor<R> bgrec_loss(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, MaskPolarity);           \
  template ParamStore<R> init_model<R>(const ModelConfig&, std::uint64_t);                                     \
  template LossOutput<R> compute_loss(const ParamStore<R>&, const ModelConfig&, const Tensor<R>&,              \
                                      std::span<const SampleFeatures* const>, const std::vector<int>&,         \
                                      const Tensor<R>&, const NoiseSchedule&);                                 \
  template Tensor<R> sample_latent(const NoisePredictor<R>&, const NoiseSchedule&, Shape, std::uint64_t);      \
  template Tensor<R> sample(const ParamStore<R>&, const UNetConfig&, const ConditionBundle<R>&,                \
                            const NoiseSchedule&, std::uint64_t);

CAMO_INSTANTIATE_DIFFUSION(float)
CAMO_INSTANTIATE_DIFFUSION(double)

}  // namespace camo
