#include "camo/unet.hpp"

#include <cmath>
#include <string>

#include "camo/attention.hpp"
#include "camo/errors.hpp"
#include "camo/ops.hpp"

namespace camo {

void UNetConfig::validate() const {
  if (latent_channels < 1 || cond_channels < 0) throw ConfigError("unet: invalid channel counts");
  if (base_width < 1) throw ConfigError("unet.base_width must be positive");
  if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("unet.time_dim must be a positive even number");
}

namespace {

template <typename Real>
void add_conv(ParamStore<Real>& store, const std::string& name, std::size_t k, std::size_t cin, std::size_t cout,
              Rng& rng, bool zero = false) {
  Rng r = rng.split(name);
  store.add(name + ".w", zero ? Tensor<Real>::zeros({k * k * cin, cout}, true)
                              : glorot_uniform<Real>({k * k * cin, cout}, k * k * cin, k * k * cout, r));
  store.add(name + ".b", Tensor<Real>::zeros({cout}, true));
}

template <typename Real>
Tensor<Real> conv(const ParamStore<Real>& store, const std::string& name, const Tensor<Real>& x, std::size_t stride = 1) {
  const auto& w = store.get(name + ".w");
  const auto k = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(w.dim(0) / x.dim(3)))));
  return conv2d(x, w, store.get(name + ".b"), k, stride);
}

}  // namespace

template <typename Real>
void init_unet(ParamStore<Real>& store, const UNetConfig& config, Rng& rng, bool zero_output) {
  config.validate();
  Rng r = rng.split("unet");
  const auto b = static_cast<std::size_t>(config.base_width);
  const auto in = static_cast<std::size_t>(config.latent_channels + config.cond_channels);
  const auto emb = 2 * b;
  init_linear(store, "unet.time", static_cast<std::size_t>(config.time_dim), emb, r);
  add_conv(store, "unet.in", 3, in, b, r);
  add_conv(store, "unet.block1", 3, b, b, r);
  init_linear(store, "unet.temb1", emb, b, r);
  add_conv(store, "unet.down", 3, b, 2 * b, r);
  add_conv(store, "unet.block2", 3, 2 * b, 2 * b, r);
  init_linear(store, "unet.temb2", emb, 2 * b, r);
  add_conv(store, "unet.up", 3, 2 * b, b, r);
  add_conv(store, "unet.merge", 3, 2 * b, b, r);
  init_linear(store, "unet.temb3", emb, b, r);
  add_conv(store, "unet.out", 3, b, static_cast<std::size_t>(config.latent_channels), r, zero_output);
}

template <typename Real>
Tensor<Real> timestep_embedding(const std::vector<int>& t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<Real> out(t.size() * dim);
  for (std::size_t n = 0; n < t.size(); ++n)
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      out[n * dim + k] = static_cast<Real>(std::sin(t[n] * freq));
      out[n * dim + half + k] = static_cast<Real>(std::cos(t[n] * freq));
    }
  return Tensor<Real>({t.size(), dim}, std::move(out));
}

template <typename Real>
Tensor<Real> predict_noise(const ParamStore<Real>& store, const UNetConfig& config, const Tensor<Real>& z_t,
                           const Tensor<Real>& cond, const std::vector<int>& t) {
  if (z_t.rank() != 4 || cond.rank() != 4 || z_t.dim(0) != cond.dim(0) || z_t.dim(1) != cond.dim(1) ||
      z_t.dim(2) != cond.dim(2) || z_t.dim(3) != static_cast<std::size_t>(config.latent_channels) ||
      cond.dim(3) != static_cast<std::size_t>(config.cond_channels) || t.size() != z_t.dim(0)) {
    throw DimensionError("predict_noise: z_t " + shape_string(z_t.shape()) + ", condition " +
                         shape_string(cond.shape()) + ", " + std::to_string(t.size()) + " timesteps");
  }
  const auto h = z_t.dim(1), w = z_t.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw DimensionError("predict_noise: latent extent must be even");
  const auto emb = silu(apply_linear(store, "unet.time",
                                     timestep_embedding<Real>(t, static_cast<std::size_t>(config.time_dim))));
  auto temb = [&](const std::string& name, std::size_t hh, std::size_t ww) {
    return broadcast_spatial(apply_linear(store, name, emb), hh, ww);
  };

  const auto x = conv(store, "unet.in", concat_last(z_t, cond));
  const auto h1 = add(x, silu(add(conv(store, "unet.block1", x), temb("unet.temb1", h, w))));
  const auto d = silu(conv(store, "unet.down", h1, 2));
  const auto h2 = add(d, silu(add(conv(store, "unet.block2", d), temb("unet.temb2", h / 2, w / 2))));
  const auto u = silu(conv(store, "unet.up", upsample_nearest(h2, 2)));
  const auto h3 = silu(add(conv(store, "unet.merge", concat_last(u, h1)), temb("unet.temb3", h, w)));
  return conv(store, "unet.out", h3);
}

template void init_unet(ParamStore<float>&, const UNetConfig&, Rng&, bool);
template void init_unet(ParamStore<double>&, const UNetConfig&, Rng&, bool);
template Tensor<float> timestep_embedding(const std::vector<int>&, std::size_t);
template Tensor<double> timestep_embedding(const std::vector<int>&, std::size_t);
template Tensor<float> predict_noise(const ParamStore<float>&, const UNetConfig&, const Tensor<float>&,
                                     const Tensor<float>&, const std::vector<int>&);
template Tensor<double> predict_noise(const ParamStore<double>&, const UNetConfig&, const Tensor<double>&,
                                      const Tensor<double>&, const std::vector<int>&);

}  // namespace camo
