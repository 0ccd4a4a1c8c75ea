#pragma once

#include <vector>

#include "camo/param_store.hpp"

namespace camo {

/// Two-level conditional U-Net over latents: noisy latent and condition are
/// concatenated on channels at the input; a sinusoidal timestep embedding is
/// projected into every block.
struct UNetConfig {
  int latent_channels = 3;
  int cond_channels = 4;
  int base_width = 32;
  int time_dim = 32;

  void validate() const;
};

/// Registers unet.* parameters. `zero_output` zero-initialises the last conv.
template <typename Real>
void init_unet(ParamStore<Real>& store, const UNetConfig& config, Rng& rng, bool zero_output = false);

/// [B, dim] sinusoidal embedding of integer timesteps.
template <typename Real>
Tensor<Real> timestep_embedding(const std::vector<int>& t, std::size_t dim);

/// eps_hat for z_t [B,h,w,3] under condition c [B,h,w,4] at timesteps t (one per item).
template <typename Real>
Tensor<Real> predict_noise(const ParamStore<Real>& store, const UNetConfig& config, const Tensor<Real>& z_t,
                           const Tensor<Real>& cond, const std::vector<int>& t);

}  // namespace camo
