#pragma once

#include <cstdint>
#include <vector>

#include "camo/attention.hpp"
#include "camo/codec.hpp"
#include "camo/image.hpp"
#include "camo/superpixel.hpp"

namespace camo {

struct FafimConfig {
  int patch = 4;
  int dim = 64;
  int heads = 4;
  bool use_pe = true;

  void validate(int latent_size) const;
};

struct ConditioningConfig {
  FafimConfig fafim;
  SlicConfig slic;
};

/// Object cropped from the source, centred and zero-padded to the model size.
struct CroppedForeground {
  Image image;       // I^c
  Mask mask;         // foreground of I^c; padding is background
  BoundingBox bbox;  // in source coordinates
};

/// Crops the tight foreground box, shrinks it (bilinear, aspect kept) when it
/// exceeds `size`, centres it and pads with zeros.
CroppedForeground crop_and_pad(const Image& source, const Mask& source_mask, int size);

/// Latent-resolution foreground indicator: a cell is foreground iff any pixel
/// it covers is foreground.
Mask downsample_mask(const Mask& fg, int factor);

/// Everything the frozen codec contributes for one sample. Values are kept at
/// double precision and converted when a graph is built.
struct SampleFeatures {
  int latent_size = 0;
  std::vector<double> cf;   // E(I * fg), h*w*3
  std::vector<double> ccf;  // E(I^c * fg^c), h*w*3
  std::vector<double> z0;   // E(I), h*w*3
  Mask fg_d;                // foreground at latent resolution
  Mask fg_cd;               // cropped foreground at latent resolution
  SuperpixelAssignment superpixels;
  std::vector<double> xf;   // pooled descriptors, S*3
  double fg_ratio = 0;      // foreground pixels / pixels, at source resolution
};

SampleFeatures prepare_features(const Codec<float>& codec, const Image& source, const Mask& source_mask,
                                const SlicConfig& slic, std::uint64_t seed);

/// Registers bkrm.* and fafim.* parameters.
template <typename Real>
void init_conditioning(ParamStore<Real>& store, const ConditioningConfig& config, const CodecConfig& codec,
                       Rng& rng);

/// Attention from pooled descriptors [S,3] over codebook entries [K,3] -> [S,C].
template <typename Real>
Tensor<Real> retrieve_background(const ParamStore<Real>& store, const ConditioningConfig& config,
                                 const Tensor<Real>& xf, const Tensor<Real>& codebook,
                                 std::vector<Tensor<Real>>* attention = nullptr);

/// Fixed 2-D sinusoidal encoding for a rows x cols token grid: [rows*cols, dim].
template <typename Real>
Tensor<Real> positional_encoding(std::size_t rows, std::size_t cols, std::size_t dim);

/// Non-overlapping PxP patches of [h,w,C], flattened in (py, px, c) order: [N, P*P*C].
template <typename Real>
Tensor<Real> patchify(const Tensor<Real>& x, std::size_t patch);

/// Tokens from features plus mask embedding: [N, C], PE added when enabled.
template <typename Real>
Tensor<Real> build_foreground_tokens(const ParamStore<Real>& store, const ConditioningConfig& config,
                                     const Tensor<Real>& cf, const Mask& fg_d);

/// Cross-attention to x^b with residual+LN, then self-attention whose queries
/// and keys carry PE while values do not, with residual+LN.
template <typename Real>
Tensor<Real> fafim_integrate(const ParamStore<Real>& store, const ConditioningConfig& config,
                             const Tensor<Real>& tokens, const Tensor<Real>& xb, std::size_t grid_rows,
                             std::size_t grid_cols);

/// Tokens -> grid -> nearest upsample by P -> per-position MLP -> [h,w,3].
template <typename Real>
Tensor<Real> reconstruct_background(const ParamStore<Real>& store, const ConditioningConfig& config,
                                    const Tensor<Real>& tokens, std::size_t height, std::size_t width);

template <typename Real>
struct ConditionBundle {
  Tensor<Real> cf;       // [h,w,3]
  Tensor<Real> z_rec;    // [h,w,3]
  Tensor<Real> c_tilde;  // [h,w,3]
  Tensor<Real> md;       // [h,w,1], 1 = editable background
  Tensor<Real> c;        // [h,w,4]
};

/// c~ = cf * (1 - m^d) + z_rec * m^d; c = concat(c~, m^d).
template <typename Real>
ConditionBundle<Real> build_condition(const Tensor<Real>& cf, const Tensor<Real>& z_rec, const Mask& fg_d);

/// Full trainable path from cached features to the diffusion condition.
template <typename Real>
ConditionBundle<Real> condition_from_features(const ParamStore<Real>& store, const ConditioningConfig& config,
                                              const Tensor<Real>& codebook, const SampleFeatures& features);

template <typename Real>
Tensor<Real> latent_tensor(const std::vector<double>& values, int latent_size, int channels = 3);

}  // namespace camo
