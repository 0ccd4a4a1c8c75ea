#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "camo/image.hpp"
#include "camo/optim.hpp"
#include "camo/param_store.hpp"

namespace camo {

/// Stage-1 autoencoder geometry. The latent has `latent_channels` channels at
/// image_size / 2^levels resolution; codebook entries live in that space.
struct CodecConfig {
  int image_size = 64;
  int levels = 2;
  int latent_channels = 3;
  int codebook_size = 128;
  int codebook_dim = 3;
  int base_width = 16;
  double beta = 0.25;
  int dead_code_steps = 100;

  int factor() const { return 1 << levels; }
  int latent_size() const { return image_size / factor(); }
  void validate() const;
};

template <typename Real>
struct Codec {
  CodecConfig config;
  ParamStore<Real> params;  // codec.enc.*, codec.dec.*, codec.codebook
  bool frozen = false;

  const Tensor<Real>& codebook() const { return params.get("codec.codebook"); }
  std::uint32_t checksum() const { return params.checksum(); }
};

template <typename Real>
Codec<Real> init_codec(const CodecConfig& config, std::uint64_t seed);

/// [H,W,3] or [B,H,W,3] images in [0,1] to latents of the same rank.
template <typename Real>
Tensor<Real> encode(const Codec<Real>& codec, const Tensor<Real>& images);

template <typename Real>
struct Quantized {
  Tensor<Real> latent;    // codebook values forward, identity gradient to the input latent
  Tensor<Real> selected;  // gathered codebook rows (gradient flows to the codebook)
  std::vector<std::size_t> indices;
};

/// Index of the nearest codebook row (Euclidean); ties go to the lowest index.
template <typename Real>
std::size_t nearest_entry(std::span<const Real> vector, const Tensor<Real>& codebook);

/// Replaces every latent vector (last axis) with its nearest codebook entry.
template <typename Real>
Quantized<Real> quantize(const Tensor<Real>& latent, const Tensor<Real>& codebook);

/// Decoder network only; input must already be quantized. Unclamped output.
template <typename Real>
Tensor<Real> decode_raw(const Codec<Real>& codec, const Tensor<Real>& latent);

/// Quantize, decode and clamp to [0,1]. Accepts [h,w,3] or [B,h,w,3].
template <typename Real>
Tensor<Real> decode(const Codec<Real>& codec, const Tensor<Real>& latent);

struct CodecStepLog {
  int step = 0;
  double recon = 0;
  double codebook = 0;
  double commit = 0;
  double total = 0;
  int revived = 0;
};

struct CodecTrainOptions {
  int steps = 500;
  int batch = 4;
  AdamConfig adam{2e-3, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 0;
  std::function<void(const CodecStepLog&)> on_step;
};

/// Trains encoder, decoder and codebook with reconstruction MSE, codebook
/// loss and beta-weighted commitment, then returns the codec frozen.
Codec<float> train_codec(const std::vector<Image>& images, const CodecConfig& config,
                         const CodecTrainOptions& options);

/// Number of latent vectors assigned to each codebook entry over `images`.
std::vector<std::size_t> codebook_usage(const Codec<float>& codec, const std::vector<Image>& images);

/// Encode/decode an image in [0,1] through the quantizer.
Image reconstruct(const Codec<float>& codec, const Image& image);

}  // namespace camo
