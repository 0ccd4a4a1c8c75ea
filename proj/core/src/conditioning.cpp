#include "camo/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "camo/errors.hpp"
#include "camo/ops.hpp"

namespace camo {

void FafimConfig::validate(int latent_size) const {
  if (patch < 1 || latent_size % patch != 0) {
    throw DimensionError("fafim.patch " + std::to_string(patch) + " does not divide latent size " +
                         std::to_string(latent_size));
  }
  if (dim < 4 || dim % 4 != 0) throw ConfigError("fafim.dim must be a positive multiple of 4");
  if (heads < 1 || dim % heads != 0) throw ConfigError("fafim.heads must divide fafim.dim");
}

namespace {

// Downscale keeping any pixel whose footprint touches the foreground.
Mask shrink_mask_any(const Mask& mask, int height, int width) {
  Mask out = Mask::zeros(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy0 = y * mask.height / height;
    const int sy1 = std::max(sy0 + 1, ((y + 1) * mask.height + height - 1) / height);
    for (int x = 0; x < width; ++x) {
      const int sx0 = x * mask.width / width;
      const int sx1 = std::max(sx0 + 1, ((x + 1) * mask.width + width - 1) / width);
      for (int sy = sy0; sy < sy1 && !out.at(y, x); ++sy)
        for (int sx = sx0; sx < sx1; ++sx)
          if (mask.at(sy, sx)) {
            out.at(y, x) = 1;
            break;
          }
    }
  }
  return out;
}

}  // namespace

CroppedForeground crop_and_pad(const Image& source, const Mask& source_mask, int size) {
  if (source.height != source_mask.height || source.width != source_mask.width) {
    throw DimensionError("crop_and_pad: image and mask dims differ");
  }
  if (size <= 0) throw ConfigError("crop_and_pad: target size must be positive");
  CroppedForeground out;
  out.bbox = foreground_bbox(source_mask);
  Image content = crop(source, out.bbox);
  Mask content_mask = crop(source_mask, out.bbox);
  const int bh = out.bbox.height(), bw = out.bbox.width();
  if (bh > size || bw > size) {
    const double s = static_cast<double>(size) / std::max(bh, bw);
    const int nh = std::clamp(static_cast<int>(std::lround(bh * s)), 1, size);
    const int nw = std::clamp(static_cast<int>(std::lround(bw * s)), 1, size);
    content = resize_bilinear(content, nh, nw);
    content_mask = shrink_mask_any(content_mask, nh, nw);
  }
  out.image = Image::zeros(size, size, source.channels);
  out.mask = Mask::zeros(size, size);
  const int oy = (size - content.height) / 2, ox = (size - content.width) / 2;
  for (int y = 0; y < content.height; ++y)
    for (int x = 0; x < content.width; ++x) {
      out.mask.at(oy + y, ox + x) = content_mask.at(y, x);
      for (int c = 0; c < source.channels; ++c) out.image.at(oy + y, ox + x, c) = content.at(y, x, c);
    }
  return out;
}

Mask downsample_mask(const Mask& fg, int factor) {
  if (factor < 1 || fg.height % factor != 0 || fg.width % factor != 0) {
    throw DimensionError("downsample_mask: " + std::to_string(fg.height) + "x" + std::to_string(fg.width) +
                         " not divisible by " + std::to_string(factor));
  }
  Mask out = Mask::zeros(fg.height / factor, fg.width / factor);
  for (int y = 0; y < fg.height; ++y)
    for (int x = 0; x < fg.width; ++x)
      if (fg.at(y, x)) out.at(y / factor, x / factor) = 1;
  return out;
}

SampleFeatures prepare_features(const Codec<float>& codec, const Image& source, const Mask& source_mask,
                                const SlicConfig& slic, std::uint64_t seed) {
  if (source.height != source_mask.height || source.width != source_mask.width) {
    throw DimensionError("prepare_features: image and mask dims differ");
  }
  const std::size_t fg_count = source_mask.count();
  if (fg_count == 0) throw InputError("no foreground");
  const int size = codec.config.image_size;
  const int factor = codec.config.factor();
  NoGradGuard no_grad;
  auto encode_image = [&](const Image& img) {
    const auto z = encode(codec, image_tensor<float>(img));
    return std::vector<double>(z.values().begin(), z.values().end());
  };

  SampleFeatures f;
  f.latent_size = codec.config.latent_size();
  const Image image = resize_bilinear(source, size, size);
  const Mask fg = resize_nearest(source_mask, size, size);
  f.cf = encode_image(apply_mask(image, fg));
  f.z0 = encode_image(image);
  f.fg_d = downsample_mask(fg, factor);

  const auto cropped = crop_and_pad(source, source_mask, size);
  f.ccf = encode_image(apply_mask(cropped.image, cropped.mask));
  f.fg_cd = downsample_mask(cropped.mask, factor);
  f.superpixels = slic_superpixels(f.ccf, 3, f.fg_cd, slic, seed);
  f.xf = masked_pool(f.ccf, 3, f.superpixels);
  f.fg_ratio = static_cast<double>(fg_count) / (static_cast<double>(source.height) * source.width);
  return f;
}

template <typename Real>
void init_conditioning(ParamStore<Real>& store, const ConditioningConfig& config, const CodecConfig& codec,
                       Rng& rng) {
  const auto& fa = config.fafim;
  fa.validate(codec.latent_size());
  const auto d = static_cast<std::size_t>(codec.codebook_dim);
  const auto c = static_cast<std::size_t>(fa.dim);
  const auto heads = static_cast<std::size_t>(fa.heads);
  const auto p = static_cast<std::size_t>(fa.patch);
  Rng r = rng.split("conditioning");
  init_attention(store, "bkrm.attn", AttentionDims{d, d, d, c, c, heads}, r);
  Rng me = r.split("fafim.me");
  std::vector<Real> me_values(2 * static_cast<std::size_t>(codec.latent_channels));
  for (auto& v : me_values) v = static_cast<Real>(me.uniform(-0.1, 0.1));
  store.add("fafim.me", Tensor<Real>({2, static_cast<std::size_t>(codec.latent_channels)}, std::move(me_values), true));
  init_linear(store, "fafim.patch", p * p * static_cast<std::size_t>(codec.latent_channels), c, r);
  init_attention(store, "fafim.cross", AttentionDims{c, c, c, c, c, heads}, r);
  init_layer_norm(store, "fafim.ln1", c);
  init_attention(store, "fafim.self", AttentionDims{c, c, c, c, c, heads}, r);
  init_layer_norm(store, "fafim.ln2", c);
  init_linear(store, "fafim.mlp1", c, c, r);
  init_linear(store, "fafim.mlp2", c, static_cast<std::size_t>(codec.latent_channels), r);
}

template <typename Real>
Tensor<Real> retrieve_background(const ParamStore<Real>& store, const ConditioningConfig& config,
                                 const Tensor<Real>& xf, const Tensor<Real>& codebook,
                                 std::vector<Tensor<Real>>* attention) {
  if (xf.rank() != 2 || codebook.rank() != 2 || xf.dim(1) != codebook.dim(1)) {
    throw ConfigError("retrieve_background: descriptors " + shape_string(xf.shape()) + " vs codebook " +
                      shape_string(codebook.shape()));
  }
  return multi_head_attention(xf, codebook, codebook, AttentionWeights<Real>::from(store, "bkrm.attn"),
                              static_cast<std::size_t>(config.fafim.heads), attention);
}

template <typename Real>
Tensor<Real> positional_encoding(std::size_t rows, std::size_t cols, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("positional_encoding: dim must be a multiple of 4");
  const std::size_t half = dim / 2;
  std::vector<Real> pe(rows * cols * dim);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      Real* out = pe.data() + (i * cols + j) * dim;
      for (std::size_t k = 0; k < half / 2; ++k) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(half));
        out[2 * k] = static_cast<Real>(std::sin(static_cast<double>(i) * freq));
        out[2 * k + 1] = static_cast<Real>(std::cos(static_cast<double>(i) * freq));
        out[half + 2 * k] = static_cast<Real>(std::sin(static_cast<double>(j) * freq));
        out[half + 2 * k + 1] = static_cast<Real>(std::cos(static_cast<double>(j) * freq));
      }
    }
  return Tensor<Real>({rows * cols, dim}, std::move(pe));
}

template <typename Real>
Tensor<Real> patchify(const Tensor<Real>& x, std::size_t patch) {
  if (x.rank() != 3 || patch == 0 || x.dim(0) % patch != 0 || x.dim(1) % patch != 0) {
    throw DimensionError("patchify: " + shape_string(x.shape()) + " with patch " + std::to_string(patch));
  }
  const auto h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const auto gr = h / patch, gc = w / patch;
  std::vector<std::size_t> idx;
  idx.reserve(x.size());
  for (std::size_t i = 0; i < gr; ++i)
    for (std::size_t j = 0; j < gc; ++j)
      for (std::size_t py = 0; py < patch; ++py)
        for (std::size_t px = 0; px < patch; ++px)
          for (std::size_t k = 0; k < c; ++k) idx.push_back(((i * patch + py) * w + j * patch + px) * c + k);
  return take(x, std::move(idx), {gr * gc, patch * patch * c});
}

template <typename Real>
Tensor<Real> build_foreground_tokens(const ParamStore<Real>& store, const ConditioningConfig& config,
                                     const Tensor<Real>& cf, const Mask& fg_d) {
  if (cf.rank() != 3 || cf.dim(0) != static_cast<std::size_t>(fg_d.height) ||
      cf.dim(1) != static_cast<std::size_t>(fg_d.width)) {
    throw DimensionError("build_foreground_tokens: features " + shape_string(cf.shape()) + " vs mask " +
                         std::to_string(fg_d.height) + "x" + std::to_string(fg_d.width));
  }
  const auto p = static_cast<std::size_t>(config.fafim.patch);
  if (cf.dim(0) % p != 0 || cf.dim(1) % p != 0) {
    throw DimensionError("build_foreground_tokens: patch " + std::to_string(p) + " does not divide " +
                         shape_string(cf.shape()));
  }
  const std::vector<std::size_t> rows(fg_d.fg.begin(), fg_d.fg.end());
  const auto embedded = add(cf, reshape(gather_rows(store.get("fafim.me"), rows), cf.shape()));
  auto tokens = apply_linear(store, "fafim.patch", patchify(embedded, p));
  if (config.fafim.use_pe) {
    tokens = add(tokens, positional_encoding<Real>(cf.dim(0) / p, cf.dim(1) / p, tokens.dim(1)));
  }
  return tokens;
}

template <typename Real>
Tensor<Real> fafim_integrate(const ParamStore<Real>& store, const ConditioningConfig& config,
                             const Tensor<Real>& tokens, const Tensor<Real>& xb, std::size_t grid_rows,
                             std::size_t grid_cols) {
  if (tokens.rank() != 2 || xb.rank() != 2 || tokens.dim(1) != xb.dim(1) || tokens.dim(0) != grid_rows * grid_cols) {
    throw ConfigError("fafim_integrate: tokens " + shape_string(tokens.shape()) + ", background " +
                      shape_string(xb.shape()));
  }
  const auto heads = static_cast<std::size_t>(config.fafim.heads);
  const auto cross = multi_head_attention(tokens, xb, xb, AttentionWeights<Real>::from(store, "fafim.cross"), heads);
  const auto t_fb = apply_layer_norm(store, "fafim.ln1", add(cross, tokens));
  const auto t_fbp =
      config.fafim.use_pe ? add(t_fb, positional_encoding<Real>(grid_rows, grid_cols, tokens.dim(1))) : t_fb;
  const auto self = multi_head_attention(t_fbp, t_fbp, t_fb, AttentionWeights<Real>::from(store, "fafim.self"), heads);
  return apply_layer_norm(store, "fafim.ln2", add(self, t_fb));
}

template <typename Real>
Tensor<Real> reconstruct_background(const ParamStore<Real>& store, const ConditioningConfig& config,
                                    const Tensor<Real>& tokens, std::size_t height, std::size_t width) {
  const auto p = static_cast<std::size_t>(config.fafim.patch);
  if (tokens.rank() != 2 || height % p != 0 || width % p != 0 || tokens.dim(0) != (height / p) * (width / p)) {
    throw ConfigError("reconstruct_background: " + shape_string(tokens.shape()) + " tokens for " +
                      std::to_string(height) + "x" + std::to_string(width) + " with patch " + std::to_string(p));
  }
  const auto grid = reshape(tokens, {height / p, width / p, tokens.dim(1)});
  const auto up = upsample_nearest(grid, p);
  return apply_linear(store, "fafim.mlp2", silu(apply_linear(store, "fafim.mlp1", up)));
}

template <typename Real>
ConditionBundle<Real> build_condition(const Tensor<Real>& cf, const Tensor<Real>& z_rec, const Mask& fg_d) {
  if (cf.shape() != z_rec.shape() || cf.rank() != 3 || cf.dim(0) != static_cast<std::size_t>(fg_d.height) ||
      cf.dim(1) != static_cast<std::size_t>(fg_d.width)) {
    throw DimensionError("build_condition: features " + shape_string(cf.shape()) + ", z_rec " +
                         shape_string(z_rec.shape()) + ", mask " + std::to_string(fg_d.height) + "x" +
                         std::to_string(fg_d.width));
  }
  const auto channels = cf.dim(2);
  const auto cells = fg_d.fg.size();
  std::vector<Real> editable(cells * channels), md(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    md[i] = fg_d.fg[i] ? Real(0) : Real(1);
    for (std::size_t k = 0; k < channels; ++k) editable[i * channels + k] = md[i];
  }
  std::vector<Real> keep(editable.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = Real(1) - editable[i];
  ConditionBundle<Real> b;
  b.cf = cf;
  b.z_rec = z_rec;
  b.md = Tensor<Real>({cf.dim(0), cf.dim(1), 1}, md);
  b.c_tilde = add(masked(cf, keep), masked(z_rec, editable));
  b.c = concat_last(b.c_tilde, b.md);
  return b;
}

template <typename Real>
Tensor<Real> latent_tensor(const std::vector<double>& values, int latent_size, int channels) {
  const auto h = static_cast<std::size_t>(latent_size);
  return Tensor<Real>({h, h, static_cast<std::size_t>(channels)}, std::vector<Real>(values.begin(), values.end()));
}

template <typename Real>
ConditionBundle<Real> condition_from_features(const ParamStore<Real>& store, const ConditioningConfig& config,
                                              const Tensor<Real>& codebook, const SampleFeatures& f) {
  const auto h = static_cast<std::size_t>(f.latent_size);
  const auto p = static_cast<std::size_t>(config.fafim.patch);
  const auto cf = latent_tensor<Real>(f.cf, f.latent_size);
  const Tensor<Real> xf({static_cast<std::size_t>(f.superpixels.count), 3},
                        std::vector<Real>(f.xf.begin(), f.xf.end()));
  const auto xb = retrieve_background(store, config, xf, codebook);
  const auto tokens = build_foreground_tokens(store, config, cf, f.fg_d);
  const auto integ = fafim_integrate(store, config, tokens, xb, h / p, h / p);
  const auto z_rec = reconstruct_background(store, config, integ, h, h);
  return build_condition(cf, z_rec, f.fg_d);
}

#define CAMO_INSTANTIATE_COND(R)                                                                                  \
  template void init_conditioning(ParamStore<R>&, const ConditioningConfig&, const CodecConfig&, Rng&);          \
  template Tensor<R> retrieve_background(const ParamStore<R>&, const ConditioningConfig&, const Tensor<R>&,       \
                                         const Tensor<R>&, std::vector<Tensor<R>>*);                              \
  template Tensor<R> positional_encoding(std::size_t, std::size_t, std::size_t);                                  \
  template Tensor<R> patchify(const Tensor<R>&, std::size_t);                                                     \
  template Tensor<R> build_foreground_tokens(const ParamStore<R>&, const ConditioningConfig&, const Tensor<R>&,   \
                                             const Mask&);                                                        \
  template Tensor<R> fafim_integrate(const ParamStore<R>&, const ConditioningConfig&, const Tensor<R>&,           \
                                     const Tensor<R>&, std::size_t, std::size_t);                                 \
  template Tensor<R> reconstruct_background(const ParamStore<R>&, const ConditioningConfig&, const Tensor<R>&,    \
                                            std::size_t, std::size_t);                                            \
  template ConditionBundle<R> build_condition(const Tensor<R>&, const Tensor<R>&, const Mask&);                   \
  template Tensor<R> latent_tensor(const std::vector<double>&, int, int);                                         \
  template ConditionBundle<R> condition_from_features(const ParamStore<R>&, const ConditioningConfig&,            \
                                                      const Tensor<R>&, const SampleFeatures&);

CAMO_INSTANTIATE_COND(float)
CAMO_INSTANTIATE_COND(double)

}  // namespace camo
