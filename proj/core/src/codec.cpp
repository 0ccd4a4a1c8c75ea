#include "camo/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "camo/errors.hpp"
#include "camo/ops.hpp"

namespace camo {

namespace {

std::size_t width_at(const CodecConfig& c, int level) {
  return static_cast<std::size_t>(c.base_width) << level;
}

template <typename Real>
void add_conv(ParamStore<Real>& store, const std::string& name, std::size_t k, std::size_t cin, std::size_t cout,
              Rng& rng) {
  Rng r = rng.split(name);
  store.add(name + ".w", glorot_uniform<Real>({k * k * cin, cout}, k * k * cin, k * k * cout, r));
  store.add(name + ".b", Tensor<Real>::zeros({cout}, true));
}

template <typename Real>
Tensor<Real> conv(const ParamStore<Real>& store, const std::string& name, const Tensor<Real>& x, std::size_t k,
                  std::size_t stride) {
  return conv2d(x, store.get(name + ".w"), store.get(name + ".b"), k, stride);
}

template <typename Real>
Tensor<Real> as_batch(const Tensor<Real>& x, bool& batched) {
  batched = x.rank() == 4;
  if (batched) return x;
  if (x.rank() != 3) throw DimensionError("expected [H,W,C] or [B,H,W,C], got " + shape_string(x.shape()));
  Shape s{1};
  s.insert(s.end(), x.shape().begin(), x.shape().end());
  return reshape(x, s);
}

template <typename Real>
Tensor<Real> drop_batch(const Tensor<Real>& x, bool batched) {
  if (batched) return x;
  return reshape(x, Shape(x.shape().begin() + 1, x.shape().end()));
}

}  // namespace

void CodecConfig::validate() const {
  if (levels < 1 || levels > 6) throw ConfigError("codec.levels must be in [1, 6]");
  if (image_size <= 0 || image_size % factor() != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by factor " +
                      std::to_string(factor()));
  }
  if (latent_channels != 3) throw ConfigError("codec latent channels must be 3");
  if (codebook_dim != latent_channels) throw ConfigError("codebook dim must equal latent channel count");
  if (codebook_size < 1) throw ConfigError("codebook must have at least one entry");
  if (base_width < 1) throw ConfigError("codec.base_width must be positive");
  if (!(beta >= 0)) throw ConfigError("codec.beta must be non-negative");
  if (dead_code_steps < 1) throw ConfigError("codec.dead_code_steps must be positive");
}

template <typename Real>
Codec<Real> init_codec(const CodecConfig& config, std::uint64_t seed) {
  config.validate();
  Codec<Real> codec;
  codec.config = config;
  Rng rng = Rng(seed).split("codec");
  auto& p = codec.params;
  const auto lc = static_cast<std::size_t>(config.latent_channels);
  std::size_t cin = 3;
  for (int i = 0; i < config.levels; ++i) {
    add_conv(p, "codec.enc.down" + std::to_string(i), 3, cin, width_at(config, i), rng);
    cin = width_at(config, i);
  }
  add_conv(p, "codec.enc.out", 1, cin, lc, rng);
  add_conv(p, "codec.dec.in", 1, lc, cin, rng);
  for (int i = config.levels - 1; i >= 0; --i) {
    const auto cout = i == 0 ? width_at(config, 0) : width_at(config, i - 1);
    add_conv(p, "codec.dec.up" + std::to_string(i), 3, width_at(config, i), cout, rng);
  }
  add_conv(p, "codec.dec.out", 3, width_at(config, 0), 3, rng);
  Rng cb = rng.split("codebook");
  std::vector<Real> entries(static_cast<std::size_t>(config.codebook_size) * config.codebook_dim);
  for (auto& e : entries) e = static_cast<Real>(cb.uniform(-1.0, 1.0));
  p.add("codec.codebook",
        Tensor<Real>({static_cast<std::size_t>(config.codebook_size), static_cast<std::size_t>(config.codebook_dim)},
                     std::move(entries), true));
  return codec;
}

template <typename Real>
Tensor<Real> encode(const Codec<Real>& codec, const Tensor<Real>& images) {
  const auto& c = codec.config;
  bool batched = false;
  auto x = as_batch(images, batched);
  const auto size = static_cast<std::size_t>(c.image_size);
  if (x.dim(1) != size || x.dim(2) != size || x.dim(3) != 3) {
    throw DimensionError("encode: expected images of " + std::to_string(size) + "x" + std::to_string(size) +
                         "x3, got " + shape_string(images.shape()));
  }
  for (int i = 0; i < c.levels; ++i) x = silu(conv(codec.params, "codec.enc.down" + std::to_string(i), x, 3, 2));
  x = conv(codec.params, "codec.enc.out", x, 1, 1);
  return drop_batch(x, batched);
}

template <typename Real>
std::size_t nearest_entry(std::span<const Real> vector, const Tensor<Real>& codebook) {
  const auto k = codebook.dim(0), d = codebook.dim(1);
  if (k == 0) throw ConfigError("quantize: empty codebook");
  auto cb = codebook.values();
  std::size_t best = 0;
  Real best_d = std::numeric_limits<Real>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    Real dist = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const Real diff = vector[c] - cb[j * d + c];
      dist += diff * diff;
    }
    if (dist < best_d) {
      best_d = dist;
      best = j;
    }
  }
  return best;
}

template <typename Real>
Quantized<Real> quantize(const Tensor<Real>& latent, const Tensor<Real>& codebook) {
  if (codebook.rank() != 2 || codebook.dim(0) == 0) throw ConfigError("quantize: empty codebook");
  const auto d = codebook.dim(1);
  if (latent.rank() == 0 || latent.shape().back() != d) {
    throw DimensionError("quantize: latent " + shape_string(latent.shape()) + " vs codebook " +
                         shape_string(codebook.shape()));
  }
  const auto n = latent.size() / d;
  auto lv = latent.values();
  Quantized<Real> q;
  q.indices.resize(n);
  for (std::size_t i = 0; i < n; ++i) q.indices[i] = nearest_entry<Real>(lv.subspan(i * d, d), codebook);
  q.selected = reshape(gather_rows(codebook, q.indices), latent.shape());
  q.latent = straight_through(latent, q.selected.detach());
  return q;
}

template <typename Real>
Tensor<Real> decode_raw(const Codec<Real>& codec, const Tensor<Real>& latent) {
  const auto& c = codec.config;
  bool batched = false;
  auto x = as_batch(latent, batched);
  const auto h = static_cast<std::size_t>(c.latent_size());
  if (x.dim(1) != h || x.dim(2) != h || x.dim(3) != static_cast<std::size_t>(c.latent_channels)) {
    throw DimensionError("decode: expected latent " + std::to_string(h) + "x" + std::to_string(h) + "x" +
                         std::to_string(c.latent_channels) + ", got " + shape_string(latent.shape()));
  }
  x = silu(conv(codec.params, "codec.dec.in", x, 1, 1));
  for (int i = c.levels - 1; i >= 0; --i) {
    x = silu(conv(codec.params, "codec.dec.up" + std::to_string(i), upsample_nearest(x, 2), 3, 1));
  }
  x = conv(codec.params, "codec.dec.out", x, 3, 1);
  return drop_batch(x, batched);
}

template <typename Real>
Tensor<Real> decode(const Codec<Real>& codec, const Tensor<Real>& latent) {
  NoGradGuard no_grad;
  const auto q = quantize(latent, codec.codebook());
  auto raw = decode_raw(codec, q.latent);
  std::vector<Real> v(raw.values().begin(), raw.values().end());
  for (auto& x : v) x = std::clamp(x, Real(0), Real(1));
  return Tensor<Real>(raw.shape(), std::move(v));
}

namespace {

Tensor<float> batch_tensor(const std::vector<Image>& images, const std::vector<std::size_t>& picks) {
  std::vector<Tensor<float>> parts;
  parts.reserve(picks.size());
  for (auto i : picks) parts.push_back(image_tensor<float>(images[i]));
  NoGradGuard no_grad;
  return stack(parts);
}

// Sets codebook row `row` to `value`.
void set_entry(Tensor<float>& codebook, std::size_t row, std::span<const float> value) {
  auto cb = codebook.mutable_values();
  std::copy(value.begin(), value.end(), cb.begin() + static_cast<std::ptrdiff_t>(row * value.size()));
}

std::vector<float> encode_all(const Codec<float>& codec, const std::vector<Image>& images) {
  NoGradGuard no_grad;
  std::vector<float> out;
  for (const auto& img : images) {
    const auto z = encode(codec, image_tensor<float>(img));
    out.insert(out.end(), z.values().begin(), z.values().end());
  }
  return out;
}

// Reseeds unused entries to the latent vectors with the largest quantization
// error until every entry is used or no candidate remains.
void revive_unused(Codec<float>& codec, const std::vector<Image>& images) {
  const auto latents = encode_all(codec, images);
  const auto d = static_cast<std::size_t>(codec.config.codebook_dim);
  const auto n = latents.size() / d;
  auto& cb = codec.params.get("codec.codebook");
  const auto k = cb.dim(0);
  for (std::size_t round = 0; round < k; ++round) {
    std::vector<std::size_t> usage(k, 0), assign(n);
    std::vector<float> err(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const float> v(latents.data() + i * d, d);
      assign[i] = nearest_entry<float>(v, cb);
      ++usage[assign[i]];
      float e = 0;
      for (std::size_t c = 0; c < d; ++c) {
        const float diff = v[c] - cb.values()[assign[i] * d + c];
        e += diff * diff;
      }
      err[i] = e;
    }
    std::vector<std::size_t> unused;
    for (std::size_t j = 0; j < k; ++j)
      if (usage[j] == 0) unused.push_back(j);
    if (unused.empty()) return;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });
    // One reseed per source cluster per round keeps the new entries distinct.
    std::vector<bool> source_taken(k, false);
    std::size_t placed = 0;
    for (auto i : order) {
      if (placed == unused.size() || err[i] <= 1e-12f) break;
      if (source_taken[assign[i]]) continue;
      source_taken[assign[i]] = true;
      set_entry(cb, unused[placed++], std::span<const float>(latents.data() + i * d, d));
    }
    if (placed == 0) return;
  }
}

}  // namespace

Codec<float> train_codec(const std::vector<Image>& images, const CodecConfig& config,
                         const CodecTrainOptions& options) {
  if (images.empty()) throw InputError("train_codec: empty dataset");
  if (options.steps < 0 || options.batch < 1) throw ConfigError("train_codec: steps >= 0 and batch >= 1 required");
  for (const auto& img : images) {
    if (img.height != config.image_size || img.width != config.image_size || img.channels != 3) {
      throw DimensionError("train_codec: image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                           ", config expects " + std::to_string(config.image_size));
    }
  }
  Codec<float> codec = init_codec<float>(config, options.seed);
  const Rng base = Rng(options.seed).split("codec_train");
  const auto k = static_cast<std::size_t>(config.codebook_size);
  const auto d = static_cast<std::size_t>(config.codebook_dim);
  std::vector<int> last_used(k, 0);
  AdamState<float> adam;

  auto pick_batch = [&](Rng& r) {
    std::vector<std::size_t> picks(static_cast<std::size_t>(options.batch));
    for (auto& p : picks) p = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(images.size()) - 1));
    return picks;
  };

  // Seed the codebook with encoder outputs of a first batch.
  {
    Rng r = base.split("init");
    const auto latents = [&] {
      NoGradGuard no_grad;
      return encode(codec, batch_tensor(images, pick_batch(r)));
    }();
    const auto n = latents.size() / d;
    auto& cb = codec.params.get("codec.codebook");
    for (std::size_t j = 0; j < k; ++j) {
      const auto src = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(n) - 1));
      std::vector<float> v(latents.values().begin() + static_cast<std::ptrdiff_t>(src * d),
                           latents.values().begin() + static_cast<std::ptrdiff_t>((src + 1) * d));
      for (auto& x : v) x += static_cast<float>(r.normal() * 1e-2);
      set_entry(cb, j, v);
    }
  }

  for (int step = 1; step <= options.steps; ++step) {
    Rng r = base.split(static_cast<std::uint64_t>(step));
    const auto x = batch_tensor(images, pick_batch(r));
    const auto z = encode(codec, x);
    const auto q = quantize(z, codec.codebook());
    const auto recon = mean(square(sub(decode_raw(codec, q.latent), x)));
    const auto cb_loss = mean(square(sub(q.selected, z.detach())));
    const auto commit = scale(mean(square(sub(z, q.selected.detach()))), static_cast<float>(config.beta));
    const auto total = add(add(recon, cb_loss), commit);
    require_finite(total, "codec loss");
    total.backward();
    adam_step(codec.params, adam, options.adam);

    for (auto idx : q.indices) last_used[idx] = step;
    int revived = 0;
    auto& cb = codec.params.get("codec.codebook");
    const auto n = z.size() / d;
    for (std::size_t j = 0; j < k; ++j) {
      if (step - last_used[j] >= config.dead_code_steps) {
        const auto src = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        set_entry(cb, j, z.values().subspan(src * d, d));
        last_used[j] = step;
        ++revived;
      }
    }
    if (options.on_step) {
      options.on_step({step, recon.item(), cb_loss.item(), commit.item(), total.item(), revived});
    }
  }
  revive_unused(codec, images);
  codec.frozen = true;
  return codec;
}

std::vector<std::size_t> codebook_usage(const Codec<float>& codec, const std::vector<Image>& images) {
  const auto latents = encode_all(codec, images);
  const auto d = static_cast<std::size_t>(codec.config.codebook_dim);
  std::vector<std::size_t> usage(codec.codebook().dim(0), 0);
  for (std::size_t i = 0; i < latents.size() / d; ++i)
    ++usage[nearest_entry<float>(std::span<const float>(latents.data() + i * d, d), codec.codebook())];
  return usage;
}

Image reconstruct(const Codec<float>& codec, const Image& image) {
  NoGradGuard no_grad;
  return tensor_image(decode(codec, encode(codec, image_tensor<float>(image))));
}

#define CAMO_INSTANTIATE_CODEC(R)                                                \
  template Codec<R> init_codec(const CodecConfig&, std::uint64_t);               \
  template Tensor<R> encode(const Codec<R>&, const Tensor<R>&);                  \
  template std::size_t nearest_entry(std::span<const R>, const Tensor<R>&);      \
  template Quantized<R> quantize(const Tensor<R>&, const Tensor<R>&);            \
  template Tensor<R> decode_raw(const Codec<R>&, const Tensor<R>&);              \
  template Tensor<R> decode(const Codec<R>&, const Tensor<R>&);

CAMO_INSTANTIATE_CODEC(float)
CAMO_INSTANTIATE_CODEC(double)

}  // namespace camo
