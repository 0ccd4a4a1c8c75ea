#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "camo/tensor.hpp"

namespace camo {

/// Row-major H x W x C image with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  static Image zeros(int height, int width, int channels = 3);
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float at(int y, int x, int c) const { return data[index(y, x, c)]; }
  float& at(int y, int x, int c) { return data[index(y, x, c)]; }
  bool operator==(const Image&) const = default;
};

/// Binary object mask: fg = 1 marks the object, 0 the editable background.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> fg;

  static Mask zeros(int height, int width);
  std::uint8_t at(int y, int x) const { return fg[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return fg[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  /// The editable indicator m = 1 - fg.
  std::vector<std::uint8_t> editable() const;
  bool operator==(const Mask&) const = default;
};

struct BoundingBox {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
  int height() const { return y1 - y0; }
  int width() const { return x1 - x0; }
};

/// Tight box around the foreground; throws InputError if the mask is empty.
BoundingBox foreground_bbox(const Mask& mask);

/// Half-pixel-centre bilinear resampling.
Image resize_bilinear(const Image& image, int height, int width);
Mask resize_nearest(const Mask& mask, int height, int width);
Image crop(const Image& image, const BoundingBox& box);
Mask crop(const Mask& mask, const BoundingBox& box);
/// Zeroes every pixel outside the foreground (I * (1 - m)).
Image apply_mask(const Image& image, const Mask& mask);

std::uint8_t to_byte(float v);

template <typename Real>
Tensor<Real> image_tensor(const Image& image);
/// [H,W,C] tensor to an image, clamping to [0, 1].
template <typename Real>
Image tensor_image(const Tensor<Real>& t);

}  // namespace camo
