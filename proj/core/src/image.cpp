#include "camo/image.hpp"

#include <algorithm>
#include <cmath>

#include "camo/errors.hpp"

namespace camo {

Image Image::zeros(int height, int width, int channels) {
  if (height <= 0 || width <= 0 || channels <= 0) throw DimensionError("image dims must be positive");
  Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(height) * width * channels, 0.0f);
  return img;
}

Mask Mask::zeros(int height, int width) {
  if (height <= 0 || width <= 0) throw DimensionError("mask dims must be positive");
  Mask m;
  m.height = height;
  m.width = width;
  m.fg.assign(static_cast<std::size_t>(height) * width, 0);
  return m;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(fg.begin(), fg.end(), std::uint8_t{1}));
}

std::vector<std::uint8_t> Mask::editable() const {
  std::vector<std::uint8_t> out(fg.size());
  for (std::size_t i = 0; i < fg.size(); ++i) out[i] = fg[i] ? 0 : 1;
  return out;
}

BoundingBox foreground_bbox(const Mask& mask) {
  BoundingBox box{mask.height, mask.width, 0, 0};
  bool any = false;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        any = true;
        box.y0 = std::min(box.y0, y);
        box.x0 = std::min(box.x0, x);
        box.y1 = std::max(box.y1, y + 1);
        box.x1 = std::max(box.x1, x + 1);
      }
  if (!any) throw InputError("no foreground");
  return box;
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height == image.height && width == image.width) return image;
  Image out = Image::zeros(height, width, image.channels);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1 - wx) + image.at(y0, x1, c) * wx;
        const double bot = image.at(y1, x0, c) * (1 - wx) + image.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int height, int width) {
  if (height == mask.height && width == mask.width) return mask;
  Mask out = Mask::zeros(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height - 1, static_cast<int>((y + 0.5) * mask.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width - 1, static_cast<int>((x + 0.5) * mask.width / width));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

Image crop(const Image& image, const BoundingBox& box) {
  Image out = Image::zeros(box.height(), box.width(), image.channels);
  for (int y = 0; y < box.height(); ++y)
    for (int x = 0; x < box.width(); ++x)
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(box.y0 + y, box.x0 + x, c);
  return out;
}

Mask crop(const Mask& mask, const BoundingBox& box) {
  Mask out = Mask::zeros(box.height(), box.width());
  for (int y = 0; y < box.height(); ++y)
    for (int x = 0; x < box.width(); ++x) out.at(y, x) = mask.at(box.y0 + y, box.x0 + x);
  return out;
}

Image apply_mask(const Image& image, const Mask& mask) {
  if (image.height != mask.height || image.width != mask.width) {
    throw DimensionError("apply_mask: image and mask dims differ");
  }
  Image out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      if (!mask.at(y, x))
        for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = 0.0f;
  return out;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

template <typename Real>
Tensor<Real> image_tensor(const Image& image) {
  return Tensor<Real>({static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width),
                       static_cast<std::size_t>(image.channels)},
                      std::vector<Real>(image.data.begin(), image.data.end()));
}

template <typename Real>
Image tensor_image(const Tensor<Real>& t) {
  if (t.rank() != 3) throw DimensionError("tensor_image: expected [H,W,C], got " + shape_string(t.shape()));
  Image img = Image::zeros(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)));
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) img.data[i] = std::clamp(static_cast<float>(v[i]), 0.0f, 1.0f);
  return img;
}

template Tensor<float> image_tensor(const Image&);
template Tensor<double> image_tensor(const Image&);
template Image tensor_image(const Tensor<float>&);
template Image tensor_image(const Tensor<double>&);

}  // namespace camo
