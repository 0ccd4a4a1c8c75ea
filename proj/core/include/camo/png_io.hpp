#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "camo/image.hpp"

namespace camo {

/// 8-bit single-channel raster as stored on disk.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads an 8-bit RGB (or RGBA, alpha dropped) PNG into [0, 1] floats.
/// Gray PNGs are expanded to three channels.
Image read_png_rgb(const std::filesystem::path& path);
/// Reads an 8-bit gray PNG.
GrayImage read_png_gray(const std::filesystem::path& path);

/// Writes an image, quantized with to_byte, as 8-bit RGB.
void write_png_rgb(const std::filesystem::path& path, const Image& image);
void write_png_gray(const std::filesystem::path& path, const GrayImage& image);

/// Mask as 0/255 gray.
GrayImage mask_to_gray(const Mask& mask);
/// Foreground where the value exceeds 127.
Mask gray_to_mask(const GrayImage& image);

}  // namespace camo
