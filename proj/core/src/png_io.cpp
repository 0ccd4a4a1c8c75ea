#include "camo/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "camo/errors.hpp"

namespace camo {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp message) {
  auto* where = static_cast<std::string*>(png_get_error_ptr(png));
  throw IoError(*where + ": " + message);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct Decoded {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;
};

Decoded decode(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError(path.string() + ": cannot open");
  unsigned char signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw InputError(path.string() + ": not a PNG file");
  }
  std::string where = path.string();
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &where, png_error_fn, png_warning_fn);
  if (!png) throw IoError(where + ": libpng init failed");
  png_infop info = png_create_info_struct(png);
  struct Cleanup {
    png_structp* png;
    png_infop* info;
    ~Cleanup() { png_destroy_read_struct(png, info, nullptr); }
  } cleanup{&png, &info};
  if (!info) throw IoError(where + ": libpng init failed");

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto depth = png_get_bit_depth(png, info);
  const auto color = png_get_color_type(png, info);
  if (depth != 8) throw InputError(where + ": expected 8-bit PNG, found " + std::to_string(depth) + "-bit");
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  png_read_update_info(png, info);

  Decoded out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.bytes.resize(stride * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = out.bytes.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return out;
}

void encode(const std::filesystem::path& path, int height, int width, int color_type, int channels,
            const std::uint8_t* bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError(path.string() + ": cannot open for writing");
  std::string where = path.string();
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &where, png_error_fn, png_warning_fn);
  if (!png) throw IoError(where + ": libpng init failed");
  png_infop info = png_create_info_struct(png);
  struct Cleanup {
    png_structp* png;
    png_infop* info;
    ~Cleanup() { png_destroy_write_struct(png, info); }
  } cleanup{&png, &info};
  if (!info) throw IoError(where + ": libpng init failed");

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes + stride * y));
  }
  png_write_end(png, nullptr);
  if (std::fflush(file.get()) != 0) throw IoError(where + ": write failed");
}

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  const auto d = decode(path);
  Image img = Image::zeros(d.height, d.width, 3);
  const std::size_t pixels = static_cast<std::size_t>(d.height) * d.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < 3; ++c) {
      // gray and gray+alpha replicate channel 0
      const int src = d.channels >= 3 ? c : 0;
      img.data[p * 3 + c] = d.bytes[p * d.channels + src] / 255.0f;
    }
  }
  return img;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  const auto d = decode(path);
  if (d.channels != 1) {
    throw InputError(path.string() + ": expected a single-channel gray PNG, found " + std::to_string(d.channels) +
                     " channels");
  }
  return {d.height, d.width, d.bytes};
}

void write_png_rgb(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 3) throw DimensionError("write_png_rgb: image must have 3 channels");
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image.data[i]);
  encode(path, image.height, image.width, PNG_COLOR_TYPE_RGB, 3, bytes.data());
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width) {
    throw DimensionError("write_png_gray: pixel count does not match dims");
  }
  encode(path, image.height, image.width, PNG_COLOR_TYPE_GRAY, 1, image.pixels.data());
}

GrayImage mask_to_gray(const Mask& mask) {
  GrayImage g{mask.height, mask.width, std::vector<std::uint8_t>(mask.fg.size())};
  for (std::size_t i = 0; i < mask.fg.size(); ++i) g.pixels[i] = mask.fg[i] ? 255 : 0;
  return g;
}

Mask gray_to_mask(const GrayImage& image) {
  Mask m = Mask::zeros(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) m.fg[i] = image.pixels[i] > 127 ? 1 : 0;
  return m;
}

}  // namespace camo
