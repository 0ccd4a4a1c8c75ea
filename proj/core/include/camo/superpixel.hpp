#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "camo/image.hpp"

namespace camo {

struct SlicConfig {
  int superpixels = 16;
  double compactness = 10.0;
  int iterations = 10;

  void validate() const;
};

/// Superpixel labels over an h x w grid; -1 outside the foreground.
struct SuperpixelAssignment {
  int height = 0;
  int width = 0;
  int count = 0;
  std::vector<int> labels;
  std::vector<std::size_t> sizes;
};

/// SLIC restricted to the foreground of `fg`.
///
/// `features` is h*w*channels row-major. The joint distance is
/// ||f - f_c|| + (compactness / grid_step) * ||p - p_c||. The requested count
/// is clamped to the number of foreground cells; disconnected fragments are
/// merged into the nearest adjacent superpixel and empty ones dropped, so the
/// returned labels are exactly [0, count).
SuperpixelAssignment slic_superpixels(std::span<const double> features, int channels, const Mask& fg,
                                      const SlicConfig& config, std::uint64_t seed);

/// Per-superpixel channel means: row j = sum(features * [label == j]) / size_j.
std::vector<double> masked_pool(std::span<const double> features, int channels,
                                const SuperpixelAssignment& assignment);

}  // namespace camo
