#pragma once

#include <cstdint>
#include <filesystem>

#include "camo/dataset.hpp"

namespace camo {

struct SynthOptions {
  std::uint64_t seed = 0;
  int count = 32;
  int height = 64;
  int width = 64;
  /// Restrict object areas to below 1/64 of the frame.
  bool small_only = false;
};

enum class ShapeKind { kEllipse, kPolygon, kBlob };

/// One textured scene with an object whose texture is a shifted copy of the
/// background field under a perturbed palette. Object area is log-uniform in
/// [1/256, 1/4] of the frame (or [1/256, 1/64) with small_only).
Sample synth_sample(const SynthOptions& options, int index);

/// Generates `count` samples named sample_NNNN and writes them to `out_dir`.
DatasetManifest synth_dataset(const SynthOptions& options, const std::filesystem::path& out_dir);

/// Two-octave gradient noise mapped into [0, 1], keyed by seed.
double gradient_noise(double x, double y, std::uint64_t seed);

}  // namespace camo
