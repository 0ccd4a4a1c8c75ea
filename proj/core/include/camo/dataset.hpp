#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "camo/image.hpp"

namespace camo {

struct ManifestEntry {
  std::string name;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  std::string split = "train";
  int height = 0;
  int width = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;  // sorted by name
};

struct Sample {
  std::string name;
  Image image;
  Mask mask;  // fg = 1 on the object
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

/// Loads every `<name>.png` with its `<name>_mask.png` from `dir`. Masks are
/// binarized at > 127. Orphans, size mismatches and empty masks are errors.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes `<name>.png` and `<name>_mask.png`.
void save_sample(const std::filesystem::path& dir, const Sample& sample);

}  // namespace camo
