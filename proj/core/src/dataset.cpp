#include "camo/dataset.hpp"

#include <map>
#include <set>

#include "camo/errors.hpp"
#include "camo/png_io.hpp"

namespace camo {

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw InputError(dir.string() + ": not a directory");
  std::set<std::string> images, masks;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const auto stem = entry.path().stem().string();
    if (stem.size() > 5 && stem.ends_with("_mask")) {
      masks.insert(stem.substr(0, stem.size() - 5));
    } else {
      images.insert(stem);
    }
  }
  for (const auto& m : masks) {
    if (!images.contains(m)) throw InputError((dir / (m + "_mask.png")).string() + ": mask without image");
  }
  for (const auto& i : images) {
    if (!masks.contains(i)) throw InputError((dir / (i + ".png")).string() + ": image without mask");
  }
  if (images.empty()) throw InputError(dir.string() + ": no samples");

  Dataset ds;
  for (const auto& name : images) {
    ManifestEntry e;
    e.name = name;
    e.image_path = dir / (name + ".png");
    e.mask_path = dir / (name + "_mask.png");
    Sample s;
    s.name = name;
    s.image = read_png_rgb(e.image_path);
    const auto gray = read_png_gray(e.mask_path);
    if (gray.height != s.image.height || gray.width != s.image.width) {
      throw InputError(e.mask_path.string() + ": mask is " + std::to_string(gray.width) + "x" +
                       std::to_string(gray.height) + " but image is " + std::to_string(s.image.width) + "x" +
                       std::to_string(s.image.height));
    }
    s.mask = gray_to_mask(gray);
    if (s.mask.count() == 0) throw InputError(e.mask_path.string() + ": mask has no foreground");
    e.height = s.image.height;
    e.width = s.image.width;
    ds.manifest.entries.push_back(std::move(e));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_sample(const std::filesystem::path& dir, const Sample& sample) {
  write_png_rgb(dir / (sample.name + ".png"), sample.image);
  write_png_gray(dir / (sample.name + "_mask.png"), mask_to_gray(sample.mask));
}

}  // namespace camo
