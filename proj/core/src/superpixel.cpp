#include "camo/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "camo/errors.hpp"
#include "camo/rng.hpp"

namespace camo {

void SlicConfig::validate() const {
  if (superpixels < 1) throw ConfigError("slic.superpixels must be >= 1");
  if (!(compactness >= 0)) throw ConfigError("slic.compactness must be >= 0");
  if (iterations < 0) throw ConfigError("slic.iterations must be >= 0");
}

namespace {

struct Center {
  std::vector<double> feature;
  double y = 0;
  double x = 0;
};

double joint_distance(std::span<const double> f, double y, double x, const Center& c, double spatial_weight) {
  double fd = 0;
  for (std::size_t k = 0; k < f.size(); ++k) fd += (f[k] - c.feature[k]) * (f[k] - c.feature[k]);
  const double sd = std::hypot(y - c.y, x - c.x);
  return std::sqrt(fd) + spatial_weight * sd;
}

std::vector<int> initial_seeds(const Mask& fg, const std::vector<int>& cells, int wanted, Rng& rng) {
  const auto box = foreground_bbox(fg);
  const double step = std::sqrt(static_cast<double>(cells.size()) / wanted);
  const int ny = std::max(1, static_cast<int>(std::lround(box.height() / step)));
  const int nx = std::max(1, static_cast<int>(std::lround(box.width() / step)));
  std::vector<char> taken(fg.fg.size(), 0);
  std::vector<int> seeds;
  auto snap = [&](double cy, double cx) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int cell : cells) {
      if (taken[cell]) continue;
      const double d = std::hypot(cell / fg.width - cy, cell % fg.width - cx);
      if (d < best_d) {
        best_d = d;
        best = cell;
      }
    }
    return best;
  };
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < nx; ++j) {
      const double cy = box.y0 + (i + 0.5) * box.height() / ny - 0.5;
      const double cx = box.x0 + (j + 0.5) * box.width() / nx - 0.5;
      const int cell = snap(cy, cx);
      if (cell >= 0) {
        taken[cell] = 1;
        seeds.push_back(cell);
      }
    }
  if (static_cast<int>(seeds.size()) > wanted) {
    for (std::size_t i = 0; i + 1 < seeds.size(); ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                              static_cast<std::int64_t>(seeds.size()) - 1));
      std::swap(seeds[i], seeds[j]);
    }
    seeds.resize(static_cast<std::size_t>(wanted));
    std::sort(seeds.begin(), seeds.end());
  }
  // Farthest-point fill when the grid produced too few seeds.
  while (static_cast<int>(seeds.size()) < wanted) {
    int best = -1;
    double best_d = -1;
    for (int cell : cells) {
      if (std::find(seeds.begin(), seeds.end(), cell) != seeds.end()) continue;
      double nearest = std::numeric_limits<double>::infinity();
      for (int s : seeds) nearest = std::min(nearest, std::hypot(cell / fg.width - s / fg.width, cell % fg.width - s % fg.width));
      if (nearest > best_d) {
        best_d = nearest;
        best = cell;
      }
    }
    seeds.push_back(best);
  }
  return seeds;
}

}  // namespace

SuperpixelAssignment slic_superpixels(std::span<const double> features, int channels, const Mask& fg,
                                      const SlicConfig& config, std::uint64_t seed) {
  config.validate();
  const int h = fg.height, w = fg.width;
  if (channels < 1 || features.size() != static_cast<std::size_t>(h) * w * channels) {
    throw DimensionError("slic: feature size does not match the " + std::to_string(h) + "x" + std::to_string(w) +
                         " mask");
  }
  std::vector<int> cells;
  for (int i = 0; i < h * w; ++i)
    if (fg.fg[i]) cells.push_back(i);
  if (cells.empty()) throw InputError("slic: no foreground");

  const int wanted = std::min<int>(config.superpixels, static_cast<int>(cells.size()));
  const double grid_step = std::sqrt(static_cast<double>(cells.size()) / wanted);
  const double spatial_weight = config.compactness / grid_step;
  Rng rng = Rng(seed).split("slic");
  const auto c = static_cast<std::size_t>(channels);
  auto feat = [&](int cell) { return features.subspan(static_cast<std::size_t>(cell) * c, c); };

  std::vector<Center> centers;
  for (int s : initial_seeds(fg, cells, wanted, rng)) {
    auto f = feat(s);
    centers.push_back({std::vector<double>(f.begin(), f.end()), static_cast<double>(s / w), static_cast<double>(s % w)});
  }

  std::vector<int> labels(static_cast<std::size_t>(h) * w, -1);
  auto assign_all = [&] {
    for (int cell : cells) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < static_cast<int>(centers.size()); ++k) {
        const double d = joint_distance(feat(cell), cell / w, cell % w, centers[k], spatial_weight);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      labels[cell] = best;
    }
  };
  assign_all();
  for (int it = 0; it < config.iterations; ++it) {
    std::vector<Center> sums(centers.size(), Center{std::vector<double>(c, 0.0), 0, 0});
    std::vector<std::size_t> counts(centers.size(), 0);
    for (int cell : cells) {
      auto& s = sums[labels[cell]];
      auto f = feat(cell);
      for (std::size_t k = 0; k < c; ++k) s.feature[k] += f[k];
      s.y += cell / w;
      s.x += cell % w;
      ++counts[labels[cell]];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) continue;
      const double n = static_cast<double>(counts[k]);
      for (std::size_t j = 0; j < c; ++j) centers[k].feature[j] = sums[k].feature[j] / n;
      centers[k].y = sums[k].y / n;
      centers[k].x = sums[k].x / n;
    }
    assign_all();
  }

  // Connectivity: keep the largest 4-connected piece of each label and merge
  // the rest into the nearest adjacent superpixel.
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> component(labels.size(), -1);
    std::vector<std::vector<int>> pieces;
    for (int cell : cells) {
      if (component[cell] >= 0) continue;
      const int id = static_cast<int>(pieces.size());
      pieces.emplace_back();
      std::vector<int> todo{cell};
      component[cell] = id;
      while (!todo.empty()) {
        const int cur = todo.back();
        todo.pop_back();
        pieces[id].push_back(cur);
        const int y = cur / w, x = cur % w;
        const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (const auto& p : nb) {
          if (p[0] < 0 || p[0] >= h || p[1] < 0 || p[1] >= w) continue;
          const int n = p[0] * w + p[1];
          if (labels[n] == labels[cell] && component[n] < 0) {
            component[n] = id;
            todo.push_back(n);
          }
        }
      }
    }
    std::vector<int> largest(centers.size(), -1);
    for (int id = 0; id < static_cast<int>(pieces.size()); ++id) {
      const int lab = labels[pieces[id].front()];
      if (largest[lab] < 0 || pieces[id].size() > pieces[largest[lab]].size()) largest[lab] = id;
    }
    for (int id = 0; id < static_cast<int>(pieces.size()); ++id) {
      const int lab = labels[pieces[id].front()];
      if (largest[lab] == id) continue;
      std::vector<double> mf(c, 0.0);
      double my = 0, mx = 0;
      std::vector<char> adjacent(centers.size(), 0);
      for (int cell : pieces[id]) {
        auto f = feat(cell);
        for (std::size_t k = 0; k < c; ++k) mf[k] += f[k];
        my += cell / w;
        mx += cell % w;
        const int y = cell / w, x = cell % w;
        const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (const auto& p : nb) {
          if (p[0] < 0 || p[0] >= h || p[1] < 0 || p[1] >= w) continue;
          const int n = labels[p[0] * w + p[1]];
          if (n >= 0 && n != lab) adjacent[n] = 1;
        }
      }
      const double n = static_cast<double>(pieces[id].size());
      for (auto& v : mf) v /= n;
      // A fragment touching no other superpixel (an island of the mask) stays put.
      if (std::find(adjacent.begin(), adjacent.end(), 1) == adjacent.end()) continue;
      int target = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < static_cast<int>(centers.size()); ++k) {
        if (!adjacent[k]) continue;
        const double d = joint_distance(mf, my / n, mx / n, centers[k], spatial_weight);
        if (d < best_d) {
          best_d = d;
          target = k;
        }
      }
      for (int cell : pieces[id]) labels[cell] = target;
      changed = true;
    }
  }

  // Compact relabel in ascending order of the surviving labels.
  std::vector<int> remap(centers.size(), -1);
  std::vector<std::size_t> counts(centers.size(), 0);
  for (int cell : cells) ++counts[labels[cell]];
  SuperpixelAssignment out;
  out.height = h;
  out.width = w;
  for (std::size_t k = 0; k < centers.size(); ++k)
    if (counts[k] > 0) {
      remap[k] = out.count++;
      out.sizes.push_back(counts[k]);
    }
  out.labels.assign(labels.size(), -1);
  for (int cell : cells) out.labels[cell] = remap[labels[cell]];
  return out;
}

std::vector<double> masked_pool(std::span<const double> features, int channels,
                                const SuperpixelAssignment& assignment) {
  const auto c = static_cast<std::size_t>(channels);
  if (features.size() != assignment.labels.size() * c) {
    throw DimensionError("masked_pool: features do not match the superpixel grid");
  }
  std::vector<double> sums(static_cast<std::size_t>(assignment.count) * c, 0.0);
  std::vector<double> weights(static_cast<std::size_t>(assignment.count), 0.0);
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    const int lab = assignment.labels[i];
    if (lab < 0) continue;
    for (std::size_t k = 0; k < c; ++k) sums[lab * c + k] += features[i * c + k];
    weights[lab] += 1.0;
  }
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] == 0) throw InvariantError("masked_pool: empty superpixel " + std::to_string(j));
    for (std::size_t k = 0; k < c; ++k) sums[j * c + k] /= weights[j];
  }
  return sums;
}

}  // namespace camo
