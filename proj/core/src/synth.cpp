#include "camo/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "camo/errors.hpp"
#include "camo/rng.hpp"

namespace camo {
namespace {

using Color = std::array<double, 3>;

double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

double lattice_dot(std::int64_t ix, std::int64_t iy, double dx, double dy, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL ^
                                                      static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL));
  const double angle = static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 * std::numbers::pi;
  return std::cos(angle) * dx + std::sin(angle) * dy;
}

double octave(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double dx = x - fx, dy = y - fy;
  const double n00 = lattice_dot(ix, iy, dx, dy, seed);
  const double n10 = lattice_dot(ix + 1, iy, dx - 1, dy, seed);
  const double n01 = lattice_dot(ix, iy + 1, dx, dy - 1, seed);
  const double n11 = lattice_dot(ix + 1, iy + 1, dx - 1, dy - 1, seed);
  const double u = fade(dx), v = fade(dy);
  const double a = n00 + u * (n10 - n00);
  const double b = n01 + u * (n11 - n01);
  return a + v * (b - a);  // about [-0.71, 0.71]
}

Color random_color(Rng& rng) { return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}; }

Color shifted(const Color& c, Rng& rng) {
  Color out;
  for (int i = 0; i < 3; ++i) {
    const double delta = rng.uniform(0.06, 0.18) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    out[static_cast<std::size_t>(i)] = std::clamp(c[static_cast<std::size_t>(i)] + delta, 0.0, 1.0);
  }
  return out;
}

struct Outline {
  ShapeKind kind;
  double cx, cy;
  double a = 0, b = 0, angle = 0;  // ellipse
  std::vector<std::pair<double, double>> vertices;  // polygon
  double radius = 0;                 // blob base radius
  std::array<double, 4> harmonics{};  // blob: amp2, phase2, amp3, phase3

  bool contains(double x, double y) const {
    const double px = x - cx, py = y - cy;
    switch (kind) {
      case ShapeKind::kEllipse: {
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = (c * px + s * py) / a, v = (-s * px + c * py) / b;
        return u * u + v * v <= 1.0;
      }
      case ShapeKind::kPolygon: {
        bool inside = false;
        for (std::size_t i = 0, j = vertices.size() - 1; i < vertices.size(); j = i++) {
          const auto [xi, yi] = vertices[i];
          const auto [xj, yj] = vertices[j];
          if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
        }
        return inside;
      }
      case ShapeKind::kBlob: {
        const double phi = std::atan2(py, px);
        return std::hypot(px, py) <= blob_radius(phi);
      }
    }
    return false;
  }

  double blob_radius(double phi) const {
    return radius * (1.0 + harmonics[0] * std::sin(2 * phi + harmonics[1]) + harmonics[2] * std::sin(3 * phi + harmonics[3]));
  }
};

// Area of the unit-scale outline, used to hit a target area by scaling.
double unit_area(const Outline& o) {
  switch (o.kind) {
    case ShapeKind::kEllipse: return std::numbers::pi * o.a * o.b;
    case ShapeKind::kPolygon: {
      double s = 0;
      for (std::size_t i = 0, j = o.vertices.size() - 1; i < o.vertices.size(); j = i++) {
        s += o.vertices[j].first * o.vertices[i].second - o.vertices[i].first * o.vertices[j].second;
      }
      return std::abs(s) / 2;
    }
    case ShapeKind::kBlob: {
      double s = 0;
      const int n = 720;
      for (int i = 0; i < n; ++i) {
        const double r = o.blob_radius(2 * std::numbers::pi * i / n);
        s += 0.5 * r * r * (2 * std::numbers::pi / n);
      }
      return s;
    }
  }
  return 1;
}

Outline make_outline(Rng& rng) {
  Outline o;
  o.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
  o.cx = o.cy = 0;
  switch (o.kind) {
    case ShapeKind::kEllipse:
      o.a = 1.0;
      o.b = rng.uniform(0.5, 1.0);
      o.angle = rng.uniform(0, std::numbers::pi);
      break;
    case ShapeKind::kPolygon: {
      const auto n = rng.uniform_int(5, 8);
      const double start = rng.uniform(0, 2 * std::numbers::pi);
      for (std::int64_t i = 0; i < n; ++i) {
        const double phi = start + 2 * std::numbers::pi * (static_cast<double>(i) + rng.uniform(-0.25, 0.25)) / n;
        const double r = rng.uniform(0.7, 1.0);
        o.vertices.emplace_back(r * std::cos(phi), r * std::sin(phi));
      }
      break;
    }
    case ShapeKind::kBlob:
      o.radius = 1.0;
      o.harmonics = {rng.uniform(0.05, 0.25), rng.uniform(0, 6.28), rng.uniform(0.0, 0.15), rng.uniform(0, 6.28)};
      break;
  }
  return o;
}

Outline scaled(Outline o, double k) {
  o.a *= k;
  o.b *= k;
  o.radius *= k;
  for (auto& [x, y] : o.vertices) {
    x *= k;
    y *= k;
  }
  return o;
}

double extent(const Outline& o) {
  switch (o.kind) {
    case ShapeKind::kEllipse: return std::max(o.a, o.b);
    case ShapeKind::kPolygon: {
      double r = 0;
      for (auto [x, y] : o.vertices) r = std::max(r, std::hypot(x, y));
      return r;
    }
    case ShapeKind::kBlob: return o.radius * (1.0 + o.harmonics[0] + o.harmonics[2]);
  }
  return 0;
}

Mask rasterize(const Outline& o, int h, int w) {
  Mask m = Mask::zeros(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.at(y, x) = o.contains(x + 0.5, y + 0.5) ? 1 : 0;
  }
  return m;
}

}  // namespace

double gradient_noise(double x, double y, std::uint64_t seed) {
  const double v = octave(x, y, seed) + 0.5 * octave(2 * x, 2 * y, splitmix64(seed + 1));
  return std::clamp(0.5 + 0.6 * v, 0.0, 1.0);
}

Sample synth_sample(const SynthOptions& options, int index) {
  const int h = options.height, w = options.width;
  if (h < 8 || w < 8) throw ConfigError("synth: frame must be at least 8x8");
  Rng rng = Rng(options.seed).split("synth").split(static_cast<std::uint64_t>(index));
  Rng palette_rng = rng.split("palette");
  Rng shape_rng = rng.split("shape");
  const std::uint64_t noise_seed = rng.split("noise").next_u64();

  const Color bg0 = random_color(palette_rng), bg1 = random_color(palette_rng);
  const Color fg0 = shifted(bg0, palette_rng), fg1 = shifted(bg1, palette_rng);
  const double cell = palette_rng.uniform(10.0, 20.0);
  const double shift_x = palette_rng.uniform(3.0, 9.0), shift_y = palette_rng.uniform(3.0, 9.0);

  const double frame = static_cast<double>(h) * w;
  const double lo = std::log(frame / 256.0);
  const double hi = std::log(options.small_only ? frame / 64.0 : frame / 4.0);
  Mask mask;
  for (int attempt = 0;; ++attempt) {
    const double area = std::exp(shape_rng.uniform(lo, hi));
    Outline o = make_outline(shape_rng);
    o = scaled(o, std::sqrt(area / unit_area(o)));
    const double r = std::min(extent(o), 0.5 * std::min(h, w) - 1.0);
    o.cx = shape_rng.uniform(r, w - r);
    o.cy = shape_rng.uniform(r, h - r);
    mask = rasterize(o, h, w);
    const bool small_ok = !options.small_only || mask.count() * 64 < static_cast<std::size_t>(frame);
    if (mask.count() > 0 && small_ok) break;
    if (attempt > 50) throw InvariantError("synth: could not place an object");
  }

  Sample s;
  std::ostringstream name;
  name << "sample_" << std::setw(4) << std::setfill('0') << index;
  s.name = name.str();
  s.mask = mask;
  s.image = Image::zeros(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool fg = mask.at(y, x) != 0;
      const double t = fg ? gradient_noise((x + shift_x) / cell, (y + shift_y) / cell, noise_seed)
                          : gradient_noise(x / cell, y / cell, noise_seed);
      const Color& c0 = fg ? fg0 : bg0;
      const Color& c1 = fg ? fg1 : bg1;
      for (int c = 0; c < 3; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        s.image.at(y, x, c) = static_cast<float>(c0[ci] + (c1[ci] - c0[ci]) * t);
      }
    }
  }
  return s;
}

DatasetManifest synth_dataset(const SynthOptions& options, const std::filesystem::path& out_dir) {
  if (options.count < 1) throw ConfigError("synth: count must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string() + ": cannot create directory: " + ec.message());
  DatasetManifest manifest;
  for (int i = 0; i < options.count; ++i) {
    const Sample s = synth_sample(options, i);
    save_sample(out_dir, s);
    ManifestEntry e;
    e.name = s.name;
    e.image_path = out_dir / (s.name + ".png");
    e.mask_path = out_dir / (s.name + "_mask.png");
    e.height = options.height;
    e.width = options.width;
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace camo
