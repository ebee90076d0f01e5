#include "wearseg/augmentor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "wearseg/seeding.hpp"
#include "wearseg/tiler.hpp"

namespace wearseg {
namespace {

// Mirror about the edge pixel: -1 -> 1, n -> n-2.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Coordinates within this distance of an integer are treated as exact, so
// quarter turns and pure integer shifts resample without interpolation noise.
double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

AugmentationRanges ranges_for(AugmentationLevel level) {
  switch (level) {
    case AugmentationLevel::none: return {0.0, 0.0, 1.0, 1.0, 0.0};
    case AugmentationLevel::moderate: return {30.0, 0.15, 0.9, 1.1, 0.0};
    case AugmentationLevel::full: return {90.0, 0.3, 0.8, 1.2, 1.0};
  }
  throw std::invalid_argument("unknown augmentation level");
}

AugmentationSpec sample_spec(AugmentationLevel level, std::uint64_t seed) {
  AugmentationSpec spec;
  spec.seed = seed;
  if (level == AugmentationLevel::none) return spec;
  const auto r = ranges_for(level);
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  spec.rotation_deg = uni(-r.max_rotation_deg, r.max_rotation_deg);
  spec.shift_x_frac = uni(-r.max_shift_frac, r.max_shift_frac);
  spec.shift_y_frac = uni(-r.max_shift_frac, r.max_shift_frac);
  spec.contrast_factor = uni(r.min_factor, r.max_factor);
  spec.brightness_factor = uni(r.min_factor, r.max_factor);
  spec.blur_radius = r.max_blur_radius > 0.0 ? uni(0.0, r.max_blur_radius) : 0.0;
  return spec;
}

GeometricCrop precrop_geometric(const AnnotatedImage& image, int x, int y, int d,
                                const AugmentationSpec& spec) {
  if (d <= 0 || x < 0 || y < 0 || x + d > image.width() || y + d > image.height()) {
    throw std::invalid_argument("precrop_geometric: window (" + std::to_string(x) + ", " +
                                std::to_string(y) + ", " + std::to_string(d) +
                                ") does not fit the image");
  }
  const int H = image.height();
  const int W = image.width();
  const int C = image.pixels.channels();

  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cx = x + (d - 1) / 2.0;
  const double cy = y + (d - 1) / 2.0;
  const double tx = spec.shift_x_frac * d;
  const double ty = spec.shift_y_frac * d;

  GeometricCrop out{Image(d, d, C), Mask(d, d, 1), 0};
  for (int v = 0; v < d; ++v) {
    for (int u = 0; u < d; ++u) {
      // Inverse map: undo the shift, then rotate by -theta about the centre.
      const double px = x + u - cx - tx;
      const double py = y + v - cy - ty;
      const double sx = snap(cx + cos_t * px + sin_t * py);
      const double sy = snap(cy - sin_t * px + cos_t * py);

      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      const float ax = static_cast<float>(sx - fx0);
      const float ay = static_cast<float>(sy - fy0);
      const int x1 = ax > 0.0f ? x0 + 1 : x0;
      const int y1 = ay > 0.0f ? y0 + 1 : y0;
      if (x0 < 0 || y0 < 0 || x1 >= W || y1 >= H) ++out.reflected_samples;

      const int rx0 = reflect_index(x0, W), rx1 = reflect_index(x1, W);
      const int ry0 = reflect_index(y0, H), ry1 = reflect_index(y1, H);
      float* dst = &out.pixels.at(v, u, 0);
      for (int c = 0; c < C; ++c) {
        const float p00 = image.pixels.at(ry0, rx0, c);
        const float p01 = image.pixels.at(ry0, rx1, c);
        const float p10 = image.pixels.at(ry1, rx0, c);
        const float p11 = image.pixels.at(ry1, rx1, c);
        const float top = p00 * (1.0f - ax) + p01 * ax;
        const float bottom = p10 * (1.0f - ax) + p11 * ax;
        dst[c] = std::clamp(top * (1.0f - ay) + bottom * ay, 0.0f, 1.0f);
      }
      const int nx = reflect_index(static_cast<int>(std::lround(sx)), W);
      const int ny = reflect_index(static_cast<int>(std::lround(sy)), H);
      out.mask.at(v, u) = image.mask.at(ny, nx);
    }
  }
  return out;
}

Image photometric(const Image& tile, double contrast, double brightness) {
  if (contrast == 1.0 && brightness == 1.0) return tile;
  const int C = tile.channels();
  std::vector<double> mean(C, 0.0);
  const auto v = tile.values();
  for (std::size_t i = 0; i < v.size(); ++i) mean[i % C] += v[i];
  for (double& m : mean) m /= static_cast<double>(tile.pixel_count());

  Image out = tile;
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double m = mean[i % C];
    o[i] = static_cast<float>(std::clamp(brightness * (m + contrast * (v[i] - m)), 0.0, 1.0));
  }
  return out;
}

std::vector<double> gaussian_kernel(double radius) {
  if (radius < 0.0) throw std::invalid_argument("gaussian_kernel: negative radius");
  if (radius == 0.0) return {1.0};
  const int half = static_cast<int>(std::ceil(3.0 * radius));
  std::vector<double> k(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    k[i + half] = std::exp(-0.5 * (i * i) / (radius * radius));
    sum += k[i + half];
  }
  for (double& w : k) w /= sum;
  return k;
}

Image gaussian_blur(const Image& tile, double radius) {
  if (radius == 0.0) return tile;
  const auto kernel = gaussian_kernel(radius);
  const int half = static_cast<int>(kernel.size() / 2);
  const int H = tile.height(), W = tile.width(), C = tile.channels();

  Image tmp(H, W, C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) acc += kernel[k + half] * tile.at(y, reflect_index(x + k, W), c);
        tmp.at(y, x, c) = static_cast<float>(acc);
      }
    }
  }
  Image out(H, W, C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) acc += kernel[k + half] * tmp.at(reflect_index(y + k, H), x, c);
        out.at(y, x, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

Tile augment_tile(const AnnotatedImage& image, int x, int y, int d, AugmentationLevel level,
                  const AugmentationSpec& spec) {
  Tile tile;
  if (spec.rotation_deg == 0.0 && spec.shift_x_frac == 0.0 && spec.shift_y_frac == 0.0) {
    tile.pixels = image.pixels.crop(y, x, d, d);
    tile.mask = image.mask.crop(y, x, d, d);
  } else {
    auto g = precrop_geometric(image, x, y, d, spec);
    tile.pixels = std::move(g.pixels);
    tile.mask = std::move(g.mask);
  }
  tile.pixels = photometric(tile.pixels, spec.contrast_factor, 1.0);
  tile.pixels = photometric(tile.pixels, 1.0, spec.brightness_factor);
  tile.pixels = gaussian_blur(tile.pixels, spec.blur_radius);
  tile.provenance = TileProvenance{image.id, x, y, level,
                                   level == AugmentationLevel::none ? std::nullopt
                                                                    : std::optional{spec}};
  return tile;
}

std::vector<Tile> build_training_set(const std::vector<AnnotatedImage>& images,
                                     const TileGeometry& geom, AugmentationLevel level,
                                     std::uint64_t seed) {
  geom.validate();
  std::vector<Tile> tiles;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& image = images[i];
    const auto offsets = horizontal_segments(image.width(), geom);
    for (std::size_t s = 0; s < offsets.size(); ++s) {
      const int x = offsets[s];
      const auto centroid = wear_centroid_row(image.mask, x, geom.edge);
      if (!centroid) continue;
      const int y = centered_window_row(*centroid, image.height(), geom.edge);
      const auto spec = sample_spec(level, derive_seed(seed, {i, s}));
      Tile tile = augment_tile(image, x, y, geom.edge, level, spec);
      if (tile.has_wear()) tiles.push_back(std::move(tile));
    }
  }
  return tiles;
}

}  // namespace wearseg
