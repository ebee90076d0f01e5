#include "wearseg/tiler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wearseg {

std::string to_string(AugmentationLevel level) {
  switch (level) {
    case AugmentationLevel::none: return "none";
    case AugmentationLevel::moderate: return "moderate";
    case AugmentationLevel::full: return "full";
  }
  return "none";
}

AugmentationLevel parse_augmentation_level(const std::string& text) {
  if (text == "none") return AugmentationLevel::none;
  if (text == "moderate") return AugmentationLevel::moderate;
  if (text == "full") return AugmentationLevel::full;
  throw std::invalid_argument("unknown augmentation level '" + text + "' (none|moderate|full)");
}

TileGeometry TileGeometry::for_level(int edge, AugmentationLevel level) {
  TileGeometry g{edge, level == AugmentationLevel::none ? edge : edge / 2};
  g.validate();
  return g;
}

void TileGeometry::validate() const {
  if (edge <= 0 || edge % 16 != 0) {
    throw std::invalid_argument("tile edge must be a positive multiple of 16, got " +
                                std::to_string(edge));
  }
  if (stride != edge && stride != edge / 2) {
    throw std::invalid_argument("tile stride must be d or d/2, got " + std::to_string(stride));
  }
}

bool Tile::has_wear() const {
  const auto v = mask.values();
  return std::any_of(v.begin(), v.end(), is_wear);
}

std::vector<int> horizontal_segments(int image_width, const TileGeometry& geom) {
  geom.validate();
  if (image_width < geom.edge) {
    throw std::invalid_argument("image width " + std::to_string(image_width) +
                                " is smaller than the tile edge " + std::to_string(geom.edge));
  }
  std::vector<int> offsets;
  for (int x = 0; x + geom.edge <= image_width; x += geom.stride) offsets.push_back(x);
  return offsets;
}

std::optional<double> wear_centroid_row(const Mask& mask, int x, int width) {
  long double sum = 0;
  std::size_t count = 0;
  const int x_end = std::min(mask.width(), x + width);
  for (int y = 0; y < mask.height(); ++y) {
    const std::uint8_t* row = mask.row(y);
    for (int c = std::max(0, x); c < x_end; ++c) {
      if (is_wear(row[c])) {
        sum += y;
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return static_cast<double>(sum / count);
}

int centered_window_row(double centroid_row, int image_height, int d) {
  const int start = static_cast<int>(std::lround(centroid_row)) - d / 2;
  return std::clamp(start, 0, image_height - d);
}

std::optional<Tile> vertical_center_crop(const AnnotatedImage& image, int x, int d) {
  if (image.height() < d) {
    throw std::invalid_argument("image height " + std::to_string(image.height()) +
                                " is smaller than the tile edge " + std::to_string(d));
  }
  const auto centroid = wear_centroid_row(image.mask, x, d);
  if (!centroid) return std::nullopt;
  const int y = centered_window_row(*centroid, image.height(), d);
  Tile tile;
  tile.pixels = image.pixels.crop(y, x, d, d);
  tile.mask = image.mask.crop(y, x, d, d);
  tile.provenance = TileProvenance{image.id, x, y, AugmentationLevel::none, std::nullopt};
  return tile;
}

std::vector<Tile> filter_wear_tiles(std::vector<Tile> tiles) {
  std::erase_if(tiles, [](const Tile& t) { return !t.has_wear(); });
  return tiles;
}

std::vector<Tile> plain_tiles(const AnnotatedImage& image, const TileGeometry& geom) {
  std::vector<Tile> tiles;
  for (int x : horizontal_segments(image.width(), geom)) {
    if (auto t = vertical_center_crop(image, x, geom.edge)) tiles.push_back(std::move(*t));
  }
  return filter_wear_tiles(std::move(tiles));
}

std::vector<Tile> plain_tiles(const std::vector<AnnotatedImage>& images, const TileGeometry& geom) {
  std::vector<Tile> tiles;
  for (const auto& img : images) {
    auto t = plain_tiles(img, geom);
    std::move(t.begin(), t.end(), std::back_inserter(tiles));
  }
  return tiles;
}

std::vector<int> overlap_tile_origins(int length, int d, int step) {
  if (length < d) throw std::invalid_argument("overlap tiling: length smaller than tile edge");
  if (step <= 0) throw std::invalid_argument("overlap tiling: step must be positive");
  std::vector<int> origins;
  for (int p = 0; p + d <= length; p += step) origins.push_back(p);
  if (origins.back() + d < length) origins.push_back(length - d);
  return origins;
}

ProbabilityMap stitch_predict(const Image& image, const TilePredictor& predictor, int d) {
  if (d <= 0) throw std::invalid_argument("stitch_predict: tile edge must be positive");
  if (image.height() < d || image.width() < d) {
    throw std::invalid_argument("stitch_predict: image " + std::to_string(image.height()) + "x" +
                                std::to_string(image.width()) + " is smaller than tile edge " +
                                std::to_string(d));
  }
  const int step = std::max(1, d / 2);
  const auto ys = overlap_tile_origins(image.height(), d, step);
  const auto xs = overlap_tile_origins(image.width(), d, step);

  std::vector<double> sum;
  std::vector<std::uint16_t> hits(image.pixel_count(), 0);
  int channels = 0;
  for (int y0 : ys) {
    for (int x0 : xs) {
      const ProbabilityMap p = predictor(image.crop(y0, x0, d, d));
      if (p.height() != d || p.width() != d) {
        throw std::runtime_error("stitch_predict: predictor returned a wrongly shaped map");
      }
      if (channels == 0) {
        channels = p.channels();
        sum.assign(image.pixel_count() * channels, 0.0);
      } else if (p.channels() != channels) {
        throw std::runtime_error("stitch_predict: predictor changed its channel count");
      }
      for (int r = 0; r < d; ++r) {
        const float* src = p.row(r);
        const std::size_t base = static_cast<std::size_t>(y0 + r) * image.width() + x0;
        for (int c = 0; c < d; ++c) {
          ++hits[base + c];
          for (int k = 0; k < channels; ++k) sum[(base + c) * channels + k] += src[c * channels + k];
        }
      }
    }
  }

  ProbabilityMap out(image.height(), image.width(), channels);
  auto dst = out.values();
  for (std::size_t i = 0; i < hits.size(); ++i) {
    for (int k = 0; k < channels; ++k) {
      dst[i * channels + k] = static_cast<float>(sum[i * channels + k] / hits[i]);
    }
  }
  return out;
}

}  // namespace wearseg
