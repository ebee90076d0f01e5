#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wearseg/raster.hpp"

namespace wearseg {

enum class AugmentationLevel { none, moderate, full };

std::string to_string(AugmentationLevel level);
AugmentationLevel parse_augmentation_level(const std::string& text);

/// One draw of augmentation parameters; everything needed to replay a tile.
struct AugmentationSpec {
  double rotation_deg = 0.0;
  double shift_x_frac = 0.0;  // fraction of the tile edge
  double shift_y_frac = 0.0;
  double contrast_factor = 1.0;
  double brightness_factor = 1.0;
  double blur_radius = 0.0;  // pixels; Gaussian sigma equals the radius
  std::uint64_t seed = 0;

  bool is_identity() const {
    return rotation_deg == 0.0 && shift_x_frac == 0.0 && shift_y_frac == 0.0 &&
           contrast_factor == 1.0 && brightness_factor == 1.0 && blur_radius == 0.0;
  }
  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

struct TileGeometry {
  int edge = 256;    // tile edge length d
  int stride = 256;  // horizontal step between segments

  /// Stride d without augmentation, d/2 with (moderate or full).
  static TileGeometry for_level(int edge, AugmentationLevel level);
  void validate() const;
};

struct TileProvenance {
  std::string source_id;
  int x = 0;  // window offset in the source image
  int y = 0;
  AugmentationLevel level = AugmentationLevel::none;
  std::optional<AugmentationSpec> augmentation;
};

struct Tile {
  Image pixels;  // d x d x C
  Mask mask;     // d x d x 1
  TileProvenance provenance;

  int edge() const { return pixels.height(); }
  bool has_wear() const;
};

}  // namespace wearseg
