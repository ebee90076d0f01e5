#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "wearseg/corpus.hpp"
#include "wearseg/tile.hpp"

namespace wearseg {

/// Left offsets x = 0, stride, 2*stride, ... with x + d <= width. A remainder
/// narrower than d at the right edge is dropped.
std::vector<int> horizontal_segments(int image_width, const TileGeometry& geom);

/// Mean row index of all wear pixels (labels 1 and 2 weighted equally) in the
/// full-height column strip [x, x + width). Empty when the strip has no wear.
std::optional<double> wear_centroid_row(const Mask& mask, int x, int width);

/// First row of a d-high window centred on `centroid_row`, clamped into the image.
int centered_window_row(double centroid_row, int image_height, int d);

/// d x d tile from the segment at column x, centred vertically on its wear.
/// Returns nullopt when the segment shows no wear (the caller skips it).
std::optional<Tile> vertical_center_crop(const AnnotatedImage& image, int x, int d);

/// Tiles with at least one wear pixel, order preserved.
std::vector<Tile> filter_wear_tiles(std::vector<Tile> tiles);

/// Non-augmented pipeline: segments at geom.stride, vertical centring, wear filter.
std::vector<Tile> plain_tiles(const AnnotatedImage& image, const TileGeometry& geom);
std::vector<Tile> plain_tiles(const std::vector<AnnotatedImage>& images, const TileGeometry& geom);

/// Maps a d x d image tile to a d x d probability map (1 or K channels).
using TilePredictor = std::function<ProbabilityMap(const Image&)>;

/// Window origins along one axis: 0, step, 2*step, ... plus a final window
/// flush with the far border, so that every pixel is covered.
std::vector<int> overlap_tile_origins(int length, int d, int step);

/// Overlap-tile inference: tiles at stride d/2 in both directions (last row and
/// column flush with the border); overlapping probabilities are averaged.
ProbabilityMap stitch_predict(const Image& image, const TilePredictor& predictor, int d);

}  // namespace wearseg
