#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "wearseg/corpus.hpp"
#include "wearseg/tile.hpp"

namespace wearseg {

/// Closed parameter intervals of one augmentation level.
struct AugmentationRanges {
  double max_rotation_deg = 0.0;  // rotation in [-max, max]
  double max_shift_frac = 0.0;    // both shifts in [-max, max]
  double min_factor = 1.0;        // contrast and brightness in [min, max]
  double max_factor = 1.0;
  double max_blur_radius = 0.0;   // blur radius in [0, max]
};

AugmentationRanges ranges_for(AugmentationLevel level);

/// Uniform draw of every parameter over the level's interval. `none` always
/// yields the identity spec.
AugmentationSpec sample_spec(AugmentationLevel level, std::uint64_t seed);

struct GeometricCrop {
  Image pixels;
  Mask mask;
  /// Output pixels whose sample location fell outside the canvas and was
  /// reflected back in.
  std::size_t reflected_samples = 0;
};

/// Rotates the full image about the window centre and shifts it by
/// (shift_x_frac * d, shift_y_frac * d), then reads the d x d window at (x, y).
/// Pixels are interpolated bilinearly, labels by nearest neighbour; samples
/// outside the canvas use reflection padding.
GeometricCrop precrop_geometric(const AnnotatedImage& image, int x, int y, int d,
                                const AugmentationSpec& spec);

/// clip(b * (mean + c * (p - mean)), 0, 1) with the per-channel tile mean.
Image photometric(const Image& tile, double contrast, double brightness);

/// Normalised discrete Gaussian with sigma = radius and half-width ceil(3 sigma).
std::vector<double> gaussian_kernel(double radius);

/// Separable Gaussian blur with reflective borders; radius 0 is the identity.
Image gaussian_blur(const Image& tile, double radius);

/// Geometric transform, contrast, brightness, blur: one augmented tile.
Tile augment_tile(const AnnotatedImage& image, int x, int y, int d, AugmentationLevel level,
                  const AugmentationSpec& spec);

/// One training set (one tile size x one augmentation level). Every segment
/// position at geom.stride yields at most one sample; samples without wear are
/// dropped.
std::vector<Tile> build_training_set(const std::vector<AnnotatedImage>& images,
                                     const TileGeometry& geom, AugmentationLevel level,
                                     std::uint64_t seed);

}  // namespace wearseg
