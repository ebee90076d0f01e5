#pragma once

#include "wearseg/mode.hpp"
#include "wearseg/raster.hpp"

namespace wearseg::expcli {

/// Blends class colors over the image at half opacity: abrasive wear blue,
/// adhered material yellow for multiclass, a single red for binary wear.
Image render_overlay(const Image& image, const Mask& classes, Mode mode);

}  // namespace wearseg::expcli
