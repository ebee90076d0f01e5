#include "wearseg/expcli/overlay.hpp"

#include <array>
#include <stdexcept>

namespace wearseg::expcli {

Image render_overlay(const Image& image, const Mask& classes, Mode mode) {
  if (image.height() != classes.height() || image.width() != classes.width()) {
    throw std::invalid_argument("overlay: image and class raster differ in shape");
  }
  constexpr std::array<float, 3> kAbrasive{0.12f, 0.35f, 0.85f};
  constexpr std::array<float, 3> kMaterial{0.95f, 0.85f, 0.10f};
  constexpr std::array<float, 3> kWear{0.90f, 0.15f, 0.15f};
  constexpr float kAlpha = 0.5f;

  Image out(image.height(), image.width(), 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const std::uint8_t k = classes.at(y, x);
      const std::array<float, 3>* color = nullptr;
      if (k != 0) color = mode == Mode::binary ? &kWear : (k == 1 ? &kAbrasive : &kMaterial);
      for (int c = 0; c < 3; ++c) {
        const float base = image.at(y, x, image.channels() == 1 ? 0 : c);
        out.at(y, x, c) = color ? (1.0f - kAlpha) * base + kAlpha * (*color)[c] : base;
      }
    }
  }
  return out;
}

}  // namespace wearseg::expcli
