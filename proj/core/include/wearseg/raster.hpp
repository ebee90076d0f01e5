#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wearseg {

/// Dense row-major raster with interleaved channels (H x W x C).
template <class T>
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels <= 0) {
      throw std::invalid_argument("raster: invalid shape " + std::to_string(height) + "x" +
                                  std::to_string(width) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  const T& at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  T* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_ * channels_; }
  const T* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_ * channels_; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_shape(const Raster& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  /// Copy of the [y, y+h) x [x, x+w) window; the window must lie inside the raster.
  Raster crop(int y, int x, int h, int w) const {
    if (y < 0 || x < 0 || h < 0 || w < 0 || y + h > height_ || x + w > width_) {
      throw std::out_of_range("raster: crop window outside raster");
    }
    Raster out(h, w, channels_);
    for (int r = 0; r < h; ++r) {
      const T* src = row(y + r) + static_cast<std::size_t>(x) * channels_;
      std::copy(src, src + static_cast<std::size_t>(w) * channels_, out.row(r));
    }
    return out;
  }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// Pixel intensities in [0,1].
using Image = Raster<float>;
/// Single-channel class-index raster: 0 background, 1 wear A, 2 wear M (or 0/1 when binary).
using Mask = Raster<std::uint8_t>;
/// Per-pixel probabilities, one channel (binary head) or K channels (multiclass head).
using ProbabilityMap = Raster<float>;

enum class WearClass : std::uint8_t { background = 0, abrasive = 1, material = 2 };

inline constexpr int kNumClasses = 3;

inline bool is_wear(std::uint8_t label) { return label == 1 || label == 2; }

}  // namespace wearseg
