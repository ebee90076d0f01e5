#include "wearseg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace wearseg {
namespace {

std::uint8_t to_byte(float v) {
  const float clipped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clipped * 255.0f));
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("cannot read image: " + path.string());
  if (m.depth() != CV_8U) throw std::runtime_error("expected 8-bit image: " + path.string());
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
  const int channels = m.channels();
  if (channels == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  Image out(m.rows, m.cols, channels);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* src = m.ptr<std::uint8_t>(y);
    float* dst = out.row(y);
    for (int i = 0; i < m.cols * channels; ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
  }
  return out;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw std::invalid_argument("write_image: unsupported channel count " +
                                std::to_string(image.channels()));
  }
  cv::Mat m(image.height(), image.width(), image.channels() == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < image.height(); ++y) {
    const float* src = image.row(y);
    std::uint8_t* dst = m.ptr<std::uint8_t>(y);
    for (int i = 0; i < image.width() * image.channels(); ++i) dst[i] = to_byte(src[i]);
  }
  if (image.channels() == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write image: " + path.string());
}

Mask read_mask(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("cannot read mask: " + path.string());
  if (m.depth() != CV_8U || m.channels() != 1) {
    throw std::runtime_error("mask must be a single-channel 8-bit raster: " + path.string());
  }
  Mask out(m.rows, m.cols, 1);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* src = m.ptr<std::uint8_t>(y);
    std::copy(src, src + m.cols, out.row(y));
  }
  return out;
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  if (mask.channels() != 1) throw std::invalid_argument("write_mask: mask must have one channel");
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    std::copy(mask.row(y), mask.row(y) + mask.width(), m.ptr<std::uint8_t>(y));
  }
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write mask: " + path.string());
}

Image quantize_8bit(const Image& image) {
  Image out = image;
  for (float& v : out.values()) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

}  // namespace wearseg
