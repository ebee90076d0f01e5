#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wearseg/raster.hpp"

namespace wearseg {

struct AnnotatedImage {
  std::string id;
  Image pixels;       // H x W x C, C in {1,3}
  Mask mask;          // H x W x 1, values in {0,1,2}
  double pixel_scale = 1.0;  // micrometers per pixel, informational

  int height() const { return pixels.height(); }
  int width() const { return pixels.width(); }
};

/// Whole-image partition. Tiles inherit the membership of their source image.
struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  double pixel_scale = 1.0;
};

/// Throws std::invalid_argument naming the first value outside {0,1,2}.
void validate_mask(const Mask& mask);

/// Validates shape agreement and label range.
void validate_annotated_image(const AnnotatedImage& image);

/// Reads an 8-bit image (gray or color) and an indexed single-channel mask.
AnnotatedImage load_annotated_image(const std::filesystem::path& image_path,
                                    const std::filesystem::path& mask_path,
                                    std::string id = {}, double pixel_scale = 1.0);

void save_annotated_image(const AnnotatedImage& image, const std::filesystem::path& image_path,
                          const std::filesystem::path& mask_path);

/// Maps {1,2} -> 1 and 0 -> 0.
Mask collapse_to_binary(const Mask& mask);

CorpusSplit split_corpus(const std::vector<AnnotatedImage>& images, std::size_t n_test,
                         std::uint64_t seed);

/// Picks the images named in `ids`, in that order.
std::vector<AnnotatedImage> select_images(const std::vector<AnnotatedImage>& images,
                                          const std::vector<std::string>& ids);

struct SyntheticCorpusOptions {
  int channels = 3;
  /// Smallest accepted edge: height and width must both be at least twice this.
  int max_tile_edge = 256;
};

/// Renders `n_images` microscopy-like images of a cutting edge: dark background
/// above a textured flank band with an irregular wear strip along the edge. The
/// strip is split into interleaved abrasive (1) and adhered-material (2)
/// regions. Masks are exact: pixels are rendered from the labels.
std::vector<AnnotatedImage> generate_synthetic_corpus(int n_images, int height, int width,
                                                      std::uint64_t seed,
                                                      SyntheticCorpusOptions options = {});

/// Image `index` of the corpus above, rendered on its own.
AnnotatedImage generate_synthetic_image(int index, int height, int width, std::uint64_t seed,
                                        SyntheticCorpusOptions options = {});

/// Line-delimited JSON records {id, image_path, mask_path, pixel_scale}.
/// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path,
                    const std::vector<ManifestEntry>& entries);

std::vector<AnnotatedImage> load_corpus(const std::filesystem::path& manifest_path);

/// Writes images as <dir>/<id>.png and masks as <dir>/<id>_mask.png plus a
/// manifest.jsonl; returns the manifest path.
std::filesystem::path save_corpus(const std::vector<AnnotatedImage>& images,
                                  const std::filesystem::path& dir);

}  // namespace wearseg
