#include "wearseg/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "wearseg/image_io.hpp"
#include "wearseg/seeding.hpp"

namespace wearseg {
namespace {

std::string shape_string(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct Wave {
  double amplitude = 0.0;
  double period = 1.0;
  double phase = 0.0;
  double operator()(double t) const {
    return amplitude * std::sin(2.0 * std::numbers::pi * t / period + phase);
  }
};

AnnotatedImage render_synthetic(int height, int width, int channels, std::uint64_t seed,
                                std::string id) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto phase = [&] { return uni(0.0, 2.0 * std::numbers::pi); };
  const double H = height;
  const double W = width;

  // Cutting edge profile.
  const double edge_base = H * uni(0.36, 0.48);
  const Wave edge1{H * uni(0.02, 0.05), W * uni(0.3, 0.8), phase()};
  const Wave edge2{H * uni(0.005, 0.015), uni(90.0, 260.0), phase()};

  // Wear strip along part of the edge.
  const double wear_start = W * uni(0.06, 0.2);
  const double wear_end = W * uni(0.8, 0.94);
  const double ramp = std::min(0.05 * W, 200.0);
  const double wear_width = H * uni(0.05, 0.09);
  const Wave width1{0.35, W * uni(0.2, 0.5), phase()};
  const Wave width2{0.15, uni(60.0, 140.0), phase()};
  const Wave width3{0.08, uni(17.0, 41.0), phase()};

  // Interleaving of the two wear types.
  const double q1 = uni(120.0, 300.0);
  const double q2 = uni(30.0, 80.0);
  const double q3 = uni(250.0, 600.0);
  const double p6 = phase(), p7 = phase(), p8 = phase();
  auto material_field = [&](double x, double y) {
    return std::sin(2.0 * std::numbers::pi * x / q1 + p6 + 1.5 * std::sin(2.0 * std::numbers::pi * y / q2 + p7)) +
           0.6 * std::sin(2.0 * std::numbers::pi * x / q3 + p8);
  };

  AnnotatedImage img;
  img.id = std::move(id);
  img.pixel_scale = uni(0.781, 1.493);
  img.mask = Mask(height, width, 1);

  std::vector<double> edge_row(width), wear_bottom(width);
  for (int x = 0; x < width; ++x) {
    edge_row[x] = edge_base + edge1(x) + edge2(x);
    double taper = smoothstep((x - wear_start) / ramp) * smoothstep((wear_end - x) / ramp);
    if (x < wear_start || x > wear_end) taper = 0.0;
    const double w = wear_width * (1.0 + width1(x) + width2(x) + width3(x)) * taper;
    wear_bottom[x] = edge_row[x] + std::max(0.0, w);
  }

  std::size_t n_abrasive = 0, n_material = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint8_t label = 0;
      if (y >= edge_row[x] && y < wear_bottom[x]) {
        label = material_field(x, y) > 0.3 ? 2 : 1;
        (label == 2 ? n_material : n_abrasive)++;
      }
      img.mask.at(y, x) = label;
    }
  }
  // Both wear types must be present; fall back to splitting the strip in half.
  if (n_abrasive == 0 || n_material == 0) {
    const double mid = 0.5 * (wear_start + wear_end);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (is_wear(img.mask.at(y, x))) img.mask.at(y, x) = x < mid ? 1 : 2;
  }

  // Rendering.
  const std::array<double, 3> tint_background{0.90, 0.95, 1.10};
  const std::array<double, 3> tint_flank{1.00, 1.00, 1.00};
  const std::array<double, 3> tint_abrasive{1.00, 1.00, 1.03};
  const std::array<double, 3> tint_material{1.10, 0.95, 0.72};
  const double grind_phase = phase(), streak_phase = phase(), mottle_phase = phase();
  const double grind_period = uni(5.0, 9.0);
  std::normal_distribution<double> speckle(0.0, 0.03);

  img.pixels = Image(height, width, channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::uint8_t label = img.mask.at(y, x);
      double base = 0.0;
      const std::array<double, 3>* tint = &tint_flank;
      if (label == 1) {
        base = 0.82 + 0.05 * std::sin(2.0 * std::numbers::pi * y / 3.7 + streak_phase);
        tint = &tint_abrasive;
      } else if (label == 2) {
        base = 0.60 + 0.07 * std::sin(x / 9.1 + mottle_phase) * std::sin(y / 7.7 + mottle_phase);
        tint = &tint_material;
      } else if (y < edge_row[x]) {
        base = 0.10 + 0.06 * (y / H);
        tint = &tint_background;
      } else {
        base = 0.42 + 0.04 * std::sin(2.0 * std::numbers::pi * x / grind_period + grind_phase) +
               0.05 * (y - edge_row[x]) / H;
      }
      const double noise = speckle(rng);
      float* px = &img.pixels.at(y, x, 0);
      if (channels == 1) {
        const double t = ((*tint)[0] + (*tint)[1] + (*tint)[2]) / 3.0;
        px[0] = static_cast<float>(std::clamp(base * t + noise, 0.0, 1.0));
      } else {
        for (int c = 0; c < 3; ++c) {
          px[c] = static_cast<float>(std::clamp(base * (*tint)[c] + noise, 0.0, 1.0));
        }
      }
    }
  }
  return img;
}

}  // namespace

void validate_mask(const Mask& mask) {
  if (mask.channels() != 1) throw std::invalid_argument("mask must have exactly one channel");
  for (std::uint8_t v : mask.values()) {
    if (v > 2) {
      throw std::invalid_argument("mask contains invalid class value " + std::to_string(v) +
                                  " (expected 0, 1 or 2)");
    }
  }
}

void validate_annotated_image(const AnnotatedImage& image) {
  if (image.pixels.height() != image.mask.height() || image.pixels.width() != image.mask.width()) {
    throw std::invalid_argument("image/mask dimension mismatch: image " +
                                shape_string(image.pixels.height(), image.pixels.width()) +
                                ", mask " + shape_string(image.mask.height(), image.mask.width()));
  }
  if (image.pixels.channels() != 1 && image.pixels.channels() != 3) {
    throw std::invalid_argument("image must have 1 or 3 channels, got " +
                                std::to_string(image.pixels.channels()));
  }
  validate_mask(image.mask);
}

AnnotatedImage load_annotated_image(const std::filesystem::path& image_path,
                                    const std::filesystem::path& mask_path, std::string id,
                                    double pixel_scale) {
  for (const auto& p : {image_path, mask_path}) {
    if (!std::filesystem::exists(p)) throw std::invalid_argument("file not found: " + p.string());
  }
  AnnotatedImage img;
  img.id = id.empty() ? image_path.stem().string() : std::move(id);
  img.pixels = read_image(image_path);
  img.mask = read_mask(mask_path);
  img.pixel_scale = pixel_scale;
  validate_annotated_image(img);
  return img;
}

void save_annotated_image(const AnnotatedImage& image, const std::filesystem::path& image_path,
                          const std::filesystem::path& mask_path) {
  validate_annotated_image(image);
  write_image(image_path, image.pixels);
  write_mask(mask_path, image.mask);
}

Mask collapse_to_binary(const Mask& mask) {
  validate_mask(mask);
  Mask out(mask.height(), mask.width(), 1);
  auto src = mask.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = is_wear(src[i]) ? 1 : 0;
  return out;
}

CorpusSplit split_corpus(const std::vector<AnnotatedImage>& images, std::size_t n_test,
                         std::uint64_t seed) {
  if (n_test >= images.size()) {
    throw std::invalid_argument("split_corpus: n_test (" + std::to_string(n_test) +
                                ") must be smaller than the corpus size (" +
                                std::to_string(images.size()) + ")");
  }
  std::set<std::string> seen;
  for (const auto& img : images) {
    if (!seen.insert(img.id).second) throw std::invalid_argument("duplicate image id: " + img.id);
  }
  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_test(images.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  CorpusSplit split;
  for (std::size_t i = 0; i < images.size(); ++i) {
    (is_test[i] ? split.test : split.train).push_back(images[i].id);
  }
  return split;
}

std::vector<AnnotatedImage> select_images(const std::vector<AnnotatedImage>& images,
                                          const std::vector<std::string>& ids) {
  std::vector<AnnotatedImage> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = std::find_if(images.begin(), images.end(), [&](const auto& im) { return im.id == id; });
    if (it == images.end()) throw std::invalid_argument("unknown image id: " + id);
    out.push_back(*it);
  }
  return out;
}

AnnotatedImage generate_synthetic_image(int index, int height, int width, std::uint64_t seed,
                                        SyntheticCorpusOptions options) {
  if (index < 0) throw std::invalid_argument("synthetic corpus: image index must be non-negative");
  if (options.channels != 1 && options.channels != 3) {
    throw std::invalid_argument("synthetic corpus: channels must be 1 or 3");
  }
  const int min_edge = 2 * options.max_tile_edge;
  if (height < min_edge || width < min_edge) {
    throw std::invalid_argument("synthetic corpus: " + shape_string(height, width) +
                                " is too small; both dimensions must be >= " +
                                std::to_string(min_edge));
  }
  char id[32];
  std::snprintf(id, sizeof id, "synth_%03d", index);
  return render_synthetic(height, width, options.channels,
                          derive_seed(seed, {static_cast<std::uint64_t>(index)}), id);
}

std::vector<AnnotatedImage> generate_synthetic_corpus(int n_images, int height, int width,
                                                      std::uint64_t seed,
                                                      SyntheticCorpusOptions options) {
  if (n_images <= 0) throw std::invalid_argument("synthetic corpus: n_images must be positive");
  std::vector<AnnotatedImage> images;
  images.reserve(n_images);
  for (int i = 0; i < n_images; ++i) images.push_back(generate_synthetic_image(i, height, width, seed, options));
  return images;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::invalid_argument("cannot open corpus manifest: " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.image_path = j.at("image_path").get<std::string>();
      e.mask_path = j.at("mask_path").get<std::string>();
      e.pixel_scale = j.value("pixel_scale", 1.0);
      if (e.image_path.is_relative()) e.image_path = base / e.image_path;
      if (e.mask_path.is_relative()) e.mask_path = base / e.mask_path;
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw std::invalid_argument(manifest_path.string() + ":" + std::to_string(line_no) + ": " +
                                  ex.what());
    }
  }
  return entries;
}

void write_manifest(const std::filesystem::path& manifest_path,
                    const std::vector<ManifestEntry>& entries) {
  if (manifest_path.has_parent_path()) std::filesystem::create_directories(manifest_path.parent_path());
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("cannot write manifest: " + manifest_path.string());
  for (const auto& e : entries) {
    nlohmann::json j{{"id", e.id},
                     {"image_path", e.image_path.generic_string()},
                     {"mask_path", e.mask_path.generic_string()},
                     {"pixel_scale", e.pixel_scale}};
    out << j.dump() << '\n';
  }
}

std::vector<AnnotatedImage> load_corpus(const std::filesystem::path& manifest_path) {
  std::vector<AnnotatedImage> images;
  for (const auto& e : read_manifest(manifest_path)) {
    images.push_back(load_annotated_image(e.image_path, e.mask_path, e.id, e.pixel_scale));
  }
  if (images.empty()) throw std::invalid_argument("corpus manifest is empty: " + manifest_path.string());
  return images;
}

std::filesystem::path save_corpus(const std::vector<AnnotatedImage>& images,
                                  const std::filesystem::path& dir) {
  std::vector<ManifestEntry> entries;
  for (const auto& img : images) {
    const std::filesystem::path image_file = img.id + ".png";
    const std::filesystem::path mask_file = img.id + "_mask.png";
    save_annotated_image(img, dir / image_file, dir / mask_file);
    entries.push_back({img.id, image_file, mask_file, img.pixel_scale});
  }
  const auto manifest = dir / "manifest.jsonl";
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace wearseg
