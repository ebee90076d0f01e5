#include "wearseg/expcli/tileset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "wearseg/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wearseg::expcli {

json provenance_to_json(const TileProvenance& p) {
  json j{{"source_id", p.source_id}, {"x", p.x}, {"y", p.y}, {"level", to_string(p.level)}};
  if (p.augmentation) {
    const auto& a = *p.augmentation;
    j["augmentation"] = {{"rotation_deg", a.rotation_deg},
                         {"shift_x_frac", a.shift_x_frac},
                         {"shift_y_frac", a.shift_y_frac},
                         {"contrast_factor", a.contrast_factor},
                         {"brightness_factor", a.brightness_factor},
                         {"blur_radius", a.blur_radius},
                         {"seed", a.seed}};
  } else {
    j["augmentation"] = nullptr;
  }
  return j;
}

TileProvenance provenance_from_json(const json& j) {
  TileProvenance p;
  p.source_id = j.at("source_id").get<std::string>();
  p.x = j.at("x").get<int>();
  p.y = j.at("y").get<int>();
  p.level = parse_augmentation_level(j.at("level").get<std::string>());
  if (j.contains("augmentation") && !j["augmentation"].is_null()) {
    const auto& a = j["augmentation"];
    AugmentationSpec s;
    s.rotation_deg = a.at("rotation_deg").get<double>();
    s.shift_x_frac = a.at("shift_x_frac").get<double>();
    s.shift_y_frac = a.at("shift_y_frac").get<double>();
    s.contrast_factor = a.at("contrast_factor").get<double>();
    s.brightness_factor = a.at("brightness_factor").get<double>();
    s.blur_radius = a.at("blur_radius").get<double>();
    s.seed = a.at("seed").get<std::uint64_t>();
    p.augmentation = s;
  }
  return p;
}

namespace {

std::string stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

}  // namespace

void write_tile_set(const fs::path& dir, const std::vector<Tile>& tiles) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const std::string s = stem(i);
    write_image(dir / (s + ".png"), tiles[i].pixels);
    write_mask(dir / (s + "_mask.png"), tiles[i].mask);
    std::ofstream(dir / (s + ".json")) << provenance_to_json(tiles[i].provenance).dump(2) << '\n';
  }
}

std::vector<Tile> read_tile_set(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("tile set not found: " + dir.string());
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") stems.push_back(e.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  std::vector<Tile> tiles;
  tiles.reserve(stems.size());
  for (const auto& s : stems) {
    Tile t;
    t.pixels = read_image(dir / (s + ".png"));
    t.mask = read_mask(dir / (s + "_mask.png"));
    std::ifstream in(dir / (s + ".json"));
    t.provenance = provenance_from_json(json::parse(in));
    tiles.push_back(std::move(t));
  }
  return tiles;
}

std::string training_set_name(int edge, AugmentationLevel level) {
  return "d" + std::to_string(edge) + "_" + to_string(level);
}

std::string test_set_name(int edge) { return "d" + std::to_string(edge) + "_test"; }

TileSets read_prepared_tiles(const fs::path& prepared_dir, const std::vector<int>& edges,
                             const std::vector<AugmentationLevel>& levels) {
  TileSets sets;
  for (int edge : edges) {
    for (AugmentationLevel level : levels) {
      sets.training[{edge, level}] = read_tile_set(prepared_dir / "tiles" / training_set_name(edge, level));
    }
    sets.test[edge] = read_tile_set(prepared_dir / "tiles" / test_set_name(edge));
  }
  return sets;
}

}  // namespace wearseg::expcli
