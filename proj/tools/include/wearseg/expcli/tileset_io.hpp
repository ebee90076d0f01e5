#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wearseg/grid.hpp"
#include "wearseg/tile.hpp"

namespace wearseg::expcli {

nlohmann::json provenance_to_json(const TileProvenance& provenance);
TileProvenance provenance_from_json(const nlohmann::json& j);

/// <dir>/<nnnnn>.png, <nnnnn>_mask.png and a <nnnnn>.json provenance sidecar per tile.
void write_tile_set(const std::filesystem::path& dir, const std::vector<Tile>& tiles);
std::vector<Tile> read_tile_set(const std::filesystem::path& dir);

std::string training_set_name(int edge, AugmentationLevel level);
std::string test_set_name(int edge);

/// Loads the sets a prepared directory holds for the requested edges and levels.
TileSets read_prepared_tiles(const std::filesystem::path& prepared_dir, const std::vector<int>& edges,
                             const std::vector<AugmentationLevel>& levels);

}  // namespace wearseg::expcli
