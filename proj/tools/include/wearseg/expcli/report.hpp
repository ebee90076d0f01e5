#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wearseg/grid.hpp"

namespace wearseg::expcli {

/// "0.888 (0.006)": median and IQR rounded to three decimals.
std::string format_median_iqr(const MedianIqr& m);

/// Table rows for one tile edge, grouped mode/BN, loss, augmentation.
std::string results_table_markdown(const std::vector<CellResult>& cells, int tile_edge);
std::string results_table_csv(const std::vector<CellResult>& cells, int tile_edge);

struct BoxStats {
  double q1 = 0, median = 0, q3 = 0;
  double whisker_low = 0, whisker_high = 0;  // furthest points within 1.5 IQR
  std::vector<double> outliers;
};

BoxStats box_stats(std::vector<double> values);

/// Fold IoUs grouped by loss x batch-norm, one box per augmentation level.
std::string boxplot_panel_svg(const std::vector<CellResult>& cells, Mode mode, int tile_edge);

/// Panels arranged by tile edge (rows) and mode (columns).
std::string boxplot_figure_svg(const std::vector<CellResult>& cells);

/// Highest median IoU, ties broken by median Dice; nullopt when no cell qualifies.
std::optional<CellResult> best_config(const std::vector<CellResult>& cells, Mode mode, int tile_edge);

std::string best_config_csv(const std::vector<CellResult>& cells);

/// Writes every table and figure into `out_dir`; returns the paths written.
std::vector<std::filesystem::path> write_report(const std::vector<CellResult>& cells,
                                                const std::filesystem::path& out_dir);

}  // namespace wearseg::expcli
