#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wearseg/corpus.hpp"
#include "wearseg/trainer.hpp"

namespace wearseg {

/// Axes of the experiment grid; the defaults span all 72 cells.
struct GridSelector {
  std::vector<Mode> modes{Mode::binary, Mode::multiclass};
  std::vector<int> tile_edges{512, 256};
  std::vector<AugmentationLevel> augs{AugmentationLevel::none, AugmentationLevel::moderate,
                                      AugmentationLevel::full};
  std::vector<LossKind> losses{LossKind::ce, LossKind::fce, LossKind::iou};
  std::vector<bool> batch_norm{true, false};
  int base_filters = 64;
  int batch_size = 0;
  std::uint64_t seed = 0;

  /// d = 256 and base_filters = 16 only.
  static GridSelector desk_scale();
};

std::vector<ExperimentConfig> enumerate_grid(const GridSelector& selector);

/// Training tiles per (edge, level) and non-augmented test tiles per edge.
struct TileSets {
  std::map<std::pair<int, AugmentationLevel>, std::vector<Tile>> training;
  std::map<int, std::vector<Tile>> test;

  const std::vector<Tile>& training_for(int edge, AugmentationLevel level) const;
  const std::vector<Tile>& test_for(int edge) const;
};

TileSets prepare_tile_sets(const std::vector<AnnotatedImage>& train_images,
                           const std::vector<AnnotatedImage>& test_images, const std::vector<int>& edges,
                           const std::vector<AugmentationLevel>& levels, std::uint64_t seed);

struct FoldRecord {
  int fold = 0;
  bool failed = false;
  int attempts = 0;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  MetricReport report;
};

struct CellResult {
  ExperimentConfig config;
  std::vector<FoldRecord> folds;   // completed folds in index order
  std::optional<std::string> error;

  int failed_folds() const;
};

struct GridOptions {
  std::filesystem::path run_dir;
  TrainingProtocol protocol;
  int folds = 5;
  /// Without resume an already populated cell is an error.
  bool resume = false;
  /// Called after each fold is persisted; exceptions propagate and abort the grid.
  std::function<void(const ExperimentConfig&, int fold)> on_fold_complete;
};

std::filesystem::path cell_dir(const std::filesystem::path& run_dir, const ExperimentConfig& config);

/// Cross-validates every config, persisting each fold's checkpoint, history and
/// report under runs/<hash>/fold<k>/. Folds whose report exists are skipped.
std::vector<CellResult> run_grid(const std::vector<ExperimentConfig>& configs, const TileSets& tiles,
                                 const GridOptions& options);

/// Cells found under run_dir/runs, in canonical order (mode, edge, loss, bn, aug).
std::vector<CellResult> load_grid_results(const std::filesystem::path& run_dir);

/// key,value lines; doubles printed with 17 significant digits so they round-trip.
void write_fold_record(const std::filesystem::path& path, const FoldRecord& record);
FoldRecord read_fold_record(const std::filesystem::path& path);

void write_fold_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_fold_history(const std::filesystem::path& path);

/// One row per cell: medians and IQRs across folds.
std::string grid_summary_csv(const std::vector<CellResult>& cells);

/// Writes `contents` to a temporary sibling, then renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace wearseg
