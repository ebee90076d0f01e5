#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wearseg/mode.hpp"
#include "wearseg/raster.hpp"
#include "wearseg/tile.hpp"
#include "wearseg/tiler.hpp"

namespace wearseg {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Scores {
  double iou = 1.0, dice = 1.0, tpr = 1.0, tnr = 1.0;
};

struct MetricReport {
  double iou = 0.0, dice = 0.0, tpr = 0.0, tnr = 0.0;
  /// Undefined when no tile contained the wear type.
  std::optional<double> fnbgr_m, fnbgr_a;
  std::size_t tiles = 0;
};

/// Pixel counts of two {0,1} rasters of equal shape.
ConfusionCounts confusion(const Mask& truth_binary, const Mask& pred_binary);

/// IoU, Dice, TPR, TNR; every 0/0 ratio is 1.
Scores scores(const ConfusionCounts& counts);

/// Fraction of ground-truth pixels of `type` predicted as background (either
/// predicted wear type counts as wear). nullopt when the type is absent.
std::optional<double> fnbgr(const Mask& truth_multiclass, const Mask& pred_binary, WearClass type);

/// Scores of one tile. `predicted` holds classes in the model's mode and is
/// collapsed to wear/background first when multiclass.
MetricReport evaluate_prediction(const Mask& truth_multiclass, const Mask& predicted, Mode mode);

/// Arithmetic mean of per-tile reports; FNBGR averages skip undefined tiles.
MetricReport average_reports(std::span<const MetricReport> per_tile);

/// Per-tile evaluation of `predictor` on non-augmented wear tiles, then averaged.
MetricReport evaluate_testset(const TilePredictor& predictor, const std::vector<Tile>& test_tiles,
                              Mode mode);

struct MedianIqr {
  double median = 0.0;
  double iqr = 0.0;
};

/// Linear-interpolation quantile (sorts its own copy).
double quantile(std::vector<double> values, double q);
MedianIqr median_iqr(std::vector<double> values);

struct FoldSummary {
  MedianIqr iou, dice, tpr, tnr;
  /// Unset when no fold defined the rate.
  std::optional<MedianIqr> fnbgr_m, fnbgr_a;
};

/// Median and IQR of each metric across cross-validation folds (>= 2 reports).
FoldSummary summarize_folds(std::span<const MetricReport> reports);

}  // namespace wearseg
