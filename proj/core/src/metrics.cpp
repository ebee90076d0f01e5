#include "wearseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wearseg/activation.hpp"
#include "wearseg/corpus.hpp"

namespace wearseg {
namespace {

double ratio_or_one(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

void check_same_shape(const Mask& a, const Mask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("metrics: shape mismatch " + std::to_string(a.height()) + "x" +
                                std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                                "x" + std::to_string(b.width()));
  }
}

}  // namespace

ConfusionCounts confusion(const Mask& truth_binary, const Mask& pred_binary) {
  check_same_shape(truth_binary, pred_binary);
  ConfusionCounts c;
  const auto t = truth_binary.values();
  const auto p = pred_binary.values();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] > 1 || p[i] > 1) throw std::invalid_argument("confusion: inputs must be binary");
    if (t[i]) (p[i] ? c.tp : c.fn)++;
    else (p[i] ? c.fp : c.tn)++;
  }
  return c;
}

Scores scores(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  return {ratio_or_one(tp, tp + fp + fn), ratio_or_one(2.0 * tp, 2.0 * tp + fp + fn),
          ratio_or_one(tp, tp + fn), ratio_or_one(tn, tn + fp)};
}

std::optional<double> fnbgr(const Mask& truth_multiclass, const Mask& pred_binary, WearClass type) {
  check_same_shape(truth_multiclass, pred_binary);
  const auto label = static_cast<std::uint8_t>(type);
  const auto t = truth_multiclass.values();
  const auto p = pred_binary.values();
  std::uint64_t present = 0, missed = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != label) continue;
    ++present;
    if (p[i] == 0) ++missed;
  }
  if (present == 0) return std::nullopt;
  return static_cast<double>(missed) / static_cast<double>(present);
}

MetricReport evaluate_prediction(const Mask& truth_multiclass, const Mask& predicted, Mode mode) {
  const Mask pred = mode == Mode::multiclass ? collapse_to_binary(predicted) : predicted;
  const Scores s = scores(confusion(collapse_to_binary(truth_multiclass), pred));
  MetricReport r{s.iou, s.dice, s.tpr, s.tnr, std::nullopt, std::nullopt, 1};
  r.fnbgr_m = fnbgr(truth_multiclass, pred, WearClass::material);
  r.fnbgr_a = fnbgr(truth_multiclass, pred, WearClass::abrasive);
  return r;
}

MetricReport average_reports(std::span<const MetricReport> per_tile) {
  if (per_tile.empty()) throw std::invalid_argument("average_reports: no reports");
  MetricReport avg{};
  double m_sum = 0.0, a_sum = 0.0;
  std::size_t m_n = 0, a_n = 0;
  for (const auto& r : per_tile) {
    avg.iou += r.iou;
    avg.dice += r.dice;
    avg.tpr += r.tpr;
    avg.tnr += r.tnr;
    if (r.fnbgr_m) { m_sum += *r.fnbgr_m; ++m_n; }
    if (r.fnbgr_a) { a_sum += *r.fnbgr_a; ++a_n; }
  }
  const double n = static_cast<double>(per_tile.size());
  avg.iou /= n;
  avg.dice /= n;
  avg.tpr /= n;
  avg.tnr /= n;
  if (m_n) avg.fnbgr_m = m_sum / static_cast<double>(m_n);
  if (a_n) avg.fnbgr_a = a_sum / static_cast<double>(a_n);
  avg.tiles = per_tile.size();
  return avg;
}

MetricReport evaluate_testset(const TilePredictor& predictor, const std::vector<Tile>& test_tiles,
                              Mode mode) {
  if (test_tiles.empty()) throw std::invalid_argument("evaluate_testset: empty test set");
  std::vector<MetricReport> per_tile;
  per_tile.reserve(test_tiles.size());
  for (const auto& tile : test_tiles) {
    const Mask predicted = predict_classes(predictor(tile.pixels), mode);
    per_tile.push_back(evaluate_prediction(tile.mask, predicted, mode));
  }
  return average_reports(per_tile);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MedianIqr median_iqr(std::vector<double> values) {
  return {quantile(values, 0.5), quantile(values, 0.75) - quantile(values, 0.25)};
}

FoldSummary summarize_folds(std::span<const MetricReport> reports) {
  if (reports.size() < 2) {
    throw std::invalid_argument("summarize_folds: need at least 2 reports, got " +
                                std::to_string(reports.size()));
  }
  auto collect = [&](auto getter) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(getter(r));
    return v;
  };
  auto collect_optional = [&](auto getter) -> std::optional<MedianIqr> {
    std::vector<double> v;
    for (const auto& r : reports)
      if (auto x = getter(r)) v.push_back(*x);
    if (v.empty()) return std::nullopt;
    return median_iqr(v);
  };
  FoldSummary s;
  s.iou = median_iqr(collect([](const MetricReport& r) { return r.iou; }));
  s.dice = median_iqr(collect([](const MetricReport& r) { return r.dice; }));
  s.tpr = median_iqr(collect([](const MetricReport& r) { return r.tpr; }));
  s.tnr = median_iqr(collect([](const MetricReport& r) { return r.tnr; }));
  s.fnbgr_m = collect_optional([](const MetricReport& r) { return r.fnbgr_m; });
  s.fnbgr_a = collect_optional([](const MetricReport& r) { return r.fnbgr_a; });
  return s;
}

}  // namespace wearseg
