#include <gtest/gtest.h>

#include <random>

#include "wearseg/corpus.hpp"
#include "wearseg/metrics.hpp"

using namespace wearseg;

namespace {

Mask mask2x2(int a, int b, int c, int d) {
  Mask m(2, 2, 1);
  m.at(0, 0) = a;
  m.at(0, 1) = b;
  m.at(1, 0) = c;
  m.at(1, 1) = d;
  return m;
}

Tile tile_with(const Mask& truth) {
  Tile t;
  t.mask = truth;
  t.pixels = Image(truth.height(), truth.width(), 1);
  // Encode the label into the pixel so a predictor can read it back.
  for (int y = 0; y < truth.height(); ++y)
    for (int x = 0; x < truth.width(); ++x) t.pixels.at(y, x) = truth.at(y, x) / 2.0f;
  return t;
}

}  // namespace

TEST(Confusion, Examples) {
  const auto c = confusion(mask2x2(1, 0, 0, 1), mask2x2(1, 1, 0, 0));
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 1}));
  const auto truth = mask2x2(1, 1, 0, 1);
  const auto same = confusion(truth, truth);
  EXPECT_EQ(same.fp, 0u);
  EXPECT_EQ(same.fn, 0u);
  const auto flip = confusion(truth, mask2x2(0, 0, 1, 0));
  EXPECT_EQ(flip.tp, 0u);
  EXPECT_EQ(flip.tn, 0u);
  EXPECT_THROW(confusion(truth, Mask(2, 3, 1)), std::invalid_argument);
  EXPECT_THROW(confusion(mask2x2(2, 0, 0, 0), truth), std::invalid_argument);
}

TEST(Scores, Examples) {
  const Scores s = scores({1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(s.iou, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.dice, 0.5);
  EXPECT_DOUBLE_EQ(s.tpr, 0.5);
  EXPECT_DOUBLE_EQ(s.tnr, 0.5);
  const Scores perfect = scores({3, 0, 0, 1});
  EXPECT_EQ(perfect.iou, 1.0);
  EXPECT_EQ(perfect.tnr, 1.0);
  const Scores none = scores({0, 0, 0, 4});
  EXPECT_EQ(none.tpr, 1.0);
  EXPECT_EQ(none.iou, 1.0);
  EXPECT_EQ(none.dice, 1.0);
}

TEST(Scores, DiceIouIdentityAndMonotonicity) {
  std::mt19937 rng(2);
  for (int rep = 0; rep < 500; ++rep) {
    ConfusionCounts c{rng() % 50, rng() % 50, rng() % 50, rng() % 50};
    const Scores s = scores(c);
    EXPECT_NEAR(s.dice, 2 * s.iou / (1 + s.iou), 1e-12);
    if (c.fn > 0) {
      ConfusionCounts moved = c;
      --moved.fn;
      ++moved.tp;
      const Scores t = scores(moved);
      EXPECT_GE(t.iou, s.iou);
      EXPECT_GE(t.dice, s.dice);
      EXPECT_GE(t.tpr, s.tpr);
    }
  }
}

TEST(Fnbgr, Examples) {
  Mask truth(2, 3, 1);
  truth.at(0, 0) = truth.at(0, 1) = truth.at(0, 2) = truth.at(1, 0) = 2;
  Mask pred(2, 3, 1);
  pred.at(0, 0) = pred.at(0, 1) = pred.at(0, 2) = 1;
  EXPECT_DOUBLE_EQ(*fnbgr(truth, pred, WearClass::material), 0.25);
  EXPECT_FALSE(fnbgr(truth, pred, WearClass::abrasive));
  EXPECT_EQ(*fnbgr(truth, collapse_to_binary(truth), WearClass::material), 0.0);
}

TEST(Evaluate, OracleAndBackgroundModels) {
  Mask truth(4, 4, 1);
  truth.at(1, 1) = 1;
  truth.at(2, 2) = 2;
  const std::vector<Tile> tiles{tile_with(truth)};

  auto oracle = [](const Image& t) {
    ProbabilityMap p(t.height(), t.width(), 3);
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x) p.at(y, x, static_cast<int>(std::lround(t.at(y, x) * 2))) = 1.0f;
    return p;
  };
  const MetricReport r = evaluate_testset(oracle, tiles, Mode::multiclass);
  EXPECT_EQ(r.iou, 1.0);
  EXPECT_EQ(r.dice, 1.0);
  EXPECT_EQ(r.tpr, 1.0);
  EXPECT_EQ(r.tnr, 1.0);
  EXPECT_EQ(*r.fnbgr_a, 0.0);
  EXPECT_EQ(*r.fnbgr_m, 0.0);

  auto background = [](const Image& t) { return ProbabilityMap(t.height(), t.width(), 1, 0.1f); };
  const MetricReport b = evaluate_testset(background, tiles, Mode::binary);
  EXPECT_EQ(b.tpr, 0.0);
  EXPECT_EQ(*b.fnbgr_a, 1.0);
  EXPECT_EQ(*b.fnbgr_m, 1.0);

  EXPECT_THROW(evaluate_testset(background, {}, Mode::binary), std::invalid_argument);
}

TEST(Evaluate, AveragesPerTile) {
  MetricReport a, b;
  a.iou = 0.8;
  b.iou = 0.6;
  a.fnbgr_m = 0.5;
  const std::vector<MetricReport> reports{a, b};
  const MetricReport m = average_reports(reports);
  EXPECT_NEAR(m.iou, 0.7, 1e-15);
  EXPECT_EQ(*m.fnbgr_m, 0.5);
  EXPECT_FALSE(m.fnbgr_a);
  EXPECT_EQ(m.tiles, 2u);
}

TEST(Evaluate, MulticlassEqualsItsBinaryCollapse) {
  std::mt19937 rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    Mask truth(5, 5, 1), pred(5, 5, 1);
    for (auto& v : truth.values()) v = rng() % 3;
    for (auto& v : pred.values()) v = rng() % 3;
    const MetricReport m = evaluate_prediction(truth, pred, Mode::multiclass);
    const MetricReport b = evaluate_prediction(truth, collapse_to_binary(pred), Mode::binary);
    EXPECT_EQ(m.iou, b.iou);
    EXPECT_EQ(m.dice, b.dice);
    EXPECT_EQ(m.tpr, b.tpr);
    EXPECT_EQ(m.tnr, b.tnr);
    EXPECT_EQ(m.fnbgr_a, b.fnbgr_a);
    EXPECT_EQ(m.fnbgr_m, b.fnbgr_m);
  }
}

TEST(Summaries, Quantiles) {
  const auto m = median_iqr({1, 2, 3, 4, 5});
  EXPECT_EQ(m.median, 3.0);
  EXPECT_EQ(m.iqr, 2.0);
  EXPECT_DOUBLE_EQ(median_iqr({0.88, 0.89, 0.888, 0.886, 0.885}).median, 0.886);
  EXPECT_EQ(median_iqr({0.7, 0.7, 0.7}).iqr, 0.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.25), 1.75);
}

TEST(Summaries, Folds) {
  std::vector<MetricReport> reports(5);
  const double ious[] = {0.8, 0.82, 0.84, 0.86, 0.88};
  for (int i = 0; i < 5; ++i) reports[i].iou = ious[i];
  reports[0].fnbgr_a = 0.1;
  reports[1].fnbgr_a = 0.3;
  const FoldSummary s = summarize_folds(reports);
  EXPECT_DOUBLE_EQ(s.iou.median, 0.84);
  EXPECT_NEAR(s.iou.iqr, 0.04, 1e-12);
  ASSERT_TRUE(s.fnbgr_a);
  EXPECT_DOUBLE_EQ(s.fnbgr_a->median, 0.2);
  EXPECT_FALSE(s.fnbgr_m);
  EXPECT_THROW(summarize_folds(std::span(reports).first(1)), std::invalid_argument);
}
