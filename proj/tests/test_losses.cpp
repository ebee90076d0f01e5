#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles/loss_oracle.hpp"
#include "wearseg/activation.hpp"
#include "wearseg/losses.hpp"

using namespace wearseg;

namespace {

using Labels = std::vector<std::uint8_t>;
using Probs = std::vector<double>;
const std::vector<double> kWeights{0.2, 1.4, 1.4};

double oracle_value(const LossSpec& spec, const Labels& y, const Probs& p) {
  const int K = spec.channels();
  switch (spec.kind) {
    case LossKind::ce: return static_cast<double>(oracle::cross_entropy(y, p, K));
    case LossKind::fce: return static_cast<double>(oracle::focal(y, p, K, spec.gamma));
    case LossKind::iou:
      return static_cast<double>(K == 1 ? oracle::iou_binary(y, p) : oracle::iou_multiclass(y, p, spec.class_weights));
  }
  return 0.0;
}

void random_case(std::mt19937_64& rng, int K, std::size_t n, Labels& y, Probs& p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  y.assign(n, 0);
  p.assign(n * K, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<std::uint8_t>(rng() % (K == 1 ? 2 : K));
    if (K == 1) {
      p[i] = u(rng);
    } else {
      double s = 0;
      for (int k = 0; k < K; ++k) s += p[i * K + k] = u(rng) + 1e-3;
      for (int k = 0; k < K; ++k) p[i * K + k] /= s;
    }
  }
}

}  // namespace

TEST(CrossEntropy, FrozenValues) {
  EXPECT_NEAR(cross_entropy(Labels{1}, Probs{0.5}, Mode::binary), 0.6931471805599453, 1e-12);
  EXPECT_NEAR(cross_entropy(Labels{0}, Probs{0.9}, Mode::binary), 2.302585092994046, 1e-12);
  EXPECT_NEAR(cross_entropy(Labels{1}, Probs{1.0}, Mode::binary), 0.0, 2e-7);
  EXPECT_NEAR(cross_entropy(Labels{2}, Probs{0.25, 0.25, 0.5}, Mode::multiclass), 0.6931471805599453, 1e-12);
}

TEST(CrossEntropy, ShapeMismatch) {
  EXPECT_THROW(cross_entropy(Labels{1, 0}, Probs{0.5}, Mode::binary), std::invalid_argument);
  EXPECT_THROW(cross_entropy(Labels{1}, Probs{0.5, 0.5}, Mode::multiclass), std::invalid_argument);
}

TEST(FocalCrossEntropy, FrozenValues) {
  EXPECT_NEAR(focal_cross_entropy(Labels{1}, Probs{0.5}, 2.0, Mode::binary), 0.1732867951399863, 1e-12);
  EXPECT_NEAR(focal_cross_entropy(Labels{1}, Probs{1.0 - 1e-12}, 2.0, Mode::binary), 0.0, 1e-12);
  EXPECT_THROW(focal_cross_entropy(Labels{1}, Probs{0.5}, -1.0, Mode::binary), std::invalid_argument);
}

TEST(FocalCrossEntropy, GammaZeroIsCrossEntropyAndFocalIsSmaller) {
  std::mt19937_64 rng(3);
  Labels y;
  Probs p;
  for (int K : {1, 3}) {
    const Mode mode = K == 1 ? Mode::binary : Mode::multiclass;
    for (int rep = 0; rep < 50; ++rep) {
      random_case(rng, K, 16, y, p);
      const double ce = cross_entropy(y, p, mode);
      EXPECT_NEAR(focal_cross_entropy(y, p, 0.0, mode), ce, 1e-7);
      EXPECT_LE(focal_cross_entropy(y, p, 2.0, mode), ce);
      EXPECT_LE(focal_cross_entropy(y, p, 0.5, mode), ce);
    }
  }
}

TEST(IoULossBinary, Examples) {
  EXPECT_NEAR(iou_loss_binary(Labels{1, 0}, Probs{0.8, 0.4}), 0.4285714285714286, 1e-12);
  EXPECT_EQ(iou_loss_binary(Labels{1, 0, 1}, Probs{1.0, 0.0, 1.0}), 0.0);
  EXPECT_EQ(iou_loss_binary(Labels{1, 0, 0}, Probs{0.0, 1.0, 1.0}), 1.0);
  EXPECT_EQ(iou_loss_binary(Labels{0, 0}, Probs{0.0, 0.0}), 0.0);
}

TEST(IoULossMulticlass, Examples) {
  // Perfect one-hot prediction: the default weights average to one.
  const Labels y{0, 1, 2, 1};
  Probs onehot(12, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) onehot[i * 3 + y[i]] = 1.0;
  EXPECT_EQ(iou_loss_multiclass(y, onehot, kWeights), 0.0);

  // Uniform prediction on an all-background tile: IoU_0 = 1/3, others 0.
  const Labels bg(10, 0);
  const Probs uniform(30, 1.0 / 3.0);
  EXPECT_NEAR(iou_loss_multiclass(bg, uniform, kWeights), 0.9777777777777778, 1e-12);

  EXPECT_THROW(iou_loss_multiclass(y, onehot, std::vector<double>{1.0, 1.0}), std::invalid_argument);
}

TEST(IoULossMulticlass, AbsentClassCountsAsPerfect) {
  // Class 1 absent from truth and prediction, the rest exact: loss 0.
  const Labels y{0, 2, 2, 0};
  Probs p(12, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) p[i * 3 + y[i]] = 1.0;
  EXPECT_EQ(iou_loss_multiclass(y, p, kWeights), 0.0);

  // Hand expansion: IoU_0 = 0.9/1.2, IoU_1 = 0.8/1.1, IoU_2 := 1, loss = 19/132.
  const Labels y2{0, 1};
  const Probs p2{0.9, 0.1, 0.0, 0.2, 0.8, 0.0};
  EXPECT_NEAR(iou_loss_multiclass(y2, p2, kWeights), 19.0 / 132.0, 1e-12);
}

TEST(IoULossMulticlass, PerfectPredictionExactlyZeroOnRandomTiles) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> label(0, 2);
  for (int rep = 0; rep < 200; ++rep) {
    Labels y(1 + rep % 50);
    for (auto& v : y) v = static_cast<std::uint8_t>(label(rng));
    Probs p(y.size() * 3, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) p[i * 3 + y[i]] = 1.0;
    ASSERT_EQ(iou_loss_multiclass(y, p, kWeights), 0.0) << rep;
  }
}

TEST(IoULossMulticlass, WeightsNotAveragingOneKeepOffset) {
  // Perfect prediction: loss = 1 - (0.5 + 0.5 + 0.5)/3 = 0.5.
  const Labels y{0, 1, 2};
  Probs p(9, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) p[i * 3 + y[i]] = 1.0;
  EXPECT_NEAR(iou_loss_multiclass(y, p, std::vector<double>{0.5, 0.5, 0.5}), 0.5, 1e-15);
}

TEST(IoULoss, BinaryMatchesTwoClassFormWhenClassesAreSymmetric) {
  // Background and wear IoU coincide, so the two-class mean equals the wear IoU.
  const Labels y{1, 0};
  const Probs p{0.8, 0.2};
  const Probs two_class{0.2, 0.8, 0.8, 0.2};
  EXPECT_NEAR(iou_loss_binary(y, p), static_cast<double>(oracle::iou_multiclass(y, two_class, {1.0, 1.0})), 1e-15);
}

TEST(Losses, MatchOracleOnRandomInputs) {
  std::mt19937_64 rng(11);
  Labels y;
  Probs p;
  for (Mode mode : {Mode::binary, Mode::multiclass}) {
    for (LossKind kind : {LossKind::ce, LossKind::fce, LossKind::iou}) {
      LossSpec spec{kind, mode};
      for (int rep = 0; rep < 40; ++rep) {
        random_case(rng, spec.channels(), 1 + rng() % 40, y, p);
        EXPECT_NEAR(loss_value(spec, y, p), oracle_value(spec, y, p), 1e-9);
      }
    }
  }
}

TEST(Losses, NonNegativeAndBounded) {
  std::mt19937_64 rng(12);
  Labels y;
  Probs p;
  for (Mode mode : {Mode::binary, Mode::multiclass}) {
    for (LossKind kind : {LossKind::ce, LossKind::fce, LossKind::iou}) {
      LossSpec spec{kind, mode};
      for (int rep = 0; rep < 30; ++rep) {
        random_case(rng, spec.channels(), 12, y, p);
        const double v = loss_value(spec, y, p);
        EXPECT_GE(v, 0.0);
        if (kind == LossKind::iou) EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Losses, PermutationInvariant) {
  std::mt19937_64 rng(13);
  Labels y;
  Probs p;
  for (Mode mode : {Mode::binary, Mode::multiclass}) {
    for (LossKind kind : {LossKind::ce, LossKind::fce, LossKind::iou}) {
      LossSpec spec{kind, mode};
      const int K = spec.channels();
      random_case(rng, K, 25, y, p);
      std::vector<std::size_t> perm(y.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Labels y2(y.size());
      Probs p2(p.size());
      for (std::size_t i = 0; i < perm.size(); ++i) {
        y2[i] = y[perm[i]];
        for (int k = 0; k < K; ++k) p2[i * K + k] = p[perm[i] * K + k];
      }
      EXPECT_NEAR(loss_value(spec, y, p), loss_value(spec, y2, p2), 1e-12);
    }
  }
}

TEST(Losses, BatchLossIsMeanOfTileLosses) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 2.0);
  for (Mode mode : {Mode::binary, Mode::multiclass}) {
    for (LossKind kind : {LossKind::ce, LossKind::fce, LossKind::iou}) {
      LossSpec spec{kind, mode};
      const int K = spec.channels();
      const std::size_t ppt = 9;
      Labels y(3 * ppt);
      Probs logits(y.size() * K);
      for (auto& v : y) v = static_cast<std::uint8_t>(rng() % (K == 1 ? 2 : K));
      for (auto& v : logits) v = n(rng);
      Probs probs(logits.size());
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (K == 1) probs[i] = sigmoid(logits[i]);
        else softmax<double>({&logits[i * K], 3}, {&probs[i * K], 3});
      }
      double mean = 0;
      for (int t = 0; t < 3; ++t) {
        mean += loss_value(spec, std::span(y).subspan(t * ppt, ppt), std::span(probs).subspan(t * ppt * K, ppt * K));
      }
      EXPECT_NEAR(loss_from_logits(spec, y, logits, ppt).value, mean / 3, 1e-12);
    }
  }
}

TEST(Losses, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n(0.0, 1.5);
  const double h = 1e-4;
  for (Mode mode : {Mode::binary, Mode::multiclass}) {
    for (LossKind kind : {LossKind::ce, LossKind::fce, LossKind::iou}) {
      LossSpec spec{kind, mode};
      const int K = spec.channels();
      for (int rep = 0; rep < 5; ++rep) {
        Labels y(16);
        Probs logits(16 * K);
        for (auto& v : y) v = static_cast<std::uint8_t>(rng() % (K == 1 ? 2 : K));
        for (auto& v : logits) v = n(rng);
        const auto analytic = loss_from_logits(spec, y, logits, 16).d_logits;
        double diff2 = 0, a2 = 0, f2 = 0;
        for (std::size_t j = 0; j < logits.size(); ++j) {
          Probs plus = logits, minus = logits;
          plus[j] += h;
          minus[j] -= h;
          const double fd = (loss_from_logits(spec, y, plus, 16).value - loss_from_logits(spec, y, minus, 16).value) / (2 * h);
          diff2 += (fd - analytic[j]) * (fd - analytic[j]);
          a2 += analytic[j] * analytic[j];
          f2 += fd * fd;
        }
        EXPECT_LT(std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(f2), 1e-12}), 1e-4)
            << to_string(kind) << " " << to_string(mode);
      }
    }
  }
}

TEST(Losses, SpecValidation) {
  LossSpec s;
  s.mode = Mode::multiclass;
  s.class_weights = {1.0, 1.0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.class_weights = kWeights;
  s.gamma = -0.1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_EQ(parse_loss_kind("fce"), LossKind::fce);
  EXPECT_THROW(parse_loss_kind("mcc"), std::invalid_argument);
}
