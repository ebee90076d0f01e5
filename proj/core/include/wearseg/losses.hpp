#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wearseg/mode.hpp"

namespace wearseg {

enum class LossKind { ce, fce, iou };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

struct LossSpec {
  LossKind kind = LossKind::iou;
  Mode mode = Mode::binary;
  double gamma = 2.0;
  /// Multiclass IoU weights; the defaults average to one.
  std::vector<double> class_weights = {0.2, 1.4, 1.4};
  /// Probability clamp for the logarithms.
  double epsilon = 1e-7;

  int channels() const { return head_channels(mode); }
  void validate() const;
};

/// Probabilities substituted for hard predictions.
struct SoftConfusion {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
};

// Layout for all functions below: `labels` holds one class index per pixel
// (0/1 for binary, 0..K-1 for multiclass); `probs` holds one value per pixel
// (binary, probability of wear) or K interleaved values per pixel.

/// Soft counts of class `k`. Binary probabilities are read as the class-1 channel.
SoftConfusion soft_confusion(std::span<const std::uint8_t> labels, std::span<const double> probs,
                             int channels, int k);

/// Mean over pixels of -sum_k y_k log p_k (binary: -y log p - (1-y) log(1-p)).
double cross_entropy(std::span<const std::uint8_t> labels, std::span<const double> probs, Mode mode,
                     double epsilon = 1e-7);

/// Cross entropy with each summand scaled by (1 - p_k)^gamma; gamma 0 is plain cross entropy.
double focal_cross_entropy(std::span<const std::uint8_t> labels, std::span<const double> probs,
                           double gamma, Mode mode, double epsilon = 1e-7);

/// 1 - TP / (TP + FP + FN); a zero denominator (no truth, no prediction) gives 0.
double iou_loss_binary(std::span<const std::uint8_t> labels, std::span<const double> probs);

/// 1 - (1/K) sum_k w_k IoU_k, with IoU_k := 1 when class k is absent from truth and prediction.
double iou_loss_multiclass(std::span<const std::uint8_t> labels, std::span<const double> probs,
                           std::span<const double> weights);

/// Loss of one tile.
double loss_value(const LossSpec& spec, std::span<const std::uint8_t> labels,
                  std::span<const double> probs);

struct LossAndGradient {
  double value = 0.0;
  std::vector<double> d_logits;  // same layout as the logits
};

/// Loss of a batch (per-tile loss averaged over tiles) and its gradient with
/// respect to the pre-activation logits. Tiles are consecutive blocks of
/// `pixels_per_tile` labels.
LossAndGradient loss_from_logits(const LossSpec& spec, std::span<const std::uint8_t> labels,
                                 std::span<const double> logits, std::size_t pixels_per_tile);

}  // namespace wearseg
