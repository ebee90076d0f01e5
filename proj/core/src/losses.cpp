#include "wearseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wearseg/activation.hpp"

namespace wearseg {
namespace {

void check_layout(std::span<const std::uint8_t> labels, std::span<const double> probs, int channels) {
  if (labels.size() * channels != probs.size()) {
    throw std::invalid_argument("loss: shape mismatch (" + std::to_string(labels.size()) +
                                " labels, " + std::to_string(probs.size()) + " probabilities, " +
                                std::to_string(channels) + " channels)");
  }
  if (labels.empty()) throw std::invalid_argument("loss: empty input");
}

// Probability that pixel i belongs to class k, and whether pixel i is of class k.
double prob_of(std::span<const double> probs, int channels, std::size_t i, int k) {
  if (channels == 1) return k == 1 ? probs[i] : 1.0 - probs[i];
  return probs[i * channels + k];
}

double clamp_prob(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

// Focal summand -(1-p)^g log p and its derivative in p, for the true-class probability p.
struct Term {
  double value;
  double slope;
};

Term focal_term(double p_raw, double gamma, double eps) {
  const double p = clamp_prob(p_raw, eps);
  const bool clamped = p != p_raw;
  const double q = 1.0 - p;
  const double factor = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
  const double value = -factor * std::log(p);
  if (clamped) return {value, 0.0};
  double slope = -factor / p;
  if (gamma != 0.0) slope += gamma * std::pow(q, gamma - 1.0) * std::log(p);
  return {value, slope};
}

// Loss of one tile and its gradient with respect to the probabilities.
double tile_loss(const LossSpec& spec, std::span<const std::uint8_t> labels,
                 std::span<const double> probs, std::span<double> d_probs) {
  const int channels = spec.channels();
  const std::size_t n = labels.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  if (spec.kind == LossKind::ce || spec.kind == LossKind::fce) {
    const double gamma = spec.kind == LossKind::ce ? 0.0 : spec.gamma;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (channels == 1) {
        // -y (1-p)^g log p - (1-y) p^g log(1-p): the focal term of the true class.
        const bool positive = labels[i] == 1;
        const Term t = focal_term(positive ? probs[i] : 1.0 - probs[i], gamma, spec.epsilon);
        total += t.value;
        d_probs[i] = (positive ? t.slope : -t.slope) * inv_n;
      } else {
        const int c = labels[i];
        for (int k = 0; k < channels; ++k) d_probs[i * channels + k] = 0.0;
        const Term t = focal_term(probs[i * channels + c], gamma, spec.epsilon);
        total += t.value;
        d_probs[i * channels + c] = t.slope * inv_n;
      }
    }
    return total * inv_n;
  }

  // IoU-based: soft counts per class, then d(TP/D)/dp = (y D - TP (1 - y)) / D^2.
  const int first_class = channels == 1 ? 1 : 0;
  const int n_classes = channels == 1 ? 1 : channels;
  double shortfall = 0.0, weight_sum = 0.0;
  std::fill(d_probs.begin(), d_probs.end(), 0.0);
  for (int k = first_class; k < first_class + n_classes; ++k) {
    const SoftConfusion sc = soft_confusion(labels, probs, channels, k);
    const double denom = sc.tp + sc.fp + sc.fn;
    const double w = channels == 1 ? 1.0 : spec.class_weights[k];
    weight_sum += w;
    if (denom == 0.0) continue;  // absent from truth and prediction: IoU 1
    shortfall += w * (1.0 - sc.tp / denom);
    const double scale = w / n_classes / (denom * denom);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = labels[i] == k ? 1.0 : 0.0;
      const double g = -scale * (y * denom - sc.tp * (1.0 - y));
      if (channels == 1) d_probs[i] += g;
      else d_probs[i * channels + k] += g;
    }
  }
  // 1 - sum(w IoU)/K == sum(w (1 - IoU))/K + (1 - sum(w)/K). The constant is
  // zero for weights averaging 1; snapping its rounding error keeps a perfect
  // prediction at exactly 0.
  double offset = 1.0 - weight_sum / n_classes;
  if (std::abs(offset) <= 4.0 * n_classes * std::numeric_limits<double>::epsilon()) offset = 0.0;
  return shortfall / n_classes + offset;
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::ce: return "ce";
    case LossKind::fce: return "fce";
    case LossKind::iou: return "iou";
  }
  return "iou";
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "ce") return LossKind::ce;
  if (text == "fce") return LossKind::fce;
  if (text == "iou") return LossKind::iou;
  throw std::invalid_argument("unknown loss '" + text + "' (ce|fce|iou)");
}

void LossSpec::validate() const {
  if (gamma < 0.0) throw std::invalid_argument("focal loss: gamma must be >= 0, got " + std::to_string(gamma));
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw std::invalid_argument("loss: epsilon must lie in (0, 0.5)");
  if (mode == Mode::multiclass && kind == LossKind::iou &&
      static_cast<int>(class_weights.size()) != channels()) {
    throw std::invalid_argument("IoU loss: " + std::to_string(class_weights.size()) +
                                " class weights given for " + std::to_string(channels()) + " classes");
  }
}

SoftConfusion soft_confusion(std::span<const std::uint8_t> labels, std::span<const double> probs,
                             int channels, int k) {
  check_layout(labels, probs, channels);
  SoftConfusion sc;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = prob_of(probs, channels, i, k);
    const double y = labels[i] == k ? 1.0 : 0.0;
    sc.tp += y * p;
    sc.fp += (1.0 - y) * p;
    sc.fn += y * (1.0 - p);
  }
  return sc;
}

double cross_entropy(std::span<const std::uint8_t> labels, std::span<const double> probs, Mode mode,
                     double epsilon) {
  return focal_cross_entropy(labels, probs, 0.0, mode, epsilon);
}

double focal_cross_entropy(std::span<const std::uint8_t> labels, std::span<const double> probs,
                           double gamma, Mode mode, double epsilon) {
  LossSpec spec{LossKind::fce, mode, gamma, {}, epsilon};
  spec.validate();
  check_layout(labels, probs, spec.channels());
  std::vector<double> scratch(probs.size());
  return tile_loss(spec, labels, probs, scratch);
}

double iou_loss_binary(std::span<const std::uint8_t> labels, std::span<const double> probs) {
  check_layout(labels, probs, 1);
  LossSpec spec{LossKind::iou, Mode::binary};
  std::vector<double> scratch(probs.size());
  return tile_loss(spec, labels, probs, scratch);
}

double iou_loss_multiclass(std::span<const std::uint8_t> labels, std::span<const double> probs,
                           std::span<const double> weights) {
  LossSpec spec{LossKind::iou, Mode::multiclass};
  spec.class_weights.assign(weights.begin(), weights.end());
  spec.validate();
  check_layout(labels, probs, spec.channels());
  std::vector<double> scratch(probs.size());
  return tile_loss(spec, labels, probs, scratch);
}

double loss_value(const LossSpec& spec, std::span<const std::uint8_t> labels,
                  std::span<const double> probs) {
  spec.validate();
  check_layout(labels, probs, spec.channels());
  std::vector<double> scratch(probs.size());
  return tile_loss(spec, labels, probs, scratch);
}

LossAndGradient loss_from_logits(const LossSpec& spec, std::span<const std::uint8_t> labels,
                                 std::span<const double> logits, std::size_t pixels_per_tile) {
  spec.validate();
  const int channels = spec.channels();
  check_layout(labels, logits, channels);
  if (pixels_per_tile == 0 || labels.size() % pixels_per_tile != 0) {
    throw std::invalid_argument("loss: label count is not a whole number of tiles");
  }
  for (auto l : labels) {
    if (l >= (channels == 1 ? 2 : channels)) {
      throw std::invalid_argument("loss: label " + std::to_string(l) + " out of range");
    }
  }
  const std::size_t n_tiles = labels.size() / pixels_per_tile;
  const std::size_t tile_values = pixels_per_tile * channels;

  std::vector<double> probs(logits.size());
  if (channels == 1) {
    for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = sigmoid(logits[i]);
  } else {
    for (std::size_t p = 0; p < labels.size(); ++p) {
      softmax<double>(logits.subspan(p * channels, channels),
                      std::span<double>(probs).subspan(p * channels, channels));
    }
  }

  LossAndGradient out;
  out.d_logits.assign(logits.size(), 0.0);
  std::vector<double> d_probs(tile_values);
  for (std::size_t t = 0; t < n_tiles; ++t) {
    const auto tile_labels = labels.subspan(t * pixels_per_tile, pixels_per_tile);
    const auto tile_probs = std::span<const double>(probs).subspan(t * tile_values, tile_values);
    out.value += tile_loss(spec, tile_labels, tile_probs, d_probs);
    double* dx = out.d_logits.data() + t * tile_values;
    const double scale = 1.0 / static_cast<double>(n_tiles);
    if (channels == 1) {
      for (std::size_t i = 0; i < tile_values; ++i) {
        const double p = tile_probs[i];
        dx[i] = scale * d_probs[i] * p * (1.0 - p);
      }
    } else {
      for (std::size_t p = 0; p < pixels_per_tile; ++p) {
        const double* pp = tile_probs.data() + p * channels;
        const double* gp = d_probs.data() + p * channels;
        double dot = 0.0;
        for (int k = 0; k < channels; ++k) dot += pp[k] * gp[k];
        for (int k = 0; k < channels; ++k) dx[p * channels + k] = scale * pp[k] * (gp[k] - dot);
      }
    }
  }
  out.value /= static_cast<double>(n_tiles);
  return out;
}

}  // namespace wearseg
