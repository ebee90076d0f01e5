#pragma once

#include <cmath>
#include <span>

#include "wearseg/mode.hpp"
#include "wearseg/raster.hpp"

namespace wearseg {

/// 1 / (1 + exp(-x)) without overflow for large |x|.
template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// exp(x_j) / sum_k exp(x_k), shifted by max(x).
template <class T>
void softmax(std::span<const T> logits, std::span<T> out) {
  T m = logits[0];
  for (T v : logits) m = v > m ? v : m;
  T sum = T(0);
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(logits[j] - m);
    sum += out[j];
  }
  for (auto& v : out) v /= sum;
}

/// Sigmoid per value (binary) or softmax over channels per pixel (multiclass).
ProbabilityMap activate(const Raster<float>& logits, Mode mode);

/// Binary: 1 iff p >= 0.5. Multiclass: arg-max channel, ties to the lowest index.
Mask predict_classes(const ProbabilityMap& probs, Mode mode);

}  // namespace wearseg
