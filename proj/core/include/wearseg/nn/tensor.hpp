#pragma once

#include <algorithm>
#include <cstddef>
#include <new>
#include <span>
#include <vector>

namespace wearseg::nn {

/// 64-byte aligned allocation. Vectorised kernels peel differently depending
/// on pointer alignment, so fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

/// NCHW float activation tensor.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  FloatBuffer data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) { resize(n_, c_, h_, w_); }

  void resize(int n_, int c_, int h_, int w_) {
    n = n_; c = c_; h = h_; w = w_;
    data.resize(static_cast<std::size_t>(n) * c * h * w);
  }
  void zero() { std::fill(data.begin(), data.end(), 0.0f); }
  void release() { data.clear(); data.shrink_to_fit(); n = c = h = w = 0; }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  float* sample(int i) { return data.data() + i * sample_size(); }
  const float* sample(int i) const { return data.data() + i * sample_size(); }
  float* channel(int i, int ch) { return sample(i) + ch * plane(); }
  const float* channel(int i, int ch) const { return sample(i) + ch * plane(); }
};

/// Trainable tensor with its gradient accumulator.
struct Parameter {
  FloatBuffer value;
  FloatBuffer grad;

  void resize(std::size_t n) {
    value.assign(n, 0.0f);
    grad.assign(n, 0.0f);
  }
  std::size_t size() const { return value.size(); }
};

}  // namespace wearseg::nn
