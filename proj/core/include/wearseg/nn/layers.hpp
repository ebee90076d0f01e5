#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "wearseg/nn/tensor.hpp"

namespace wearseg::nn {

/// Same-padded k x k convolution (k odd), stride 1, with bias.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel);

  void initialize(std::mt19937_64& rng);
  void forward(const Tensor& in, Tensor& out);
  /// Accumulates weight/bias gradients; writes the input gradient when `din` is set.
  void backward(const Tensor& in, const Tensor& dout, Tensor* din);

  Parameter weight;  // [out][in * k * k]
  Parameter bias;    // [out]
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

 private:
  int cin_ = 0, cout_ = 0, k_ = 1;
  FloatBuffer columns_;
};

/// 2x2 transposed convolution, stride 2.
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(int in_channels, int out_channels);

  void initialize(std::mt19937_64& rng);
  /// Writes into channels [channel_offset, channel_offset + out) of `out`,
  /// which must already be sized (N, >=out, 2H, 2W).
  void forward(const Tensor& in, Tensor& out, int channel_offset);
  void backward(const Tensor& in, const Tensor& dout, int channel_offset, Tensor& din);

  Parameter weight;  // [in][out * 4]
  Parameter bias;    // [out]

 private:
  int cin_ = 0, cout_ = 0;
  FloatBuffer buffer_;
};

/// Per-channel batch normalisation over N, H, W.
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, float momentum = 0.99f, float epsilon = 1e-3f);

  void initialize();
  /// In-place: `x` holds the pre-activation on entry and x_hat on return
  /// (training) or the normalised value (inference, running statistics).
  /// `out` receives gamma * x_hat + beta.
  void forward(Tensor& x, Tensor& out, bool training);
  /// `dout` is the gradient w.r.t. the affine output; `x_hat` is what forward
  /// left in `x`. Overwrites `dout` with the gradient w.r.t. the pre-activation.
  void backward(const Tensor& x_hat, Tensor& dout);

  Parameter gamma;
  Parameter beta;
  FloatBuffer running_mean;
  FloatBuffer running_var;

 private:
  int channels_ = 0;
  float momentum_ = 0.99f;
  float epsilon_ = 1e-3f;
  std::vector<float> inv_std_;
};

void relu_inplace(Tensor& t);
/// Zeroes gradient entries where the activation output is not positive.
void relu_backward(const Tensor& activation, Tensor& grad);

void maxpool2x2(const Tensor& in, Tensor& out);
/// Routes gradient to the arg-max of each window (first maximum wins); adds into `din`.
void maxpool2x2_backward(const Tensor& in, const Tensor& dout, Tensor& din);

}  // namespace wearseg::nn
