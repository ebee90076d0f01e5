#include "wearseg/nn/layers.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include <Eigen/Core>

namespace wearseg::nn {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// columns[(ci*k*k + ky*k + kx) * HW + y*W + x] = in[ci][y + ky - p][x + kx - p] (zero outside).
void im2col(const float* in, int channels, int H, int W, int k, float* columns) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int ci = 0; ci < channels; ++ci) {
    const float* plane = in + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = columns + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          float* drow = dst + static_cast<std::size_t>(y) * W;
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= H) {
            std::memset(drow, 0, sizeof(float) * W);
            continue;
          }
          const float* srow = plane + static_cast<std::size_t>(sy) * W;
          for (int x = 0; x < x_lo; ++x) drow[x] = 0.0f;
          std::memcpy(drow + x_lo, srow + x_lo + dx, sizeof(float) * (x_hi - x_lo));
          for (int x = x_hi; x < W; ++x) drow[x] = 0.0f;
        }
      }
    }
  }
}

void col2im_add(const float* columns, int channels, int H, int W, int k, float* din) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int ci = 0; ci < channels; ++ci) {
    float* plane = din + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = columns + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(W, W - dx);
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= H) continue;
          const float* srow = src + static_cast<std::size_t>(y) * W;
          float* drow = plane + static_cast<std::size_t>(sy) * W + dx;
          for (int x = x_lo; x < x_hi; ++x) drow[x] += srow[x];
        }
      }
    }
  }
}

void fill_normal(FloatBuffer& v, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (float& x : v) x = static_cast<float>(dist(rng));
}

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel)
    : cin_(in_channels), cout_(out_channels), k_(kernel) {
  if (kernel % 2 == 0) throw std::invalid_argument("Conv2d: kernel size must be odd");
  weight.resize(static_cast<std::size_t>(cout_) * cin_ * k_ * k_);
  bias.resize(cout_);
}

void Conv2d::initialize(std::mt19937_64& rng) {
  // He initialisation for ReLU layers; the 1x1 head uses the fan-in variance without the gain.
  const double fan_in = static_cast<double>(cin_) * k_ * k_;
  fill_normal(weight.value, std::sqrt((k_ == 1 ? 1.0 : 2.0) / fan_in), rng);
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

void Conv2d::forward(const Tensor& in, Tensor& out) {
  if (in.c != cin_) throw std::invalid_argument("Conv2d: channel mismatch");
  out.resize(in.n, cout_, in.h, in.w);
  const int hw = static_cast<int>(in.plane());
  const int K = cin_ * k_ * k_;
  ConstMatMap Wm(weight.value.data(), cout_, K);
  for (int i = 0; i < in.n; ++i) {
    const float* cols = in.sample(i);
    if (k_ != 1) {
      columns_.resize(static_cast<std::size_t>(K) * hw);
      im2col(in.sample(i), cin_, in.h, in.w, k_, columns_.data());
      cols = columns_.data();
    }
    MatMap Y(out.sample(i), cout_, hw);
    Y.noalias() = Wm * ConstMatMap(cols, K, hw);
    for (int co = 0; co < cout_; ++co) Y.row(co).array() += bias.value[co];
  }
}

void Conv2d::backward(const Tensor& in, const Tensor& dout, Tensor* din) {
  const int hw = static_cast<int>(in.plane());
  const int K = cin_ * k_ * k_;
  ConstMatMap Wm(weight.value.data(), cout_, K);
  MatMap dW(weight.grad.data(), cout_, K);
  if (din) {
    din->resize(in.n, in.c, in.h, in.w);
    din->zero();
  }
  FloatBuffer dcols;
  for (int i = 0; i < in.n; ++i) {
    ConstMatMap dY(dout.sample(i), cout_, hw);
    const float* cols = in.sample(i);
    if (k_ != 1) {
      columns_.resize(static_cast<std::size_t>(K) * hw);
      im2col(in.sample(i), cin_, in.h, in.w, k_, columns_.data());
      cols = columns_.data();
    }
    dW.noalias() += dY * ConstMatMap(cols, K, hw).transpose();
    for (int co = 0; co < cout_; ++co) bias.grad[co] += dY.row(co).sum();
    if (!din) continue;
    if (k_ == 1) {
      MatMap dX(din->sample(i), cin_, hw);
      dX.noalias() = Wm.transpose() * dY;
    } else {
      dcols.resize(static_cast<std::size_t>(K) * hw);
      MatMap dC(dcols.data(), K, hw);
      dC.noalias() = Wm.transpose() * dY;
      col2im_add(dcols.data(), cin_, in.h, in.w, k_, din->sample(i));
    }
  }
}

ConvTranspose2x2::ConvTranspose2x2(int in_channels, int out_channels)
    : cin_(in_channels), cout_(out_channels) {
  weight.resize(static_cast<std::size_t>(cin_) * cout_ * 4);
  bias.resize(cout_);
}

void ConvTranspose2x2::initialize(std::mt19937_64& rng) {
  fill_normal(weight.value, std::sqrt(2.0 / cin_), rng);
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

void ConvTranspose2x2::forward(const Tensor& in, Tensor& out, int channel_offset) {
  if (in.c != cin_) throw std::invalid_argument("ConvTranspose2x2: channel mismatch");
  if (out.n != in.n || out.h != 2 * in.h || out.w != 2 * in.w || out.c < channel_offset + cout_) {
    throw std::invalid_argument("ConvTranspose2x2: output tensor not sized");
  }
  const int hw = static_cast<int>(in.plane());
  ConstMatMap Wm(weight.value.data(), cin_, cout_ * 4);
  buffer_.resize(static_cast<std::size_t>(cout_) * 4 * hw);
  for (int i = 0; i < in.n; ++i) {
    MatMap Y(buffer_.data(), cout_ * 4, hw);
    Y.noalias() = Wm.transpose() * ConstMatMap(in.sample(i), cin_, hw);
    for (int co = 0; co < cout_; ++co) {
      float* dst = out.channel(i, channel_offset + co);
      const float b = bias.value[co];
      for (int ab = 0; ab < 4; ++ab) {
        const int a = ab / 2, bb = ab % 2;
        const float* src = buffer_.data() + (static_cast<std::size_t>(co) * 4 + ab) * hw;
        for (int y = 0; y < in.h; ++y) {
          float* drow = dst + static_cast<std::size_t>(2 * y + a) * out.w + bb;
          const float* srow = src + static_cast<std::size_t>(y) * in.w;
          for (int x = 0; x < in.w; ++x) drow[2 * x] = srow[x] + b;
        }
      }
    }
  }
}

void ConvTranspose2x2::backward(const Tensor& in, const Tensor& dout, int channel_offset,
                                Tensor& din) {
  const int hw = static_cast<int>(in.plane());
  ConstMatMap Wm(weight.value.data(), cin_, cout_ * 4);
  MatMap dW(weight.grad.data(), cin_, cout_ * 4);
  din.resize(in.n, in.c, in.h, in.w);
  buffer_.resize(static_cast<std::size_t>(cout_) * 4 * hw);
  for (int i = 0; i < in.n; ++i) {
    for (int co = 0; co < cout_; ++co) {
      const float* src = dout.channel(i, channel_offset + co);
      double bsum = 0.0;
      for (int ab = 0; ab < 4; ++ab) {
        const int a = ab / 2, bb = ab % 2;
        float* dst = buffer_.data() + (static_cast<std::size_t>(co) * 4 + ab) * hw;
        for (int y = 0; y < in.h; ++y) {
          const float* srow = src + static_cast<std::size_t>(2 * y + a) * dout.w + bb;
          float* drow = dst + static_cast<std::size_t>(y) * in.w;
          for (int x = 0; x < in.w; ++x) {
            drow[x] = srow[2 * x];
            bsum += srow[2 * x];
          }
        }
      }
      bias.grad[co] += static_cast<float>(bsum);
    }
    ConstMatMap G(buffer_.data(), cout_ * 4, hw);
    ConstMatMap X(in.sample(i), cin_, hw);
    dW.noalias() += X * G.transpose();
    MatMap dX(din.sample(i), cin_, hw);
    dX.noalias() = Wm * G;
  }
}

BatchNorm2d::BatchNorm2d(int channels, float momentum, float epsilon)
    : channels_(channels), momentum_(momentum), epsilon_(epsilon) {
  gamma.resize(channels);
  beta.resize(channels);
  initialize();
}

void BatchNorm2d::initialize() {
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0f);
  std::fill(beta.value.begin(), beta.value.end(), 0.0f);
  running_mean.assign(channels_, 0.0f);
  running_var.assign(channels_, 1.0f);
}

void BatchNorm2d::forward(Tensor& x, Tensor& out, bool training) {
  if (x.c != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  out.resize(x.n, x.c, x.h, x.w);
  const std::size_t hw = x.plane();
  inv_std_.resize(channels_);
  for (int ch = 0; ch < channels_; ++ch) {
    float mean = running_mean[ch];
    float var = running_var[ch];
    if (training) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const float* p = x.channel(i, ch);
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
      }
      const double m = static_cast<double>(x.n) * hw;
      const double mu = s / m;
      for (int i = 0; i < x.n; ++i) {
        const float* p = x.channel(i, ch);
        for (std::size_t j = 0; j < hw; ++j) {
          const double d = p[j] - mu;
          s2 += d * d;
        }
      }
      mean = static_cast<float>(mu);
      var = static_cast<float>(s2 / m);
      running_mean[ch] = momentum_ * running_mean[ch] + (1.0f - momentum_) * mean;
      running_var[ch] = momentum_ * running_var[ch] + (1.0f - momentum_) * var;
    }
    const float inv = 1.0f / std::sqrt(var + epsilon_);
    inv_std_[ch] = inv;
    const float g = gamma.value[ch], b = beta.value[ch];
    for (int i = 0; i < x.n; ++i) {
      float* p = x.channel(i, ch);
      float* o = out.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) {
        p[j] = (p[j] - mean) * inv;
        o[j] = g * p[j] + b;
      }
    }
  }
}

void BatchNorm2d::backward(const Tensor& x_hat, Tensor& dout) {
  const std::size_t hw = x_hat.plane();
  const double m = static_cast<double>(x_hat.n) * hw;
  for (int ch = 0; ch < channels_; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < x_hat.n; ++i) {
      const float* xh = x_hat.channel(i, ch);
      const float* dy = dout.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) {
        sum_dy += dy[j];
        sum_dy_xhat += dy[j] * xh[j];
      }
    }
    gamma.grad[ch] += static_cast<float>(sum_dy_xhat);
    beta.grad[ch] += static_cast<float>(sum_dy);
    const float g = gamma.value[ch];
    const float scale = g * inv_std_[ch];
    const float mean_dy = static_cast<float>(sum_dy / m);
    const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / m);
    for (int i = 0; i < x_hat.n; ++i) {
      const float* xh = x_hat.channel(i, ch);
      float* dy = dout.channel(i, ch);
      for (std::size_t j = 0; j < hw; ++j) dy[j] = scale * (dy[j] - mean_dy - xh[j] * mean_dy_xhat);
    }
  }
}

void relu_inplace(Tensor& t) {
  for (float& v : t.data) v = v > 0.0f ? v : 0.0f;
}

void relu_backward(const Tensor& activation, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(activation.data[i] > 0.0f)) grad.data[i] = 0.0f;
  }
}

void maxpool2x2(const Tensor& in, Tensor& out) {
  if (in.h % 2 != 0 || in.w % 2 != 0) throw std::invalid_argument("maxpool2x2: odd spatial size");
  out.resize(in.n, in.c, in.h / 2, in.w / 2);
  for (int i = 0; i < in.n; ++i) {
    for (int ch = 0; ch < in.c; ++ch) {
      const float* src = in.channel(i, ch);
      float* dst = out.channel(i, ch);
      for (int y = 0; y < out.h; ++y) {
        const float* r0 = src + static_cast<std::size_t>(2 * y) * in.w;
        const float* r1 = r0 + in.w;
        for (int x = 0; x < out.w; ++x) {
          dst[static_cast<std::size_t>(y) * out.w + x] =
              std::max(std::max(r0[2 * x], r0[2 * x + 1]), std::max(r1[2 * x], r1[2 * x + 1]));
        }
      }
    }
  }
}

void maxpool2x2_backward(const Tensor& in, const Tensor& dout, Tensor& din) {
  for (int i = 0; i < in.n; ++i) {
    for (int ch = 0; ch < in.c; ++ch) {
      const float* src = in.channel(i, ch);
      const float* g = dout.channel(i, ch);
      float* dst = din.channel(i, ch);
      for (int y = 0; y < dout.h; ++y) {
        for (int x = 0; x < dout.w; ++x) {
          const std::size_t i00 = static_cast<std::size_t>(2 * y) * in.w + 2 * x;
          std::size_t best = i00;
          for (std::size_t cand : {i00 + 1, i00 + in.w, i00 + in.w + 1}) {
            if (src[cand] > src[best]) best = cand;
          }
          dst[best] += g[static_cast<std::size_t>(y) * dout.w + x];
        }
      }
    }
  }
}

}  // namespace wearseg::nn
