#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "test_support.hpp"
#include "wearseg/activation.hpp"
#include "wearseg/unet.hpp"

using namespace wearseg;

namespace {

nn::Tensor random_input(int n, int c, int edge, std::uint64_t seed) {
  nn::Tensor t(n, c, edge, edge);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : t.data) v = u(rng);
  return t;
}

ModelConfig small(Mode mode, bool bn, int edge = 32, int channels = 1) {
  ModelConfig c;
  c.mode = mode;
  c.use_batch_norm = bn;
  c.input_edge = edge;
  c.channels_in = channels;
  c.base_filters = 4;
  return c;
}

}  // namespace

TEST(UNetShape, LogitsMatchInputSize) {
  for (Mode mode : {Mode::binary, Mode::multiclass}) {
    UNet net(small(mode, true, 32, 3));
    net.initialize(1);
    const auto& out = net.forward(random_input(2, 3, 32, 5), false);
    EXPECT_EQ(out.n, 2);
    EXPECT_EQ(out.c, head_channels(mode));
    EXPECT_EQ(out.h, 32);
    EXPECT_EQ(out.w, 32);
  }
}

TEST(UNetShape, FullyConvolutional) {
  UNet net(small(Mode::binary, false, 32));
  net.initialize(1);
  for (int edge : {16, 48, 64}) {
    const auto& out = net.forward(random_input(1, 1, edge, 2), false);
    EXPECT_EQ(out.h, edge);
    EXPECT_EQ(out.w, edge);
  }
  EXPECT_THROW(net.forward(random_input(1, 1, 40, 2), false), std::invalid_argument);
  EXPECT_THROW(net.forward(random_input(1, 3, 32, 2), false), std::invalid_argument);
}

TEST(UNetShape, RejectsInvalidConfig) {
  ModelConfig c;
  c.input_edge = 500;
  EXPECT_THROW(UNet{c}, std::invalid_argument);
  c.input_edge = 256;
  c.channels_in = 2;
  EXPECT_THROW(UNet{c}, std::invalid_argument);
  c.channels_in = 3;
  c.base_filters = 0;
  EXPECT_THROW(UNet{c}, std::invalid_argument);
}

TEST(UNetParameters, CountsMatchArchitecture) {
  ModelConfig full;
  full.channels_in = 3;
  EXPECT_EQ(UNet(full).parameter_count(), 31031745u);
  full.mode = Mode::multiclass;
  full.use_batch_norm = true;
  UNet with_bn(full);
  EXPECT_EQ(with_bn.convolution_parameter_count(), 31031875u);
  EXPECT_EQ(with_bn.normalization_parameter_count(), 23552u);

  UNet tiny(small(Mode::binary, true));
  EXPECT_EQ(tiny.convolution_parameter_count(), 121653u);
  EXPECT_EQ(tiny.normalization_parameter_count(), 1472u);
}

TEST(UNetParameters, BatchNormKeepsConvolutionsIdentical) {
  for (Mode mode : {Mode::binary, Mode::multiclass}) {
    EXPECT_EQ(UNet(small(mode, true)).convolution_parameter_count(),
              UNet(small(mode, false)).convolution_parameter_count());
    EXPECT_EQ(UNet(small(mode, false)).normalization_parameter_count(), 0u);
  }
}

TEST(UNetInit, SeedDeterminesWeights) {
  UNet a(small(Mode::binary, true)), b(small(Mode::binary, true)), c(small(Mode::binary, true));
  a.initialize(11);
  b.initialize(11);
  c.initialize(12);
  EXPECT_EQ(a.state(), b.state());
  EXPECT_NE(a.state(), c.state());
  const auto in = random_input(1, 1, 32, 3);
  const auto out_a = a.forward(in, false).data;
  const auto out_b = b.forward(in, false).data;
  EXPECT_EQ(out_a, out_b);
}

TEST(UNetInit, HeScaledWeights) {
  ModelConfig c = small(Mode::binary, false, 32, 3);
  c.base_filters = 16;
  UNet net(c);
  net.initialize(4);
  // First parameter is the first 3x3 convolution's weight: fan-in 27.
  const auto& w = net.parameters().front()->value;
  double sq = 0.0;
  for (float v : w) sq += double(v) * v;
  const double var = sq / w.size();
  EXPECT_NEAR(var, 2.0 / 27.0, 0.35 * 2.0 / 27.0);
}

TEST(Activation, Examples) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(1.0), 0.7310585786300049, 1e-15);
  EXPECT_EQ(sigmoid(1e4), 1.0);
  EXPECT_EQ(sigmoid(-1e4), 0.0);
  EXPECT_FALSE(std::isnan(sigmoid(-1e4)));

  const std::vector<double> logits{1, 2, 3};
  std::vector<double> p(3);
  softmax<double>(logits, p);
  EXPECT_NEAR(p[0], 0.09003057317038046, 1e-15);
  EXPECT_NEAR(p[1], 0.24472847105479767, 1e-15);
  EXPECT_NEAR(p[2], 0.6652409557748219, 1e-15);

  const std::vector<double> extreme{1e4, -1e4, 0};
  softmax<double>(extreme, p);
  EXPECT_EQ(p[0], 1.0);
  for (double v : p) EXPECT_FALSE(std::isnan(v));
}

TEST(Activation, SoftmaxSumsToOne) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 20.0);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> logits{n(rng), n(rng), n(rng)}, p(3);
    softmax<double>(logits, p);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  }
}

TEST(Activation, PredictClasses) {
  ProbabilityMap binary(1, 3, 1);
  binary.at(0, 0) = 0.49f;
  binary.at(0, 1) = 0.5f;
  binary.at(0, 2) = 0.9f;
  const Mask b = predict_classes(binary, Mode::binary);
  EXPECT_EQ(b.at(0, 0), 0);
  EXPECT_EQ(b.at(0, 1), 1);
  EXPECT_EQ(b.at(0, 2), 1);

  ProbabilityMap multi(1, 3, 3);
  const float rows[3][3] = {{0.2f, 0.5f, 0.3f}, {0.4f, 0.4f, 0.2f}, {0.2f, 0.4f, 0.4f}};
  for (int x = 0; x < 3; ++x)
    for (int k = 0; k < 3; ++k) multi.at(0, x, k) = rows[x][k];
  const Mask m = predict_classes(multi, Mode::multiclass);
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(0, 1), 0);
  EXPECT_EQ(m.at(0, 2), 1);
}

TEST(UNetPredict, ProbabilitiesAreNormalised) {
  UNet net(small(Mode::multiclass, true, 32, 3));
  net.initialize(9);
  const ProbabilityMap p = net.predict(wearseg::testing::gradient_image(32, 32, 3, "g").pixels);
  ASSERT_EQ(p.channels(), 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const float s = p.at(y, x, 0) + p.at(y, x, 1) + p.at(y, x, 2);
      EXPECT_NEAR(s, 1.0f, 1e-5f);
    }
}

TEST(UNetCheckpoint, RoundTripsBitExactly) {
  wearseg::testing::TempDir dir("unet");
  UNet net(small(Mode::multiclass, true));
  net.initialize(3);
  // Move running statistics away from their initial values.
  net.forward(random_input(2, 1, 32, 8), true);
  save_checkpoint(dir.path() / "m.bin", net);
  const auto loaded = load_checkpoint(dir.path() / "m.bin");
  EXPECT_EQ(loaded->config(), net.config());
  EXPECT_EQ(loaded->state(), net.state());
  const auto in = random_input(1, 1, 32, 4);
  const auto expected = net.forward(in, false).data;
  EXPECT_EQ(loaded->forward(in, false).data, expected);
}

TEST(UNetCheckpoint, RejectsCorruptFiles) {
  wearseg::testing::TempDir dir("unet");
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.bin"), std::invalid_argument);
  std::ofstream(dir.path() / "junk.bin") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir.path() / "junk.bin"), std::invalid_argument);
  UNet net(small(Mode::binary, false));
  ModelState wrong = net.state();
  wrong.tensors.pop_back();
  EXPECT_THROW(net.load_state(wrong), std::invalid_argument);
}

// Loss L = sum(w * logits) has d_logits = w. Individual float32 differences
// are dominated by rounding, so compare the directional derivative along the
// normalised analytic gradient, which must approach |grad L| as h shrinks.
class UNetGradient : public ::testing::TestWithParam<bool> {};

TEST_P(UNetGradient, DirectionalDerivativeConverges) {
  ModelConfig c = small(Mode::binary, GetParam(), 32);
  c.base_filters = 2;
  UNet net(c);
  net.initialize(21);
  const auto input = random_input(2, 1, 32, 13);
  nn::Tensor weights(2, 1, 32, 32);
  std::mt19937_64 rng(13);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : weights.data) v = n(rng);

  auto loss = [&] {
    const auto& out = net.forward(input, true);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += double(out.data[i]) * weights.data[i];
    return s;
  };
  net.zero_grad();
  loss();
  net.backward(weights);

  auto params = net.parameters();
  double sq = 0.0;
  for (auto* p : params)
    for (float g : p->grad) sq += double(g) * g;
  const double norm = std::sqrt(sq);
  ASSERT_GT(norm, 0.0);
  std::vector<nn::FloatBuffer> origin;
  for (auto* p : params) origin.push_back(p->value);
  auto move_to = [&](double t) {
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k]->size(); ++i)
        params[k]->value[i] = origin[k][i] + static_cast<float>(t * params[k]->grad[i] / norm);
  };
  auto relative_error = [&](double h) {
    move_to(h);
    const double up = loss();
    move_to(-h);
    const double down = loss();
    move_to(0.0);
    return std::abs((up - down) / (2.0 * h) - norm) / norm;
  };
  const double coarse = relative_error(1e-2), fine = relative_error(1e-3);
  EXPECT_LT(fine, 0.05);
  EXPECT_LT(fine, coarse / 2);
}

INSTANTIATE_TEST_SUITE_P(BatchNorm, UNetGradient, ::testing::Values(false, true));

namespace {

// Central difference of L = sum(w * f()) with respect to v[i], in double.
template <class Fn>
double central_difference(float& v, const nn::Tensor& w, Fn&& f, float h) {
  auto loss = [&] {
    const nn::Tensor& out = f();
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += double(out.data[i]) * w.data[i];
    return s;
  };
  const float orig = v;
  v = orig + h;
  const double up = loss();
  v = orig - h;
  const double down = loss();
  v = orig;
  return (up - down) / (2.0 * double(h));
}

nn::Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  nn::Tensor t(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (auto& v : t.data) v = d(rng);
  return t;
}

}  // namespace

TEST(LayerGradient, Conv2d) {
  for (int k : {1, 3}) {
    nn::Conv2d conv(3, 4, k);
    std::mt19937_64 rng(1);
    conv.initialize(rng);
    for (auto& b : conv.bias.value) b = 0.1f;
    auto in = random_tensor(2, 3, 5, 6, 2);
    const auto w = random_tensor(2, 4, 5, 6, 3);
    nn::Tensor out, din;
    conv.forward(in, out);
    conv.weight.grad.assign(conv.weight.size(), 0.0f);
    conv.bias.grad.assign(conv.bias.size(), 0.0f);
    conv.backward(in, w, &din);
    auto f = [&]() -> const nn::Tensor& { conv.forward(in, out); return out; };
    for (std::size_t i = 0; i < in.size(); i += 7) EXPECT_NEAR(din.data[i], central_difference(in.data[i], w, f, 1e-2f), 2e-3);
    for (std::size_t i = 0; i < conv.weight.size(); i += 5)
      EXPECT_NEAR(conv.weight.grad[i], central_difference(conv.weight.value[i], w, f, 1e-2f), 2e-3);
    for (std::size_t i = 0; i < conv.bias.size(); ++i)
      EXPECT_NEAR(conv.bias.grad[i], central_difference(conv.bias.value[i], w, f, 1e-2f), 2e-3);
  }
}

TEST(LayerGradient, ConvTranspose) {
  nn::ConvTranspose2x2 up(3, 2);
  std::mt19937_64 rng(1);
  up.initialize(rng);
  auto in = random_tensor(2, 3, 3, 4, 2);
  const auto w = random_tensor(2, 5, 6, 8, 3);
  nn::Tensor out(2, 5, 6, 8), din;
  auto f = [&]() -> const nn::Tensor& { up.forward(in, out, 1); return out; };
  f();
  up.weight.grad.assign(up.weight.size(), 0.0f);
  up.bias.grad.assign(up.bias.size(), 0.0f);
  up.backward(in, w, 1, din);
  for (std::size_t i = 0; i < in.size(); i += 3) EXPECT_NEAR(din.data[i], central_difference(in.data[i], w, f, 1e-2f), 2e-3);
  for (std::size_t i = 0; i < up.weight.size(); ++i)
    EXPECT_NEAR(up.weight.grad[i], central_difference(up.weight.value[i], w, f, 1e-2f), 2e-3);
  for (std::size_t i = 0; i < up.bias.size(); ++i)
    EXPECT_NEAR(up.bias.grad[i], central_difference(up.bias.value[i], w, f, 1e-2f), 2e-3);
}

TEST(LayerGradient, BatchNorm) {
  nn::BatchNorm2d bn(3);
  bn.gamma.value = {1.5f, 0.7f, -1.0f};
  bn.beta.value = {0.1f, -0.2f, 0.3f};
  const auto x0 = random_tensor(2, 3, 4, 5, 2);
  const auto w = random_tensor(2, 3, 4, 5, 3);
  nn::Tensor x, out;
  auto input = x0;
  auto f = [&]() -> const nn::Tensor& {
    x = input;
    bn.forward(x, out, true);
    return out;
  };
  f();
  bn.gamma.grad.assign(3, 0.0f);
  bn.beta.grad.assign(3, 0.0f);
  nn::Tensor d = w;
  bn.backward(x, d);
  for (std::size_t i = 0; i < input.size(); i += 3)
    EXPECT_NEAR(d.data[i], central_difference(input.data[i], w, f, 1e-2f), 5e-3);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(bn.gamma.grad[c], central_difference(bn.gamma.value[c], w, f, 1e-2f), 2e-3);
    EXPECT_NEAR(bn.beta.grad[c], central_difference(bn.beta.value[c], w, f, 1e-2f), 2e-3);
  }
}

TEST(LayerGradient, MaxPool) {
  auto in = random_tensor(2, 2, 4, 6, 2);
  const auto w = random_tensor(2, 2, 2, 3, 3);
  nn::Tensor out, din(2, 2, 4, 6);
  nn::maxpool2x2(in, out);
  nn::maxpool2x2_backward(in, w, din);
  auto f = [&]() -> const nn::Tensor& { nn::maxpool2x2(in, out); return out; };
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_NEAR(din.data[i], central_difference(in.data[i], w, f, 1e-3f), 1e-3);
}
