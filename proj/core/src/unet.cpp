#include "wearseg/unet.hpp"

#include <algorithm>
#include <cstring>
#include <random>
#include <stdexcept>

#include "wearseg/seeding.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#include <pmmintrin.h>
#endif

namespace wearseg {
namespace {

// Denormal gradients late in training slow the GEMMs by an order of magnitude.
void flush_denormals() {
#if defined(__SSE__)
  _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
  _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
}

}  // namespace

ProbabilityMap activate(const Raster<float>& logits, Mode mode) {
  ProbabilityMap out(logits.height(), logits.width(), logits.channels());
  const auto in = logits.values();
  auto dst = out.values();
  if (mode == Mode::binary) {
    if (logits.channels() != 1) throw std::invalid_argument("activate: binary head must have 1 channel");
    for (std::size_t i = 0; i < in.size(); ++i) dst[i] = sigmoid(in[i]);
    return out;
  }
  const std::size_t K = logits.channels();
  for (std::size_t p = 0; p < logits.pixel_count(); ++p) {
    softmax<float>(in.subspan(p * K, K), dst.subspan(p * K, K));
  }
  return out;
}

Mask predict_classes(const ProbabilityMap& probs, Mode mode) {
  Mask out(probs.height(), probs.width(), 1);
  const auto p = probs.values();
  auto dst = out.values();
  if (mode == Mode::binary) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = p[i] >= 0.5f ? 1 : 0;
    return out;
  }
  const int K = probs.channels();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    int best = 0;
    for (int k = 1; k < K; ++k) {
      if (p[i * K + k] > p[i * K + best]) best = k;
    }
    dst[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void ModelConfig::validate() const {
  if (input_edge <= 0 || input_edge % 16 != 0) {
    throw std::invalid_argument("model input edge must be a positive multiple of 16, got " +
                                std::to_string(input_edge));
  }
  if (channels_in != 1 && channels_in != 3) {
    throw std::invalid_argument("model input channels must be 1 or 3");
  }
  if (base_filters <= 0) throw std::invalid_argument("base_filters must be positive");
}

void UNet::ConvUnit::forward(const nn::Tensor& in, bool training) {
  if (norm) {
    conv.forward(in, pre);
    norm->forward(pre, out, training);
  } else {
    conv.forward(in, out);
  }
  nn::relu_inplace(out);
}

void UNet::ConvUnit::backward(const nn::Tensor& in, nn::Tensor& d_out, nn::Tensor* d_in) {
  nn::relu_backward(out, d_out);
  if (norm) norm->backward(pre, d_out);
  conv.backward(in, d_out, d_in);
}

void UNet::Block::forward(const nn::Tensor& in, bool training) {
  first.forward(in, training);
  second.forward(first.out, training);
}

void UNet::Block::backward(const nn::Tensor& in, nn::Tensor& d_out, nn::Tensor* d_in) {
  nn::Tensor d_mid;
  second.backward(first.out, d_out, &d_mid);
  first.backward(in, d_mid, d_in);
}

UNet::Block UNet::make_block(int cin, int cout) const {
  Block b;
  b.first.conv = nn::Conv2d(cin, cout, 3);
  b.second.conv = nn::Conv2d(cout, cout, 3);
  if (config_.use_batch_norm) {
    b.first.norm.emplace(cout, config_.bn_momentum, config_.bn_epsilon);
    b.second.norm.emplace(cout, config_.bn_momentum, config_.bn_epsilon);
  }
  return b;
}

UNet::UNet(ModelConfig config) : config_(config) {
  config_.validate();
  int cin = config_.channels_in;
  for (int l = 0; l < kLevels; ++l) {
    const int f = config_.base_filters << l;
    encoder_[l] = make_block(cin, f);
    cin = f;
  }
  const int fb = config_.base_filters << kLevels;
  bottleneck_ = make_block(cin, fb);
  int below = fb;
  for (int l = kLevels - 1; l >= 0; --l) {
    const int f = config_.base_filters << l;
    up_[l] = nn::ConvTranspose2x2(below, f);
    decoder_[l] = make_block(2 * f, f);
    below = f;
  }
  head_ = nn::Conv2d(config_.base_filters, config_.output_channels(), 1);
}

void UNet::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {0x756e6574}));
  auto init_block = [&](Block& b) {
    for (ConvUnit* u : {&b.first, &b.second}) {
      u->conv.initialize(rng);
      if (u->norm) u->norm->initialize();
    }
  };
  for (auto& b : encoder_) init_block(b);
  init_block(bottleneck_);
  for (int l = kLevels - 1; l >= 0; --l) {
    up_[l].initialize(rng);
    init_block(decoder_[l]);
  }
  head_.initialize(rng);
}

const nn::Tensor& UNet::forward(const nn::Tensor& input, bool training) {
  flush_denormals();
  if (input.c != config_.channels_in) {
    throw std::invalid_argument("UNet: expected " + std::to_string(config_.channels_in) +
                                " input channels, got " + std::to_string(input.c));
  }
  if (input.h % 16 != 0 || input.w % 16 != 0 || input.h == 0 || input.w == 0) {
    throw std::invalid_argument("UNet: input size must be a positive multiple of 16");
  }
  input_ = input;
  const nn::Tensor* cur = &input_;
  for (int l = 0; l < kLevels; ++l) {
    encoder_[l].forward(*cur, training);
    nn::maxpool2x2(encoder_[l].out(), pooled_[l]);
    cur = &pooled_[l];
  }
  bottleneck_.forward(*cur, training);
  cur = &bottleneck_.out();
  for (int l = kLevels - 1; l >= 0; --l) {
    const nn::Tensor& skip = encoder_[l].out();
    const int f = skip.c;
    concat_[l].resize(skip.n, 2 * f, skip.h, skip.w);
    up_[l].forward(*cur, concat_[l], 0);
    for (int i = 0; i < skip.n; ++i) {
      std::memcpy(concat_[l].channel(i, f), skip.sample(i), sizeof(float) * skip.sample_size());
    }
    decoder_[l].forward(concat_[l], training);
    cur = &decoder_[l].out();
  }
  head_.forward(*cur, logits_);
  return logits_;
}

void UNet::backward(const nn::Tensor& d_logits) {
  flush_denormals();
  nn::Tensor d_cur;
  head_.backward(decoder_[0].out(), d_logits, &d_cur);

  std::array<nn::Tensor, kLevels> d_skip;
  for (int l = 0; l < kLevels; ++l) {
    nn::Tensor d_concat;
    decoder_[l].backward(concat_[l], d_cur, &d_concat);
    const nn::Tensor& below = l + 1 < kLevels ? decoder_[l + 1].out() : bottleneck_.out();
    nn::Tensor d_below;
    up_[l].backward(below, d_concat, 0, d_below);
    const int f = encoder_[l].out().c;
    d_skip[l].resize(d_concat.n, f, d_concat.h, d_concat.w);
    for (int i = 0; i < d_concat.n; ++i) {
      std::memcpy(d_skip[l].sample(i), d_concat.channel(i, f), sizeof(float) * d_skip[l].sample_size());
    }
    d_cur = std::move(d_below);
  }

  nn::Tensor d_pooled;
  bottleneck_.backward(pooled_[kLevels - 1], d_cur, &d_pooled);
  for (int l = kLevels - 1; l >= 0; --l) {
    nn::Tensor& d_enc = d_skip[l];
    nn::maxpool2x2_backward(encoder_[l].out(), d_pooled, d_enc);
    const nn::Tensor& in = l > 0 ? pooled_[l - 1] : input_;
    nn::Tensor d_in;
    encoder_[l].backward(in, d_enc, l > 0 ? &d_in : nullptr);
    d_pooled = std::move(d_in);
  }
}

void UNet::zero_grad() {
  for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

void UNet::release_activations() {
  auto release_block = [](Block& b) {
    for (ConvUnit* u : {&b.first, &b.second}) {
      u->pre.release();
      u->out.release();
    }
  };
  for (auto& b : encoder_) release_block(b);
  for (auto& b : decoder_) release_block(b);
  release_block(bottleneck_);
  for (auto& t : pooled_) t.release();
  for (auto& t : concat_) t.release();
  input_.release();
  logits_.release();
}

std::vector<nn::Parameter*> UNet::parameters() {
  std::vector<nn::Parameter*> out;
  auto add_block = [&](Block& b) {
    for (ConvUnit* u : {&b.first, &b.second}) {
      out.push_back(&u->conv.weight);
      out.push_back(&u->conv.bias);
      if (u->norm) {
        out.push_back(&u->norm->gamma);
        out.push_back(&u->norm->beta);
      }
    }
  };
  for (auto& b : encoder_) add_block(b);
  add_block(bottleneck_);
  for (int l = kLevels - 1; l >= 0; --l) {
    out.push_back(&up_[l].weight);
    out.push_back(&up_[l].bias);
    add_block(decoder_[l]);
  }
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  return out;
}

template <class Self, class Fn>
void UNet::for_each_state_tensor(Self& self, Fn&& fn) {
  auto visit_block = [&](auto& b) {
    for (auto* u : {&b.first, &b.second}) {
      fn(u->conv.weight.value);
      fn(u->conv.bias.value);
      if (u->norm) {
        fn(u->norm->gamma.value);
        fn(u->norm->beta.value);
        fn(u->norm->running_mean);
        fn(u->norm->running_var);
      }
    }
  };
  for (auto& b : self.encoder_) visit_block(b);
  visit_block(self.bottleneck_);
  for (int l = kLevels - 1; l >= 0; --l) {
    fn(self.up_[l].weight.value);
    fn(self.up_[l].bias.value);
    visit_block(self.decoder_[l]);
  }
  fn(self.head_.weight.value);
  fn(self.head_.bias.value);
}

std::size_t UNet::parameter_count() const {
  std::size_t n = 0;
  for_each_state_tensor(*this, [&](const nn::FloatBuffer& t) { n += t.size(); });
  return n;
}

std::size_t UNet::convolution_parameter_count() const {
  std::size_t n = 0;
  auto add_block = [&](const Block& b) {
    for (const ConvUnit* u : {&b.first, &b.second}) n += u->conv.weight.size() + u->conv.bias.size();
  };
  for (const auto& b : encoder_) add_block(b);
  add_block(bottleneck_);
  for (int l = 0; l < kLevels; ++l) {
    n += up_[l].weight.size() + up_[l].bias.size();
    add_block(decoder_[l]);
  }
  return n + head_.weight.size() + head_.bias.size();
}

std::size_t UNet::normalization_parameter_count() const {
  return parameter_count() - convolution_parameter_count();
}

ModelState UNet::state() const {
  ModelState s;
  for_each_state_tensor(*this, [&](const nn::FloatBuffer& t) { s.tensors.emplace_back(t.begin(), t.end()); });
  return s;
}

void UNet::load_state(const ModelState& state) {
  std::vector<nn::FloatBuffer*> targets;
  for_each_state_tensor(*this, [&](nn::FloatBuffer& t) { targets.push_back(&t); });
  if (targets.size() != state.tensors.size()) {
    throw std::invalid_argument("model state has " + std::to_string(state.tensors.size()) +
                                " tensors, expected " + std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i]->size() != state.tensors[i].size()) {
      throw std::invalid_argument("model state tensor " + std::to_string(i) + " has wrong size");
    }
  }
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i]->assign(state.tensors[i].begin(), state.tensors[i].end());
}

nn::Tensor to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: empty batch");
  const Image& first = *images.front();
  nn::Tensor t(static_cast<int>(images.size()), first.channels(), first.height(), first.width());
  for (int i = 0; i < t.n; ++i) {
    const Image& img = *images[i];
    if (!img.same_shape(first)) throw std::invalid_argument("to_tensor: mixed tile shapes in batch");
    const auto v = img.values();
    for (int c = 0; c < t.c; ++c) {
      float* dst = t.channel(i, c);
      for (std::size_t p = 0; p < t.plane(); ++p) dst[p] = v[p * t.c + c];
    }
  }
  return t;
}

Raster<float> sample_to_raster(const nn::Tensor& t, int index) {
  Raster<float> out(t.h, t.w, t.c);
  auto dst = out.values();
  for (int c = 0; c < t.c; ++c) {
    const float* src = t.channel(index, c);
    for (std::size_t p = 0; p < t.plane(); ++p) dst[p * t.c + c] = src[p];
  }
  return out;
}

std::vector<ProbabilityMap> UNet::predict(const std::vector<Image>& tiles) {
  std::vector<ProbabilityMap> out;
  out.reserve(tiles.size());
  constexpr std::size_t kChunk = 4;
  for (std::size_t start = 0; start < tiles.size(); start += kChunk) {
    std::vector<const Image*> batch;
    for (std::size_t i = start; i < std::min(tiles.size(), start + kChunk); ++i) batch.push_back(&tiles[i]);
    const nn::Tensor& logits = forward(to_tensor(batch), false);
    for (int i = 0; i < logits.n; ++i) out.push_back(activate(sample_to_raster(logits, i), config_.mode));
  }
  return out;
}

ProbabilityMap UNet::predict(const Image& tile) {
  return std::move(predict(std::vector<Image>{tile}).front());
}

}  // namespace wearseg
