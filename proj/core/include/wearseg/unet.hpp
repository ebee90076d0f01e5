#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "wearseg/activation.hpp"
#include "wearseg/mode.hpp"
#include "wearseg/nn/layers.hpp"
#include "wearseg/nn/tensor.hpp"
#include "wearseg/raster.hpp"

namespace wearseg {

struct ModelConfig {
  Mode mode = Mode::binary;
  bool use_batch_norm = false;
  int input_edge = 256;
  int channels_in = 3;
  int base_filters = 64;
  float bn_momentum = 0.99f;
  float bn_epsilon = 1e-3f;

  int output_channels() const { return head_channels(mode); }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Copy of every trainable value and normalisation statistic.
struct ModelState {
  std::vector<std::vector<float>> tensors;
  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// U-Net: four encoder blocks (two 3x3 convolutions, optional batch norm
/// before each ReLU, 2x2 max pooling), a bottleneck block, four decoder blocks
/// (2x2 transposed convolution, skip concatenation, two 3x3 convolutions) and
/// a 1x1 head. Filters double per level from base_filters. Fully
/// convolutional: any input edge divisible by 16 is accepted.
class UNet {
 public:
  static constexpr int kLevels = 4;

  explicit UNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Fan-in scaled normal weights, zero biases, unit/zero norm parameters.
  void initialize(std::uint64_t seed);

  /// NCHW input in, NCHW logits out. Training mode uses batch statistics and
  /// keeps the activations needed by backward().
  const nn::Tensor& forward(const nn::Tensor& input, bool training);
  /// Accumulates parameter gradients for the last training forward pass.
  void backward(const nn::Tensor& d_logits);
  void zero_grad();
  /// Frees cached activations (they are rebuilt by the next forward call).
  void release_activations();

  std::vector<nn::Parameter*> parameters();
  std::size_t parameter_count() const;
  /// Weights and biases of convolutions (including transposed and head).
  std::size_t convolution_parameter_count() const;
  /// Batch-norm gamma/beta plus running statistics.
  std::size_t normalization_parameter_count() const;

  ModelState state() const;
  void load_state(const ModelState& state);

  /// Probability maps for a batch of d x d tiles (inference mode).
  std::vector<ProbabilityMap> predict(const std::vector<Image>& tiles);
  ProbabilityMap predict(const Image& tile);

 private:
  struct ConvUnit {
    nn::Conv2d conv;
    std::optional<nn::BatchNorm2d> norm;
    nn::Tensor pre;  // x_hat when normalised
    nn::Tensor out;  // post-ReLU

    void forward(const nn::Tensor& in, bool training);
    void backward(const nn::Tensor& in, nn::Tensor& d_out, nn::Tensor* d_in);
  };
  struct Block {
    ConvUnit first, second;
    void forward(const nn::Tensor& in, bool training);
    void backward(const nn::Tensor& in, nn::Tensor& d_out, nn::Tensor* d_in);
    const nn::Tensor& out() const { return second.out; }
  };

  Block make_block(int cin, int cout) const;
  template <class Self, class Fn>
  static void for_each_state_tensor(Self& self, Fn&& fn);

  ModelConfig config_;
  std::array<Block, kLevels> encoder_;
  std::array<nn::Tensor, kLevels> pooled_;
  Block bottleneck_;
  std::array<nn::ConvTranspose2x2, kLevels> up_;
  std::array<nn::Tensor, kLevels> concat_;
  std::array<Block, kLevels> decoder_;
  nn::Conv2d head_;
  nn::Tensor input_;
  nn::Tensor logits_;
};

/// Images (H x W x C) to an NCHW batch.
nn::Tensor to_tensor(const std::vector<const Image*>& images);
/// One sample of an NCHW tensor back to H x W x C.
Raster<float> sample_to_raster(const nn::Tensor& t, int index);

/// Binary checkpoint: magic, JSON config header, raw float32 state. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const UNet& model);
std::unique_ptr<UNet> load_checkpoint(const std::filesystem::path& path);

}  // namespace wearseg
