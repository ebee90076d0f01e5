#include <benchmark/benchmark.h>

#include <random>

#include "wearseg/augmentor.hpp"
#include "wearseg/corpus.hpp"
#include "wearseg/losses.hpp"
#include "wearseg/nn/layers.hpp"
#include "wearseg/tiler.hpp"
#include "wearseg/unet.hpp"

using namespace wearseg;

namespace {

nn::Tensor random_tensor(int n, int c, int h, int w) {
  nn::Tensor t(n, c, h, w);
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (auto& v : t.data) v = d(rng);
  return t;
}

// Args: channels, spatial edge.
void BM_Conv3x3Forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), e = static_cast<int>(state.range(1));
  nn::Conv2d conv(c, c, 3);
  std::mt19937_64 rng(2);
  conv.initialize(rng);
  const auto in = random_tensor(1, c, e, e);
  nn::Tensor out;
  for (auto _ : state) {
    conv.forward(in, out);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.counters["FLOP/s"] = benchmark::Counter(2.0 * 9 * c * c * e * e, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 256})->Args({64, 64})->Args({256, 16})->Unit(benchmark::kMillisecond);

// Args: base filters. One 256 x 256 RGB tile, training forward plus backward.
void BM_UNetTrainStep(benchmark::State& state) {
  ModelConfig c;
  c.base_filters = static_cast<int>(state.range(0));
  c.input_edge = 256;
  UNet net(c);
  net.initialize(3);
  const auto in = random_tensor(1, 3, 256, 256);
  const auto grad = random_tensor(1, 1, 256, 256);
  for (auto _ : state) {
    net.zero_grad();
    net.forward(in, true);
    net.backward(grad);
  }
}
BENCHMARK(BM_UNetTrainStep)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_UNetPredict(benchmark::State& state) {
  ModelConfig c;
  c.base_filters = static_cast<int>(state.range(0));
  UNet net(c);
  net.initialize(3);
  const Image tile(256, 256, 3, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(tile).data());
}
BENCHMARK(BM_UNetPredict)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_IoULossFromLogits(benchmark::State& state) {
  const LossSpec spec{LossKind::iou, Mode::multiclass};
  const std::size_t pixels = 256 * 256;
  std::vector<std::uint8_t> labels(pixels);
  std::vector<double> logits(pixels * 3);
  std::mt19937_64 rng(4);
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % 3);
  for (auto& v : logits) v = static_cast<double>(rng() % 1000) / 250.0 - 2.0;
  for (auto _ : state) benchmark::DoNotOptimize(loss_from_logits(spec, labels, logits, pixels).value);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pixels));
}
BENCHMARK(BM_IoULossFromLogits)->Unit(benchmark::kMillisecond);

void BM_StitchConstantPredictor(benchmark::State& state) {
  const Image image(1200, 4700, 3, 0.5f);
  const TilePredictor constant = [](const Image& t) { return ProbabilityMap(t.height(), t.width(), 3, 0.25f); };
  for (auto _ : state) benchmark::DoNotOptimize(stitch_predict(image, constant, 512).data());
}
BENCHMARK(BM_StitchConstantPredictor)->Unit(benchmark::kMillisecond);

void BM_AugmentTile(benchmark::State& state) {
  const auto image = generate_synthetic_image(0, 1200, 4700, 1);
  const auto spec = sample_spec(AugmentationLevel::full, 5);
  for (auto _ : state) benchmark::DoNotOptimize(augment_tile(image, 1024, 300, 512, AugmentationLevel::full, spec).pixels.data());
}
BENCHMARK(BM_AugmentTile)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
