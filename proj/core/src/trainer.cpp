#include "wearseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "wearseg/corpus.hpp"
#include "wearseg/seeding.hpp"

namespace wearseg {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

constexpr std::uint64_t kCrossValidationSalt = 0x6376;
constexpr std::uint64_t kFinalSalt = 0x66696e;

}  // namespace

int ExperimentConfig::effective_batch_size() const {
  if (batch_size > 0) return batch_size;
  return tile_edge == 512 ? 16 : 32;
}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.mode = mode;
  m.use_batch_norm = use_batch_norm;
  m.input_edge = tile_edge;
  m.channels_in = channels_in;
  m.base_filters = base_filters;
  return m;
}

LossSpec ExperimentConfig::loss_spec() const {
  LossSpec s;
  s.kind = loss;
  s.mode = mode;
  return s;
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  out << "mode = " << to_string(mode) << '\n'
      << "tile_edge = " << tile_edge << '\n'
      << "aug = " << to_string(aug) << '\n'
      << "loss = " << to_string(loss) << '\n'
      << "batch_norm = " << (use_batch_norm ? "true" : "false") << '\n'
      << "batch_size = " << effective_batch_size() << '\n'
      << "base_filters = " << base_filters << '\n'
      << "channels_in = " << channels_in << '\n'
      << "seed = " << seed << '\n';
  return out.str();
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "mode") c.mode = parse_mode(value);
      else if (key == "tile_edge") c.tile_edge = std::stoi(value);
      else if (key == "aug") c.aug = parse_augmentation_level(value);
      else if (key == "loss") c.loss = parse_loss_kind(value);
      else if (key == "batch_norm") c.use_batch_norm = parse_bool(value);
      else if (key == "batch_size") c.batch_size = std::stoi(value);
      else if (key == "base_filters") c.base_filters = std::stoi(value);
      else if (key == "channels_in") c.channels_in = std::stoi(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::logic_error& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }
  return c;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::uint8_t> training_labels(const Tile& tile, Mode mode) {
  const Mask m = mode == Mode::binary ? collapse_to_binary(tile.mask) : tile.mask;
  return {m.values().begin(), m.values().end()};
}

UNetSession::UNetSession(const ExperimentConfig& config, const TrainingProtocol& protocol,
                         const std::vector<Tile>& train, const std::vector<Tile>& val)
    : config_(config),
      loss_(config.loss_spec()),
      train_(train),
      val_(val),
      model_(std::make_unique<UNet>(config.model_config())),
      adam_(model_->parameters(), protocol.adam_beta1, protocol.adam_beta2, protocol.adam_epsilon) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (val.empty()) throw std::invalid_argument("validation set is empty");
  loss_.validate();
}

void UNetSession::reinitialize(std::uint64_t seed) {
  model_->initialize(seed);
  adam_.reset();
  best_.reset();
}

double UNetSession::batch_loss(const std::vector<const Tile*>& batch, bool training,
                               bool accumulate_gradient) {
  std::vector<const Image*> images;
  std::vector<std::uint8_t> labels;
  for (const Tile* t : batch) {
    images.push_back(&t->pixels);
    const auto l = training_labels(*t, config_.mode);
    labels.insert(labels.end(), l.begin(), l.end());
  }
  const nn::Tensor& logits = model_->forward(to_tensor(images), training);
  const int K = logits.c;
  const std::size_t plane = logits.plane();

  std::vector<double> interleaved(logits.size());
  for (int i = 0; i < logits.n; ++i) {
    double* dst = interleaved.data() + i * plane * K;
    for (int k = 0; k < K; ++k) {
      const float* src = logits.channel(i, k);
      for (std::size_t p = 0; p < plane; ++p) dst[p * K + k] = src[p];
    }
  }
  const LossAndGradient lg = loss_from_logits(loss_, labels, interleaved, plane);
  if (accumulate_gradient) {
    nn::Tensor d(logits.n, K, logits.h, logits.w);
    for (int i = 0; i < d.n; ++i) {
      const double* src = lg.d_logits.data() + i * plane * K;
      for (int k = 0; k < K; ++k) {
        float* dst = d.channel(i, k);
        for (std::size_t p = 0; p < plane; ++p) dst[p] = static_cast<float>(src[p * K + k]);
      }
    }
    model_->backward(d);
  }
  return lg.value;
}

double UNetSession::train_epoch(double learning_rate, std::uint64_t shuffle_seed) {
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t bs = static_cast<std::size_t>(config_.effective_batch_size());
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<const Tile*> batch;
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(&train_[order[i]]);
    model_->zero_grad();
    total += batch_loss(batch, true, true) * static_cast<double>(batch.size());
    adam_.step(learning_rate);
  }
  return total / static_cast<double>(order.size());
}

double UNetSession::validation_loss() {
  const std::size_t bs = static_cast<std::size_t>(config_.effective_batch_size());
  double total = 0.0;
  for (std::size_t start = 0; start < val_.size(); start += bs) {
    std::vector<const Tile*> batch;
    for (std::size_t i = start; i < std::min(val_.size(), start + bs); ++i) batch.push_back(&val_[i]);
    total += batch_loss(batch, false, false) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(val_.size());
}

void UNetSession::save_best() { best_ = model_->state(); }

void UNetSession::restore_best() {
  if (best_) model_->load_state(*best_);
}

std::unique_ptr<UNet> UNetSession::release_model() {
  model_->release_activations();
  return std::move(model_);
}

FoldResult train_fold(const ExperimentConfig& config, const TrainingProtocol& protocol,
                      const std::vector<Tile>& train, const std::vector<Tile>& val,
                      const std::vector<Tile>& test, std::uint64_t seed) {
  UNetSession session(config, protocol, train, val);
  FoldResult result;
  result.fit = fit(session, protocol, seed);
  result.model = session.release_model();
  if (!test.empty()) {
    UNet& model = *result.model;
    result.report = evaluate_testset([&](const Image& t) { return model.predict(t); }, test, config.mode);
    model.release_activations();
  }
  return result;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold: need at least 2 folds");
  if (n < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("k-fold: " + std::to_string(n) + " tiles cannot fill " +
                                std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (int f = 0; f < k; ++f) {
    const std::size_t lo = n * f / k, hi = n * (f + 1) / k;
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(folds[f].begin(), folds[f].end());
  }
  return folds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("holdout split: need at least 2 tiles");
  std::size_t n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  n_hold = std::clamp<std::size_t>(n_hold, 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(keep.begin(), keep.end());
  return {keep, hold};
}

std::vector<Tile> gather(const std::vector<Tile>& tiles, const std::vector<std::size_t>& indices) {
  std::vector<Tile> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(tiles.at(i));
  return out;
}

FoldResult run_cv_fold(const ExperimentConfig& config, const TrainingProtocol& protocol,
                       const std::vector<Tile>& training_tiles, const std::vector<Tile>& test_tiles,
                       int folds, int fold) {
  const auto parts = kfold_partition(training_tiles.size(), folds,
                                     derive_seed(config.seed, {kCrossValidationSalt}));
  if (fold < 0 || fold >= folds) throw std::invalid_argument("fold index out of range");
  std::vector<std::size_t> train_idx;
  for (int f = 0; f < folds; ++f) {
    if (f != fold) train_idx.insert(train_idx.end(), parts[f].begin(), parts[f].end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  const auto train = gather(training_tiles, train_idx);
  const auto val = gather(training_tiles, parts[fold]);
  return train_fold(config, protocol, train, val, test_tiles,
                    derive_seed(config.seed, {kCrossValidationSalt, static_cast<std::uint64_t>(fold)}));
}

std::vector<FoldResult> cross_validate(const ExperimentConfig& config,
                                       const TrainingProtocol& protocol,
                                       const std::vector<Tile>& training_tiles,
                                       const std::vector<Tile>& test_tiles, int folds) {
  std::vector<FoldResult> results;
  for (int f = 0; f < folds; ++f) {
    results.push_back(run_cv_fold(config, protocol, training_tiles, test_tiles, folds, f));
  }
  return results;
}

FoldResult train_final(const ExperimentConfig& config, const TrainingProtocol& protocol,
                       const std::vector<Tile>& training_tiles, const std::vector<Tile>& test_tiles) {
  const auto [keep, hold] = holdout_split(training_tiles.size(), 0.1,
                                          derive_seed(config.seed, {kFinalSalt}));
  return train_fold(config, protocol, gather(training_tiles, keep), gather(training_tiles, hold),
                    test_tiles, derive_seed(config.seed, {kFinalSalt, 1}));
}

}  // namespace wearseg
