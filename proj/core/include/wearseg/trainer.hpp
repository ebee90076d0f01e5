#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wearseg/losses.hpp"
#include "wearseg/metrics.hpp"
#include "wearseg/tile.hpp"
#include "wearseg/unet.hpp"

namespace wearseg {

/// Optimisation, schedule and stopping constants of one training run.
struct TrainingProtocol {
  double initial_lr = 1e-4;
  double min_lr = 1e-6;
  double lr_factor = 0.9;
  int lr_patience = 5;
  double lr_min_delta = 0.005;

  int early_stop_patience = 20;
  int early_stop_start_epoch = 60;
  double early_stop_min_delta = 0.0;
  int max_epochs = 300;

  /// A run whose best validation loss is not below this value has failed.
  double failure_threshold = 0.4;
  int max_retries = 3;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-7;
};

struct EpochRecord {
  int attempt = 0;
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;  // rate used during this epoch
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainState {
  int epoch = 0;
  double learning_rate = 1e-4;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_since_improve = 0;
  // Plateau schedule bookkeeping (its own best, compared with min_delta).
  double plateau_best = std::numeric_limits<double>::infinity();
  int plateau_wait = 0;
  std::vector<EpochRecord> history;
};

TrainState make_train_state(const TrainingProtocol& protocol);

/// Reduce-on-plateau: after lr_patience epochs without an improvement larger
/// than lr_min_delta, lr <- max(lr_factor * lr, min_lr) and the counter resets.
double lr_schedule_step(TrainState& state, double val_loss, const TrainingProtocol& protocol);

/// Updates the early-stopping best/counter; true when `val_loss` is a new best.
bool record_validation(TrainState& state, double val_loss, const TrainingProtocol& protocol);

enum class StopDecision { continue_training, stop_and_restore_best };

/// Never stops before early_stop_start_epoch; afterwards stops once
/// early_stop_patience epochs passed without improvement; always stops at max_epochs.
StopDecision early_stop_check(const TrainState& state, const TrainingProtocol& protocol);

/// True when the run counts as failed (best validation loss >= threshold).
bool training_failed(double best_val_loss, const TrainingProtocol& protocol);

/// What fit() drives: a model plus its data.
class TrainingSession {
 public:
  virtual ~TrainingSession() = default;
  virtual void reinitialize(std::uint64_t seed) = 0;
  /// One pass over the training data; returns the mean training loss.
  virtual double train_epoch(double learning_rate, std::uint64_t shuffle_seed) = 0;
  virtual double validation_loss() = 0;
  virtual void save_best() = 0;
  virtual void restore_best() = 0;
};

struct FitResult {
  std::vector<EpochRecord> history;  // all attempts
  int attempts = 0;
  bool failed = false;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stopped_epoch = 0;
};

/// Full protocol: schedule, delayed early stopping with best-weights restore,
/// and re-initialisation when a run fails (at most max_retries times).
FitResult fit(TrainingSession& session, const TrainingProtocol& protocol, std::uint64_t seed);

/// Keras-style Adam on a model's parameters.
class Adam {
 public:
  Adam(std::vector<nn::Parameter*> params, double beta1, double beta2, double epsilon);
  void reset();
  void step(double learning_rate);

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<std::vector<float>> m_, v_;
  double beta1_, beta2_, epsilon_;
  long steps_ = 0;
};

/// One cell of the experiment grid.
struct ExperimentConfig {
  Mode mode = Mode::binary;
  int tile_edge = 256;
  AugmentationLevel aug = AugmentationLevel::none;
  LossKind loss = LossKind::iou;
  bool use_batch_norm = true;
  int batch_size = 0;  // 0: 16 for d=512, 32 otherwise
  int base_filters = 64;
  int channels_in = 3;
  std::uint64_t seed = 0;

  int effective_batch_size() const;
  ModelConfig model_config() const;
  LossSpec loss_spec() const;
  /// Flat "key = value" lines.
  std::string to_text() const;
  static ExperimentConfig from_text(const std::string& text);
  /// 16 hex digits identifying the cell (stable across runs).
  std::string hash() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Trains a U-Net on tiles with the configured loss.
class UNetSession final : public TrainingSession {
 public:
  UNetSession(const ExperimentConfig& config, const TrainingProtocol& protocol,
              const std::vector<Tile>& train, const std::vector<Tile>& val);

  void reinitialize(std::uint64_t seed) override;
  double train_epoch(double learning_rate, std::uint64_t shuffle_seed) override;
  double validation_loss() override;
  void save_best() override;
  void restore_best() override;

  UNet& model() { return *model_; }
  std::unique_ptr<UNet> release_model();

  /// Loss and logit gradient of a batch of tiles (training forward pass when `training`).
  double batch_loss(const std::vector<const Tile*>& batch, bool training, bool accumulate_gradient);

 private:
  ExperimentConfig config_;
  LossSpec loss_;
  const std::vector<Tile>& train_;
  const std::vector<Tile>& val_;
  std::unique_ptr<UNet> model_;
  Adam adam_;
  std::optional<ModelState> best_;
};

/// Tile labels as used by the loss: collapsed for binary, raw for multiclass.
std::vector<std::uint8_t> training_labels(const Tile& tile, Mode mode);

struct FoldResult {
  std::unique_ptr<UNet> model;  // restored best
  FitResult fit;
  std::optional<MetricReport> report;  // on the external test tiles
};

FoldResult train_fold(const ExperimentConfig& config, const TrainingProtocol& protocol,
                      const std::vector<Tile>& train, const std::vector<Tile>& val,
                      const std::vector<Tile>& test, std::uint64_t seed);

/// Shuffled partition of [0, n) into k folds of near-equal size.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int k, std::uint64_t seed);

/// Shuffled split of [0, n): `fraction` of the indices (rounded, at least 1) go to the second part.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed);

std::vector<Tile> gather(const std::vector<Tile>& tiles, const std::vector<std::size_t>& indices);

/// Trains and scores fold `fold` of a k-fold cross validation over `training_tiles`.
FoldResult run_cv_fold(const ExperimentConfig& config, const TrainingProtocol& protocol,
                       const std::vector<Tile>& training_tiles, const std::vector<Tile>& test_tiles,
                       int folds, int fold);

/// k-fold cross validation with fresh weights per fold; every fold is scored
/// on the external test tiles.
std::vector<FoldResult> cross_validate(const ExperimentConfig& config,
                                       const TrainingProtocol& protocol,
                                       const std::vector<Tile>& training_tiles,
                                       const std::vector<Tile>& test_tiles, int folds = 5);

/// 90/10 split; the 10% only drives the schedule and early stopping.
FoldResult train_final(const ExperimentConfig& config, const TrainingProtocol& protocol,
                       const std::vector<Tile>& training_tiles,
                       const std::vector<Tile>& test_tiles = {});

}  // namespace wearseg
