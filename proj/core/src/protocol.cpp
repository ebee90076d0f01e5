#include <algorithm>
#include <cmath>

#include "wearseg/seeding.hpp"
#include "wearseg/trainer.hpp"

namespace wearseg {

TrainState make_train_state(const TrainingProtocol& protocol) {
  TrainState s;
  s.learning_rate = protocol.initial_lr;
  return s;
}

double lr_schedule_step(TrainState& state, double val_loss, const TrainingProtocol& protocol) {
  if (val_loss < state.plateau_best - protocol.lr_min_delta) {
    state.plateau_best = val_loss;
    state.plateau_wait = 0;
    return state.learning_rate;
  }
  if (++state.plateau_wait >= protocol.lr_patience) {
    state.learning_rate = std::max(state.learning_rate * protocol.lr_factor, protocol.min_lr);
    state.plateau_wait = 0;
  }
  return state.learning_rate;
}

bool record_validation(TrainState& state, double val_loss, const TrainingProtocol& protocol) {
  if (val_loss < state.best_val_loss - protocol.early_stop_min_delta) {
    state.best_val_loss = val_loss;
    state.best_epoch = state.epoch;
    state.epochs_since_improve = 0;
    return true;
  }
  ++state.epochs_since_improve;
  return false;
}

StopDecision early_stop_check(const TrainState& state, const TrainingProtocol& protocol) {
  if (state.epoch >= protocol.max_epochs) return StopDecision::stop_and_restore_best;
  if (state.epoch >= protocol.early_stop_start_epoch &&
      state.epochs_since_improve >= protocol.early_stop_patience) {
    return StopDecision::stop_and_restore_best;
  }
  return StopDecision::continue_training;
}

bool training_failed(double best_val_loss, const TrainingProtocol& protocol) {
  return !(best_val_loss < protocol.failure_threshold);
}

FitResult fit(TrainingSession& session, const TrainingProtocol& protocol, std::uint64_t seed) {
  FitResult result;
  for (int attempt = 0; attempt <= protocol.max_retries; ++attempt) {
    session.reinitialize(derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
    TrainState state = make_train_state(protocol);
    for (int epoch = 1;; ++epoch) {
      state.epoch = epoch;
      const double lr = state.learning_rate;
      const double train_loss = session.train_epoch(
          lr, derive_seed(seed, {static_cast<std::uint64_t>(attempt), static_cast<std::uint64_t>(epoch)}));
      const double val_loss = session.validation_loss();
      if (record_validation(state, val_loss, protocol)) session.save_best();
      state.history.push_back({attempt, epoch, train_loss, val_loss, lr});
      lr_schedule_step(state, val_loss, protocol);
      if (early_stop_check(state, protocol) == StopDecision::stop_and_restore_best) break;
    }
    session.restore_best();

    result.history.insert(result.history.end(), state.history.begin(), state.history.end());
    result.attempts = attempt + 1;
    result.best_val_loss = state.best_val_loss;
    result.best_epoch = state.best_epoch;
    result.stopped_epoch = state.epoch;
    if (!training_failed(state.best_val_loss, protocol)) {
      result.failed = false;
      return result;
    }
    result.failed = true;
  }
  return result;
}

Adam::Adam(std::vector<nn::Parameter*> params, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  reset();
}

void Adam::reset() {
  m_.clear();
  v_.clear();
  for (auto* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(p->size(), 0.0f);
  }
  steps_ = 0;
}

void Adam::step(double learning_rate) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const float lr_t = static_cast<float>(learning_rate * std::sqrt(1.0 - std::pow(beta2_, t)) /
                                        (1.0 - std::pow(beta1_, t)));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float eps = static_cast<float>(epsilon_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = params_[k]->value;
    const auto& grad = params_[k]->grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const float g = grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      value[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

}  // namespace wearseg
