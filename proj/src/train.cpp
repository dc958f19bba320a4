#include "srb/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace srb {

std::string_view to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "cosine"; }

LrSchedule parse_schedule(std::string_view s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine") return LrSchedule::cosine;
  throw ConfigError("unknown lr schedule '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!std::is_sorted(rewind_epochs.begin(), rewind_epochs.end())) throw ConfigError("rewind_epochs must be sorted");
  for (auto k : rewind_epochs) {
    if (k > epochs) throw ConfigError("rewind epoch " + std::to_string(k) + " exceeds T = " + std::to_string(epochs));
  }
}

double TrainConfig::lr_at(std::size_t epoch) const {
  if (schedule == LrSchedule::constant || epochs == 0) return learning_rate;
  return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

template <class T>
Checkpoint<T> Checkpoint<T>::fresh(ParamSet<T> params, std::uint64_t seed) {
  Checkpoint<T> c;
  c.params = std::move(params);
  c.seed = seed;
  return c;
}

template <class T>
void sgd_step(ParamSet<T>& params, const ParamSet<T>& grads, ParamSet<T>& velocity, const TrainConfig& config,
              double lr, const Mask* mask) {
  const T mom = static_cast<T>(config.momentum);
  const T wd = static_cast<T>(config.weight_decay);
  const T step = static_cast<T>(lr);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto& w = params.weights[l];
    auto& v = velocity.weights[l];
    if (v.rows() != w.rows() || v.cols() != w.cols() || grads.weights[l].rows() != w.rows() ||
        grads.weights[l].cols() != w.cols()) {
      throw ShapeError("sgd_step: shape mismatch at layer " + std::to_string(l));
    }
    v = mom * v + (grads.weights[l] + wd * w);
    w -= step * v;
    if (mask) w = w.cwiseProduct(mask->layers[l].template cast<T>());

    auto& b = params.biases[l];
    auto& vb = velocity.biases[l];
    vb = mom * vb + (grads.biases[l] + wd * b);
    b -= step * vb;
  }
  if (!params.all_finite()) throw TrainingDiverged("sgd_step produced non-finite parameters");
}

template <class T>
TrainResult<T> train(const Checkpoint<T>& start, const Mask* mask, const TrainConfig& config, const Dataset& train_set,
                     const Dataset* test_set) {
  config.validate();
  start.params.check_shapes();
  if (mask) mask->check_compatible(start.spec());
  if (start.epoch > config.epochs) {
    throw ConfigError("start epoch " + std::to_string(start.epoch) + " is past T = " + std::to_string(config.epochs));
  }
  if (train_set.dim() != start.spec().input_dim()) throw ShapeError("training data dimension does not match model");

  TrainResult<T> result;
  Checkpoint<T> state = start;
  if (mask) {
    apply_mask_inplace(state.params, *mask);
    state.mask = *mask;
  } else {
    state.mask.reset();
  }
  if (!state.velocity) state.velocity = ParamSet<T>::zeros(state.spec());
  state.seed = config.seed;

  auto snapshot_if_needed = [&]() {
    if (std::binary_search(config.rewind_epochs.begin(), config.rewind_epochs.end(), state.epoch)) {
      result.rewinds.push_back(state);
    }
  };
  snapshot_if_needed();

  for (; state.epoch < config.epochs;) {
    const double lr = config.lr_at(state.epoch);
    const auto plan = batches(train_set.size(), BatchPlan{config.batch_size, config.seed, state.epoch});
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : plan) {
      const Matrix<T> x = gather_rows<T>(train_set.features, batch);
      const auto y = gather_labels(train_set.labels, batch);
      LossAndGradient<T> lg;
      try {
        lg = loss_and_gradient(state.params, mask, x, y);
      } catch (const NumericError& e) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(state.epoch) + " (lr " +
                               std::to_string(lr) + "): " + e.what());
      }
      if (!std::isfinite(lg.loss)) {
        throw TrainingDiverged("training diverged: non-finite loss at epoch " + std::to_string(state.epoch) +
                               " (lr " + std::to_string(lr) + ")");
      }
      loss_sum += lg.loss * static_cast<double>(batch.size());
      correct += lg.correct;
      sgd_step(state.params, lg.grads, *state.velocity, config, lr, mask);
    }
    EpochStats stats;
    stats.epoch = state.epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    result.report.epochs.push_back(stats);
    ++state.epoch;
    ++state.rng_counter;
    snapshot_if_needed();
  }
  if (test_set) result.report.test = evaluate(state.params, mask, test_set->features, test_set->labels);
  result.final = std::move(state);
  return result;
}

template <class T>
TrainResult<T> resume(const Checkpoint<T>& checkpoint, const TrainConfig& config, const Dataset& train_set,
                      const Dataset* test_set) {
  if (checkpoint.seed != config.seed) throw ConfigError("checkpoint data seed does not match the training config");
  if (checkpoint.rng_counter != checkpoint.epoch) {
    throw ConfigError("checkpoint rng_counter " + std::to_string(checkpoint.rng_counter) +
                      " is inconsistent with epoch " + std::to_string(checkpoint.epoch));
  }
  const Mask* mask = checkpoint.mask ? &*checkpoint.mask : nullptr;
  return train(checkpoint, mask, config, train_set, test_set);
}

#define SRB_INSTANTIATE_TRAIN(T)                                                                                 \
  template struct Checkpoint<T>;                                                                                 \
  template void sgd_step<T>(ParamSet<T>&, const ParamSet<T>&, ParamSet<T>&, const TrainConfig&, double,          \
                            const Mask*);                                                                        \
  template TrainResult<T> train<T>(const Checkpoint<T>&, const Mask*, const TrainConfig&, const Dataset&,        \
                                   const Dataset*);                                                              \
  template TrainResult<T> resume<T>(const Checkpoint<T>&, const TrainConfig&, const Dataset&, const Dataset*);

SRB_INSTANTIATE_TRAIN(float)
SRB_INSTANTIATE_TRAIN(double)

}  // namespace srb
