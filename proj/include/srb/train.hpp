#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srb/data.hpp"
#include "srb/engine.hpp"

namespace srb {

enum class LrSchedule { constant, cosine };

std::string_view to_string(LrSchedule s);
LrSchedule parse_schedule(std::string_view s);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 60;  // T: index of the final epoch boundary
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;   // data order
  std::vector<std::size_t> rewind_epochs;
  LrSchedule schedule = LrSchedule::constant;

  void validate() const;
  double lr_at(std::size_t epoch) const;
};

/// Training state at an epoch boundary. `rng_counter` counts the shuffle
/// streams consumed so far (one per epoch); `velocity` is absent for a
/// fresh optimizer.
template <class T>
struct Checkpoint {
  ParamSet<T> params;
  std::optional<ParamSet<T>> velocity;
  std::optional<Mask> mask;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t rng_counter = 0;

  const ModelSpec& spec() const { return params.spec; }
  static Checkpoint fresh(ParamSet<T> params, std::uint64_t seed);
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::optional<Evaluation> test;
};

template <class T>
struct TrainResult {
  Checkpoint<T> final;
  std::vector<Checkpoint<T>> rewinds;  // in ascending epoch order
  TrainReport report;
};

class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

/// v <- momentum * v + (g + wd * w); w <- w - lr * v. Masked weights are
/// re-zeroed after the step.
template <class T>
void sgd_step(ParamSet<T>& params, const ParamSet<T>& grads, ParamSet<T>& velocity, const TrainConfig& config,
              double lr, const Mask* mask);

/// Runs epochs start.epoch .. config.epochs-1. With a mask the run is sparse
/// training and the starting weights are multiplied by it. The velocity in
/// `start` (if any) is continued; rewind snapshots are taken at every
/// configured epoch boundary that is reached, including the start itself.
template <class T>
TrainResult<T> train(const Checkpoint<T>& start, const Mask* mask, const TrainConfig& config, const Dataset& train_set,
                     const Dataset* test_set = nullptr);

/// Continues an interrupted run; throws ConfigError if the checkpoint does
/// not belong to `config`.
template <class T>
TrainResult<T> resume(const Checkpoint<T>& checkpoint, const TrainConfig& config, const Dataset& train_set,
                      const Dataset* test_set = nullptr);

}  // namespace srb
