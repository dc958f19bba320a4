#pragma once

// Shared building blocks of the mask-transfer workflow: dense runs with
// rewind snapshots, IMP masks, activation matching and sparse retraining.
// Every artifact is a pure function of its seed key and is computed at most
// once, so callers on different threads see identical results regardless
// of scheduling.

#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <tuple>
#include <vector>

#include "srb/align.hpp"
#include "srb/data.hpp"
#include "srb/prune.hpp"
#include "srb/train.hpp"

namespace srb {

struct StudyConfig {
  ModelSpec spec;
  TrainConfig dense;   // seed and learning rate are per run; rewind_epochs are the snapshots kept
  TrainConfig sparse;  // learning rate, momentum, epochs (T) for sparse retraining
  PruneConfig prune;
  std::vector<double> imp_targets{0.9};
  MatchOptions match;
  std::optional<std::size_t> early_match_epoch;  // match A at T against B at this epoch
};

/// Seeds of one model: initialization and data order.
struct ModelSeeds {
  std::uint64_t init = 0;
  std::uint64_t data = 0;

  static ModelSeeds derive(std::uint64_t master, std::uint64_t pair_seed, char role);
};

template <class T>
struct SparseRun {
  ParamSet<T> params;  // already masked
  Mask mask;
  TrainReport report;
  Evaluation train_eval;
  Evaluation test_eval;
};

template <class T>
class Workbench {
 public:
  Workbench(StudyConfig config, const Dataset& train_set, const Dataset& test_set);

  const StudyConfig& config() const { return config_; }
  const Dataset& train_set() const { return train_; }
  const Dataset& test_set() const { return test_; }

  /// Dense run to T with snapshots at every configured rewind epoch.
  const TrainResult<T>& dense(const ModelSeeds& seeds);
  const Checkpoint<T>& rewind(const ModelSeeds& seeds, std::size_t epoch);

  /// IMP on the dense run of `seeds`, rewinding to prune.rewind_epoch.
  const ImpResult<T>& imp(const ModelSeeds& seeds, double target);

  /// Permutation moving model A's units onto model B's.
  const PermutationMap& match(const ModelSeeds& a, const ModelSeeds& b);

  /// Sparse retraining from a rewind snapshot with a fresh optimizer.
  SparseRun<T> sparse_train(const Checkpoint<T>& start, const Mask& mask, std::uint64_t data_seed) const;

 private:
  template <class V>
  using Memo = std::map<std::tuple<std::uint64_t, std::uint64_t>, std::shared_future<std::shared_ptr<const V>>>;

  template <class V, class F>
  const V& memoize(Memo<V>& memo, std::tuple<std::uint64_t, std::uint64_t> key, F&& compute);

  StudyConfig config_;
  const Dataset& train_;
  const Dataset& test_;
  std::mutex mutex_;
  Memo<TrainResult<T>> dense_;
  Memo<std::vector<ImpResult<T>>> imp_;
  Memo<PermutationMap> match_;
};

}  // namespace srb
