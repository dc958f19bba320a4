#include "srb/workbench.hpp"

#include <algorithm>
#include <cmath>

namespace srb {

ModelSeeds ModelSeeds::derive(std::uint64_t master, std::uint64_t pair_seed, char role) {
  const std::uint64_t base = derive_seed(derive_seed(master, pair_seed), static_cast<std::uint64_t>(role));
  return ModelSeeds{derive_seed(base, "init"), derive_seed(base, "data")};
}

template <class T>
Workbench<T>::Workbench(StudyConfig config, const Dataset& train_set, const Dataset& test_set)
    : config_(std::move(config)), train_(train_set), test_(test_set) {
  config_.spec.validate();
  auto& rewinds = config_.dense.rewind_epochs;
  rewinds.push_back(config_.prune.rewind_epoch);
  if (config_.early_match_epoch) rewinds.push_back(*config_.early_match_epoch);
  std::sort(rewinds.begin(), rewinds.end());
  rewinds.erase(std::unique(rewinds.begin(), rewinds.end()), rewinds.end());
  config_.dense.validate();
  config_.sparse.validate();
  config_.prune.validate();
  if (train_.dim() != config_.spec.input_dim() || test_.dim() != config_.spec.input_dim()) {
    throw ConfigError("dataset dimension does not match the model input size");
  }
  if (static_cast<std::size_t>(train_.class_count) > config_.spec.output_dim()) {
    throw ConfigError("dataset has more classes than the model has outputs");
  }
}

template <class T>
template <class V, class F>
const V& Workbench<T>::memoize(Memo<V>& memo, std::tuple<std::uint64_t, std::uint64_t> key, F&& compute) {
  std::promise<std::shared_ptr<const V>> promise;
  std::shared_future<std::shared_ptr<const V>> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = memo.find(key);
    if (it == memo.end()) {
      future = promise.get_future().share();
      memo.emplace(key, future);
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(std::make_shared<const V>(compute()));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return *future.get();
}

template <class T>
const TrainResult<T>& Workbench<T>::dense(const ModelSeeds& seeds) {
  return memoize(dense_, {seeds.init, seeds.data}, [&] {
    TrainConfig cfg = config_.dense;
    cfg.seed = seeds.data;
    auto start = Checkpoint<T>::fresh(init_params<T>(config_.spec, seeds.init), seeds.data);
    return train(start, nullptr, cfg, train_, &test_);
  });
}

template <class T>
const Checkpoint<T>& Workbench<T>::rewind(const ModelSeeds& seeds, std::size_t epoch) {
  const auto& run = dense(seeds);
  for (const auto& c : run.rewinds) {
    if (c.epoch == epoch) return c;
  }
  throw ConfigError("no rewind snapshot at epoch " + std::to_string(epoch));
}

template <class T>
const ImpResult<T>& Workbench<T>::imp(const ModelSeeds& seeds, double target) {
  const auto& all = memoize(imp_, {seeds.init, seeds.data}, [&] {
    const auto& run = dense(seeds);
    TrainConfig cfg = config_.dense;
    cfg.seed = seeds.data;
    return imp_multi(run.final.params, rewind(seeds, config_.prune.rewind_epoch), train_, config_.prune, cfg,
                     config_.imp_targets);
  });
  for (std::size_t i = 0; i < config_.imp_targets.size(); ++i) {
    if (std::abs(config_.imp_targets[i] - target) < 1e-12) return all[i];
  }
  throw ConfigError("sparsity " + std::to_string(target) + " is not one of the configured IMP targets");
}

template <class T>
const PermutationMap& Workbench<T>::match(const ModelSeeds& a, const ModelSeeds& b) {
  return memoize(match_, {a.init, b.init}, [&] {
    const auto& model_a = dense(a).final.params;
    const auto& model_b = config_.early_match_epoch ? rewind(b, *config_.early_match_epoch).params : dense(b).final.params;
    return match_models(model_a, model_b, train_, config_.match);
  });
}

template <class T>
SparseRun<T> Workbench<T>::sparse_train(const Checkpoint<T>& start, const Mask& mask, std::uint64_t data_seed) const {
  Checkpoint<T> begin = start;
  begin.velocity.reset();
  begin.mask.reset();
  begin.rng_counter = begin.epoch;
  TrainConfig cfg = config_.sparse;
  cfg.seed = data_seed;
  cfg.rewind_epochs.clear();
  auto result = train(begin, &mask, cfg, train_, &test_);
  SparseRun<T> run;
  run.params = std::move(result.final.params);
  run.mask = mask;
  run.report = std::move(result.report);
  run.train_eval = evaluate(run.params, &run.mask, train_.features, train_.labels);
  run.test_eval = *run.report.test;
  return run;
}

template class Workbench<float>;
template class Workbench<double>;

}  // namespace srb
