#include "srb/prune.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

namespace srb {

void PruneConfig::validate() const {
  if (!(target_sparsity > 0.0 && target_sparsity < 1.0)) throw ConfigError("target sparsity must be in (0, 1)");
  if (!(per_round_fraction > 0.0 && per_round_fraction < 1.0)) throw ConfigError("per_round_fraction must be in (0, 1)");
  if (!(prune_lr > 0.0)) throw ConfigError("prune_lr must be > 0");
}

template <class T>
Mask prune_smallest(const ParamSet<T>& params, const Mask& current, std::size_t count) {
  params.check_shapes();
  current.check_compatible(params.spec);

  struct Candidate {
    T magnitude;
    std::uint32_t layer;
    std::uint32_t index;
  };
  std::vector<Candidate> survivors;
  survivors.reserve(current.kept());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    const auto& m = current.layers[l];
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (m.data()[i]) {
        survivors.push_back({std::abs(w.data()[i]), static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(i)});
      }
    }
  }
  if (survivors.empty()) throw ConfigError("cannot prune: no surviving weights");
  if (count > survivors.size()) throw ConfigError("cannot prune more weights than survive");

  Mask next = current;
  if (count == 0) return next;
  auto by_magnitude = [](const Candidate& a, const Candidate& b) {
    return std::tie(a.magnitude, a.layer, a.index) < std::tie(b.magnitude, b.layer, b.index);
  };
  std::nth_element(survivors.begin(), survivors.begin() + static_cast<std::ptrdiff_t>(count - 1), survivors.end(),
                   by_magnitude);
  // everything before position count-1 now orders no greater than it
  for (std::size_t i = 0; i < count; ++i) {
    next.layers[survivors[i].layer].data()[survivors[i].index] = 0;
  }
  return next;
}

template <class T>
Mask global_magnitude_mask(const ParamSet<T>& params, const Mask& current, double prune_fraction) {
  if (!(prune_fraction > 0.0 && prune_fraction <= 1.0)) throw ConfigError("prune fraction must be in (0, 1]");
  const auto surviving = current.kept();
  if (surviving == 0) throw ConfigError("cannot prune: no surviving weights");
  const auto count = static_cast<std::size_t>(std::floor(prune_fraction * static_cast<double>(surviving)));
  return prune_smallest(params, current, count);
}

std::size_t target_surviving(std::size_t total, double target_sparsity) {
  const auto zeros = static_cast<std::size_t>(std::llround(target_sparsity * static_cast<double>(total)));
  return total - std::min(zeros, total);
}

std::size_t next_prune_count(std::size_t surviving, std::size_t target, double per_round_fraction) {
  if (surviving <= target) return 0;
  const auto full = static_cast<std::size_t>(std::floor(per_round_fraction * static_cast<double>(surviving)));
  const auto gap = surviving - target;
  if (full == 0) return gap;
  return std::min(full, gap);
}

namespace {

template <class T>
ParamSet<T> retrain(const Mask& mask, const Checkpoint<T>& rewind, const Dataset& train_set,
                    const PruneConfig& prune_config, const TrainConfig& train_config) {
  Checkpoint<T> start = rewind;
  start.velocity.reset();
  start.mask.reset();
  start.rng_counter = rewind.epoch;
  TrainConfig cfg = train_config;
  cfg.learning_rate = prune_config.prune_lr;
  cfg.epochs = rewind.epoch + prune_config.train_epochs_per_prune;
  cfg.rewind_epochs.clear();
  return train(start, &mask, cfg, train_set).final.params;
}

}  // namespace

template <class T>
std::vector<ImpResult<T>> imp_multi(const ParamSet<T>& dense_solution, const Checkpoint<T>& rewind,
                                    const Dataset& train_set, const PruneConfig& prune_config,
                                    const TrainConfig& train_config, std::vector<double> targets) {
  prune_config.validate();
  dense_solution.check_shapes();
  if (!(rewind.spec() == dense_solution.spec)) throw ConfigError("rewind checkpoint and dense solution differ in spec");
  if (targets.empty()) throw ConfigError("imp needs at least one target sparsity");
  for (double t : targets) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("target sparsity must be in (0, 1)");
  }

  const std::size_t total = dense_solution.spec.weight_count();
  // results are produced per target; remember the caller's order
  std::vector<std::size_t> order(targets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });

  MaskSequence<T> shared;
  shared.masks.push_back(Mask::ones(dense_solution.spec));
  shared.solutions.push_back(dense_solution);
  shared.sparsities.push_back(0.0);

  std::vector<ImpResult<T>> results(targets.size());
  auto finish = [&](std::size_t slot, MaskSequence<T> seq) {
    ImpResult<T> r;
    r.mask = seq.masks.back();
    r.pruned_solution = seq.solutions.back();
    r.sequence = std::move(seq);
    results[slot] = std::move(r);
  };

  std::size_t next = 0;
  while (next < order.size()) {
    const std::size_t surviving = shared.masks.back().kept();
    const std::size_t low_target = target_surviving(total, targets[order[next]]);
    const std::size_t count = next_prune_count(surviving, low_target, prune_config.per_round_fraction);
    if (count == 0) {
      finish(order[next++], shared);
      continue;
    }
    bool all_share = true;
    for (std::size_t j = next + 1; j < order.size(); ++j) {
      const auto other = next_prune_count(surviving, target_surviving(total, targets[order[j]]),
                                          prune_config.per_round_fraction);
      if (other != count) all_share = false;
    }
    const Mask mask = prune_smallest(shared.solutions.back(), shared.masks.back(), count);
    ParamSet<T> solution = retrain(mask, rewind, train_set, prune_config, train_config);
    if (all_share) {
      shared.masks.push_back(mask);
      shared.sparsities.push_back(mask.sparsity());
      shared.solutions.push_back(std::move(solution));
    } else {
      MaskSequence<T> branch = shared;
      branch.masks.push_back(mask);
      branch.sparsities.push_back(mask.sparsity());
      branch.solutions.push_back(std::move(solution));
      finish(order[next++], std::move(branch));
    }
  }
  return results;
}

template <class T>
ImpResult<T> imp(const ParamSet<T>& dense_solution, const Checkpoint<T>& rewind, const Dataset& train_set,
                 const PruneConfig& prune_config, const TrainConfig& train_config) {
  auto all = imp_multi(dense_solution, rewind, train_set, prune_config, train_config, {prune_config.target_sparsity});
  return std::move(all.front());
}

#define SRB_INSTANTIATE_PRUNE(T)                                                                                 \
  template Mask prune_smallest<T>(const ParamSet<T>&, const Mask&, std::size_t);                                 \
  template Mask global_magnitude_mask<T>(const ParamSet<T>&, const Mask&, double);                               \
  template ImpResult<T> imp<T>(const ParamSet<T>&, const Checkpoint<T>&, const Dataset&, const PruneConfig&,     \
                               const TrainConfig&);                                                              \
  template std::vector<ImpResult<T>> imp_multi<T>(const ParamSet<T>&, const Checkpoint<T>&, const Dataset&,      \
                                                  const PruneConfig&, const TrainConfig&, std::vector<double>);

SRB_INSTANTIATE_PRUNE(float)
SRB_INSTANTIATE_PRUNE(double)

}  // namespace srb
