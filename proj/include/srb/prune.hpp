#pragma once

#include <cstddef>
#include <vector>

#include "srb/engine.hpp"
#include "srb/train.hpp"

namespace srb {

struct PruneConfig {
  double target_sparsity = 0.9;
  double per_round_fraction = 0.2;
  std::size_t train_epochs_per_prune = 10;
  double prune_lr = 0.01;
  std::size_t rewind_epoch = 2;

  void validate() const;
};

/// Masks from IMP in pruning order. Entry 0 is the dense starting point
/// (all-ones mask, the dense solution); entry r is the mask after round r
/// and the solution retrained under it.
template <class T>
struct MaskSequence {
  std::vector<Mask> masks;
  std::vector<ParamSet<T>> solutions;
  std::vector<double> sparsities;

  std::size_t size() const { return masks.size(); }
};

template <class T>
struct ImpResult {
  Mask mask;                  // m_A
  ParamSet<T> pruned_solution;
  MaskSequence<T> sequence;
};

/// Zeroes the `count` surviving weights with the smallest magnitude, pooled
/// across all layers. Ties go to the lower (layer, flat index).
template <class T>
Mask prune_smallest(const ParamSet<T>& params, const Mask& current, std::size_t count);

/// prune_smallest with count = floor(fraction * surviving).
template <class T>
Mask global_magnitude_mask(const ParamSet<T>& params, const Mask& current, double prune_fraction);

inline double sparsity(const Mask& mask) { return mask.sparsity(); }

/// Number of weights IMP should prune in the next round: a full
/// per-round fraction unless that would overshoot the target count.
std::size_t next_prune_count(std::size_t surviving, std::size_t target_surviving, double per_round_fraction);

/// Number of surviving weights that realizes `target_sparsity` over `total`.
std::size_t target_surviving(std::size_t total, double target_sparsity);

/// Iterative magnitude pruning with weight rewinding. Round r prunes the
/// previous solution, rewinds to `rewind` masked by the new mask and trains
/// it for train_epochs_per_prune epochs at prune_lr.
template <class T>
ImpResult<T> imp(const ParamSet<T>& dense_solution, const Checkpoint<T>& rewind, const Dataset& train_set,
                 const PruneConfig& prune_config, const TrainConfig& train_config);

/// IMP toward several targets at once. Full rounds are shared; each target
/// branches off with its own exact top-up round, so every result is
/// identical to a separate imp() call for that target.
template <class T>
std::vector<ImpResult<T>> imp_multi(const ParamSet<T>& dense_solution, const Checkpoint<T>& rewind,
                                    const Dataset& train_set, const PruneConfig& prune_config,
                                    const TrainConfig& train_config, std::vector<double> targets);

}  // namespace srb
