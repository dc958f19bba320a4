#include <algorithm>
#include <cmath>
#include <tuple>

#include "doctest.h"
#include "helpers.hpp"
#include "srb/prune.hpp"

using namespace srb;
using srb::testing::random_mask;
using srb::testing::random_params;
using srb::testing::random_spec;
using srb::testing::small_blobs;

namespace {

// Reference: sort every surviving weight by (|w|, layer, index) and drop
// the first `count`.
template <class T>
Mask sorted_prune(const ParamSet<T>& p, const Mask& current, std::size_t count) {
  std::vector<std::tuple<T, std::size_t, Eigen::Index>> all;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) {
      if (current.layers[l].data()[i]) all.emplace_back(std::abs(p.weights[l].data()[i]), l, i);
    }
  }
  std::sort(all.begin(), all.end());
  Mask out = current;
  for (std::size_t k = 0; k < count; ++k) out.layers[std::get<1>(all[k])].data()[std::get<2>(all[k])] = 0;
  return out;
}

TrainConfig imp_train_config() {
  TrainConfig c;
  c.learning_rate = 0.05;
  c.epochs = 3;
  c.batch_size = 64;
  c.seed = 5;
  c.rewind_epochs = {1};
  return c;
}

PruneConfig imp_prune_config(double target) {
  PruneConfig p;
  p.target_sparsity = target;
  p.train_epochs_per_prune = 1;
  p.prune_lr = 0.02;
  p.rewind_epoch = 1;
  return p;
}

}  // namespace

TEST_CASE("global magnitude pruning matches a full sort") {
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = random_spec(rng);
    auto p = random_params<float>(spec, rng);
    if (trial % 3 == 0) {
      // quantized weights force many magnitude ties
      for (auto& w : p.weights) w = (w * 4.0f).array().round().matrix() / 4.0f;
    }
    const auto current = random_mask(spec, rng, 0.8);
    const std::size_t kept = current.kept();
    if (kept == 0) continue;
    const std::size_t count = std::uniform_int_distribution<std::size_t>(0, kept)(rng);
    const auto got = prune_smallest(p, current, count);
    CHECK(got == sorted_prune(p, current, count));
    CHECK(got.kept() == kept - count);
    for (std::size_t l = 0; l < got.layers.size(); ++l) {
      // pruning never revives a weight
      CHECK((got.layers[l].array() <= current.layers[l].array()).all());
    }
  }
}

TEST_CASE("prune count helpers") {
  CHECK(target_surviving(1000, 0.9) == 100);
  CHECK(target_surviving(1000, 0.97) == 30);
  CHECK(target_surviving(7, 0.5) == 3);  // llround(3.5) = 4 zeros
  CHECK(next_prune_count(1000, 100, 0.2) == 200);
  CHECK(next_prune_count(120, 100, 0.2) == 20);
  CHECK(next_prune_count(100, 100, 0.2) == 0);
  CHECK(next_prune_count(4, 1, 0.2) == 3);  // a zero-sized full round still closes the gap
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t total = std::uniform_int_distribution<std::size_t>(1, 100000)(rng);
    const double frac = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
    const double s = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
    const std::size_t target = target_surviving(total, s);
    std::size_t surv = total;
    int rounds = 0;
    while (surv > target) {
      const auto c = next_prune_count(surv, target, frac);
      REQUIRE(c > 0);
      REQUIRE(c <= surv - target);
      surv -= c;
      ++rounds;
    }
    CHECK(surv == target);
  }
}

TEST_CASE("global_magnitude_mask prunes floor(fraction * surviving)") {
  Rng rng(2);
  const ModelSpec spec{{10, 10, 3}, 1};
  const auto p = random_params<double>(spec, rng);
  const auto m = global_magnitude_mask(p, Mask::ones(spec), 0.2);
  CHECK(m.kept() == 130 - 26);
  CHECK_THROWS_AS(global_magnitude_mask(p, Mask::ones(spec), 0.0), ConfigError);
  CHECK_THROWS_AS(prune_smallest(p, Mask::ones(spec), 131), ConfigError);
}

TEST_CASE("IMP reaches exact targets with a monotone mask sequence") {
  const auto [tr, te] = small_blobs();
  const ModelSpec spec{{8, 12, 12, 4}, 1};
  const auto tcfg = imp_train_config();
  const auto dense = train(Checkpoint<float>::fresh(init_params<float>(spec, 9), tcfg.seed), nullptr, tcfg, tr);
  const auto& rewind = dense.rewinds.at(0);
  const std::vector<double> targets{0.8, 0.9, 0.95, 0.97};
  const std::size_t total = spec.weight_count();

  const auto multi = imp_multi(dense.final.params, rewind, tr, imp_prune_config(0.9), tcfg, {0.97, 0.8, 0.95, 0.9});
  REQUIRE(multi.size() == 4);
  const std::vector<double> order{0.97, 0.8, 0.95, 0.9};
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = multi[i];
    CHECK(r.mask.kept() == target_surviving(total, order[i]));
    CHECK(std::abs(r.mask.sparsity() - order[i]) <= 1.0 / static_cast<double>(total));
    const auto& seq = r.sequence;
    REQUIRE(seq.size() >= 2);
    CHECK(seq.masks[0] == Mask::ones(spec));
    CHECK(seq.solutions[0].bitwise_equal(dense.final.params));
    for (std::size_t k = 1; k < seq.size(); ++k) {
      CHECK(seq.sparsities[k] > seq.sparsities[k - 1]);
      for (std::size_t l = 0; l < seq.masks[k].layers.size(); ++l) {
        CHECK((seq.masks[k].layers[l].array() <= seq.masks[k - 1].layers[l].array()).all());
      }
      // retrained solutions live on their mask
      for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        for (Eigen::Index i = 0; i < seq.masks[k].layers[l].size(); ++i) {
          if (!seq.masks[k].layers[l].data()[i]) CHECK(seq.solutions[k].weights[l].data()[i] == 0.0f);
        }
      }
    }
    CHECK(r.pruned_solution.bitwise_equal(seq.solutions.back()));
  }

  // a single-target call agrees with its branch of the shared run
  const auto single = imp(dense.final.params, rewind, tr, imp_prune_config(0.95), tcfg);
  CHECK(single.mask == multi[2].mask);
  CHECK(single.pruned_solution.bitwise_equal(multi[2].pruned_solution));
  CHECK(single.sequence.size() == multi[2].sequence.size());
}

TEST_CASE("prune config validation") {
  PruneConfig p;
  CHECK_NOTHROW(p.validate());
  p.target_sparsity = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = PruneConfig{};
  p.per_round_fraction = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = PruneConfig{};
  p.prune_lr = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
