#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "srb/diversity.hpp"
#include "srb/workbench.hpp"

using namespace srb;
using srb::testing::small_blobs;

namespace {

StudyConfig tiny_study() {
  StudyConfig c;
  c.spec = ModelSpec{{8, 16, 16, 4}, 1};
  c.dense.epochs = 4;
  c.dense.batch_size = 64;
  c.dense.rewind_epochs = {0};
  c.sparse = c.dense;
  c.sparse.learning_rate = 0.02;
  c.prune.target_sparsity = 0.8;
  c.prune.train_epochs_per_prune = 1;
  c.prune.rewind_epoch = 1;
  c.imp_targets = {0.5, 0.8};
  c.match.sample_count = 256;
  return c;
}

}  // namespace

TEST_CASE("model seeds are derived per pair and role") {
  const auto a = ModelSeeds::derive(0, 1, 'A');
  CHECK(a.init == ModelSeeds::derive(0, 1, 'A').init);
  CHECK(a.init != ModelSeeds::derive(0, 1, 'B').init);
  CHECK(a.init != ModelSeeds::derive(0, 2, 'A').init);
  CHECK(a.init != ModelSeeds::derive(1, 1, 'A').init);
  CHECK(a.init != a.data);
}

TEST_CASE("artifacts are computed once and shared") {
  const auto [tr, te] = small_blobs();
  Workbench<float> bench(tiny_study(), tr, te);
  const auto a = ModelSeeds::derive(0, 0, 'A');
  const auto b = ModelSeeds::derive(0, 0, 'B');
  const auto& d1 = bench.dense(a);
  const auto& d2 = bench.dense(a);
  CHECK(&d1 == &d2);
  // the prune rewind epoch is snapshotted even though only 0 was requested
  CHECK(bench.rewind(a, 1).epoch == 1);
  CHECK(bench.rewind(a, 0).params.bitwise_equal(init_params<float>(bench.config().spec, a.init)));
  CHECK_THROWS_AS(bench.rewind(a, 3), ConfigError);

  const auto& m50 = bench.imp(a, 0.5);
  const auto& m80 = bench.imp(a, 0.8);
  CHECK(m50.mask.kept() == target_surviving(bench.config().spec.weight_count(), 0.5));
  CHECK(m80.mask.kept() == target_surviving(bench.config().spec.weight_count(), 0.8));
  CHECK_THROWS_AS(bench.imp(a, 0.9), ConfigError);

  const auto& pi = bench.match(a, b);
  CHECK(&pi == &bench.match(a, b));
  pi.check_compatible(bench.config().spec);
  CHECK(bench.match(a, a).is_identity());

  const auto run = bench.sparse_train(bench.rewind(b, 1), apply_permutation(m80.mask, pi), b.data);
  CHECK(run.mask.sparsity() == doctest::Approx(m80.mask.sparsity()));
  CHECK(run.report.epochs.size() == 3);  // epochs 1..3 of T = 4
  CHECK(run.test_eval.accuracy > 0.3);
}

TEST_CASE("threaded use yields the same artifacts as serial use") {
  const auto [tr, te] = small_blobs();
  const auto cfg = tiny_study();
  Workbench<float> serial(cfg, tr, te);
  Workbench<float> threaded(cfg, tr, te);
  std::vector<ModelSeeds> seeds;
  for (std::uint64_t s = 0; s < 3; ++s) seeds.push_back(ModelSeeds::derive(5, s, 'A'));

  std::vector<std::thread> pool;
  for (int t = 0; t < 6; ++t) {
    pool.emplace_back([&, t] { threaded.imp(seeds[static_cast<std::size_t>(t) % 3], 0.8); });
  }
  for (auto& th : pool) th.join();
  for (const auto& s : seeds) {
    CHECK(serial.imp(s, 0.8).pruned_solution.bitwise_equal(threaded.imp(s, 0.8).pruned_solution));
    CHECK(serial.dense(s).final.params.bitwise_equal(threaded.dense(s).final.params));
  }
}

TEST_CASE("config and data mismatches are rejected") {
  const auto [tr, te] = small_blobs();
  auto cfg = tiny_study();
  cfg.spec = ModelSpec{{9, 16, 4}, 1};
  CHECK_THROWS_AS(Workbench<float>(cfg, tr, te), ConfigError);
  cfg = tiny_study();
  cfg.spec = ModelSpec{{8, 16, 3}, 1};
  CHECK_THROWS_AS(Workbench<float>(cfg, tr, te), ConfigError);
  cfg = tiny_study();
  cfg.prune.rewind_epoch = 9;
  CHECK_THROWS_AS(Workbench<float>(cfg, tr, te), ConfigError);
}

TEST_CASE("diversity protocols build the documented model sets") {
  const auto [tr, te] = small_blobs();
  Workbench<float> bench(tiny_study(), tr, te);
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  DiversityOptions o;
  o.sparsity = 0.8;
  o.rewind_epoch = 1;
  for (auto m : {DiversityMethod::imp, DiversityMethod::lth, DiversityMethod::naive, DiversityMethod::permuted}) {
    CHECK(parse_diversity_method(to_string(m)) == m);
    const auto r = diversity_protocol(m, seeds, bench, o);
    CHECK(r.model_count == 3);
    CHECK(r.disagreement >= 0.0);
    CHECK(r.ensemble_accuracy > 0.3);
  }
  // without data-order variation the LTH members coincide
  o.vary_lth_data_order = false;
  const auto same = diversity_protocol(DiversityMethod::lth, seeds, bench, o);
  CHECK(same.disagreement == 0.0);
  CHECK(same.kl == 0.0);
  CHECK_THROWS_AS(diversity_protocol(DiversityMethod::lth, std::vector<std::uint64_t>{0}, bench, o), ConfigError);
  CHECK_THROWS_AS(parse_diversity_method("dense"), ConfigError);
}
