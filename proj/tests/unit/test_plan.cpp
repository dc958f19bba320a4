#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "srb/harness/plan.hpp"

using namespace srb;

namespace {

const char* kSmall = R"(
master_seed = 3
precision = "f64"
threads = 2

[dataset]
kind = "blobs"
train_size = 400
test_size = 100
classes = 4
dim = 8
clusters_per_class = 2

[model]
base_sizes = [8, 16, 16, 4]
widths = [1, 2]

[train]
learning_rate = 0.1
sparse_learning_rate = 0.03
epochs = 6
batch_size = 32
schedule = "cosine"

[prune]
sparsities = [0.5, 0.8]
train_epochs_per_prune = 2
rewind_epoch = 1

[experiment]
methods = ["permuted", "lth"]
rewind_epochs = [3, 0, 3]
seeds = [4, 5]

[matching]
sample_count = 128
center = true
early_match_epoch = 2

[lmc]
grid_size = 9
plane = true
plane_resolution = 5

[diversity]
enabled = true
models = 3
sparsity = 0.8
rewind_epoch = 1
)";

}  // namespace

TEST_CASE("defaults describe the desk setup") {
  const ExperimentPlan p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.base_sizes == std::vector<std::size_t>{64, 512, 512, 512, 10});
  CHECK(p.dense.batch_size == 128);
  CHECK(p.dense.momentum == 0.9);
  CHECK(p.prune.per_round_fraction == 0.2);
  CHECK(p.prune.prune_lr == doctest::Approx(0.01));
  CHECK(p.barrier.grid_size == 25);
  CHECK(p.seeds.size() == 3);
  CHECK(p.diversity.models == 5);
  CHECK(p.precision == Precision::f32);
  const auto empty = parse_plan("");
  CHECK(plan_json(empty) == plan_json(p));
}

TEST_CASE("a full TOML plan is parsed") {
  const auto p = parse_plan(kSmall);
  CHECK(p.master_seed == 3);
  CHECK(p.precision == Precision::f64);
  CHECK(p.threads == 2);
  CHECK(p.dataset.train_size == 400);
  CHECK(p.dataset.clusters_per_class == 2);
  CHECK(p.widths == std::vector<std::size_t>{1, 2});
  CHECK(p.dense.learning_rate == 0.1);
  CHECK(p.sparse.learning_rate == 0.03);
  CHECK(p.sparse.epochs == 6);
  CHECK(p.sparse.schedule == LrSchedule::cosine);
  CHECK(p.prune.prune_lr == doctest::Approx(0.02));  // follows the dense rate when unset
  CHECK(p.rewind_epochs == std::vector<std::size_t>{0, 3});
  CHECK(p.dense.rewind_epochs == p.rewind_epochs);
  CHECK(p.methods == std::vector<TransferMethod>{TransferMethod::permuted, TransferMethod::lth});
  CHECK(p.match.center);
  REQUIRE(p.early_match_epoch.has_value());
  CHECK(*p.early_match_epoch == 2);
  CHECK(p.plane.enabled);
  CHECK(p.diversity.models == 3);
  CHECK(p.barrier.repair);
}

TEST_CASE("unknown keys, wrong types and invalid values are errors") {
  CHECK_THROWS_AS(parse_plan("bogus = 1"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[extra]\nx = 1"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[train]\nlearning_rat = 0.1"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[model]\nbase_sizes = \"oops\""), ConfigError);
  CHECK_THROWS_AS(parse_plan("[train]\nepochs = -1"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[train]\nepochs = 1.5"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[train"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[prune]\nsparsities = [1.0]"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[experiment]\nseeds = [1, 1]"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[experiment]\nmethods = [\"magic\"]"), ConfigError);
  CHECK_THROWS_AS(parse_plan("[experiment]\nrewind_epochs = [500]"), ConfigError);
  CHECK_THROWS_AS(parse_plan("precision = \"f16\""), ConfigError);
  CHECK_THROWS_AS(parse_plan("[dataset]\nkind = \"imagenet\""), ConfigError);
  CHECK_THROWS_AS(parse_plan("[dataset]\ndim = 32"), ConfigError);  // model input stays 64
  CHECK_THROWS_AS(parse_plan("[dataset]\nkind = \"csv\""), ConfigError);
  CHECK_THROWS_AS(parse_plan("threads = 0"), ConfigError);
  CHECK_THROWS_AS(load_plan("/nonexistent/plan.toml"), ConfigError);
}

TEST_CASE("config hash tracks result-relevant content only") {
  const auto base = parse_plan(kSmall);
  CHECK(config_hash(base) == config_hash(parse_plan(kSmall)));
  CHECK(config_hash(base).size() == 16);

  auto other = base;
  other.out_dir = "elsewhere";
  other.threads = 7;
  CHECK(config_hash(other) == config_hash(base));

  const std::vector<void (*)(ExperimentPlan&)> edits{
      [](ExperimentPlan& p) { p.master_seed += 1; },
      [](ExperimentPlan& p) { p.dense.learning_rate *= 2; },
      [](ExperimentPlan& p) { p.sparse.learning_rate *= 2; },
      [](ExperimentPlan& p) { p.sparsities.push_back(0.9); },
      [](ExperimentPlan& p) { p.dataset.seed += 1; },
      [](ExperimentPlan& p) { p.match.center = !p.match.center; },
      [](ExperimentPlan& p) { p.barrier.grid_size += 1; },
      [](ExperimentPlan& p) { p.precision = Precision::f32; },
  };
  for (auto edit : edits) {
    auto p = base;
    edit(p);
    CHECK(config_hash(p) != config_hash(base));
  }
  // the canonical JSON is valid and ordered
  const auto j = nlohmann::ordered_json::parse(plan_json(base));
  CHECK(j.begin().key() == "master_seed");
  CHECK(j["prune"]["sparsities"].size() == 2);
}

TEST_CASE("datasets load from the plan") {
  auto p = parse_plan(kSmall);
  const auto [tr, te] = load_datasets(p.dataset);
  CHECK(tr.size() == 400);
  CHECK(te.size() == 100);
  CHECK(tr.dim() == 8);
  CHECK(tr.class_count == 4);
  const auto all = make_blobs(p.dataset.seed, 500, 4, 8, p.dataset.spread, 2);
  CHECK(te.features.row(0) == all.features.row(400));

  const auto dir = std::filesystem::temp_directory_path() / "srb_test_plan";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "tr.csv") << "x,y,label\n0,1,0\n1,0,1\n";
  std::ofstream(dir / "te.csv") << "x,y,label\n0.5,0.5,2\n";
  std::ofstream(dir / "plan.toml") << "[dataset]\nkind = \"csv\"\ntrain_path = \"tr.csv\"\ntest_path = \"te.csv\"\n"
                                      "[model]\nbase_sizes = [2, 4, 3]\n";
  const auto csv_plan = load_plan(dir / "plan.toml");
  CHECK(csv_plan.dataset.train_path == dir / "tr.csv");
  const auto [ctr, cte] = load_datasets(csv_plan.dataset);
  CHECK(ctr.size() == 2);
  CHECK(ctr.class_count == 3);  // widened to cover the test labels
  CHECK(cte.class_count == 3);
}
