#pragma once

// End-to-end mask-transfer study. For every width and seed pair it trains
// dense models A and B, runs IMP on A, matches A to B and sparse-trains the
// lth / naive / permuted cells, plus the optional barrier, plane, diversity
// and dense-vs-IMP analyses. Work runs on `plan.threads` workers; shared
// artifacts are computed once and every output row is sorted by key.

#include <functional>
#include <string>

#include "srb/harness/plan.hpp"
#include "srb/harness/results.hpp"

namespace srb {

inline constexpr const char* kToolVersion = "0.1.0";

struct PipelineResult {
  ResultSet results;
  std::string manifest;  // JSON text without task status
};

using LogFn = std::function<void(const std::string&)>;

/// Runs the plan on the given splits. Checkpoints (when enabled) are written
/// below plan.out_dir; nothing else touches the filesystem.
PipelineResult run_pipeline(const ExperimentPlan& plan, const Dataset& train_set, const Dataset& test_set,
                            const LogFn& log = {});

/// Loads the datasets, runs the plan and writes every output file into
/// plan.out_dir.
PipelineResult run_and_emit(const ExperimentPlan& plan, const LogFn& log = {});

/// Pair seeds used by the diversity study: the plan's seeds, extended with
/// consecutive unused integers until there are diversity.models of them.
std::vector<std::uint64_t> diversity_seeds(const ExperimentPlan& plan);

}  // namespace srb
