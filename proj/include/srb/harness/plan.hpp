#pragma once

// Experiment plans: the TOML schema, defaults and the canonical JSON form
// used for the manifest and the config hash.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srb/align.hpp"
#include "srb/data.hpp"
#include "srb/lmc.hpp"
#include "srb/prune.hpp"
#include "srb/train.hpp"

namespace srb {

enum class TransferMethod { lth, naive, permuted };

std::string_view to_string(TransferMethod m);
TransferMethod parse_transfer_method(std::string_view s);

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | spirals | idx | csv
  std::uint64_t seed = 7;
  std::size_t train_size = 8000;
  std::size_t test_size = 2000;
  int classes = 10;
  std::size_t dim = 64;
  double spread = 1.0;
  int clusters_per_class = 16;
  double noise = 0.1;  // spirals
  // idx / csv
  std::filesystem::path train_path, train_labels_path;
  std::filesystem::path test_path, test_labels_path;
};

struct BarrierPlan {
  bool enabled = true;
  std::size_t grid_size = 25;
  bool repair = true;
  std::size_t calibration_samples = 2048;
};

struct PlanePlan {
  bool enabled = false;
  std::size_t resolution = 21;
  double margin = 0.2;
};

struct DiversityPlan {
  bool enabled = false;
  std::size_t models = 5;
  double sparsity = 0.9;
  std::size_t rewind_epoch = 2;
};

struct ExperimentPlan {
  DatasetSpec dataset;
  std::vector<std::size_t> base_sizes{64, 512, 512, 512, 10};
  std::vector<std::size_t> widths{1};
  TrainConfig dense;   // rewind_epochs is derived from `rewind_epochs`
  TrainConfig sparse;  // only the learning rate differs by default
  PruneConfig prune;
  std::vector<double> sparsities{0.9};
  std::vector<std::size_t> rewind_epochs{0, 2, 5, 10, 20};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<TransferMethod> methods{TransferMethod::lth, TransferMethod::naive, TransferMethod::permuted};
  MatchOptions match;
  std::optional<std::size_t> early_match_epoch;
  BarrierPlan barrier;
  PlanePlan plane;
  DiversityPlan diversity;
  bool imp_barrier = false;
  bool save_checkpoints = true;
  std::uint64_t master_seed = 0;
  Precision precision = Precision::f32;
  std::filesystem::path out_dir = "results";
  std::size_t threads = 1;

  ExperimentPlan();
  void validate() const;
  ModelSpec model(std::size_t width) const { return ModelSpec{base_sizes, width}; }
};

/// Parses TOML text. Relative data paths are resolved against `base_dir`.
ExperimentPlan parse_plan(const std::string& toml_text, const std::filesystem::path& base_dir = {});
ExperimentPlan load_plan(const std::filesystem::path& path);

/// Canonical JSON of everything that influences results (out_dir and
/// threads excluded), with keys in a fixed order.
std::string plan_json(const ExperimentPlan& plan);

/// 16 hex digits of FNV-1a over plan_json().
std::string config_hash(const ExperimentPlan& plan);

/// Builds or loads the train and test splits described by `spec`.
std::pair<Dataset, Dataset> load_datasets(const DatasetSpec& spec);

}  // namespace srb
