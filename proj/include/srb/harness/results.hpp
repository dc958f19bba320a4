#pragma once

// Result rows and their CSV / manifest emission. Rows are sorted before
// writing so the files do not depend on the order in which cells finished.

#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

namespace srb {

/// Stable address of one sparse-training cell.
struct CellKey {
  std::size_t width = 1;
  double sparsity = 0.0;
  std::size_t rewind_epoch = 0;
  std::string method;
  std::uint64_t seed = 0;

  std::string id() const;  // e.g. "w1-s0.9000-k2-permuted-seed0"
  auto tie() const { return std::tie(width, sparsity, rewind_epoch, method, seed); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
  bool operator==(const CellKey& o) const { return tie() == o.tie(); }
};

struct RunRecord {
  CellKey key;
  std::string dataset;
  double test_acc = 0.0;
  double train_acc = 0.0;
  double final_train_loss = 0.0;
  double mask_sparsity = 0.0;
  double wall_time_s = 0.0;
  std::string checkpoint;  // relative to the output directory; empty if not saved
  std::string config_hash;
};

struct BarrierRow {
  std::string pair_id;  // "<seed>-naive", "<seed>-matched" or "<seed>-repaired"
  std::size_t width = 1;
  double alpha = 0.0;
  bool repaired = false;
  std::string metric;  // loss | error
  double train_value = 0.0;
  double test_value = 0.0;
};

struct PlaneRow {
  double grid_x = 0.0;
  double grid_y = 0.0;
  std::string metric;
  double value = 0.0;
};

struct DiversityRow {
  std::string method;
  std::string metric;
  double value = 0.0;
};

struct ImpBarrierRow {
  std::string pair_id;
  std::size_t width = 1;
  std::size_t iteration = 0;
  double sparsity = 0.0;
  bool repaired = false;
  std::string metric;
  double value = 0.0;
};

/// Outcome of any unit of pipeline work (a cell, a barrier pair, ...).
struct TaskStatus {
  std::string id;
  bool ok = true;
  std::string error;
};

struct ResultSet {
  std::vector<RunRecord> records;
  std::vector<BarrierRow> barrier;
  std::vector<PlaneRow> plane;
  std::vector<DiversityRow> diversity;
  std::vector<ImpBarrierRow> imp_barrier;
  std::vector<TaskStatus> status;

  void sort();
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);

std::string results_csv(std::vector<RunRecord> records, bool include_wall_time = true);
std::string barrier_csv(std::vector<BarrierRow> rows);
std::string plane_csv(std::vector<PlaneRow> rows);
std::string diversity_csv(std::vector<DiversityRow> rows);
std::string imp_barrier_csv(std::vector<ImpBarrierRow> rows);

/// Writes results.csv, barrier.csv, plane.csv, diversity.csv,
/// imp_barrier.csv and manifest.json into `out_dir`. `manifest` is the
/// JSON text of the run description; per-task status is merged into it.
void emit_results(ResultSet results, const std::string& manifest, const std::filesystem::path& out_dir);

}  // namespace srb
