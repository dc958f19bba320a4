#include "srb/harness/results.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "srb/common.hpp"

namespace srb {

std::string CellKey::id() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "w%zu-s%.4f-k%zu-%s-seed%llu", width, sparsity, rewind_epoch, method.c_str(),
                static_cast<unsigned long long>(seed));
  return buf;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf, end);
}

void ResultSet::sort() {
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) { return a.key < b.key; });
  auto barrier_key = [](const BarrierRow& r) { return std::tie(r.width, r.pair_id, r.metric, r.alpha); };
  std::sort(barrier.begin(), barrier.end(),
            [&](const BarrierRow& a, const BarrierRow& b) { return barrier_key(a) < barrier_key(b); });
  auto plane_key = [](const PlaneRow& r) { return std::tie(r.metric, r.grid_y, r.grid_x); };
  std::sort(plane.begin(), plane.end(), [&](const PlaneRow& a, const PlaneRow& b) { return plane_key(a) < plane_key(b); });
  auto div_key = [](const DiversityRow& r) { return std::tie(r.method, r.metric); };
  std::sort(diversity.begin(), diversity.end(),
            [&](const DiversityRow& a, const DiversityRow& b) { return div_key(a) < div_key(b); });
  auto imp_key = [](const ImpBarrierRow& r) { return std::tie(r.width, r.pair_id, r.repaired, r.metric, r.iteration); };
  std::sort(imp_barrier.begin(), imp_barrier.end(),
            [&](const ImpBarrierRow& a, const ImpBarrierRow& b) { return imp_key(a) < imp_key(b); });
  std::sort(status.begin(), status.end(), [](const TaskStatus& a, const TaskStatus& b) { return a.id < b.id; });
}

std::string results_csv(std::vector<RunRecord> records, bool include_wall_time) {
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) { return a.key < b.key; });
  std::ostringstream out;
  out << "experiment_id,dataset,width,sparsity,rewind_epoch,method,seed,test_acc,train_acc,final_train_loss";
  if (include_wall_time) out << ",wall_time_s";
  out << "\n";
  for (const auto& r : records) {
    out << r.key.id() << ',' << r.dataset << ',' << r.key.width << ',' << format_number(r.key.sparsity) << ','
        << r.key.rewind_epoch << ',' << r.key.method << ',' << r.key.seed << ',' << format_number(r.test_acc) << ','
        << format_number(r.train_acc) << ',' << format_number(r.final_train_loss);
    if (include_wall_time) out << ',' << format_number(r.wall_time_s);
    out << "\n";
  }
  return out.str();
}

std::string barrier_csv(std::vector<BarrierRow> rows) {
  ResultSet s;
  s.barrier = std::move(rows);
  s.sort();
  std::ostringstream out;
  out << "pair_id,width,alpha,repaired,metric,train_value,test_value\n";
  for (const auto& r : s.barrier) {
    out << r.pair_id << ',' << r.width << ',' << format_number(r.alpha) << ',' << (r.repaired ? 1 : 0) << ','
        << r.metric << ',' << format_number(r.train_value) << ',' << format_number(r.test_value) << "\n";
  }
  return out.str();
}

std::string plane_csv(std::vector<PlaneRow> rows) {
  ResultSet s;
  s.plane = std::move(rows);
  s.sort();
  std::ostringstream out;
  out << "grid_x,grid_y,metric,value\n";
  for (const auto& r : s.plane) {
    out << format_number(r.grid_x) << ',' << format_number(r.grid_y) << ',' << r.metric << ','
        << format_number(r.value) << "\n";
  }
  return out.str();
}

std::string diversity_csv(std::vector<DiversityRow> rows) {
  ResultSet s;
  s.diversity = std::move(rows);
  s.sort();
  std::ostringstream out;
  out << "method,metric,value\n";
  for (const auto& r : s.diversity) out << r.method << ',' << r.metric << ',' << format_number(r.value) << "\n";
  return out.str();
}

std::string imp_barrier_csv(std::vector<ImpBarrierRow> rows) {
  ResultSet s;
  s.imp_barrier = std::move(rows);
  s.sort();
  std::ostringstream out;
  out << "pair_id,width,iteration,sparsity,repaired,metric,value\n";
  for (const auto& r : s.imp_barrier) {
    out << r.pair_id << ',' << r.width << ',' << r.iteration << ',' << format_number(r.sparsity) << ','
        << (r.repaired ? 1 : 0) << ',' << r.metric << ',' << format_number(r.value) << "\n";
  }
  return out.str();
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void emit_results(ResultSet results, const std::string& manifest, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw Error("cannot create output directory " + out_dir.string());
  results.sort();

  auto doc = manifest.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(manifest);
  std::size_t failed = 0;
  auto cells = nlohmann::ordered_json::array();
  for (const auto& s : results.status) {
    nlohmann::ordered_json c = {{"id", s.id}, {"status", s.ok ? "ok" : "failed"}};
    if (!s.ok) {
      c["error"] = s.error;
      ++failed;
    }
    cells.push_back(std::move(c));
  }
  for (const auto& r : results.records) {
    for (auto& c : cells) {
      if (c["id"] == r.key.id()) {
        c["checkpoint"] = r.checkpoint;
        c["config_hash"] = r.config_hash;
      }
    }
  }
  doc["tasks"] = std::move(cells);
  doc["failed_tasks"] = failed;

  write_file(out_dir / "results.csv", results_csv(results.records));
  write_file(out_dir / "barrier.csv", barrier_csv(results.barrier));
  write_file(out_dir / "plane.csv", plane_csv(results.plane));
  write_file(out_dir / "diversity.csv", diversity_csv(results.diversity));
  write_file(out_dir / "imp_barrier.csv", imp_barrier_csv(results.imp_barrier));
  write_file(out_dir / "manifest.json", doc.dump(2) + "\n");
}

}  // namespace srb
