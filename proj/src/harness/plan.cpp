#include "srb/harness/plan.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "toml.hpp"

namespace srb {

std::string_view to_string(TransferMethod m) {
  switch (m) {
    case TransferMethod::lth: return "lth";
    case TransferMethod::naive: return "naive";
    case TransferMethod::permuted: return "permuted";
  }
  return "?";
}

TransferMethod parse_transfer_method(std::string_view s) {
  if (s == "lth") return TransferMethod::lth;
  if (s == "naive") return TransferMethod::naive;
  if (s == "permuted") return TransferMethod::permuted;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected lth, naive or permuted)");
}

ExperimentPlan::ExperimentPlan() {
  dense.learning_rate = 0.05;
  sparse = dense;
  sparse.learning_rate = 0.02;
  prune.prune_lr = dense.learning_rate * 0.2;
}

void ExperimentPlan::validate() const {
  for (auto w : widths) model(w).validate();
  if (widths.empty()) throw ConfigError("model.widths must not be empty");
  if (sparsities.empty()) throw ConfigError("prune.sparsities must not be empty");
  if (rewind_epochs.empty()) throw ConfigError("experiment.rewind_epochs must not be empty");
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (methods.empty()) throw ConfigError("experiment.methods must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("experiment.seeds must be distinct");
  }
  for (double s : sparsities) {
    if (!(s > 0.0 && s < 1.0)) throw ConfigError("sparsities must lie in (0, 1)");
  }
  auto check_epoch = [&](std::size_t k, const char* what) {
    if (k > dense.epochs) throw ConfigError(std::string(what) + " " + std::to_string(k) + " exceeds train.epochs");
  };
  for (auto k : rewind_epochs) check_epoch(k, "rewind epoch");
  check_epoch(prune.rewind_epoch, "prune.rewind_epoch");
  if (early_match_epoch) check_epoch(*early_match_epoch, "matching.early_match_epoch");
  if (diversity.enabled) {
    check_epoch(diversity.rewind_epoch, "diversity.rewind_epoch");
    if (diversity.models < 2) throw ConfigError("diversity.models must be >= 2");
  }
  if (sparse.epochs != dense.epochs) throw ConfigError("sparse and dense training must share T");
  dense.validate();
  sparse.validate();
  PruneConfig p = prune;
  for (double s : sparsities) {
    p.target_sparsity = s;
    p.validate();
  }
  if (barrier.grid_size < 2) throw ConfigError("lmc.grid_size must be >= 2");
  if (plane.enabled && plane.resolution < 2) throw ConfigError("lmc.plane_resolution must be >= 2");
  if (match.sample_count < 1) throw ConfigError("matching.sample_count must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  const auto& d = dataset;
  if (d.kind == "blobs" || d.kind == "spirals") {
    if (d.train_size == 0 || d.test_size == 0) throw ConfigError("dataset sizes must be positive");
    if (d.kind == "spirals" && base_sizes.front() != 2) throw ConfigError("spirals are 2-D; model.base_sizes must start with 2");
    if (d.kind == "blobs" && base_sizes.front() != d.dim) throw ConfigError("model input size must equal dataset.dim");
  } else if (d.kind == "idx" || d.kind == "csv") {
    if (d.train_path.empty() || d.test_path.empty()) throw ConfigError("dataset.train_path and test_path are required");
  } else {
    throw ConfigError("unknown dataset kind '" + d.kind + "'");
  }
}

namespace {

class TableReader {
 public:
  TableReader(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <class V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    if constexpr (std::is_same_v<V, bool>) {
      auto v = node->value<bool>();
      if (!v) fail(key, "a boolean");
      out = *v;
    } else if constexpr (std::is_same_v<V, std::string> || std::is_same_v<V, std::filesystem::path>) {
      auto v = node->value<std::string>();
      if (!v) fail(key, "a string");
      out = *v;
    } else if constexpr (std::is_floating_point_v<V>) {
      auto v = node->value<double>();
      if (!v) fail(key, "a number");
      out = *v;
    } else if constexpr (std::is_integral_v<V>) {
      auto v = node->value<std::int64_t>();
      if (!v || *v < 0) fail(key, "a non-negative integer");
      out = static_cast<V>(*v);
    } else {
      static_assert(sizeof(V) == 0, "unsupported field type");
    }
  }

  template <class V>
  void get_list(const char* key, std::vector<V>& out) {
    seen_.insert(key);
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    const auto* arr = node->as_array();
    if (!arr) fail(key, "an array");
    std::vector<V> values;
    for (const auto& item : *arr) {
      if constexpr (std::is_same_v<V, std::string>) {
        auto v = item.value<std::string>();
        if (!v) fail(key, "an array of strings");
        values.push_back(*v);
      } else if constexpr (std::is_floating_point_v<V>) {
        auto v = item.value<double>();
        if (!v) fail(key, "an array of numbers");
        values.push_back(*v);
      } else {
        auto v = item.value<std::int64_t>();
        if (!v || *v < 0) fail(key, "an array of non-negative integers");
        values.push_back(static_cast<V>(*v));
      }
    }
    out = std::move(values);
  }

  bool has(const char* key) const { return table_ && table_->contains(key); }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) throw ConfigError("unknown key '" + prefix() + std::string(k.str()) + "'");
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("'" + prefix() + key + "' must be " + what);
  }
  std::string prefix() const { return name_.empty() ? "" : name_ + "."; }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

const toml::table* subtable(const toml::table& root, const char* name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  const auto* t = node->as_table();
  if (!t) throw ConfigError(std::string("[") + name + "] must be a table");
  return t;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

ExperimentPlan parse_plan(const std::string& toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  static const std::set<std::string> sections{"dataset", "model", "train", "prune", "experiment",
                                              "matching", "lmc", "diversity"};
  ExperimentPlan plan;

  TableReader top(&root, "");
  std::string precision = std::string(to_string(plan.precision));
  top.get("master_seed", plan.master_seed);
  top.get("precision", precision);
  top.get("out_dir", plan.out_dir);
  top.get("threads", plan.threads);
  plan.precision = parse_precision(precision);
  for (const auto& [k, v] : root) {
    const std::string key(k.str());
    if (v.is_table()) {
      if (!sections.count(key)) throw ConfigError("unknown section [" + key + "]");
    } else if (key != "master_seed" && key != "precision" && key != "out_dir" && key != "threads") {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  {
    TableReader t(subtable(root, "dataset"), "dataset");
    auto& d = plan.dataset;
    t.get("kind", d.kind);
    t.get("seed", d.seed);
    t.get("train_size", d.train_size);
    t.get("test_size", d.test_size);
    t.get("classes", d.classes);
    t.get("dim", d.dim);
    t.get("spread", d.spread);
    t.get("clusters_per_class", d.clusters_per_class);
    t.get("noise", d.noise);
    t.get("train_path", d.train_path);
    t.get("train_labels_path", d.train_labels_path);
    t.get("test_path", d.test_path);
    t.get("test_labels_path", d.test_labels_path);
    t.reject_unknown();
    d.train_path = resolve(base_dir, d.train_path);
    d.train_labels_path = resolve(base_dir, d.train_labels_path);
    d.test_path = resolve(base_dir, d.test_path);
    d.test_labels_path = resolve(base_dir, d.test_labels_path);
  }
  {
    TableReader t(subtable(root, "model"), "model");
    t.get_list("base_sizes", plan.base_sizes);
    t.get_list("widths", plan.widths);
    t.reject_unknown();
  }
  {
    TableReader t(subtable(root, "train"), "train");
    std::string schedule = std::string(to_string(plan.dense.schedule));
    bool prune_lr_set = false;
    t.get("learning_rate", plan.dense.learning_rate);
    t.get("sparse_learning_rate", plan.sparse.learning_rate);
    t.get("momentum", plan.dense.momentum);
    t.get("weight_decay", plan.dense.weight_decay);
    t.get("epochs", plan.dense.epochs);
    t.get("batch_size", plan.dense.batch_size);
    t.get("schedule", schedule);
    t.reject_unknown();
    plan.dense.schedule = parse_schedule(schedule);
    plan.sparse.momentum = plan.dense.momentum;
    plan.sparse.weight_decay = plan.dense.weight_decay;
    plan.sparse.epochs = plan.dense.epochs;
    plan.sparse.batch_size = plan.dense.batch_size;
    plan.sparse.schedule = plan.dense.schedule;

    TableReader p(subtable(root, "prune"), "prune");
    prune_lr_set = p.has("prune_lr");
    p.get_list("sparsities", plan.sparsities);
    p.get("per_round_fraction", plan.prune.per_round_fraction);
    p.get("train_epochs_per_prune", plan.prune.train_epochs_per_prune);
    p.get("prune_lr", plan.prune.prune_lr);
    p.get("rewind_epoch", plan.prune.rewind_epoch);
    p.reject_unknown();
    if (!prune_lr_set) plan.prune.prune_lr = plan.dense.learning_rate * 0.2;
  }
  {
    TableReader t(subtable(root, "experiment"), "experiment");
    std::vector<std::string> methods;
    t.get_list("methods", methods);
    t.get_list("rewind_epochs", plan.rewind_epochs);
    t.get_list("seeds", plan.seeds);
    t.get("save_checkpoints", plan.save_checkpoints);
    t.get("imp_barrier", plan.imp_barrier);
    t.reject_unknown();
    if (t.has("methods")) {
      plan.methods.clear();
      for (const auto& m : methods) plan.methods.push_back(parse_transfer_method(m));
    }
  }
  {
    TableReader t(subtable(root, "matching"), "matching");
    t.get("sample_count", plan.match.sample_count);
    t.get("seed", plan.match.seed);
    t.get("center", plan.match.center);
    if (t.has("early_match_epoch")) {
      std::size_t e = 0;
      t.get("early_match_epoch", e);
      plan.early_match_epoch = e;
    }
    t.reject_unknown();
  }
  {
    TableReader t(subtable(root, "lmc"), "lmc");
    t.get("barrier", plan.barrier.enabled);
    t.get("grid_size", plan.barrier.grid_size);
    t.get("repair", plan.barrier.repair);
    t.get("calibration_samples", plan.barrier.calibration_samples);
    t.get("plane", plan.plane.enabled);
    t.get("plane_resolution", plan.plane.resolution);
    t.get("plane_margin", plan.plane.margin);
    t.reject_unknown();
  }
  {
    TableReader t(subtable(root, "diversity"), "diversity");
    t.get("enabled", plan.diversity.enabled);
    t.get("models", plan.diversity.models);
    t.get("sparsity", plan.diversity.sparsity);
    t.get("rewind_epoch", plan.diversity.rewind_epoch);
    t.reject_unknown();
  }

  std::sort(plan.rewind_epochs.begin(), plan.rewind_epochs.end());
  plan.rewind_epochs.erase(std::unique(plan.rewind_epochs.begin(), plan.rewind_epochs.end()), plan.rewind_epochs.end());
  plan.dense.rewind_epochs = plan.rewind_epochs;
  plan.validate();
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str(), path.parent_path());
}

std::string plan_json(const ExperimentPlan& plan) {
  using ojson = nlohmann::ordered_json;
  const auto& d = plan.dataset;
  std::vector<std::string> methods;
  for (auto m : plan.methods) methods.emplace_back(to_string(m));
  ojson j;
  j["master_seed"] = plan.master_seed;
  j["precision"] = std::string(to_string(plan.precision));
  j["dataset"] = {{"kind", d.kind},
                  {"seed", d.seed},
                  {"train_size", d.train_size},
                  {"test_size", d.test_size},
                  {"classes", d.classes},
                  {"dim", d.dim},
                  {"spread", d.spread},
                  {"clusters_per_class", d.clusters_per_class},
                  {"noise", d.noise},
                  {"train_path", d.train_path.generic_string()},
                  {"train_labels_path", d.train_labels_path.generic_string()},
                  {"test_path", d.test_path.generic_string()},
                  {"test_labels_path", d.test_labels_path.generic_string()}};
  j["model"] = {{"base_sizes", plan.base_sizes}, {"widths", plan.widths}};
  j["train"] = {{"learning_rate", plan.dense.learning_rate},
                {"sparse_learning_rate", plan.sparse.learning_rate},
                {"momentum", plan.dense.momentum},
                {"weight_decay", plan.dense.weight_decay},
                {"epochs", plan.dense.epochs},
                {"batch_size", plan.dense.batch_size},
                {"schedule", std::string(to_string(plan.dense.schedule))}};
  j["prune"] = {{"sparsities", plan.sparsities},
                {"per_round_fraction", plan.prune.per_round_fraction},
                {"train_epochs_per_prune", plan.prune.train_epochs_per_prune},
                {"prune_lr", plan.prune.prune_lr},
                {"rewind_epoch", plan.prune.rewind_epoch}};
  j["experiment"] = {{"methods", methods},
                     {"rewind_epochs", plan.rewind_epochs},
                     {"seeds", plan.seeds},
                     {"save_checkpoints", plan.save_checkpoints},
                     {"imp_barrier", plan.imp_barrier}};
  j["matching"] = {{"sample_count", plan.match.sample_count},
                   {"seed", plan.match.seed},
                   {"center", plan.match.center},
                   {"early_match_epoch", plan.early_match_epoch ? ojson(*plan.early_match_epoch) : ojson(nullptr)}};
  j["lmc"] = {{"barrier", plan.barrier.enabled},
              {"grid_size", plan.barrier.grid_size},
              {"repair", plan.barrier.repair},
              {"calibration_samples", plan.barrier.calibration_samples},
              {"plane", plan.plane.enabled},
              {"plane_resolution", plan.plane.resolution},
              {"plane_margin", plan.plane.margin}};
  j["diversity"] = {{"enabled", plan.diversity.enabled},
                    {"models", plan.diversity.models},
                    {"sparsity", plan.diversity.sparsity},
                    {"rewind_epoch", plan.diversity.rewind_epoch}};
  return j.dump();
}

std::string config_hash(const ExperimentPlan& plan) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(plan_json(plan))));
  return buf;
}

namespace {

std::pair<Dataset, Dataset> split(const Dataset& all, std::size_t train_size) {
  std::vector<std::size_t> tr(train_size), te(all.size() - train_size);
  std::iota(tr.begin(), tr.end(), std::size_t{0});
  std::iota(te.begin(), te.end(), train_size);
  auto train = all.subset(tr);
  auto test = all.subset(te);
  train.name = all.name + "-train";
  test.name = all.name + "-test";
  return {std::move(train), std::move(test)};
}

}  // namespace

std::pair<Dataset, Dataset> load_datasets(const DatasetSpec& spec) {
  const std::size_t total = spec.train_size + spec.test_size;
  if (spec.kind == "blobs") {
    return split(make_blobs(spec.seed, total, spec.classes, spec.dim, spec.spread, spec.clusters_per_class),
                 spec.train_size);
  }
  if (spec.kind == "spirals") return split(make_spirals(spec.seed, total, spec.classes, spec.noise), spec.train_size);
  std::pair<Dataset, Dataset> out;
  if (spec.kind == "idx") {
    out = {load_idx(spec.train_path, spec.train_labels_path), load_idx(spec.test_path, spec.test_labels_path)};
  } else if (spec.kind == "csv") {
    out = {load_csv(spec.train_path), load_csv(spec.test_path)};
  } else {
    throw ConfigError("unknown dataset kind '" + spec.kind + "'");
  }
  if (out.first.dim() != out.second.dim()) throw ConfigError("train and test files differ in feature count");
  const int classes = std::max(out.first.class_count, out.second.class_count);
  out.first.class_count = out.second.class_count = classes;
  return out;
}

}  // namespace srb
