// Command-line front end. Every subcommand reads the experiment plan from
// --config (defaults apply without one) and writes into --out.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "srb/diversity.hpp"
#include "srb/harness/checkpoint.hpp"
#include "srb/harness/pipeline.hpp"
#include "srb/harness/plan.hpp"
#include "srb/harness/results.hpp"
#include "srb/lmc.hpp"
#include "srb/workbench.hpp"

namespace {

using namespace srb;
namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string precision;
};

struct Inputs {
  std::string a, b, c;
  std::string dense, rewind, start, mask, perm, checkpoint;
  std::optional<double> sparsity;
  std::size_t width = 0;
  char role = 'A';
  bool repair = false;
};

ExperimentPlan resolve_plan(const Globals& g) {
  ExperimentPlan plan;
  if (!g.config.empty()) plan = load_plan(g.config);
  if (!g.out.empty()) plan.out_dir = g.out;
  if (g.seed) plan.master_seed = *g.seed;
  if (g.threads) plan.threads = *g.threads;
  if (!g.precision.empty()) plan.precision = parse_precision(g.precision);
  plan.validate();
  return plan;
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string eval_line(const char* what, const Evaluation& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: loss %.6f accuracy %.4f", what, e.loss, e.accuracy);
  return buf;
}

std::size_t pick_width(const ExperimentPlan& plan, const Inputs& in) {
  return in.width ? in.width : plan.widths.front();
}

StudyConfig study_config(const ExperimentPlan& plan, std::size_t width) {
  StudyConfig c;
  c.spec = plan.model(width);
  c.dense = plan.dense;
  c.sparse = plan.sparse;
  c.prune = plan.prune;
  c.imp_targets = plan.sparsities;
  c.match = plan.match;
  c.early_match_epoch = plan.early_match_epoch;
  return c;
}

template <class T>
struct Commands {
  const ExperimentPlan& plan;
  const Dataset& train_set;
  const Dataset& test_set;

  fs::path out(const std::string& name) const { return plan.out_dir / name; }

  void train(const Inputs& in) {
    const auto width = pick_width(plan, in);
    const auto seeds = ModelSeeds::derive(plan.master_seed, plan.seeds.front(), in.role);
    TrainConfig cfg = plan.dense;
    cfg.seed = seeds.data;
    cfg.rewind_epochs.push_back(plan.prune.rewind_epoch);
    std::sort(cfg.rewind_epochs.begin(), cfg.rewind_epochs.end());
    cfg.rewind_epochs.erase(std::unique(cfg.rewind_epochs.begin(), cfg.rewind_epochs.end()), cfg.rewind_epochs.end());
    TrainResult<T> result;
    if (!in.checkpoint.empty()) {
      result = resume(load_checkpoint<T>(in.checkpoint), cfg, train_set, &test_set);
    } else {
      auto start = Checkpoint<T>::fresh(init_params<T>(plan.model(width), seeds.init), seeds.data);
      result = srb::train(start, nullptr, cfg, train_set, &test_set);
    }
    save_checkpoint(result.final, out("final.sprb"));
    for (const auto& r : result.rewinds) save_checkpoint(r, out("rewind-" + std::to_string(r.epoch) + ".sprb"));
    std::ostringstream csv;
    csv << "epoch,train_loss,train_acc\n";
    for (const auto& e : result.report.epochs) {
      csv << e.epoch << ',' << format_number(e.train_loss) << ',' << format_number(e.train_accuracy) << '\n';
    }
    write_text(out("train_log.csv"), csv.str());
    log_line(eval_line("test", *result.report.test));
  }

  void imp(const Inputs& in) {
    const auto dense = load_checkpoint<T>(in.dense);
    const auto rewind = load_checkpoint<T>(in.rewind);
    PruneConfig pc = plan.prune;
    TrainConfig tc = plan.dense;
    tc.seed = dense.seed;
    std::vector<double> targets = plan.sparsities;
    if (in.sparsity) targets = {*in.sparsity};
    const auto results = imp_multi(dense.params, rewind, train_set, pc, tc, targets);
    std::ostringstream csv;
    csv << "target,round,sparsity,test_acc\n";
    for (std::size_t t = 0; t < results.size(); ++t) {
      const auto& r = results[t];
      Checkpoint<T> c;
      c.params = r.pruned_solution;
      c.mask = r.mask;
      c.epoch = rewind.epoch + pc.train_epochs_per_prune;
      c.seed = dense.seed;
      c.rng_counter = c.epoch;
      char name[64];
      std::snprintf(name, sizeof name, "imp-s%.4f.sprb", targets[t]);
      save_checkpoint(c, out(name));
      for (std::size_t i = 0; i < r.sequence.size(); ++i) {
        const auto e = evaluate(r.sequence.solutions[i], &r.sequence.masks[i], test_set.features, test_set.labels);
        csv << format_number(targets[t]) << ',' << i << ',' << format_number(r.sequence.sparsities[i]) << ','
            << format_number(e.accuracy) << '\n';
      }
      log_line(std::string(name) + ": " +
               eval_line("test", evaluate(r.pruned_solution, &r.mask, test_set.features, test_set.labels)));
    }
    write_text(out("imp_sequence.csv"), csv.str());
  }

  void match(const Inputs& in) {
    const auto a = load_checkpoint<T>(in.a);
    const auto b = load_checkpoint<T>(in.b);
    const auto perm = match_models(a.params, b.params, train_set, plan.match);
    write_text(out("permutation.json"), to_json(perm) + "\n");
    log_line("wrote " + out("permutation.json").string());
  }

  void permute(const Inputs& in) {
    auto c = load_checkpoint<T>(in.checkpoint);
    const auto perm = permutation_from_json(read_text(in.perm));
    c.params = apply_permutation(c.params, perm);
    if (c.velocity) c.velocity = apply_permutation(*c.velocity, perm);
    if (c.mask) c.mask = apply_permutation(*c.mask, perm);
    save_checkpoint(c, out("permuted.sprb"));
    log_line("wrote " + out("permuted.sprb").string());
  }

  void sparse_train(const Inputs& in) {
    const auto start = load_checkpoint<T>(in.start);
    const auto mask_file = load_checkpoint<T>(in.mask);
    if (!mask_file.mask) throw ConfigError(in.mask + " holds no mask");
    Mask mask = *mask_file.mask;
    if (!in.perm.empty()) mask = apply_permutation(mask, permutation_from_json(read_text(in.perm)));
    Workbench<T> wb(study_config(plan, start.spec().width), train_set, test_set);
    const auto run = wb.sparse_train(start, mask, start.seed);
    Checkpoint<T> c;
    c.params = run.params;
    c.mask = run.mask;
    c.epoch = plan.sparse.epochs;
    c.seed = start.seed;
    c.rng_counter = c.epoch;
    save_checkpoint(c, out("sparse.sprb"));
    log_line(eval_line("train", run.train_eval));
    log_line(eval_line("test", run.test_eval));
  }

  void barrier(const Inputs& in) {
    const auto a = load_checkpoint<T>(in.a);
    const auto b = load_checkpoint<T>(in.b);
    BarrierOptions opts;
    opts.grid_size = plan.barrier.grid_size;
    opts.calibration_samples = plan.barrier.calibration_samples;
    opts.calibration_seed = derive_seed(plan.master_seed, "calibration");
    opts.repair = in.repair;
    auto pa = a.mask ? apply_mask(a.params, *a.mask) : a.params;
    auto pb = b.mask ? apply_mask(b.params, *b.mask) : b.params;
    if (!in.perm.empty()) pa = apply_permutation(pa, permutation_from_json(read_text(in.perm)));
    const auto curve = srb::barrier(pa, pb, train_set, &test_set, opts);
    std::vector<BarrierRow> rows;
    for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
      rows.push_back({"cli", pa.spec.width, curve.alphas[i], curve.repaired, "loss", curve.train[i].loss, curve.test[i].loss});
      rows.push_back({"cli", pa.spec.width, curve.alphas[i], curve.repaired, "error", curve.train[i].error, curve.test[i].error});
    }
    write_text(out("barrier.csv"), barrier_csv(rows));
    char buf[200];
    std::snprintf(buf, sizeof buf, "test loss barrier %.6f, test error barrier %.6f", curve.loss_barrier_test,
                  curve.error_barrier_test);
    log_line(buf);
  }

  void plane(const Inputs& in) {
    auto load = [](const std::string& p) {
      auto c = load_checkpoint<T>(p);
      return c.mask ? apply_mask(c.params, *c.mask) : c.params;
    };
    const auto grid = plane_eval(load(in.a), load(in.b), load(in.c), plan.plane.resolution, plan.plane.margin, test_set);
    std::vector<PlaneRow> rows;
    for (std::size_t iy = 0; iy < grid.ys.size(); ++iy) {
      for (std::size_t ix = 0; ix < grid.xs.size(); ++ix) {
        const auto r = static_cast<Eigen::Index>(iy);
        const auto c = static_cast<Eigen::Index>(ix);
        rows.push_back({grid.xs[ix], grid.ys[iy], "loss", grid.loss(r, c)});
        rows.push_back({grid.xs[ix], grid.ys[iy], "error", grid.error(r, c)});
      }
    }
    write_text(out("plane.csv"), plane_csv(rows));
    log_line("wrote " + out("plane.csv").string());
  }

  void diversity(const Inputs& in) {
    Workbench<T> wb(study_config(plan, pick_width(plan, in)), train_set, test_set);
    DiversityOptions opts;
    opts.sparsity = plan.diversity.sparsity;
    opts.rewind_epoch = plan.diversity.rewind_epoch;
    opts.master_seed = plan.master_seed;
    const auto seeds = diversity_seeds(plan);
    std::vector<DiversityRow> rows;
    for (auto m : {DiversityMethod::imp, DiversityMethod::lth, DiversityMethod::naive, DiversityMethod::permuted}) {
      const auto r = diversity_protocol(m, seeds, wb, opts);
      const std::string name(to_string(m));
      rows.push_back({name, "mean_accuracy", r.mean_accuracy});
      rows.push_back({name, "std_accuracy", r.std_accuracy});
      rows.push_back({name, "ensemble_accuracy", r.ensemble_accuracy});
      rows.push_back({name, "disagreement", r.disagreement});
      rows.push_back({name, "kl", r.kl});
      rows.push_back({name, "js", r.js});
      rows.push_back({name, "model_count", static_cast<double>(r.model_count)});
      log_line(name + ": ensemble accuracy " + format_number(r.ensemble_accuracy) + ", disagreement " +
               format_number(r.disagreement));
    }
    write_text(out("diversity.csv"), diversity_csv(rows));
  }
};

// The precision of a run comes from the plan; checkpoints of the other
// precision are rejected by load_checkpoint.
template <class F>
void with_precision(const ExperimentPlan& plan, F&& f) {
  const auto [train_set, test_set] = load_datasets(plan.dataset);
  if (plan.precision == Precision::f32) {
    Commands<float> c{plan, train_set, test_set};
    f(c);
  } else {
    Commands<double> c{plan, train_set, test_set};
    f(c);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse mask transfer across permutation-aligned MLPs"};
  app.require_subcommand(1);
  Globals g;
  Inputs in;
  app.add_option("--config", g.config, "TOML experiment plan")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory (overrides out_dir)");
  app.add_option("--seed", g.seed, "master seed (overrides master_seed)");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--precision", g.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  auto* train = app.add_subcommand("train", "train a dense model, saving the final and rewind checkpoints");
  train->add_option("--role", in.role, "A or B: which model of the first seed pair")->check(CLI::IsMember({'A', 'B'}));
  train->add_option("--width", in.width, "width multiplier (default: first plan width)");
  train->add_option("--resume", in.checkpoint, "continue from this checkpoint")->check(CLI::ExistingFile);

  auto* imp = app.add_subcommand("imp", "iterative magnitude pruning of a dense solution");
  imp->add_option("--dense", in.dense, "dense solution checkpoint")->required()->check(CLI::ExistingFile);
  imp->add_option("--rewind", in.rewind, "rewind checkpoint")->required()->check(CLI::ExistingFile);
  imp->add_option("--sparsity", in.sparsity, "single target (default: plan sparsities)");

  auto* match = app.add_subcommand("match", "activation matching of model A onto model B");
  match->add_option("--a", in.a, "model A checkpoint")->required()->check(CLI::ExistingFile);
  match->add_option("--b", in.b, "model B checkpoint")->required()->check(CLI::ExistingFile);

  auto* permute = app.add_subcommand("permute", "apply a permutation to a checkpoint (weights, velocity, mask)");
  permute->add_option("--checkpoint", in.checkpoint)->required()->check(CLI::ExistingFile);
  permute->add_option("--perm", in.perm, "permutation JSON")->required()->check(CLI::ExistingFile);

  auto* sparse = app.add_subcommand("sparse-train", "train a rewind checkpoint under a fixed mask");
  sparse->add_option("--start", in.start, "rewind checkpoint")->required()->check(CLI::ExistingFile);
  sparse->add_option("--mask", in.mask, "checkpoint holding the mask")->required()->check(CLI::ExistingFile);
  sparse->add_option("--perm", in.perm, "permute the mask first")->check(CLI::ExistingFile);

  auto* barrier = app.add_subcommand("barrier", "loss/error barrier along the line between two models");
  barrier->add_option("--a", in.a)->required()->check(CLI::ExistingFile);
  barrier->add_option("--b", in.b)->required()->check(CLI::ExistingFile);
  barrier->add_option("--perm", in.perm, "permute model A first")->check(CLI::ExistingFile);
  barrier->add_flag("--repair", in.repair, "rescale interpolated hidden units");

  auto* plane = app.add_subcommand("plane", "loss/error over the plane through three models");
  plane->add_option("--a", in.a)->required()->check(CLI::ExistingFile);
  plane->add_option("--b", in.b)->required()->check(CLI::ExistingFile);
  plane->add_option("--c", in.c)->required()->check(CLI::ExistingFile);

  auto* diversity = app.add_subcommand("diversity", "functional diversity of imp/lth/naive/permuted model sets");
  diversity->add_option("--width", in.width, "width multiplier (default: first plan width)");

  auto* pipeline = app.add_subcommand("pipeline", "run the full plan and write all result files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << app.help();
    return code;
  }

  try {
    const auto plan = resolve_plan(g);
    if (pipeline->parsed()) {
      const auto r = run_and_emit(plan, log_line);
      std::size_t failed = 0;
      for (const auto& s : r.results.status) failed += s.ok ? 0 : 1;
      log_line("wrote results to " + plan.out_dir.string() + " (" + std::to_string(r.results.records.size()) +
               " cells, " + std::to_string(failed) + " failed tasks)");
      return failed == 0 ? 0 : 3;
    }
    fs::create_directories(plan.out_dir);
    with_precision(plan, [&](auto& cmd) {
      if (train->parsed()) cmd.train(in);
      if (imp->parsed()) cmd.imp(in);
      if (match->parsed()) cmd.match(in);
      if (permute->parsed()) cmd.permute(in);
      if (sparse->parsed()) cmd.sparse_train(in);
      if (barrier->parsed()) cmd.barrier(in);
      if (plane->parsed()) cmd.plane(in);
      if (diversity->parsed()) cmd.diversity(in);
    });
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
