#include "srb/harness/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <set>
#include <thread>

#include "json.hpp"
#include "srb/diversity.hpp"
#include "srb/harness/checkpoint.hpp"
#include "srb/workbench.hpp"

namespace srb {

std::vector<std::uint64_t> diversity_seeds(const ExperimentPlan& plan) {
  std::vector<std::uint64_t> out;
  std::set<std::uint64_t> used;
  for (auto s : plan.seeds) {
    if (out.size() == plan.diversity.models) break;
    out.push_back(s);
    used.insert(s);
  }
  std::uint64_t next = 0;
  while (out.size() < plan.diversity.models) {
    if (!used.count(next)) {
      out.push_back(next);
      used.insert(next);
    }
    ++next;
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Task {
  std::string id;
  std::function<void(ResultSet&)> run;  // appends rows to a private ResultSet
};

void run_tasks(std::vector<Task>& tasks, std::size_t threads, ResultSet& out, const LogFn& log) {
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      ResultSet local;
      TaskStatus status{tasks[i].id, true, {}};
      try {
        tasks[i].run(local);
      } catch (const std::exception& e) {
        status.ok = false;
        status.error = e.what();
        local = ResultSet{};
      }
      std::lock_guard lock(mutex);
      if (log) log((status.ok ? "done   " : "FAILED ") + status.id + (status.ok ? "" : ": " + status.error));
      auto move_into = [](auto& dst, auto& src) { std::move(src.begin(), src.end(), std::back_inserter(dst)); };
      move_into(out.records, local.records);
      move_into(out.barrier, local.barrier);
      move_into(out.plane, local.plane);
      move_into(out.diversity, local.diversity);
      move_into(out.imp_barrier, local.imp_barrier);
      out.status.push_back(std::move(status));
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, tasks.size()));
  if (n == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

void add_curve_rows(ResultSet& out, const BarrierCurve& curve, const std::string& pair_id, std::size_t width) {
  for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
    const auto& tr = curve.train[i];
    const double test_loss = curve.test.empty() ? 0.0 : curve.test[i].loss;
    const double test_err = curve.test.empty() ? 0.0 : curve.test[i].error;
    out.barrier.push_back({pair_id, width, curve.alphas[i], curve.repaired, "loss", tr.loss, test_loss});
    out.barrier.push_back({pair_id, width, curve.alphas[i], curve.repaired, "error", tr.error, test_err});
  }
}

template <class T>
class Study {
 public:
  Study(const ExperimentPlan& plan, const Dataset& train_set, const Dataset& test_set, std::string hash)
      : plan_(plan), train_(train_set), test_(test_set), hash_(std::move(hash)) {
    for (auto w : plan.widths) benches_.emplace(w, std::make_unique<Workbench<T>>(study_config(w), train_, test_));
  }

  std::vector<Task> tasks() {
    std::vector<Task> out;
    for (auto w : plan_.widths) {
      for (auto seed : plan_.seeds) {
        for (double s : plan_.sparsities) {
          for (auto k : plan_.rewind_epochs) {
            for (auto m : plan_.methods) {
              CellKey key{w, s, k, std::string(to_string(m)), seed};
              out.push_back({key.id(), [this, key, m](ResultSet& r) { cell(key, m, r); }});
            }
          }
        }
        if (plan_.barrier.enabled) {
          out.push_back({"barrier-w" + std::to_string(w) + "-" + seed_tag(seed),
                         [this, w, seed](ResultSet& r) { barrier_pair(w, seed, r); }});
        }
        if (plan_.imp_barrier) {
          out.push_back({"imp-barrier-w" + std::to_string(w) + "-" + seed_tag(seed),
                         [this, w, seed](ResultSet& r) { imp_barrier(w, seed, r); }});
        }
      }
    }
    if (plan_.plane.enabled) out.push_back({"plane", [this](ResultSet& r) { plane(r); }});
    if (plan_.diversity.enabled) {
      for (auto m : {DiversityMethod::imp, DiversityMethod::lth, DiversityMethod::naive, DiversityMethod::permuted}) {
        out.push_back({"diversity-" + std::string(to_string(m)), [this, m](ResultSet& r) { diversity(m, r); }});
      }
    }
    return out;
  }

 private:
  StudyConfig study_config(std::size_t width) const {
    StudyConfig c;
    c.spec = plan_.model(width);
    c.dense = plan_.dense;
    c.dense.rewind_epochs = plan_.rewind_epochs;
    if (plan_.diversity.enabled) c.dense.rewind_epochs.push_back(plan_.diversity.rewind_epoch);
    std::sort(c.dense.rewind_epochs.begin(), c.dense.rewind_epochs.end());
    c.dense.rewind_epochs.erase(std::unique(c.dense.rewind_epochs.begin(), c.dense.rewind_epochs.end()),
                                c.dense.rewind_epochs.end());
    c.sparse = plan_.sparse;
    c.prune = plan_.prune;
    c.imp_targets = plan_.sparsities;
    if (plan_.diversity.enabled &&
        std::find(c.imp_targets.begin(), c.imp_targets.end(), plan_.diversity.sparsity) == c.imp_targets.end()) {
      c.imp_targets.push_back(plan_.diversity.sparsity);
    }
    std::sort(c.imp_targets.begin(), c.imp_targets.end());
    c.match = plan_.match;
    c.early_match_epoch = plan_.early_match_epoch;
    return c;
  }

  ModelSeeds seeds(std::uint64_t pair, char role) const { return ModelSeeds::derive(plan_.master_seed, pair, role); }
  Workbench<T>& bench(std::size_t width) { return *benches_.at(width); }

  void cell(const CellKey& key, TransferMethod method, ResultSet& out) {
    const auto t0 = Clock::now();
    auto& wb = bench(key.width);
    const auto a = seeds(key.seed, 'A');
    const auto b = seeds(key.seed, 'B');
    const Mask& mask_a = wb.imp(a, key.sparsity).mask;

    SparseRun<T> run;
    switch (method) {
      case TransferMethod::lth:
        run = wb.sparse_train(wb.rewind(a, key.rewind_epoch), mask_a, a.data);
        break;
      case TransferMethod::naive:
        run = wb.sparse_train(wb.rewind(b, key.rewind_epoch), mask_a, b.data);
        break;
      case TransferMethod::permuted:
        run = wb.sparse_train(wb.rewind(b, key.rewind_epoch), apply_permutation(mask_a, wb.match(a, b)), b.data);
        break;
    }

    RunRecord rec;
    rec.key = key;
    rec.dataset = plan_.dataset.kind;
    rec.test_acc = 1.0 - run.test_eval.error;
    rec.train_acc = 1.0 - run.train_eval.error;
    rec.final_train_loss = run.train_eval.loss;
    rec.mask_sparsity = run.mask.sparsity();
    rec.config_hash = hash_;
    if (plan_.save_checkpoints) {
      Checkpoint<T> c;
      c.params = run.params;
      c.mask = run.mask;
      c.epoch = plan_.sparse.epochs;
      c.seed = method == TransferMethod::lth ? a.data : b.data;
      c.rng_counter = c.epoch;
      rec.checkpoint = "checkpoints/" + key.id() + ".sprb";
      save_checkpoint(c, plan_.out_dir / rec.checkpoint);
    }
    rec.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
    out.records.push_back(std::move(rec));
  }

  void barrier_pair(std::size_t width, std::uint64_t seed, ResultSet& out) {
    auto& wb = bench(width);
    const auto a = seeds(seed, 'A');
    const auto b = seeds(seed, 'B');
    const auto& pa = wb.dense(a).final.params;
    const auto& pb = wb.dense(b).final.params;
    const auto aligned = apply_permutation(pa, wb.match(a, b));

    BarrierOptions opts;
    opts.grid_size = plan_.barrier.grid_size;
    opts.calibration_samples = plan_.barrier.calibration_samples;
    opts.calibration_seed = derive_seed(plan_.master_seed, "calibration");
    const std::string tag = seed_tag(seed);
    add_curve_rows(out, srb::barrier(pa, pb, train_, &test_, opts), tag + "-naive", width);
    add_curve_rows(out, srb::barrier(aligned, pb, train_, &test_, opts), tag + "-matched", width);
    if (plan_.barrier.repair) {
      opts.repair = true;
      add_curve_rows(out, srb::barrier(aligned, pb, train_, &test_, opts), tag + "-repaired", width);
    }
  }

  void imp_barrier(std::size_t width, std::uint64_t seed, ResultSet& out) {
    auto& wb = bench(width);
    const auto a = seeds(seed, 'A');
    const double target = *std::max_element(plan_.sparsities.begin(), plan_.sparsities.end());
    BarrierOptions opts;
    opts.grid_size = plan_.barrier.grid_size;
    opts.calibration_samples = plan_.barrier.calibration_samples;
    opts.calibration_seed = derive_seed(plan_.master_seed, "calibration");
    const auto points = barrier_vs_imp_iteration(wb.dense(a).final.params, wb.imp(a, target).sequence, train_, test_, opts);
    for (const auto& p : points) {
      const std::string tag = seed_tag(seed);
      out.imp_barrier.push_back({tag, width, p.iteration, p.sparsity, false, "error", p.error_barrier});
      out.imp_barrier.push_back({tag, width, p.iteration, p.sparsity, true, "error", p.error_barrier_repaired});
      out.imp_barrier.push_back({tag, width, p.iteration, p.sparsity, false, "loss", p.loss_barrier});
      out.imp_barrier.push_back({tag, width, p.iteration, p.sparsity, true, "loss", p.loss_barrier_repaired});
    }
  }

  // Dense A, its LTH solution and the permuted solution carried back into
  // A's unit order.
  void plane(ResultSet& out) {
    const auto width = plan_.widths.front();
    auto& wb = bench(width);
    const auto a = seeds(plan_.seeds.front(), 'A');
    const auto b = seeds(plan_.seeds.front(), 'B');
    const double s = plan_.sparsities.front();
    const std::size_t k = plan_.prune.rewind_epoch;
    const Mask& mask_a = wb.imp(a, s).mask;
    const auto& perm = wb.match(a, b);
    const auto lth = wb.sparse_train(wb.rewind(a, k), mask_a, a.data);
    const auto permuted = wb.sparse_train(wb.rewind(b, k), apply_permutation(mask_a, perm), b.data);
    const auto grid = plane_eval(wb.dense(a).final.params, lth.params, apply_permutation(permuted.params, invert(perm)),
                                 plan_.plane.resolution, plan_.plane.margin, test_);
    for (std::size_t iy = 0; iy < grid.ys.size(); ++iy) {
      for (std::size_t ix = 0; ix < grid.xs.size(); ++ix) {
        const auto r = static_cast<Eigen::Index>(iy);
        const auto c = static_cast<Eigen::Index>(ix);
        out.plane.push_back({grid.xs[ix], grid.ys[iy], "loss", grid.loss(r, c)});
        out.plane.push_back({grid.xs[ix], grid.ys[iy], "error", grid.error(r, c)});
      }
    }
    const char* names[] = {"anchor_dense", "anchor_lth", "anchor_permuted"};
    for (Eigen::Index i = 0; i < 3; ++i) {
      out.plane.push_back({grid.anchors(i, 0), grid.anchors(i, 1), std::string(names[i]) + "_loss",
                           grid.anchor_values[static_cast<std::size_t>(i)].loss});
      out.plane.push_back({grid.anchors(i, 0), grid.anchors(i, 1), std::string(names[i]) + "_error",
                           grid.anchor_values[static_cast<std::size_t>(i)].error});
    }
  }

  void diversity(DiversityMethod method, ResultSet& out) {
    DiversityOptions opts;
    opts.sparsity = plan_.diversity.sparsity;
    opts.rewind_epoch = plan_.diversity.rewind_epoch;
    opts.master_seed = plan_.master_seed;
    const auto pair_seeds = diversity_seeds(plan_);
    const auto r = diversity_protocol(method, pair_seeds, bench(plan_.widths.front()), opts);
    const std::string m(to_string(method));
    out.diversity.push_back({m, "mean_accuracy", r.mean_accuracy});
    out.diversity.push_back({m, "std_accuracy", r.std_accuracy});
    out.diversity.push_back({m, "ensemble_accuracy", r.ensemble_accuracy});
    out.diversity.push_back({m, "disagreement", r.disagreement});
    out.diversity.push_back({m, "kl", r.kl});
    out.diversity.push_back({m, "js", r.js});
    out.diversity.push_back({m, "model_count", static_cast<double>(r.model_count)});
  }

  const ExperimentPlan& plan_;
  const Dataset& train_;
  const Dataset& test_;
  std::string hash_;
  std::map<std::size_t, std::unique_ptr<Workbench<T>>> benches_;
};

std::string manifest_json(const ExperimentPlan& plan, const Dataset& train_set, const Dataset& test_set) {
  nlohmann::ordered_json j;
  j["tool"] = "sparse_rebasin";
  j["version"] = kToolVersion;
  j["config_hash"] = config_hash(plan);
  j["plan"] = nlohmann::ordered_json::parse(plan_json(plan));
  j["threads"] = plan.threads;
  j["versions"] = {{"tool", kToolVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__},
                   {"checkpoint_format", kCheckpointFormatVersion}};
  j["data"] = {{"train_rows", train_set.size()}, {"test_rows", test_set.size()}, {"classes", train_set.class_count}};
  j["metrics"] = {
      {"kl", "mean over ordered pairs (i, j), i != j, of KL(p_i || p_j); probabilities floored at 1e-12 and renormalized"},
      {"js", "mean over unordered pairs, natural log"},
      {"disagreement", "mean over unordered pairs of the fraction of differing argmax predictions"},
      {"barrier", "max over the alpha grid of value(alpha) - ((1 - alpha) value(0) + alpha value(1)), clamped at 0"}};
  j["diversity_seeds"] = plan.diversity.enabled ? nlohmann::ordered_json(diversity_seeds(plan)) : nlohmann::ordered_json::array();
  return j.dump();
}

template <class T>
ResultSet run_study(const ExperimentPlan& plan, const Dataset& train_set, const Dataset& test_set, const LogFn& log) {
  // created up front so worker threads never race on it
  if (plan.save_checkpoints) std::filesystem::create_directories(plan.out_dir / "checkpoints");
  Study<T> study(plan, train_set, test_set, config_hash(plan));
  auto tasks = study.tasks();
  ResultSet out;
  run_tasks(tasks, plan.threads, out, log);
  out.sort();
  return out;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentPlan& plan, const Dataset& train_set, const Dataset& test_set,
                            const LogFn& log) {
  plan.validate();
  train_set.validate();
  test_set.validate();
  PipelineResult r;
  r.manifest = manifest_json(plan, train_set, test_set);
  r.results = plan.precision == Precision::f32 ? run_study<float>(plan, train_set, test_set, log)
                                               : run_study<double>(plan, train_set, test_set, log);
  return r;
}

PipelineResult run_and_emit(const ExperimentPlan& plan, const LogFn& log) {
  plan.validate();
  std::error_code ec;
  std::filesystem::create_directories(plan.out_dir, ec);
  if (ec || !std::filesystem::is_directory(plan.out_dir)) {
    throw Error("cannot create output directory " + plan.out_dir.string());
  }
  const auto [train_set, test_set] = load_datasets(plan.dataset);
  auto r = run_pipeline(plan, train_set, test_set, log);
  emit_results(r.results, r.manifest, plan.out_dir);
  return r;
}

}  // namespace srb
