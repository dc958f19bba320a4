#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "srb/lmc.hpp"

using namespace srb;
using srb::testing::random_matrix;
using srb::testing::random_params;
using srb::testing::random_spec;
using srb::testing::small_blobs;

TEST_CASE("lerp is exact at the ends and affine in between") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = random_spec(rng);
    const auto a = random_params<double>(spec, rng);
    const auto b = random_params<double>(spec, rng);
    CHECK(lerp_params(a, b, 0.0).bitwise_equal(a));
    CHECK(lerp_params(a, b, 1.0).bitwise_equal(b));
    const double t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto m = lerp_params(a, b, t);
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      for (Eigen::Index i = 0; i < m.weights[l].size(); ++i) {
        const double expect = (1.0 - t) * a.weights[l].data()[i] + t * b.weights[l].data()[i];
        CHECK(m.weights[l].data()[i] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
  const ModelSpec s{{2, 3, 2}, 1};
  CHECK_THROWS_AS(lerp_params(init_params<float>(s, 1), init_params<float>(s, 2), 1.5), ConfigError);
  CHECK_THROWS_AS(lerp_params(init_params<float>(s, 1), init_params<float>(ModelSpec{{2, 4, 2}, 1}, 2), 0.5),
                  ShapeError);
}

TEST_CASE("barrier_value against a direct computation") {
  CHECK(barrier_value({0.0, 0.5, 1.0}, {1.0, 3.0, 2.0}) == doctest::Approx(1.5));
  CHECK(barrier_value({0.0, 0.5, 1.0}, {1.0, 1.0, 2.0}) == 0.0);  // below the chord clamps to zero
  CHECK(barrier_value({0.0, 1.0}, {4.0, 1.0}) == 0.0);
  CHECK_THROWS_AS(barrier_value({0.0}, {1.0}), ConfigError);
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0}, v(5);
    for (auto& x : v) x = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    double best = 0.0;
    for (std::size_t i = 0; i < 5; ++i) best = std::max(best, v[i] - ((1 - alphas[i]) * v[0] + alphas[i] * v[4]));
    CHECK(barrier_value(alphas, v) == doctest::Approx(best).epsilon(1e-14));
  }
}

TEST_CASE("repair hits the interpolated endpoint statistics layer by layer") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelSpec spec{{6, 20, 16, 12, 3}, 1};
    const auto a = random_params<double>(spec, rng);
    const auto b = random_params<double>(spec, rng);
    const double alpha = 0.1 + 0.8 * std::uniform_real_distribution<double>()(rng);
    const auto x = random_matrix<double>(300, 6, rng);
    RepairStats st;
    const auto fixed = repair(lerp_params(a, b, alpha), a, b, alpha, x, &st);
    REQUIRE(st.mean_a.size() == 3);
    const auto pre = pre_activations(fixed, nullptr, x);
    const auto pre_a = pre_activations(a, nullptr, x);
    const auto pre_b = pre_activations(b, nullptr, x);
    for (std::size_t l = 0; l < 3; ++l) {
      Vector<double> m, s, ma, sa, mb, sb;
      column_stats(pre[l], m, s);
      column_stats(pre_a[l], ma, sa);
      column_stats(pre_b[l], mb, sb);
      CHECK((ma - st.mean_a[l]).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((sb - st.std_b[l]).cwiseAbs().maxCoeff() < 1e-12);
      for (Eigen::Index u = 0; u < m.size(); ++u) {
        if (st.std_interp[l](u) <= kRepairEpsilon) continue;
        CHECK(m(u) == doctest::Approx((1 - alpha) * ma(u) + alpha * mb(u)).epsilon(1e-9));
        CHECK(s(u) == doctest::Approx((1 - alpha) * sa(u) + alpha * sb(u)).epsilon(1e-9));
      }
    }
    // the output layer is never touched
    CHECK(fixed.weights.back() == lerp_params(a, b, alpha).weights.back());
  }
}

TEST_CASE("repair leaves degenerate units alone") {
  const ModelSpec spec{{3, 4, 2}, 1};
  Rng rng(4);
  auto a = random_params<double>(spec, rng);
  a.weights[0].row(1).setZero();  // constant pre-activation
  const auto b = a;
  const auto x = random_matrix<double>(50, 3, rng);
  RepairStats st;
  const auto fixed = repair(lerp_params(a, b, 0.5), a, b, 0.5, x, &st);
  CHECK(st.skipped_units == 1);
  CHECK(fixed.weights[0].row(1).isZero(0.0));
  CHECK(fixed.biases[0](1) == a.biases[0](1));
  // identical endpoints: repair is a no-op up to rounding
  CHECK((fixed.weights[0] - a.weights[0]).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(repair(a, a, b, 0.5, Matrix<double>(0, 3)), ConfigError);
}

TEST_CASE("barrier identities") {
  const auto [tr, te] = small_blobs();
  const ModelSpec spec{{8, 16, 16, 4}, 1};
  Rng rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    const auto a = random_params<double>(spec, rng);
    const auto b = random_params<double>(spec, rng);
    for (bool rep : {false, true}) {
      BarrierOptions o;
      o.grid_size = 11;
      o.repair = rep;
      o.calibration_samples = 256;
      const auto self = barrier(a, a, tr, &te, o);
      CHECK(self.loss_barrier_train <= 1e-12);
      CHECK(self.error_barrier_test <= 1e-12);

      const auto ab = barrier(a, b, tr, &te, o);
      const auto ba = barrier(b, a, tr, &te, o);
      CHECK(std::abs(ab.loss_barrier_train - ba.loss_barrier_train) <= 1e-6);
      CHECK(std::abs(ab.loss_barrier_test - ba.loss_barrier_test) <= 1e-6);
      CHECK(std::abs(ab.error_barrier_test - ba.error_barrier_test) <= 1e-6);
      CHECK(ab.repaired == rep);

      const auto ea = evaluate(a, nullptr, tr.features, tr.labels);
      const auto eb = evaluate(b, nullptr, te.features, te.labels);
      CHECK(ab.train.front().loss == ea.loss);
      CHECK(ab.train.front().error == ea.error);
      CHECK(ab.test.back().loss == eb.loss);
      CHECK(ab.alphas.size() == 11);
      CHECK(ab.alphas.back() == 1.0);
    }
  }
  BarrierOptions o;
  o.evaluate_train = false;
  const auto a = random_params<double>(spec, rng);
  const auto c = barrier(a, a, tr, nullptr, o);
  CHECK(c.train.empty());
  CHECK(c.test.empty());
  o.grid_size = 1;
  CHECK_THROWS_AS(barrier(a, a, tr, nullptr, o), ConfigError);
}

TEST_CASE("plane anchors evaluate to the anchor models") {
  const auto [tr, te] = small_blobs();
  const ModelSpec spec{{8, 10, 4}, 1};
  Rng rng(6);
  const auto a = random_params<double>(spec, rng);
  const auto b = random_params<double>(spec, rng);
  const auto c = random_params<double>(spec, rng);
  const auto g = plane_eval(a, b, c, 5, 0.1, te);
  CHECK(g.xs.size() == 5);
  CHECK(g.loss.rows() == 5);
  CHECK(g.anchors(0, 0) == 0.0);
  CHECK(g.anchors(2, 1) > 0.0);
  const ParamSet<double>* models[] = {&a, &b, &c};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto direct = evaluate(*models[k], nullptr, te.features, te.labels);
    CHECK(g.anchor_values[k].loss == doctest::Approx(direct.loss).epsilon(1e-9));
    CHECK(g.anchor_values[k].error == direct.error);
    CHECK(g.anchors(static_cast<Eigen::Index>(k), 0) >= g.xs.front());
    CHECK(g.anchors(static_cast<Eigen::Index>(k), 0) <= g.xs.back());
  }
  // distances between anchors are preserved by the orthonormal basis
  auto dist = [](const ParamSet<double>& p, const ParamSet<double>& q) {
    double s = 0.0;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      s += (p.weights[l] - q.weights[l]).squaredNorm() + (p.biases[l] - q.biases[l]).squaredNorm();
    }
    return std::sqrt(s);
  };
  CHECK((g.anchors.row(2) - g.anchors.row(1)).norm() == doctest::Approx(dist(b, c)).epsilon(1e-9));

  CHECK_THROWS_AS(plane_eval(a, b, lerp_params(a, b, 0.3), 5, 0.1, te), NumericError);
  CHECK_THROWS_AS(plane_eval(a, a, c, 5, 0.1, te), NumericError);
  CHECK_THROWS_AS(plane_eval(a, b, c, 1, 0.1, te), ConfigError);
}

TEST_CASE("dense-vs-IMP barriers start at zero") {
  const auto [tr, te] = small_blobs();
  const ModelSpec spec{{8, 16, 4}, 1};
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 64;
  t.rewind_epochs = {1};
  const auto dense = train(Checkpoint<double>::fresh(init_params<double>(spec, 2), 0), nullptr, t, tr);
  PruneConfig p;
  p.target_sparsity = 0.5;
  p.train_epochs_per_prune = 1;
  p.rewind_epoch = 1;
  const auto r = imp(dense.final.params, dense.rewinds[0], tr, p, t);
  BarrierOptions o;
  o.grid_size = 5;
  o.calibration_samples = 128;
  const auto pts = barrier_vs_imp_iteration(dense.final.params, r.sequence, tr, te, o);
  REQUIRE(pts.size() == r.sequence.size());
  CHECK(pts[0].error_barrier == 0.0);
  CHECK(pts[0].error_barrier_repaired == 0.0);
  CHECK(pts[0].loss_barrier <= 1e-12);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].iteration == i);
    CHECK(pts[i].sparsity == r.sequence.sparsities[i]);
    CHECK(pts[i].error_barrier >= 0.0);
  }
}
