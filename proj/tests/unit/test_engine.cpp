#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "srb/engine.hpp"

using namespace srb;
using srb::testing::random_labels;
using srb::testing::random_mask;
using srb::testing::random_matrix;
using srb::testing::random_params;
using srb::testing::random_spec;

namespace {

ModelSpec tiny_spec() { return ModelSpec{{2, 3, 2}, 1}; }

// Hand-set 2-3-2 network.
ParamSet<double> tiny_params() {
  auto p = ParamSet<double>::zeros(tiny_spec());
  p.weights[0] << 1.0, -1.0,
                  0.5, 2.0,
                  -1.0, 0.0;
  p.biases[0] << 0.0, -1.0, 0.5;
  p.weights[1] << 1.0, 1.0, 1.0,
                  -2.0, 0.5, 3.0;
  p.biases[1] << 0.1, -0.2;
  return p;
}

double direct_ce(const Matrix<double>& logits, const std::vector<int>& y) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double z = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c));
    total += std::log(z) - logits(r, y[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

TEST_CASE("layer sizes scale hidden layers only") {
  ModelSpec s{{64, 128, 128, 10}, 4};
  CHECK(s.layer_sizes() == std::vector<std::size_t>{64, 512, 512, 10});
  CHECK(s.weight_count() == 64 * 512 + 512 * 512 + 512 * 10);
  CHECK_THROWS_AS(ModelSpec({{3}, 1}).validate(), ConfigError);
  CHECK_THROWS_AS(ModelSpec({{3, 2}, 0}).validate(), ConfigError);
}

TEST_CASE("init is seeded He-normal with zero biases") {
  ModelSpec s{{400, 300, 10}, 1};
  const auto a = init_params<double>(s, 11);
  const auto b = init_params<double>(s, 11);
  const auto c = init_params<double>(s, 12);
  CHECK(a.bitwise_equal(b));
  CHECK_FALSE(a.bitwise_equal(c));
  for (const auto& bias : a.biases) CHECK(bias.isZero(0.0));
  const auto& w = a.weights[0];
  const double mean = w.mean();
  const double var = (w.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.005);
  CHECK(var == doctest::Approx(2.0 / 400.0).epsilon(0.02));
}

TEST_CASE("forward matches a hand computation") {
  const auto p = tiny_params();
  Matrix<double> x(2, 2);
  x << 1.0, 2.0,
       -1.0, 0.5;
  const auto f = forward(p, nullptr, x, true);
  // row 0: z1 = (-1, 3.5, -0.5) -> h = (0, 3.5, 0); logits = (3.6, 1.55)
  // row 1: z1 = (-1.5, -0.5, 1.5) -> h = (0, 0, 1.5); logits = (1.6, 4.3)
  CHECK(f.logits(0, 0) == doctest::Approx(3.6));
  CHECK(f.logits(0, 1) == doctest::Approx(1.55));
  CHECK(f.logits(1, 0) == doctest::Approx(1.6));
  CHECK(f.logits(1, 1) == doctest::Approx(4.3));
  REQUIRE(f.taps.size() == 1);
  CHECK(f.taps[0].rows() == 3);
  CHECK(f.taps[0].cols() == 2);
  CHECK(f.taps[0](1, 0) == doctest::Approx(3.5));
  CHECK(f.taps[0](2, 1) == doctest::Approx(1.5));
  CHECK(f.taps[0](0, 0) == 0.0);
}

TEST_CASE("masked weights have no influence on the output") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = random_spec(rng);
    auto p = random_params<double>(spec, rng);
    const auto m = random_mask(spec, rng, 0.6);
    const auto x = random_matrix<double>(7, static_cast<Eigen::Index>(spec.input_dim()), rng);
    const auto before = forward(p, &m, x).logits;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) {
        if (!m.layers[l].data()[i]) p.weights[l].data()[i] = 1e3;
      }
    }
    const auto after = forward(p, &m, x).logits;
    CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
    CHECK((forward(apply_mask(p, m), nullptr, x).logits - after).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cross entropy equals direct log-sum-exp and is stable") {
  Rng rng(9);
  const auto logits = random_matrix<double>(6, 4, rng, 3.0);
  const auto y = random_labels(6, 4, rng);
  CHECK(cross_entropy(logits, y) == doctest::Approx(direct_ce(logits, y)).epsilon(1e-12));

  Matrix<double> big(1, 3);
  big << 1000.0, 0.0, -1000.0;
  const std::vector<int> y0{0}, y1{1};
  CHECK(cross_entropy(big, y0) == doctest::Approx(0.0));
  CHECK(cross_entropy(big, y1) == doctest::Approx(1000.0));
  CHECK(std::isfinite(cross_entropy(big, std::vector<int>{2})));
}

TEST_CASE("softmax rows sum to one; argmax ties go low") {
  Rng rng(4);
  const auto logits = random_matrix<float>(5, 7, rng, 10.0);
  const auto p = softmax(logits);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((p.row(r).array() >= 0.0).all());
  }
  Vector<double> v(4);
  v << 1.0, 3.0, 3.0, 2.0;
  CHECK(argmax_row(v) == 1);
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto spec = random_spec(rng, 6, 3);
    const auto p = random_params<double>(spec, rng);
    const bool masked = trial % 2 == 1;
    const auto m = random_mask(spec, rng, 0.7);
    const Mask* mp = masked ? &m : nullptr;
    const auto x = random_matrix<double>(5, static_cast<Eigen::Index>(spec.input_dim()), rng);
    const auto y = random_labels(5, static_cast<int>(spec.output_dim()), rng);
    const auto g = loss_and_gradient(p, mp, x, y).grads;

    const double h = 1e-5;
    auto check_tensor = [&](auto get, auto grad_of) {
      auto q = p;
      auto& t = get(q);
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double orig = t.data()[i];
        t.data()[i] = orig + h;
        const double up = cross_entropy(forward(q, mp, x).logits, y);
        t.data()[i] = orig - h;
        const double down = cross_entropy(forward(q, mp, x).logits, y);
        t.data()[i] = orig;
        const double fd = (up - down) / (2 * h);
        const double an = grad_of().data()[i];
        CHECK(std::abs(an - fd) <= 1e-4 * std::max({std::abs(an), std::abs(fd), 1e-6}));
      }
    };
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      check_tensor([&](ParamSet<double>& q) -> Matrix<double>& { return q.weights[l]; },
                   [&]() -> const Matrix<double>& { return g.weights[l]; });
      check_tensor([&](ParamSet<double>& q) -> Vector<double>& { return q.biases[l]; },
                   [&]() -> const Vector<double>& { return g.biases[l]; });
      if (masked) {
        for (Eigen::Index i = 0; i < g.weights[l].size(); ++i) {
          if (!m.layers[l].data()[i]) CHECK(g.weights[l].data()[i] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("evaluate agrees with a direct pass, across chunk boundaries") {
  Rng rng(31);
  ModelSpec spec{{5, 8, 3}, 1};
  const auto p = random_params<float>(spec, rng);
  const auto x = random_matrix<double>(2500, 5, rng);
  const auto y = random_labels(2500, 3, rng);
  const auto e = evaluate(p, nullptr, x, y);
  const Matrix<float> xf = x.cast<float>();
  const auto logits = forward(p, nullptr, xf).logits;
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) correct += argmax_row(logits.row(r)) == y[static_cast<std::size_t>(r)];
  CHECK(e.accuracy == doctest::Approx(static_cast<double>(correct) / 2500.0));
  CHECK(e.error == doctest::Approx(1.0 - e.accuracy));
  CHECK(e.loss == doctest::Approx(direct_ce(logits.cast<double>(), y)).epsilon(1e-6));
}

TEST_CASE("errors: shapes and non-finite values") {
  const auto p = tiny_params();
  CHECK_THROWS_AS(forward(p, nullptr, Matrix<double>(Matrix<double>::Zero(2, 3))), ShapeError);
  auto bad = p;
  bad.weights[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(bad, nullptr, Matrix<double>(Matrix<double>::Ones(1, 2))), NumericError);
  auto wrong = p;
  wrong.weights[0] = Matrix<double>::Zero(4, 2);
  CHECK_THROWS_AS(wrong.check_shapes(), ShapeError);
  auto m = Mask::ones(ModelSpec{{2, 4, 2}, 1});
  CHECK_THROWS_AS(forward(p, &m, Matrix<double>(Matrix<double>::Ones(1, 2))), ShapeError);
}

TEST_CASE("mask bookkeeping and precision casts") {
  const auto spec = tiny_spec();
  auto m = Mask::ones(spec);
  CHECK(m.total() == 12);
  CHECK(m.kept() == 12);
  m.layers[0](0, 0) = 0;
  m.layers[1](1, 2) = 0;
  m.layers[1](0, 1) = 0;
  CHECK(m.sparsity() == doctest::Approx(3.0 / 12.0));
  const auto p = tiny_params();
  const auto f = cast_params<double, float>(p);
  CHECK(cast_params<double, float>(cast_params<float, double>(f)).bitwise_equal(f));
  CHECK(f.weights[0](1, 0) == 0.5f);
}
