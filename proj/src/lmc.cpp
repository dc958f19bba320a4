#include "srb/lmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace srb {

template <class T>
ParamSet<T> lerp_params(const ParamSet<T>& a, const ParamSet<T>& b, double alpha) {
  if (!(a.spec == b.spec)) throw ShapeError("cannot interpolate between different specs");
  a.check_shapes();
  b.check_shapes();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("interpolation weight must be in [0, 1]");
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  const T t = static_cast<T>(alpha);
  ParamSet<T> out;
  out.spec = a.spec;
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    out.weights.push_back(a.weights[l] + t * (b.weights[l] - a.weights[l]));
    out.biases.push_back(a.biases[l] + t * (b.biases[l] - a.biases[l]));
  }
  return out;
}

void column_stats(const Matrix<double>& pre, Vector<double>& mean, Vector<double>& stddev) {
  const auto n = static_cast<double>(pre.rows());
  mean = pre.colwise().mean().transpose();
  stddev.resize(pre.cols());
  for (Eigen::Index j = 0; j < pre.cols(); ++j) {
    const double var = (pre.col(j).array() - mean(j)).square().sum() / n;
    stddev(j) = std::sqrt(var);
  }
}

namespace {

template <class T>
std::vector<std::pair<Vector<double>, Vector<double>>> hidden_stats(const ParamSet<T>& p, const Matrix<T>& x) {
  const auto pre = pre_activations(p, nullptr, x);
  std::vector<std::pair<Vector<double>, Vector<double>>> out;
  for (std::size_t l = 0; l + 1 < pre.size(); ++l) {
    Vector<double> m, s;
    column_stats(pre[l].template cast<double>(), m, s);
    out.emplace_back(std::move(m), std::move(s));
  }
  return out;
}

}  // namespace

template <class T>
ParamSet<T> repair(const ParamSet<T>& interp, const ParamSet<T>& a, const ParamSet<T>& b, double alpha,
                   const Matrix<double>& calibration, RepairStats* stats, double epsilon) {
  if (!(interp.spec == a.spec) || !(a.spec == b.spec)) throw ShapeError("repair: parameter sets differ in spec");
  if (calibration.rows() == 0) throw ConfigError("repair: calibration data is empty");
  const Matrix<T> x = calibration.template cast<T>();
  const auto stats_a = hidden_stats(a, x);
  const auto stats_b = hidden_stats(b, x);

  RepairStats local;
  RepairStats& st = stats ? *stats : local;
  st = RepairStats{};

  ParamSet<T> out = interp;
  Matrix<T> h = x;
  for (std::size_t l = 0; l + 1 < out.layer_count(); ++l) {
    auto& w = out.weights[l];
    auto& bias = out.biases[l];
    Matrix<T> z;
    z.noalias() = h * w.transpose();
    z.rowwise() += bias.transpose();
    Vector<double> mean_i, std_i;
    column_stats(z.template cast<double>(), mean_i, std_i);

    const auto& [mean_a, std_a] = stats_a[l];
    const auto& [mean_b, std_b] = stats_b[l];
    for (Eigen::Index u = 0; u < w.rows(); ++u) {
      if (std_i(u) <= epsilon) {
        ++st.skipped_units;
        continue;
      }
      const double target_mean = mean_a(u) + alpha * (mean_b(u) - mean_a(u));
      const double target_std = std_a(u) + alpha * (std_b(u) - std_a(u));
      const double scale = target_std / std::max(std_i(u), epsilon);
      const double shift = target_mean - scale * mean_i(u);
      w.row(u) *= static_cast<T>(scale);
      bias(u) = static_cast<T>(scale * static_cast<double>(bias(u)) + shift);
    }
    st.mean_a.push_back(mean_a);
    st.std_a.push_back(std_a);
    st.mean_b.push_back(mean_b);
    st.std_b.push_back(std_b);
    st.mean_interp.push_back(std::move(mean_i));
    st.std_interp.push_back(std::move(std_i));

    z.noalias() = h * w.transpose();
    z.rowwise() += bias.transpose();
    h = z.cwiseMax(T(0));
  }
  return out;
}

double barrier_value(const std::vector<double>& alphas, const std::vector<double>& values) {
  if (alphas.size() != values.size() || alphas.size() < 2) throw ConfigError("barrier needs at least two grid points");
  const double first = values.front();
  const double last = values.back();
  double best = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const double baseline = first + alphas[i] * (last - first);
    best = std::max(best, values[i] - baseline);
  }
  return best;
}

namespace {

std::vector<double> alpha_grid(std::size_t n) {
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return a;
}

template <class F>
std::vector<double> project(const std::vector<Evaluation>& evals, F field) {
  std::vector<double> out;
  out.reserve(evals.size());
  for (const auto& e : evals) out.push_back(field(e));
  return out;
}

}  // namespace

template <class T>
BarrierCurve barrier(const ParamSet<T>& a, const ParamSet<T>& b, const Dataset& train_set, const Dataset* test_set,
                     const BarrierOptions& options) {
  if (options.grid_size < 2) throw ConfigError("barrier grid needs at least 2 points");
  BarrierCurve curve;
  curve.alphas = alpha_grid(options.grid_size);
  curve.repaired = options.repair;

  Matrix<double> calibration;
  if (options.repair) {
    const auto count = std::min(options.calibration_samples, train_set.size());
    calibration = gather_rows<double>(train_set.features, sample_indices(train_set.size(), count, options.calibration_seed));
  }
  for (double alpha : curve.alphas) {
    ParamSet<T> p = lerp_params(a, b, alpha);
    // endpoints are the models themselves; nothing to correct
    if (options.repair && alpha > 0.0 && alpha < 1.0) p = repair(p, a, b, alpha, calibration);
    if (options.evaluate_train) curve.train.push_back(evaluate(p, nullptr, train_set.features, train_set.labels));
    if (test_set) curve.test.push_back(evaluate(p, nullptr, test_set->features, test_set->labels));
  }
  auto loss = [](const Evaluation& e) { return e.loss; };
  auto err = [](const Evaluation& e) { return e.error; };
  if (options.evaluate_train) {
    curve.loss_barrier_train = barrier_value(curve.alphas, project(curve.train, loss));
    curve.error_barrier_train = barrier_value(curve.alphas, project(curve.train, err));
  }
  if (test_set) {
    curve.loss_barrier_test = barrier_value(curve.alphas, project(curve.test, loss));
    curve.error_barrier_test = barrier_value(curve.alphas, project(curve.test, err));
  }
  return curve;
}

namespace {

template <class T>
Vector<double> flatten(const ParamSet<T>& p) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < p.layer_count(); ++l) n += p.weights[l].size() + p.biases[l].size();
  Vector<double> v(n);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) v(at++) = static_cast<double>(p.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) v(at++) = static_cast<double>(p.biases[l](i));
  }
  return v;
}

template <class T>
ParamSet<T> unflatten(const Vector<double>& v, const ModelSpec& spec) {
  auto p = ParamSet<T>::zeros(spec);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) p.weights[l].data()[i] = static_cast<T>(v(at++));
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = static_cast<T>(v(at++));
  }
  return p;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

}  // namespace

template <class T>
PlaneGrid plane_eval(const ParamSet<T>& a, const ParamSet<T>& b, const ParamSet<T>& c, std::size_t resolution,
                     double margin, const Dataset& data) {
  if (!(a.spec == b.spec) || !(a.spec == c.spec)) throw ShapeError("plane anchors differ in spec");
  if (resolution < 2) throw ConfigError("plane resolution must be >= 2");
  if (margin < 0.0) throw ConfigError("plane margin must be >= 0");
  const Vector<double> origin = flatten(a);
  const Vector<double> d1 = flatten(b) - origin;
  const Vector<double> d2 = flatten(c) - origin;
  const double n1 = d1.norm();
  if (n1 == 0.0) throw NumericError("plane anchors are collinear (first two coincide)");
  const Vector<double> u = d1 / n1;
  const double along = d2.dot(u);
  Vector<double> perp = d2 - along * u;
  const double n2 = perp.norm();
  const double scale = std::max(n1, d2.norm());
  if (n2 <= 1e-9 * scale) throw NumericError("plane anchors are collinear");
  const Vector<double> v = perp / n2;

  PlaneGrid g;
  g.anchors.resize(3, 2);
  g.anchors << 0.0, 0.0, n1, 0.0, along, n2;
  const double xmin = std::min({0.0, n1, along});
  const double xmax = std::max({0.0, n1, along});
  const double ymin = 0.0;
  const double ymax = n2;
  const double xpad = margin * (xmax - xmin);
  const double ypad = margin * (ymax - ymin);
  g.xs = linspace(xmin - xpad, xmax + xpad, resolution);
  g.ys = linspace(ymin - ypad, ymax + ypad, resolution);
  g.loss.resize(static_cast<Eigen::Index>(resolution), static_cast<Eigen::Index>(resolution));
  g.error.resize(static_cast<Eigen::Index>(resolution), static_cast<Eigen::Index>(resolution));

  auto eval_at = [&](double x, double y) {
    const ParamSet<T> p = unflatten<T>(origin + x * u + y * v, a.spec);
    return evaluate(p, nullptr, data.features, data.labels);
  };
  for (std::size_t iy = 0; iy < g.ys.size(); ++iy) {
    for (std::size_t ix = 0; ix < g.xs.size(); ++ix) {
      const auto e = eval_at(g.xs[ix], g.ys[iy]);
      g.loss(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) = e.loss;
      g.error(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) = e.error;
    }
  }
  for (Eigen::Index k = 0; k < 3; ++k) g.anchor_values.push_back(eval_at(g.anchors(k, 0), g.anchors(k, 1)));
  return g;
}

template <class T>
std::vector<ImpBarrierPoint> barrier_vs_imp_iteration(const ParamSet<T>& dense, const MaskSequence<T>& sequence,
                                                      const Dataset& train_set, const Dataset& test_set,
                                                      const BarrierOptions& options) {
  std::vector<ImpBarrierPoint> out;
  for (std::size_t r = 0; r < sequence.size(); ++r) {
    BarrierOptions plain = options;
    plain.evaluate_train = false;
    plain.repair = false;
    BarrierOptions fixed = plain;
    fixed.repair = true;
    const auto& sparse = sequence.solutions[r];
    const auto c0 = barrier(dense, sparse, train_set, &test_set, plain);
    const auto c1 = barrier(dense, sparse, train_set, &test_set, fixed);
    ImpBarrierPoint pt;
    pt.iteration = r;
    pt.sparsity = sequence.sparsities[r];
    pt.error_barrier = c0.error_barrier_test;
    pt.error_barrier_repaired = c1.error_barrier_test;
    pt.loss_barrier = c0.loss_barrier_test;
    pt.loss_barrier_repaired = c1.loss_barrier_test;
    out.push_back(pt);
  }
  return out;
}

#define SRB_INSTANTIATE_LMC(T)                                                                                     \
  template ParamSet<T> lerp_params<T>(const ParamSet<T>&, const ParamSet<T>&, double);                             \
  template ParamSet<T> repair<T>(const ParamSet<T>&, const ParamSet<T>&, const ParamSet<T>&, double,               \
                                 const Matrix<double>&, RepairStats*, double);                                     \
  template BarrierCurve barrier<T>(const ParamSet<T>&, const ParamSet<T>&, const Dataset&, const Dataset*,         \
                                   const BarrierOptions&);                                                         \
  template PlaneGrid plane_eval<T>(const ParamSet<T>&, const ParamSet<T>&, const ParamSet<T>&, std::size_t,        \
                                   double, const Dataset&);                                                        \
  template std::vector<ImpBarrierPoint> barrier_vs_imp_iteration<T>(const ParamSet<T>&, const MaskSequence<T>&,    \
                                                                    const Dataset&, const Dataset&,                \
                                                                    const BarrierOptions&);

SRB_INSTANTIATE_LMC(float)
SRB_INSTANTIATE_LMC(double)

}  // namespace srb
