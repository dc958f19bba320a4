#pragma once

// Linear mode connectivity: interpolation between parameter sets, the
// per-unit variance correction of interpolated networks, loss/error
// barriers and three-model loss planes.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "srb/data.hpp"
#include "srb/engine.hpp"
#include "srb/prune.hpp"

namespace srb {

/// (1 - alpha) * a + alpha * b, computed as a + alpha * (b - a). alpha = 0
/// and alpha = 1 return exact copies of the endpoints.
template <class T>
ParamSet<T> lerp_params(const ParamSet<T>& a, const ParamSet<T>& b, double alpha);

/// Pre-activation statistics per hidden unit, one entry per hidden layer.
/// The interpolated-model entries are measured just before that layer was
/// corrected.
struct RepairStats {
  std::vector<Vector<double>> mean_a, std_a;
  std::vector<Vector<double>> mean_b, std_b;
  std::vector<Vector<double>> mean_interp, std_interp;
  std::size_t skipped_units = 0;
};

inline constexpr double kRepairEpsilon = 1e-6;

/// Rescales every hidden unit of `interp` so its pre-activation mean/std on
/// the calibration rows hit the interpolated endpoint statistics
/// ((1-alpha) mu_a + alpha mu_b, same for sigma). Layers are corrected input
/// to output; units whose interpolated std is at most epsilon are left alone
/// and counted in `stats->skipped_units`.
template <class T>
ParamSet<T> repair(const ParamSet<T>& interp, const ParamSet<T>& a, const ParamSet<T>& b, double alpha,
                   const Matrix<double>& calibration, RepairStats* stats = nullptr, double epsilon = kRepairEpsilon);

/// Per-unit mean and population std of `pre` (n x d) over its rows.
void column_stats(const Matrix<double>& pre, Vector<double>& mean, Vector<double>& stddev);

struct BarrierOptions {
  std::size_t grid_size = 25;
  bool repair = false;
  std::size_t calibration_samples = 2048;
  std::uint64_t calibration_seed = 0;
  bool evaluate_train = true;  // false leaves `train` empty and its barriers at 0
};

struct BarrierCurve {
  std::vector<double> alphas;
  std::vector<Evaluation> train;
  std::vector<Evaluation> test;  // empty when no test set was given
  bool repaired = false;
  double loss_barrier_train = 0.0;
  double error_barrier_train = 0.0;
  double loss_barrier_test = 0.0;
  double error_barrier_test = 0.0;
};

/// max(0, max_i [values_i - ((1 - alpha_i) values_0 + alpha_i values_last)])
double barrier_value(const std::vector<double>& alphas, const std::vector<double>& values);

template <class T>
BarrierCurve barrier(const ParamSet<T>& a, const ParamSet<T>& b, const Dataset& train_set, const Dataset* test_set,
                     const BarrierOptions& options);

struct PlaneGrid {
  std::vector<double> xs;  // grid columns
  std::vector<double> ys;  // grid rows
  Matrix<double> loss;     // ys.size() x xs.size()
  Matrix<double> error;
  Matrix<double> anchors;  // 3 x 2 plane coordinates of the three models
  std::vector<Evaluation> anchor_values;  // evaluated through the plane parametrization
};

/// Evaluates the affine plane through three models on a resolution x
/// resolution grid covering their triangle plus `margin` (a fraction of the
/// triangle's extent) on every side. Throws NumericError when the anchors
/// are collinear.
template <class T>
PlaneGrid plane_eval(const ParamSet<T>& a, const ParamSet<T>& b, const ParamSet<T>& c, std::size_t resolution,
                     double margin, const Dataset& data);

struct ImpBarrierPoint {
  std::size_t iteration = 0;
  double sparsity = 0.0;
  double error_barrier = 0.0;           // test 0-1 error barrier, plain interpolation
  double error_barrier_repaired = 0.0;  // same with the variance correction
  double loss_barrier = 0.0;
  double loss_barrier_repaired = 0.0;
};

/// Test-set error/loss barrier between the dense solution and every solution
/// of an IMP sequence, with and without the variance correction. The train
/// set only supplies calibration rows.
template <class T>
std::vector<ImpBarrierPoint> barrier_vs_imp_iteration(const ParamSet<T>& dense, const MaskSequence<T>& sequence,
                                                      const Dataset& train_set, const Dataset& test_set,
                                                      const BarrierOptions& options);

}  // namespace srb
