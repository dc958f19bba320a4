#pragma once

// Functional diversity of model sets: disagreement, KL and JS divergence
// between predictive distributions, and probability-averaging ensembles.

#include <span>
#include <vector>

#include "srb/common.hpp"
#include "srb/data.hpp"
#include "srb/engine.hpp"

namespace srb {

/// Softmax outputs of one model: n samples x C classes.
using Predictions = Matrix<double>;

inline constexpr double kProbabilityFloor = 1e-12;

double disagreement(const Predictions& p, const Predictions& q);

/// Mean over samples of sum_c p log(p / q), natural log, with both rows
/// floored at 1e-12 and renormalized.
double kl_divergence(const Predictions& p, const Predictions& q);

/// 0.5 KL(p || m) + 0.5 KL(q || m), m = (p + q) / 2.
double js_divergence(const Predictions& p, const Predictions& q);

/// Averages softmax rows across models, then scores argmax against labels.
double ensemble_accuracy(std::span<const Predictions> models, std::span<const int> labels);

double accuracy(const Predictions& p, std::span<const int> labels);

struct DiversityReport {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over models
  double ensemble_accuracy = 0.0;
  double disagreement = 0.0;  // mean over unordered pairs
  double kl = 0.0;            // mean over ordered pairs i != j
  double js = 0.0;            // mean over unordered pairs
  std::size_t model_count = 0;
};

/// Requires at least two models with identical shapes.
DiversityReport diversity_report(std::span<const Predictions> models, std::span<const int> labels);

template <class T>
Predictions predict(const ParamSet<T>& params, const Mask* mask, const Matrix<double>& features);

}  // namespace srb
