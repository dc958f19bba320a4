#include "srb/metrics.hpp"

#include <cmath>

namespace srb {

namespace {

void check_same(const Predictions& p, const Predictions& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw ShapeError("prediction sets differ in shape");
  if (p.rows() == 0) throw ShapeError("prediction set is empty");
}

Eigen::RowVectorXd floored(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::RowVectorXd r = row.cwiseMax(kProbabilityFloor);
  return r / r.sum();
}

double kl_row(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) s += p(c) * std::log(p(c) / q(c));
  // rounding can leave a tiny negative value for identical rows
  return std::max(s, 0.0);
}

}  // namespace

double disagreement(const Predictions& p, const Predictions& q) {
  check_same(p, q);
  std::size_t differ = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (argmax_row(p.row(i)) != argmax_row(q.row(i))) ++differ;
  }
  return static_cast<double>(differ) / static_cast<double>(p.rows());
}

double kl_divergence(const Predictions& p, const Predictions& q) {
  check_same(p, q);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) total += kl_row(floored(p.row(i)), floored(q.row(i)));
  return total / static_cast<double>(p.rows());
}

double js_divergence(const Predictions& p, const Predictions& q) {
  check_same(p, q);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const auto a = floored(p.row(i));
    const auto b = floored(q.row(i));
    const Eigen::RowVectorXd m = 0.5 * (a + b);
    total += 0.5 * kl_row(a, m) + 0.5 * kl_row(b, m);
  }
  return total / static_cast<double>(p.rows());
}

double accuracy(const Predictions& p, std::span<const int> labels) {
  if (static_cast<std::size_t>(p.rows()) != labels.size()) throw ShapeError("label count does not match predictions");
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (argmax_row(p.row(i)) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(p.rows());
}

double ensemble_accuracy(std::span<const Predictions> models, std::span<const int> labels) {
  if (models.empty()) throw ShapeError("ensemble needs at least one model");
  Predictions mean = models[0];
  for (std::size_t m = 1; m < models.size(); ++m) {
    check_same(models[0], models[m]);
    mean += models[m];
  }
  mean /= static_cast<double>(models.size());
  return accuracy(mean, labels);
}

DiversityReport diversity_report(std::span<const Predictions> models, std::span<const int> labels) {
  if (models.size() < 2) throw ConfigError("diversity needs at least two models");
  DiversityReport r;
  r.model_count = models.size();
  std::vector<double> accs;
  for (const auto& m : models) accs.push_back(accuracy(m, labels));
  for (double a : accs) r.mean_accuracy += a;
  r.mean_accuracy /= static_cast<double>(accs.size());
  for (double a : accs) r.std_accuracy += (a - r.mean_accuracy) * (a - r.mean_accuracy);
  r.std_accuracy = std::sqrt(r.std_accuracy / static_cast<double>(accs.size()));
  r.ensemble_accuracy = ensemble_accuracy(models, labels);

  std::size_t unordered = 0;
  std::size_t ordered = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = 0; j < models.size(); ++j) {
      if (i == j) continue;
      r.kl += kl_divergence(models[i], models[j]);
      ++ordered;
      if (i < j) {
        r.disagreement += disagreement(models[i], models[j]);
        r.js += js_divergence(models[i], models[j]);
        ++unordered;
      }
    }
  }
  r.kl /= static_cast<double>(ordered);
  r.disagreement /= static_cast<double>(unordered);
  r.js /= static_cast<double>(unordered);
  return r;
}

template <class T>
Predictions predict(const ParamSet<T>& params, const Mask* mask, const Matrix<double>& features) {
  Predictions out(features.rows(), static_cast<Eigen::Index>(params.spec.output_dim()));
  constexpr Eigen::Index chunk = 1024;
  for (Eigen::Index start = 0; start < features.rows(); start += chunk) {
    const auto rows = std::min(chunk, features.rows() - start);
    const Matrix<T> x = features.middleRows(start, rows).template cast<T>();
    out.middleRows(start, rows) = softmax(forward(params, mask, x).logits);
  }
  return out;
}

template Predictions predict<float>(const ParamSet<float>&, const Mask*, const Matrix<double>&);
template Predictions predict<double>(const ParamSet<double>&, const Mask*, const Matrix<double>&);

}  // namespace srb
