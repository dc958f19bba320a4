#pragma once

// Small generators shared by the unit tests.

#include <random>
#include <vector>

#include "srb/data.hpp"
#include "srb/engine.hpp"

namespace srb::testing {

inline ModelSpec random_spec(Rng& rng, std::size_t max_hidden = 9, std::size_t max_layers = 4) {
  std::uniform_int_distribution<std::size_t> hidden(1, max_hidden);
  std::uniform_int_distribution<std::size_t> depth(1, max_layers);
  ModelSpec spec;
  const std::size_t layers = depth(rng);
  spec.base_sizes.push_back(hidden(rng));
  for (std::size_t l = 1; l < layers; ++l) spec.base_sizes.push_back(hidden(rng));
  spec.base_sizes.push_back(std::uniform_int_distribution<std::size_t>(2, 5)(rng));
  return spec;
}

template <class T>
ParamSet<T> random_params(const ModelSpec& spec, Rng& rng, double bias_scale = 0.5) {
  auto p = init_params<T>(spec, rng());
  std::normal_distribution<double> n(0.0, bias_scale);
  for (auto& b : p.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = static_cast<T>(n(rng));
  }
  return p;
}

template <class T>
Matrix<T> random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(n(rng));
  return m;
}

inline std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> out(n);
  for (auto& y : out) y = d(rng);
  return out;
}

inline Mask random_mask(const ModelSpec& spec, Rng& rng, double keep = 0.5) {
  std::bernoulli_distribution b(keep);
  auto m = Mask::zeros(spec);
  for (auto& layer : m.layers) {
    for (Eigen::Index i = 0; i < layer.size(); ++i) layer.data()[i] = b(rng) ? 1 : 0;
  }
  return m;
}

/// A dataset small enough for fast training tests.
inline std::pair<Dataset, Dataset> small_blobs(std::uint64_t seed = 3, std::size_t dim = 8, int classes = 4) {
  auto all = make_blobs(seed, 640, classes, dim, 0.6, 2);
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < all.size(); ++i) (i < 512 ? tr : te).push_back(i);
  return {all.subset(tr), all.subset(te)};
}

}  // namespace srb::testing
