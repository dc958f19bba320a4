#pragma once

// Masked multilayer-perceptron engine: initialization, forward pass with
// activation taps, mean cross-entropy and its exact gradient.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "srb/common.hpp"

namespace srb {

/// Architecture of a ReLU MLP. `base_sizes` is [d_0, d_1, ..., d_L]; every
/// hidden size (indices 1..L-1) is multiplied by `width`.
struct ModelSpec {
  std::vector<std::size_t> base_sizes;
  std::size_t width = 1;

  std::size_t layer_count() const { return base_sizes.empty() ? 0 : base_sizes.size() - 1; }
  std::vector<std::size_t> layer_sizes() const;
  std::size_t input_dim() const { return base_sizes.front(); }
  std::size_t output_dim() const { return base_sizes.back(); }
  std::size_t weight_count() const;

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

template <class T>
struct ParamSet {
  ModelSpec spec;
  std::vector<Matrix<T>> weights;  // W_l : d_l x d_{l-1}
  std::vector<Vector<T>> biases;   // b_l : d_l

  std::size_t layer_count() const { return weights.size(); }

  static ParamSet zeros(const ModelSpec& spec);
  /// Throws ShapeError unless every tensor matches `spec`.
  void check_shapes() const;
  bool bitwise_equal(const ParamSet& other) const;
  bool all_finite() const;
};

/// Binary keep-mask over the weight matrices (biases are never masked).
struct Mask {
  std::vector<ByteMatrix> layers;

  static Mask ones(const ModelSpec& spec);
  static Mask zeros(const ModelSpec& spec);

  std::size_t total() const;
  std::size_t kept() const;
  double sparsity() const;
  void check_compatible(const ModelSpec& spec) const;
  bool operator==(const Mask& other) const;
};

template <class T>
struct Forward {
  Matrix<T> logits;              // n x d_L
  std::vector<Matrix<T>> taps;   // per hidden boundary l = 1..L-1: d_l x n, post-ReLU
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  double error = 0.0;
};

/// He-normal weights (std sqrt(2 / fan_in)), zero biases.
template <class T>
ParamSet<T> init_params(const ModelSpec& spec, std::uint64_t seed);

template <class T>
Forward<T> forward(const ParamSet<T>& params, const Mask* mask, const Matrix<T>& x, bool record_taps = false);

/// Pre-activations of every layer (n x d_l), used by the variance correction.
template <class T>
std::vector<Matrix<T>> pre_activations(const ParamSet<T>& params, const Mask* mask, const Matrix<T>& x);

/// Mean negative log-softmax of the labelled class, natural log.
template <class T>
double cross_entropy(const Matrix<T>& logits, std::span<const int> labels);

/// Row-wise softmax computed in double.
template <class T>
Matrix<double> softmax(const Matrix<T>& logits);

/// Index of the largest entry; ties go to the lowest index.
template <class Row>
int argmax_row(const Row& row) {
  int best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(best)) best = static_cast<int>(c);
  }
  return best;
}

template <class T>
struct LossAndGradient {
  double loss = 0.0;
  std::size_t correct = 0;
  ParamSet<T> grads;
};

template <class T>
LossAndGradient<T> loss_and_gradient(const ParamSet<T>& params, const Mask* mask, const Matrix<T>& x,
                                     std::span<const int> labels);

template <class T>
ParamSet<T> backward(const ParamSet<T>& params, const Mask* mask, const Matrix<T>& x, std::span<const int> labels);

/// Evaluates on raw double features; rows are cast to T in chunks.
template <class T>
Evaluation evaluate(const ParamSet<T>& params, const Mask* mask, const Matrix<double>& features,
                    std::span<const int> labels);

/// Elementwise product params ⊙ mask on the weights; biases untouched.
template <class T>
ParamSet<T> apply_mask(const ParamSet<T>& params, const Mask& mask);

template <class T>
void apply_mask_inplace(ParamSet<T>& params, const Mask& mask);

template <class T, class U>
ParamSet<U> cast_params(const ParamSet<T>& params);

}  // namespace srb
