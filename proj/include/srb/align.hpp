#pragma once

// Activation matching between two models of the same architecture and the
// permutation algebra used to move parameters and masks between them.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "srb/data.hpp"
#include "srb/engine.hpp"
#include "srb/hungarian.hpp"

namespace srb {

/// One permutation per layer boundary 0..L. `target[l][s]` is the position
/// that unit s of boundary l moves to. Boundaries 0 (inputs) and L (classes)
/// are always the identity.
struct PermutationMap {
  std::vector<std::vector<std::size_t>> target;

  static PermutationMap identity(const ModelSpec& spec);
  /// Uniformly random hidden-unit permutations.
  static PermutationMap random(const ModelSpec& spec, std::uint64_t seed);

  std::size_t boundary_count() const { return target.size(); }
  bool is_identity() const;
  /// Throws ShapeError unless every boundary is a bijection of the right
  /// size and the outer boundaries are fixed.
  void check_compatible(const ModelSpec& spec) const;
  bool operator==(const PermutationMap&) const = default;
};

PermutationMap invert(const PermutationMap& perm);
/// Permutation equivalent to applying `inner` first, then `outer`.
PermutationMap compose(const PermutationMap& outer, const PermutationMap& inner);

/// W'[t_l(r), t_{l-1}(c)] = W[r, c]; b'[t_l(r)] = b[r].
template <class T>
ParamSet<T> apply_permutation(const ParamSet<T>& params, const PermutationMap& perm);

Mask apply_permutation(const Mask& mask, const PermutationMap& perm);

/// {"version": 1, "boundaries": [[target per source unit], ...]}
std::string to_json(const PermutationMap& perm);
PermutationMap permutation_from_json(const std::string& text);

struct MatchOptions {
  std::size_t sample_count = 2048;
  std::uint64_t seed = 0;
  bool center = false;  // subtract per-unit means before the inner product
};

/// Post-ReLU activations (d_l x n) at hidden boundaries 1..L-1 over a seeded,
/// sorted subsample of the dataset.
template <class T>
std::vector<Matrix<T>> collect_activations(const ParamSet<T>& params, const Dataset& data, std::size_t sample_count,
                                           std::uint64_t seed);

/// Cost Z^B (Z^A)^T for one boundary, in double.
template <class T>
Matrix<double> activation_cost(const Matrix<T>& acts_a, const Matrix<T>& acts_b, bool center);

/// Per hidden boundary, the permutation that moves model A's units onto the
/// model B units they correlate with most. Boundaries are solved
/// independently.
template <class T>
PermutationMap match(const std::vector<Matrix<T>>& acts_a, const std::vector<Matrix<T>>& acts_b,
                     const ModelSpec& spec, bool center = false);

/// collect_activations on both models with the same subsample, then match.
template <class T>
PermutationMap match_models(const ParamSet<T>& model_a, const ParamSet<T>& model_b, const Dataset& data,
                            const MatchOptions& options);

}  // namespace srb
