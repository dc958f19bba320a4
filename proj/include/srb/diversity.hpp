#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "srb/metrics.hpp"
#include "srb/workbench.hpp"

namespace srb {

enum class DiversityMethod { imp, lth, naive, permuted };

std::string_view to_string(DiversityMethod m);
DiversityMethod parse_diversity_method(std::string_view s);

struct DiversityOptions {
  double sparsity = 0.9;
  std::size_t rewind_epoch = 2;
  std::uint64_t master_seed = 0;
  /// LTH members differ only by data order; with false they are identical.
  bool vary_lth_data_order = true;
};

/// Builds the model set for one method and measures it on the test set.
/// `pair_seeds[i]` names the i-th (A_i, B_i) model pair:
///   imp      - the pruned solutions of A_1..A_n, each with its own mask
///   lth      - A_1's rewind with A_1's mask, n data orders
///   naive    - B_i's rewind with A_1's mask
///   permuted - B_i's rewind with A_1's mask moved by match(A_1, B_i)
template <class T>
DiversityReport diversity_protocol(DiversityMethod method, std::span<const std::uint64_t> pair_seeds,
                                   Workbench<T>& bench, const DiversityOptions& options);

/// The test-set predictions behind a diversity_protocol call.
template <class T>
std::vector<Predictions> diversity_predictions(DiversityMethod method, std::span<const std::uint64_t> pair_seeds,
                                               Workbench<T>& bench, const DiversityOptions& options);

}  // namespace srb
