#include "srb/diversity.hpp"

#include <string>

namespace srb {

std::string_view to_string(DiversityMethod m) {
  switch (m) {
    case DiversityMethod::imp: return "imp";
    case DiversityMethod::lth: return "lth";
    case DiversityMethod::naive: return "naive";
    case DiversityMethod::permuted: return "permuted";
  }
  return "?";
}

DiversityMethod parse_diversity_method(std::string_view s) {
  if (s == "imp") return DiversityMethod::imp;
  if (s == "lth") return DiversityMethod::lth;
  if (s == "naive") return DiversityMethod::naive;
  if (s == "permuted") return DiversityMethod::permuted;
  throw ConfigError("unknown diversity method '" + std::string(s) + "'");
}

template <class T>
std::vector<Predictions> diversity_predictions(DiversityMethod method, std::span<const std::uint64_t> pair_seeds,
                                               Workbench<T>& bench, const DiversityOptions& options) {
  if (pair_seeds.size() < 2) throw ConfigError("diversity needs at least two models per method");
  const auto& test = bench.test_set();
  const auto a1 = ModelSeeds::derive(options.master_seed, pair_seeds[0], 'A');
  std::vector<Predictions> out;
  for (std::size_t i = 0; i < pair_seeds.size(); ++i) {
    const auto a = ModelSeeds::derive(options.master_seed, pair_seeds[i], 'A');
    const auto b = ModelSeeds::derive(options.master_seed, pair_seeds[i], 'B');
    switch (method) {
      case DiversityMethod::imp: {
        const auto& r = bench.imp(a, options.sparsity);
        out.push_back(predict(r.pruned_solution, &r.mask, test.features));
        break;
      }
      case DiversityMethod::lth: {
        const auto& mask = bench.imp(a1, options.sparsity).mask;
        const auto data = options.vary_lth_data_order ? derive_seed(a1.data, i) : a1.data;
        const auto run = bench.sparse_train(bench.rewind(a1, options.rewind_epoch), mask, data);
        out.push_back(predict(run.params, &run.mask, test.features));
        break;
      }
      case DiversityMethod::naive: {
        const auto& mask = bench.imp(a1, options.sparsity).mask;
        const auto run = bench.sparse_train(bench.rewind(b, options.rewind_epoch), mask, b.data);
        out.push_back(predict(run.params, &run.mask, test.features));
        break;
      }
      case DiversityMethod::permuted: {
        const auto mask = apply_permutation(bench.imp(a1, options.sparsity).mask, bench.match(a1, b));
        const auto run = bench.sparse_train(bench.rewind(b, options.rewind_epoch), mask, b.data);
        out.push_back(predict(run.params, &run.mask, test.features));
        break;
      }
    }
  }
  return out;
}

template <class T>
DiversityReport diversity_protocol(DiversityMethod method, std::span<const std::uint64_t> pair_seeds,
                                   Workbench<T>& bench, const DiversityOptions& options) {
  const auto preds = diversity_predictions(method, pair_seeds, bench, options);
  return diversity_report(preds, bench.test_set().labels);
}

template DiversityReport diversity_protocol<float>(DiversityMethod, std::span<const std::uint64_t>, Workbench<float>&,
                                                   const DiversityOptions&);
template DiversityReport diversity_protocol<double>(DiversityMethod, std::span<const std::uint64_t>,
                                                    Workbench<double>&, const DiversityOptions&);
template std::vector<Predictions> diversity_predictions<float>(DiversityMethod, std::span<const std::uint64_t>,
                                                               Workbench<float>&, const DiversityOptions&);
template std::vector<Predictions> diversity_predictions<double>(DiversityMethod, std::span<const std::uint64_t>,
                                                                Workbench<double>&, const DiversityOptions&);

}  // namespace srb
