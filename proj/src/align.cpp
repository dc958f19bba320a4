#include "srb/align.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "json.hpp"

namespace srb {

namespace {

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

bool is_bijection(const std::vector<std::size_t>& p) {
  std::vector<char> seen(p.size(), 0);
  for (auto t : p) {
    if (t >= p.size() || seen[t]) return false;
    seen[t] = 1;
  }
  return true;
}

}  // namespace

PermutationMap PermutationMap::identity(const ModelSpec& spec) {
  PermutationMap p;
  for (auto d : spec.layer_sizes()) p.target.push_back(iota_vec(d));
  return p;
}

PermutationMap PermutationMap::random(const ModelSpec& spec, std::uint64_t seed) {
  auto p = identity(spec);
  Rng rng(derive_seed(seed, "permutation"));
  for (std::size_t l = 1; l + 1 < p.target.size(); ++l) std::shuffle(p.target[l].begin(), p.target[l].end(), rng);
  return p;
}

bool PermutationMap::is_identity() const {
  for (const auto& t : target) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != i) return false;
    }
  }
  return true;
}

void PermutationMap::check_compatible(const ModelSpec& spec) const {
  const auto sizes = spec.layer_sizes();
  if (target.size() != sizes.size()) throw ShapeError("permutation map has the wrong number of boundaries");
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    if (target[l].size() != sizes[l]) throw ShapeError("permutation boundary " + std::to_string(l) + " has the wrong size");
    if (!is_bijection(target[l])) throw ShapeError("permutation boundary " + std::to_string(l) + " is not a bijection");
  }
  for (std::size_t l : {std::size_t{0}, sizes.size() - 1}) {
    for (std::size_t i = 0; i < target[l].size(); ++i) {
      if (target[l][i] != i) throw ShapeError("input and output boundaries must not be permuted");
    }
  }
}

PermutationMap invert(const PermutationMap& perm) {
  PermutationMap out;
  for (const auto& t : perm.target) {
    if (!is_bijection(t)) throw ShapeError("cannot invert a non-bijective permutation");
    std::vector<std::size_t> inv(t.size());
    for (std::size_t s = 0; s < t.size(); ++s) inv[t[s]] = s;
    out.target.push_back(std::move(inv));
  }
  return out;
}

PermutationMap compose(const PermutationMap& outer, const PermutationMap& inner) {
  if (outer.target.size() != inner.target.size()) throw ShapeError("cannot compose maps with different boundary counts");
  PermutationMap out;
  for (std::size_t l = 0; l < inner.target.size(); ++l) {
    const auto& a = inner.target[l];
    const auto& b = outer.target[l];
    if (a.size() != b.size()) throw ShapeError("cannot compose maps with different boundary sizes");
    std::vector<std::size_t> t(a.size());
    for (std::size_t s = 0; s < a.size(); ++s) t[s] = b[a[s]];
    out.target.push_back(std::move(t));
  }
  return out;
}

namespace {

template <class M>
M permute_matrix(const M& w, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  M out(w.rows(), w.cols());
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    const auto tr = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      out(tr, static_cast<Eigen::Index>(cols[static_cast<std::size_t>(c)])) = w(r, c);
    }
  }
  return out;
}

}  // namespace

template <class T>
ParamSet<T> apply_permutation(const ParamSet<T>& params, const PermutationMap& perm) {
  params.check_shapes();
  perm.check_compatible(params.spec);
  ParamSet<T> out;
  out.spec = params.spec;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    out.weights.push_back(permute_matrix(params.weights[l], perm.target[l + 1], perm.target[l]));
    Vector<T> b(params.biases[l].size());
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      b(static_cast<Eigen::Index>(perm.target[l + 1][static_cast<std::size_t>(r)])) = params.biases[l](r);
    }
    out.biases.push_back(std::move(b));
  }
  return out;
}

Mask apply_permutation(const Mask& mask, const PermutationMap& perm) {
  if (perm.target.size() != mask.layers.size() + 1) throw ShapeError("permutation map does not fit the mask");
  Mask out;
  for (std::size_t l = 0; l < mask.layers.size(); ++l) {
    const auto& m = mask.layers[l];
    if (perm.target[l + 1].size() != static_cast<std::size_t>(m.rows()) ||
        perm.target[l].size() != static_cast<std::size_t>(m.cols())) {
      throw ShapeError("permutation map does not fit mask layer " + std::to_string(l));
    }
    out.layers.push_back(permute_matrix(m, perm.target[l + 1], perm.target[l]));
  }
  return out;
}

std::string to_json(const PermutationMap& perm) {
  nlohmann::json j;
  j["version"] = 1;
  j["boundaries"] = perm.target;
  return j.dump();
}

PermutationMap permutation_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("permutation map: ") + e.what());
  }
  if (!j.contains("version") || j["version"] != 1) throw FormatError("permutation map: unsupported version");
  if (!j.contains("boundaries") || !j["boundaries"].is_array()) throw FormatError("permutation map: missing boundaries");
  PermutationMap p;
  try {
    p.target = j["boundaries"].get<std::vector<std::vector<std::size_t>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("permutation map: ") + e.what());
  }
  for (const auto& t : p.target) {
    if (!is_bijection(t)) throw FormatError("permutation map: boundary is not a bijection");
  }
  return p;
}

template <class T>
std::vector<Matrix<T>> collect_activations(const ParamSet<T>& params, const Dataset& data, std::size_t sample_count,
                                           std::uint64_t seed) {
  const auto idx = sample_indices(data.size(), sample_count, seed);
  const Matrix<T> x = gather_rows<T>(data.features, idx);
  return forward(params, nullptr, x, true).taps;
}

template <class T>
Matrix<double> activation_cost(const Matrix<T>& acts_a, const Matrix<T>& acts_b, bool center) {
  if (acts_a.rows() != acts_b.rows() || acts_a.cols() != acts_b.cols()) {
    throw ShapeError("activation matrices differ in shape");
  }
  Matrix<double> a = acts_a.template cast<double>();
  Matrix<double> b = acts_b.template cast<double>();
  if (center) {
    a.colwise() -= a.rowwise().mean();
    b.colwise() -= b.rowwise().mean();
  }
  Matrix<double> cost;
  cost.noalias() = b * a.transpose();
  return cost;
}

template <class T>
PermutationMap match(const std::vector<Matrix<T>>& acts_a, const std::vector<Matrix<T>>& acts_b, const ModelSpec& spec,
                     bool center) {
  const auto sizes = spec.layer_sizes();
  if (acts_a.size() + 2 != sizes.size() || acts_b.size() != acts_a.size()) {
    throw ShapeError("activation lists do not match the model's hidden boundaries");
  }
  auto perm = PermutationMap::identity(spec);
  for (std::size_t h = 0; h < acts_a.size(); ++h) {
    if (static_cast<std::size_t>(acts_a[h].rows()) != sizes[h + 1]) throw ShapeError("activation rows do not match layer width");
    const auto cost = activation_cost(acts_a[h], acts_b[h], center);
    // row i is a unit of B, column the unit of A that should sit at position i
    const auto assignment = hungarian(cost, Sense::maximize);
    auto& t = perm.target[h + 1];
    for (std::size_t i = 0; i < assignment.row_to_col.size(); ++i) t[assignment.row_to_col[i]] = i;
  }
  return perm;
}

template <class T>
PermutationMap match_models(const ParamSet<T>& model_a, const ParamSet<T>& model_b, const Dataset& data,
                            const MatchOptions& options) {
  if (!(model_a.spec == model_b.spec)) throw ShapeError("cannot match models with different specs");
  const auto count = std::min(options.sample_count, data.size());
  const auto sizes = model_a.spec.layer_sizes();
  const std::size_t widest = sizes.size() > 2 ? *std::max_element(sizes.begin() + 1, sizes.end() - 1) : 0;
  if (count < widest) {
    std::clog << "warning: matching " << widest << " units on only " << count
              << " samples; the cost matrices are rank deficient\n";
  }
  const auto acts_a = collect_activations(model_a, data, count, options.seed);
  const auto acts_b = collect_activations(model_b, data, count, options.seed);
  return match(acts_a, acts_b, model_a.spec, options.center);
}

#define SRB_INSTANTIATE_ALIGN(T)                                                                                  \
  template ParamSet<T> apply_permutation<T>(const ParamSet<T>&, const PermutationMap&);                           \
  template std::vector<Matrix<T>> collect_activations<T>(const ParamSet<T>&, const Dataset&, std::size_t,         \
                                                         std::uint64_t);                                          \
  template Matrix<double> activation_cost<T>(const Matrix<T>&, const Matrix<T>&, bool);                           \
  template PermutationMap match<T>(const std::vector<Matrix<T>>&, const std::vector<Matrix<T>>&, const ModelSpec&, \
                                   bool);                                                                         \
  template PermutationMap match_models<T>(const ParamSet<T>&, const ParamSet<T>&, const Dataset&,                 \
                                          const MatchOptions&);

SRB_INSTANTIATE_ALIGN(float)
SRB_INSTANTIATE_ALIGN(double)

}  // namespace srb
