#include "srb/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace srb {

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

std::vector<std::size_t> ModelSpec::layer_sizes() const {
  std::vector<std::size_t> sizes = base_sizes;
  for (std::size_t l = 1; l + 1 < sizes.size(); ++l) sizes[l] *= width;
  return sizes;
}

std::size_t ModelSpec::weight_count() const {
  const auto sizes = layer_sizes();
  std::size_t total = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) total += sizes[l] * sizes[l - 1];
  return total;
}

void ModelSpec::validate() const {
  if (base_sizes.size() < 2) throw ConfigError("model spec needs at least an input and an output size");
  if (width < 1) throw ConfigError("width multiplier must be >= 1");
  for (auto d : base_sizes) {
    if (d < 1) throw ConfigError("layer sizes must be >= 1");
  }
}

template <class T>
ParamSet<T> ParamSet<T>::zeros(const ModelSpec& spec) {
  spec.validate();
  const auto sizes = spec.layer_sizes();
  ParamSet<T> p;
  p.spec = spec;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    p.weights.push_back(Matrix<T>::Zero(sizes[l], sizes[l - 1]));
    p.biases.push_back(Vector<T>::Zero(sizes[l]));
  }
  return p;
}

template <class T>
void ParamSet<T>::check_shapes() const {
  const auto sizes = spec.layer_sizes();
  if (weights.size() != spec.layer_count() || biases.size() != spec.layer_count()) {
    throw ShapeError("parameter set has " + std::to_string(weights.size()) + " layers, spec has " +
                     std::to_string(spec.layer_count()));
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (static_cast<std::size_t>(weights[l].rows()) != sizes[l + 1] ||
        static_cast<std::size_t>(weights[l].cols()) != sizes[l] ||
        static_cast<std::size_t>(biases[l].size()) != sizes[l + 1]) {
      throw ShapeError("layer " + std::to_string(l) + " shape does not match spec");
    }
  }
}

template <class T>
bool ParamSet<T>::bitwise_equal(const ParamSet& other) const {
  if (!(spec == other.spec) || weights.size() != other.weights.size()) return false;
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data(), a.data() + a.size(), b.data(), [](T x, T y) {
             return std::memcmp(&x, &y, sizeof(T)) == 0;
           });
  };
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!same(weights[l], other.weights[l]) || !same(biases[l], other.biases[l])) return false;
  }
  return true;
}

template <class T>
bool ParamSet<T>::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

Mask Mask::ones(const ModelSpec& spec) {
  const auto sizes = spec.layer_sizes();
  Mask m;
  for (std::size_t l = 1; l < sizes.size(); ++l) m.layers.push_back(ByteMatrix::Ones(sizes[l], sizes[l - 1]));
  return m;
}

Mask Mask::zeros(const ModelSpec& spec) {
  const auto sizes = spec.layer_sizes();
  Mask m;
  for (std::size_t l = 1; l < sizes.size(); ++l) m.layers.push_back(ByteMatrix::Zero(sizes[l], sizes[l - 1]));
  return m;
}

std::size_t Mask::total() const {
  std::size_t n = 0;
  for (const auto& m : layers) n += static_cast<std::size_t>(m.size());
  return n;
}

std::size_t Mask::kept() const {
  std::size_t n = 0;
  for (const auto& m : layers) n += static_cast<std::size_t>(std::count(m.data(), m.data() + m.size(), std::uint8_t{1}));
  return n;
}

double Mask::sparsity() const {
  const auto n = total();
  if (n == 0) return 0.0;
  return 1.0 - static_cast<double>(kept()) / static_cast<double>(n);
}

void Mask::check_compatible(const ModelSpec& spec) const {
  const auto sizes = spec.layer_sizes();
  if (layers.size() != spec.layer_count()) throw ShapeError("mask layer count does not match spec");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (static_cast<std::size_t>(layers[l].rows()) != sizes[l + 1] ||
        static_cast<std::size_t>(layers[l].cols()) != sizes[l]) {
      throw ShapeError("mask layer " + std::to_string(l) + " shape does not match spec");
    }
  }
}

bool Mask::operator==(const Mask& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].rows() != other.layers[l].rows() || layers[l].cols() != other.layers[l].cols()) return false;
    if (layers[l] != other.layers[l]) return false;
  }
  return true;
}

template <class T>
ParamSet<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  auto p = ParamSet<T>::zeros(spec);
  Rng rng(derive_seed(seed, "init"));
  for (auto& w : p.weights) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(dist(rng));
  }
  return p;
}

namespace {

template <class T>
void check_input(const ParamSet<T>& params, const Mask* mask, Eigen::Index cols) {
  params.check_shapes();
  if (static_cast<std::size_t>(cols) != params.spec.input_dim()) {
    throw ShapeError("input has " + std::to_string(cols) + " columns, model expects " +
                     std::to_string(params.spec.input_dim()));
  }
  if (mask) mask->check_compatible(params.spec);
}

// Effective weights W ⊙ m; without a mask the original matrices are used.
template <class T>
class EffectiveWeights {
 public:
  EffectiveWeights(const ParamSet<T>& params, const Mask* mask) : params_(params) {
    if (mask) {
      masked_.reserve(params.weights.size());
      for (std::size_t l = 0; l < params.weights.size(); ++l) {
        masked_.push_back(params.weights[l].cwiseProduct(mask->layers[l].template cast<T>()));
      }
    }
  }
  const Matrix<T>& operator[](std::size_t l) const { return masked_.empty() ? params_.weights[l] : masked_[l]; }

 private:
  const ParamSet<T>& params_;
  std::vector<Matrix<T>> masked_;
};

template <class T>
void affine(const Matrix<T>& in, const Matrix<T>& w, const Vector<T>& b, Matrix<T>& out) {
  out.noalias() = in * w.transpose();
  out.rowwise() += b.transpose();
}

}  // namespace

template <class T>
Forward<T> forward(const ParamSet<T>& params, const Mask* mask, const Matrix<T>& x, bool record_taps) {
  check_input(params, mask, x.cols());
  EffectiveWeights<T> w(params, mask);
  Forward<T> out;
  Matrix<T> h = x;
  Matrix<T> z;
  const std::size_t layers = params.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    affine(h, w[l], params.biases[l], z);
    if (l + 1 < layers) {
      h = z.cwiseMax(T(0));
      if (record_taps) out.taps.push_back(h.transpose());
    }
  }
  if (!z.allFinite()) throw NumericError("forward pass produced non-finite logits");
  out.logits = std::move(z);
  return out;
}

template <class T>
std::vector<Matrix<T>> pre_activations(const ParamSet<T>& params, const Mask* mask, const Matrix<T>& x) {
  check_input(params, mask, x.cols());
  EffectiveWeights<T> w(params, mask);
  std::vector<Matrix<T>> pre;
  Matrix<T> h = x;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    Matrix<T> z;
    affine(h, w[l], params.biases[l], z);
    h = z.cwiseMax(T(0));
    pre.push_back(std::move(z));
  }
  return pre;
}

template <class T>
Matrix<double> softmax(const Matrix<T>& logits) {
  Matrix<double> p = logits.template cast<double>();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

template <class T>
double cross_entropy(const Matrix<T>& logits, std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) throw ShapeError("label count does not match logits");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i).template cast<double>();
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(logits.rows());
}

template <class T>
LossAndGradient<T> loss_and_gradient(const ParamSet<T>& params, const Mask* mask, const Matrix<T>& x,
                                     std::span<const int> labels) {
  check_input(params, mask, x.cols());
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ShapeError("label count does not match batch");
  const std::size_t layers = params.layer_count();
  const auto n = x.rows();
  EffectiveWeights<T> w(params, mask);

  // acts[l] is the input of layer l; pre[l] its pre-activation.
  std::vector<Matrix<T>> acts(layers);
  std::vector<Matrix<T>> pre(layers);
  acts[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    affine(acts[l], w[l], params.biases[l], pre[l]);
    if (l + 1 < layers) acts[l + 1] = pre[l].cwiseMax(T(0));
  }
  const Matrix<T>& logits = pre[layers - 1];
  if (!logits.allFinite()) throw NumericError("forward pass produced non-finite logits");

  LossAndGradient<T> out;
  out.loss = cross_entropy(logits, labels);

  Matrix<T> dz(n, logits.cols());
  const T inv_n = T(1) / static_cast<T>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T m = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - m).exp();
    const T s = e.sum();
    dz.row(i) = e / s;
    const int y = labels[static_cast<std::size_t>(i)];
    if (argmax_row(logits.row(i)) == y) ++out.correct;
    dz(i, y) -= T(1);
  }
  dz *= inv_n;

  out.grads = ParamSet<T>::zeros(params.spec);
  for (std::size_t l = layers; l-- > 0;) {
    out.grads.weights[l].noalias() = dz.transpose() * acts[l];
    out.grads.biases[l] = dz.colwise().sum().transpose();
    if (mask) out.grads.weights[l] = out.grads.weights[l].cwiseProduct(mask->layers[l].template cast<T>());
    if (l > 0) {
      Matrix<T> dh;
      dh.noalias() = dz * w[l];
      dz = dh.cwiseProduct((pre[l - 1].array() > T(0)).matrix().template cast<T>());
    }
  }
  return out;
}

template <class T>
ParamSet<T> backward(const ParamSet<T>& params, const Mask* mask, const Matrix<T>& x, std::span<const int> labels) {
  return loss_and_gradient(params, mask, x, labels).grads;
}

template <class T>
Evaluation evaluate(const ParamSet<T>& params, const Mask* mask, const Matrix<double>& features,
                    std::span<const int> labels) {
  const auto n = features.rows();
  if (n == 0) throw ShapeError("cannot evaluate on an empty dataset");
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("label count does not match features");
  constexpr Eigen::Index chunk = 1024;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const auto rows = std::min(chunk, n - start);
    const Matrix<T> x = features.middleRows(start, rows).template cast<T>();
    const auto fw = forward(params, mask, x);
    const auto lab = labels.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(rows));
    loss_sum += cross_entropy(fw.logits, lab) * static_cast<double>(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (argmax_row(fw.logits.row(i)) == lab[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  Evaluation e;
  e.loss = loss_sum / static_cast<double>(n);
  e.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  e.error = 1.0 - e.accuracy;
  return e;
}

template <class T>
void apply_mask_inplace(ParamSet<T>& params, const Mask& mask) {
  mask.check_compatible(params.spec);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    params.weights[l] = params.weights[l].cwiseProduct(mask.layers[l].template cast<T>());
  }
}

template <class T>
ParamSet<T> apply_mask(const ParamSet<T>& params, const Mask& mask) {
  auto out = params;
  apply_mask_inplace(out, mask);
  return out;
}

template <class T, class U>
ParamSet<U> cast_params(const ParamSet<T>& params) {
  ParamSet<U> out;
  out.spec = params.spec;
  for (const auto& w : params.weights) out.weights.push_back(w.template cast<U>());
  for (const auto& b : params.biases) out.biases.push_back(b.template cast<U>());
  return out;
}

#define SRB_INSTANTIATE_ENGINE(T)                                                                                  \
  template struct ParamSet<T>;                                                                                     \
  template ParamSet<T> init_params<T>(const ModelSpec&, std::uint64_t);                                            \
  template Forward<T> forward<T>(const ParamSet<T>&, const Mask*, const Matrix<T>&, bool);                         \
  template std::vector<Matrix<T>> pre_activations<T>(const ParamSet<T>&, const Mask*, const Matrix<T>&);           \
  template double cross_entropy<T>(const Matrix<T>&, std::span<const int>);                                        \
  template Matrix<double> softmax<T>(const Matrix<T>&);                                                            \
  template LossAndGradient<T> loss_and_gradient<T>(const ParamSet<T>&, const Mask*, const Matrix<T>&,              \
                                                   std::span<const int>);                                          \
  template ParamSet<T> backward<T>(const ParamSet<T>&, const Mask*, const Matrix<T>&, std::span<const int>);       \
  template Evaluation evaluate<T>(const ParamSet<T>&, const Mask*, const Matrix<double>&, std::span<const int>);   \
  template ParamSet<T> apply_mask<T>(const ParamSet<T>&, const Mask&);                                             \
  template void apply_mask_inplace<T>(ParamSet<T>&, const Mask&);

SRB_INSTANTIATE_ENGINE(float)
SRB_INSTANTIATE_ENGINE(double)

template ParamSet<double> cast_params<float, double>(const ParamSet<float>&);
template ParamSet<float> cast_params<double, float>(const ParamSet<double>&);
template ParamSet<float> cast_params<float, float>(const ParamSet<float>&);
template ParamSet<double> cast_params<double, double>(const ParamSet<double>&);

}  // namespace srb
