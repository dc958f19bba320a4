#include "srb/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace srb {

void Dataset::validate() const {
  if (labels.empty()) throw ConfigError("dataset '" + name + "' is empty");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ConfigError("dataset '" + name + "' has mismatched feature and label counts");
  }
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw ConfigError("dataset '" + name + "' has a label outside [0, C)");
  }
  if (!features.allFinite()) throw ConfigError("dataset '" + name + "' has non-finite features");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.name = name;
  out.class_count = class_count;
  out.features = gather_rows<double>(features, indices);
  out.labels = gather_labels(labels, indices);
  return out;
}

Dataset make_blobs(std::uint64_t seed, std::size_t n, int classes, std::size_t dim, double spread,
                   int clusters_per_class) {
  if (classes < 1 || n == 0 || dim == 0 || clusters_per_class < 1) {
    throw ConfigError("make_blobs: n, classes, dim and clusters_per_class must be positive");
  }
  if (n % static_cast<std::size_t>(classes) != 0) throw ConfigError("make_blobs: n must be divisible by classes");
  if (spread < 0.0) throw ConfigError("make_blobs: spread must be non-negative");

  Rng center_rng(derive_seed(seed, "blobs/centers"));
  Rng point_rng(derive_seed(seed, "blobs/points"));
  std::normal_distribution<double> normal(0.0, 1.0);

  const int cluster_count = classes * clusters_per_class;
  Matrix<double> centers(cluster_count, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = normal(center_rng);

  Dataset ds;
  ds.name = "blobs";
  ds.class_count = classes;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(cluster_count));
    ds.labels[i] = c % classes;
    for (std::size_t j = 0; j < dim; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          centers(c, static_cast<Eigen::Index>(j)) + spread * normal(point_rng);
    }
  }
  return ds;
}

namespace {
constexpr double kSpiralTurns = 1.5;
}

std::pair<double, double> spiral_arm_point(int cls, int classes, double t) {
  const double angle = 2.0 * std::numbers::pi * (static_cast<double>(cls) / classes + kSpiralTurns * t);
  return {t * std::cos(angle), t * std::sin(angle)};
}

Dataset make_spirals(std::uint64_t seed, std::size_t n, int classes, double noise) {
  if (classes < 1 || n == 0) throw ConfigError("make_spirals: n and classes must be positive");
  if (n % static_cast<std::size_t>(classes) != 0) throw ConfigError("make_spirals: n must be divisible by classes");
  if (noise < 0.0) throw ConfigError("make_spirals: noise must be non-negative");

  Rng rng(derive_seed(seed, "spirals"));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.name = "spirals";
  ds.class_count = classes;
  ds.features.resize(static_cast<Eigen::Index>(n), 2);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
    // sqrt keeps the point density roughly uniform along the arm
    const double t = std::sqrt(uniform(rng));
    auto [x, y] = spiral_arm_point(c, classes, t);
    const double nx = normal(rng);
    const double ny = normal(rng);
    ds.features(static_cast<Eigen::Index>(i), 0) = x + noise * nx;
    ds.features(static_cast<Eigen::Index>(i), 1) = y + noise * ny;
    ds.labels[i] = c;
  }
  return ds;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& what) {
  if (offset + 4 > buf.size()) throw FormatError(what + ": truncated header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  const std::string img_name = images_path.string();
  const std::string lab_name = labels_path.string();

  if (read_be32(images, 0, img_name) != 0x00000803u) throw FormatError(img_name + ": bad IDX image magic");
  if (read_be32(labels, 0, lab_name) != 0x00000801u) throw FormatError(lab_name + ": bad IDX label magic");
  const std::size_t count = read_be32(images, 4, img_name);
  const std::size_t rows = read_be32(images, 8, img_name);
  const std::size_t cols = read_be32(images, 12, img_name);
  const std::size_t label_count = read_be32(labels, 4, lab_name);
  if (count != label_count) throw FormatError("IDX image/label count mismatch");
  const std::size_t dim = rows * cols;
  if (images.size() < 16 + count * dim) throw FormatError(img_name + ": truncated payload");
  if (labels.size() < 8 + count) throw FormatError(lab_name + ": truncated payload");

  Dataset ds;
  ds.name = images_path.stem().string();
  ds.features.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  ds.labels.resize(count);
  int max_label = -1;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = images[16 + i * dim + j] / 255.0;
    }
    ds.labels[i] = labels[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  ds.validate();
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t width = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
    }
    if (values.size() < 2) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": need features and a label");
    if (width == 0) width = values.size();
    if (values.size() != width) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
    const double label = values.back();
    if (label != std::floor(label) || label < 0) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": label must be a non-negative integer");
    }
    labels.push_back(static_cast<int>(label));
    values.pop_back();
    rows.push_back(std::move(values));
  }
  Dataset ds;
  ds.name = path.stem().string();
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width == 0 ? 0 : width - 1));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  ds.labels = std::move(labels);
  ds.class_count = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

namespace {

// Fisher-Yates with an explicit unbiased bounded draw so the order does not
// depend on the standard library's distribution implementation.
std::uint64_t bounded(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(bounded(rng, i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

std::vector<std::vector<std::size_t>> batches(std::size_t n, const BatchPlan& plan) {
  if (plan.batch_size < 1) throw ConfigError("batch size must be >= 1");
  const auto order = shuffled(n, derive_seed(derive_seed(plan.seed, "batches"), plan.epoch));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const auto stop = std::min(n, start + plan.batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  if (count > n) throw ConfigError("sample count exceeds dataset size");
  auto idx = shuffled(n, derive_seed(seed, "subsample"));
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <class T>
Matrix<T> gather_rows(const Matrix<double>& features, const std::vector<std::size_t>& rows) {
  Matrix<T> out(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i])).template cast<T>();
  }
  return out;
}

template Matrix<float> gather_rows<float>(const Matrix<double>&, const std::vector<std::size_t>&);
template Matrix<double> gather_rows<double>(const Matrix<double>&, const std::vector<std::size_t>&);

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels[r]);
  return out;
}

}  // namespace srb
