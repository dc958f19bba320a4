#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "srb/common.hpp"

namespace srb {

/// Features are kept in double regardless of run precision; batches and
/// evaluation chunks are cast on the way into the engine.
struct Dataset {
  Matrix<double> features;  // n x d
  std::vector<int> labels;  // n, each in [0, class_count)
  int class_count = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws ConfigError if labels are out of range, sizes disagree or
  /// features are non-finite.
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

struct BatchPlan {
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

/// Equal-count Gaussian clusters. There are classes * clusters_per_class
/// centers drawn from N(0, I); sample i belongs to cluster
/// i % (classes * clusters_per_class) and carries label i % classes, so
/// every class gets the same number of points. Points are
/// center + spread * N(0, I). With several clusters per class the classes
/// are no longer linearly separable.
Dataset make_blobs(std::uint64_t seed, std::size_t n, int classes, std::size_t dim, double spread,
                   int clusters_per_class = 1);

/// Point on arm `cls` of a `classes`-armed spiral at parameter t in [0, 1].
std::pair<double, double> spiral_arm_point(int cls, int classes, double t);

/// Two-dimensional interleaved spirals with isotropic Gaussian noise.
Dataset make_spirals(std::uint64_t seed, std::size_t n, int classes, double noise);

/// IDX (MNIST-style) images + labels; pixels scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// CSV with a header row; last column is the integer label.
Dataset load_csv(const std::filesystem::path& path);

/// Seeded Fisher-Yates shuffle of 0..n-1 partitioned into batches; the
/// order depends only on (plan.seed, plan.epoch).
std::vector<std::vector<std::size_t>> batches(std::size_t n, const BatchPlan& plan);

/// Deterministic sorted subsample of `count` indices out of n.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed);

/// Gathers rows of `features` into a dense batch of precision T.
template <class T>
Matrix<T> gather_rows(const Matrix<double>& features, const std::vector<std::size_t>& rows);

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<std::size_t>& rows);

}  // namespace srb
