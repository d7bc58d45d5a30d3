#pragma once

#include "esh/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace esh {

/// n x d matrix of finite feature values, one sample per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  /// Throws kShape when empty and kNonFinite (naming row/col) on NaN/Inf.
  explicit FeatureMatrix(RowMatrix values);

  Index rows() const noexcept { return values_.rows(); }
  Index dims() const noexcept { return values_.cols(); }
  const RowMatrix& values() const noexcept { return values_; }
  auto row(Index i) const { return values_.row(i); }

  /// Rows selected by index, in the given order.
  FeatureMatrix select_rows(std::span<const Index> ids) const;

 private:
  RowMatrix values_;
};

struct StandardizationStats {
  Vector mean;
  Vector std;
};

inline constexpr double kStdFloor = 1e-12;

struct Standardized {
  FeatureMatrix features;
  StandardizationStats stats;
};

enum class FeatureFormat { kCsv, kBinary };

/// Format implied by the file extension: ".csv" is CSV, anything else binary.
FeatureFormat format_from_path(const std::filesystem::path& path);

FeatureMatrix load_features(const std::filesystem::path& path,
                            FeatureFormat format);
void save_features(const std::filesystem::path& path, const FeatureMatrix& x,
                   FeatureFormat format);

/// Column-wise zero mean, unit population standard deviation. Constant
/// columns map to zero with their std floored at kStdFloor. Needs n >= 2.
Standardized standardize(const FeatureMatrix& x);

Vector apply_standardization(const Eigen::Ref<const Vector>& x,
                             const StandardizationStats& stats);

/// Applies the stored transform to every row of x.
FeatureMatrix apply_standardization(const FeatureMatrix& x,
                                    const StandardizationStats& stats);

enum class LabelKind { kSingle, kMulti };

struct LabelSet {
  LabelKind kind = LabelKind::kSingle;
  /// Sorted, duplicate-free label ids per sample.
  std::vector<std::vector<std::int32_t>> labels;

  std::size_t size() const noexcept { return labels.size(); }
  /// Builds a set from raw per-row ids; kind is inferred from row sizes.
  static LabelSet from_rows(std::vector<std::vector<std::int32_t>> rows);
  LabelSet select_rows(std::span<const Index> ids) const;
};

/// True when the two sorted id lists share at least one label.
bool share_label(std::span<const std::int32_t> a,
                 std::span<const std::int32_t> b) noexcept;

LabelSet load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const LabelSet& labels);

struct SyntheticSpec {
  std::size_t clusters = 10;
  std::size_t per_cluster = 500;
  std::size_t dims = 32;
  double spread = 0.5;
  std::uint64_t seed = 0;
};

struct LabeledFeatures {
  FeatureMatrix features;
  LabelSet labels;
};

/// Isotropic Gaussian blobs around standard-normal centers scaled so that
/// expected center separation dominates spread. Rows are grouped by cluster
/// and the label of each row is its cluster id. Deterministic in the seed.
LabeledFeatures generate_synthetic(const SyntheticSpec& spec);

struct HoldoutSplit {
  std::vector<Index> train;
  std::vector<Index> query;
};

/// Stratified split: for each primary label (first id) a fraction of its rows,
/// rounded to nearest and at least one when the class has two or more rows,
/// goes to the query side. Both sides keep ascending row order.
HoldoutSplit holdout_split(const LabelSet& labels, double query_fraction,
                           std::uint64_t seed);

}  // namespace esh
