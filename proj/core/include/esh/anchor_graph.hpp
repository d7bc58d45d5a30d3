#pragma once

#include "esh/dataset.hpp"
#include "esh/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace esh {

/// Anchor centers and the kernel used to weight them.
struct AnchorSet {
  RowMatrix centers;  // m x d
  double sigma2 = 1.0;
  Index s = 3;        // nearest anchors kept per sample

  Index size() const noexcept { return centers.rows(); }
  Index dims() const noexcept { return centers.cols(); }
};

struct AnchorParams {
  Index anchors = 300;
  Index nearest = 3;
  int kmeans_iters = 10;
  std::optional<double> sigma2;  // default: mean squared distance to s-th anchor
  std::uint64_t seed = 0;
};

/// Row-stochastic n x m affinity with exactly s entries per row, stored as
/// flat (anchor index, weight) arrays in row order.
class SparseAffinityRows {
 public:
  SparseAffinityRows() = default;
  SparseAffinityRows(Index n, Index m, Index s);

  Index rows() const noexcept { return n_; }
  Index anchors() const noexcept { return m_; }
  Index per_row() const noexcept { return s_; }

  std::span<const std::int32_t> indices(Index i) const {
    return {index_.data() + i * s_, static_cast<std::size_t>(s_)};
  }
  std::span<const double> weights(Index i) const {
    return {weight_.data() + i * s_, static_cast<std::size_t>(s_)};
  }
  std::span<std::int32_t> indices(Index i) {
    return {index_.data() + i * s_, static_cast<std::size_t>(s_)};
  }
  std::span<double> weights(Index i) {
    return {weight_.data() + i * s_, static_cast<std::size_t>(s_)};
  }

  /// Dense n x m copy; intended for tests and small diagnostics.
  Matrix to_dense() const;

  /// Renumbers anchor columns; old index j maps to remap[j], which must be
  /// non-negative for every referenced column.
  void remap_anchors(std::span<const std::int32_t> remap, Index new_m);

 private:
  Index n_ = 0;
  Index m_ = 0;
  Index s_ = 0;
  std::vector<std::int32_t> index_;
  std::vector<double> weight_;
};

struct AnchorDegrees {
  Vector lambda;  // column sums of Z
};

inline constexpr double kLambdaFloor = 1e-12;
inline constexpr Index kDenseAffinityCap = 1000;

/// Lloyd's k-means with k-means++ seeding; empty clusters are reseeded at
/// the point farthest from its assigned center.
RowMatrix kmeans(const FeatureMatrix& x, Index k, int iters,
                 std::uint64_t seed);

/// Fits m centers and resolves sigma2.
AnchorSet fit_anchors(const FeatureMatrix& x, const AnchorParams& params);

struct NearestAnchors {
  std::vector<std::int32_t> index;  // ascending by (distance, index)
  std::vector<double> dist2;
};

/// Exhaustive scan for the s nearest centers.
NearestAnchors nearest_anchors(const Eigen::Ref<const Vector>& x,
                               const RowMatrix& centers, Index s);

/// One affinity row z(x): s nearest anchors, Gaussian kernel, normalized to
/// sum to one. Weights are evaluated relative to the nearest anchor, which
/// cancels in the normalization and keeps far queries from underflowing.
void affinity_row(const Eigen::Ref<const Vector>& x, const AnchorSet& anchors,
                  std::span<std::int32_t> index, std::span<double> weight);

SparseAffinityRows build_z(const FeatureMatrix& x, const AnchorSet& anchors);

AnchorDegrees compute_lambda(const SparseAffinityRows& z);

/// Removes anchors whose degree is below kLambdaFloor from the anchor set,
/// the affinity rows and the degree vector. Returns how many were dropped.
Index prune_dead_anchors(AnchorSet& anchors, SparseAffinityRows& z,
                         AnchorDegrees& degrees);

/// S = (X^T Z) Lambda^{-1} (Z^T X) through the m-wide factor; never forms
/// the n x n affinity. Throws kDegenerate if any degree is below the floor.
Matrix compute_s(const FeatureMatrix& x, const SparseAffinityRows& z,
                 const AnchorDegrees& degrees);

/// A = Z Lambda^{-1} Z^T, materialized. Oracle use only; n <= cap.
Matrix dense_affinity(const SparseAffinityRows& z, const AnchorDegrees& degrees,
                      Index cap = kDenseAffinityCap);

/// Everything the training pipeline needs from the anchor graph.
struct AnchorGraph {
  AnchorSet anchors;
  SparseAffinityRows z;
  AnchorDegrees degrees;
  Index dropped = 0;
};

AnchorGraph build_anchor_graph(const FeatureMatrix& x,
                               const AnchorParams& params);

}  // namespace esh
