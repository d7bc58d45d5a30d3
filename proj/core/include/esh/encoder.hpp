#pragma once

#include "esh/anchor_graph.hpp"
#include "esh/codes.hpp"
#include "esh/dataset.hpp"
#include "esh/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

namespace esh {

enum class QueryMode { kGraph, kLinear };

std::string_view to_string(QueryMode mode) noexcept;
QueryMode query_mode_from_string(std::string_view name);

/// Everything needed to hash unseen samples.
struct HashModel {
  Matrix w;                     // d x k, orthonormal columns
  StandardizationStats stats;
  AnchorSet anchors;
  AnchorDegrees degrees;
  Matrix vote_matrix;           // k x m, B^T Z Lambda^{-1}
  QueryMode query_mode = QueryMode::kGraph;
  std::uint64_t config_hash = 0;
  std::optional<PackedCodes> train_codes;
  std::optional<SparseAffinityRows> train_affinity;

  Index dims() const noexcept { return w.rows(); }
  Index bits() const noexcept { return w.cols(); }
};

/// B = sgn(XW) with sgn(0) = +1, packed.
PackedCodes encode_train(const RowMatrix& x, const Matrix& w);

/// B^T Z Lambda^{-1}, k x m.
Matrix vote_matrix(const PackedCodes& codes, const SparseAffinityRows& z,
                   const AnchorDegrees& degrees);

struct ModelParts {
  Matrix w;
  StandardizationStats stats;
  AnchorGraph graph;
  PackedCodes train_codes;
  QueryMode query_mode = QueryMode::kGraph;
  std::uint64_t config_hash = 0;
  bool keep_codes = true;
  bool keep_affinity = false;
};

/// Assembles a model and precomputes its vote matrix.
HashModel make_model(ModelParts parts);

/// Out-of-sample vote scores B^T Z Lambda^{-1} z(x) for a raw query.
Vector query_votes(const Eigen::Ref<const Vector>& x_raw,
                   const HashModel& model);

/// sgn of the anchor votes; +1/-1 entries, length k.
Vector encode_query_graph(const Eigen::Ref<const Vector>& x_raw,
                          const HashModel& model);

/// sgn(standardize(x) W); +1/-1 entries, length k.
Vector encode_query_linear(const Eigen::Ref<const Vector>& x_raw,
                           const HashModel& model);

/// Batch encoding of raw rows; runs across workers.
PackedCodes encode_queries(const FeatureMatrix& x_raw, const HashModel& model,
                           QueryMode mode);

/// Container "ESHM": version byte, tagged length-prefixed sections,
/// CRC32 trailer. All matrices are stored as little-endian f64.
void save_model(const HashModel& model, const std::filesystem::path& path);
HashModel load_model(const std::filesystem::path& path);

}  // namespace esh
