#pragma once

#include "esh/codes.hpp"
#include "esh/dataset.hpp"
#include "esh/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace esh {

/// Number of differing bits; throws kShape on length mismatch.
int hamming_distance(std::span<const std::uint64_t> a,
                     std::span<const std::uint64_t> b);

/// Database ids ordered by (Hamming distance, id).
struct Ranking {
  Index query = 0;
  std::vector<Index> ids;
  std::vector<int> distances;

  std::size_t size() const noexcept { return ids.size(); }
};

struct RankOptions {
  std::optional<Index> exclude;  // drop this database id (self match)
  std::optional<Index> top;      // keep only the first entries
};

Ranking rank_database(std::span<const std::uint64_t> query,
                      const PackedCodes& database, Index query_id = 0,
                      const RankOptions& options = {});

/// Relevance flags indexed by database id.
using PositiveMask = std::vector<std::uint8_t>;

/// Mean of precision@p over the positions p of positives within the first
/// `cutoff` entries (whole ranking when empty), normalized by the number of
/// positives retrieved there. Zero when none is retrieved.
double average_precision(const Ranking& ranking, const PositiveMask& positives,
                         std::optional<Index> cutoff = std::nullopt);

/// |positives among the first N| / N, with N capped at the ranking length.
double precision_at_n(const Ranking& ranking, const PositiveMask& positives,
                      Index n);

/// Precision over entries with distance <= radius; zero when the ball is
/// empty.
double precision_at_radius(const Ranking& ranking,
                           const PositiveMask& positives, int radius = 2);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

/// One point per rank position holding a positive. Recall is relative to
/// the positives present in the ranking, so the last point has recall 1.
std::vector<PrPoint> pr_curve(const Ranking& ranking,
                              const PositiveMask& positives);

/// Neighbor predicate: two samples are neighbors when they share a label.
class GroundTruth {
 public:
  GroundTruth(LabelSet queries, LabelSet database);

  const LabelSet& queries() const noexcept { return queries_; }
  const LabelSet& database() const noexcept { return database_; }

  bool is_neighbor(Index query, Index db) const;
  PositiveMask positives(Index query) const;

 private:
  LabelSet queries_;
  LabelSet database_;
};

struct ApOptions {
  std::optional<Index> cutoff;
  /// Drop queries without any positive in the database instead of scoring 0.
  bool skip_empty = false;
};

/// Mean AP over the rankings, summed in query order.
double mean_average_precision(std::span<const Ranking> rankings,
                              const GroundTruth& truth,
                              const ApOptions& options = {});

/// Unweighted mean over classes of each class's mean per-query AP. A
/// multi-label query counts toward every one of its labels. Classes are the
/// labels present among the queries.
double macro_mean_average_precision(std::span<const Ranking> rankings,
                                    const GroundTruth& truth,
                                    const ApOptions& options = {});

struct EvalOptions {
  std::vector<Index> precision_at = {1000};
  int radius = 2;
  std::optional<Index> cutoff;
  /// Queries and database are the same set; query i is removed from its own
  /// ranking.
  bool exclude_self = false;
  bool skip_empty = false;
};

struct EvalReport {
  double map = 0.0;
  double macro_map = 0.0;
  std::vector<std::pair<Index, double>> precision_at_n;
  int radius = 2;
  double precision_at_radius = 0.0;
  /// Mean over queries of (recall, precision) within Hamming radius r, for
  /// r = 0..k. Empty balls score precision 0.
  std::vector<PrPoint> pr_curve;
  Index queries = 0;
  Index queries_without_positives = 0;
};

EvalReport evaluate_retrieval(const PackedCodes& queries,
                              const PackedCodes& database,
                              const GroundTruth& truth,
                              const EvalOptions& options = {});

}  // namespace esh
