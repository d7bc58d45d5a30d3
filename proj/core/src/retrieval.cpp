#include "esh/retrieval.hpp"

#include "esh/error.hpp"
#include "esh/parallel.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <string>

namespace esh {
namespace {

bool relevant(const PositiveMask& positives, Index id) {
  return positives[static_cast<std::size_t>(id)] != 0;
}

Index positives_in(const Ranking& ranking, const PositiveMask& positives) {
  Index count = 0;
  for (Index id : ranking.ids) count += relevant(positives, id) ? 1 : 0;
  return count;
}

struct QueryMetrics {
  double ap = 0.0;
  std::vector<double> precision_at;
  double precision_at_radius = 0.0;
  std::vector<PrPoint> radius_curve;
  bool has_positive = false;
};

}  // namespace

int hamming_distance(std::span<const std::uint64_t> a,
                     std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kShape, "codes differ in length");
  }
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

Ranking rank_database(std::span<const std::uint64_t> query,
                      const PackedCodes& database, Index query_id,
                      const RankOptions& options) {
  if (static_cast<Index>(query.size()) != database.words_per_code()) {
    throw Error(ErrorCode::kShape, "query and database codes differ in length");
  }
  const Index n = database.size();
  const auto k = static_cast<std::size_t>(database.bits());
  std::vector<int> dist(static_cast<std::size_t>(n));
  std::vector<Index> bucket_size(k + 2, 0);
  for (Index i = 0; i < n; ++i) {
    if (options.exclude && *options.exclude == i) continue;
    const int d = hamming_distance(query, database.code(i));
    dist[static_cast<std::size_t>(i)] = d;
    ++bucket_size[static_cast<std::size_t>(d) + 1];
  }
  // counting sort by distance; ids ascend within each bucket
  for (std::size_t b = 1; b < bucket_size.size(); ++b) bucket_size[b] += bucket_size[b - 1];
  const Index kept = bucket_size.back();

  Ranking ranking;
  ranking.query = query_id;
  ranking.ids.resize(static_cast<std::size_t>(kept));
  ranking.distances.resize(static_cast<std::size_t>(kept));
  for (Index i = 0; i < n; ++i) {
    if (options.exclude && *options.exclude == i) continue;
    const int d = dist[static_cast<std::size_t>(i)];
    const auto slot = static_cast<std::size_t>(bucket_size[static_cast<std::size_t>(d)]++);
    ranking.ids[slot] = i;
    ranking.distances[slot] = d;
  }
  if (options.top && *options.top < kept) {
    ranking.ids.resize(static_cast<std::size_t>(std::max<Index>(*options.top, 0)));
    ranking.distances.resize(ranking.ids.size());
  }
  return ranking;
}

double average_precision(const Ranking& ranking, const PositiveMask& positives,
                         std::optional<Index> cutoff) {
  const auto limit = static_cast<std::size_t>(
      cutoff ? std::clamp<Index>(*cutoff, 0, static_cast<Index>(ranking.size()))
             : static_cast<Index>(ranking.size()));
  double sum = 0.0;
  Index hits = 0;
  for (std::size_t p = 0; p < limit; ++p) {
    if (!relevant(positives, ranking.ids[p])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(p + 1);
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

double precision_at_n(const Ranking& ranking, const PositiveMask& positives,
                      Index n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "precision@N needs N >= 1");
  const auto limit = std::min<std::size_t>(static_cast<std::size_t>(n), ranking.size());
  if (limit == 0) return 0.0;
  Index hits = 0;
  for (std::size_t p = 0; p < limit; ++p) hits += relevant(positives, ranking.ids[p]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(limit);
}

double precision_at_radius(const Ranking& ranking,
                           const PositiveMask& positives, int radius) {
  if (radius < 0) throw Error(ErrorCode::kInvalidArgument, "radius must be >= 0");
  Index retrieved = 0;
  Index hits = 0;
  for (std::size_t p = 0; p < ranking.size() && ranking.distances[p] <= radius; ++p) {
    ++retrieved;
    hits += relevant(positives, ranking.ids[p]) ? 1 : 0;
  }
  return retrieved == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(retrieved);
}

std::vector<PrPoint> pr_curve(const Ranking& ranking,
                              const PositiveMask& positives) {
  const Index total = positives_in(ranking, positives);
  std::vector<PrPoint> curve;
  if (total == 0) return curve;
  curve.reserve(static_cast<std::size_t>(total));
  Index hits = 0;
  for (std::size_t p = 0; p < ranking.size(); ++p) {
    if (!relevant(positives, ranking.ids[p])) continue;
    ++hits;
    curve.push_back({static_cast<double>(hits) / static_cast<double>(total),
                     static_cast<double>(hits) / static_cast<double>(p + 1)});
  }
  return curve;
}

GroundTruth::GroundTruth(LabelSet queries, LabelSet database)
    : queries_(std::move(queries)), database_(std::move(database)) {}

bool GroundTruth::is_neighbor(Index query, Index db) const {
  return share_label(queries_.labels.at(static_cast<std::size_t>(query)),
                     database_.labels.at(static_cast<std::size_t>(db)));
}

PositiveMask GroundTruth::positives(Index query) const {
  PositiveMask mask(database_.size(), 0);
  const auto& q = queries_.labels.at(static_cast<std::size_t>(query));
  for (std::size_t i = 0; i < database_.size(); ++i) {
    mask[i] = share_label(q, database_.labels[i]) ? 1 : 0;
  }
  return mask;
}

double mean_average_precision(std::span<const Ranking> rankings,
                              const GroundTruth& truth,
                              const ApOptions& options) {
  if (rankings.empty()) throw Error(ErrorCode::kInvalidArgument, "mAP needs a query");
  double sum = 0.0;
  Index counted = 0;
  for (const auto& r : rankings) {
    const PositiveMask mask = truth.positives(r.query);
    if (options.skip_empty && positives_in(r, mask) == 0) continue;
    sum += average_precision(r, mask, options.cutoff);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

double macro_mean_average_precision(std::span<const Ranking> rankings,
                                    const GroundTruth& truth,
                                    const ApOptions& options) {
  if (rankings.empty()) throw Error(ErrorCode::kInvalidArgument, "mAP needs a query");
  std::map<std::int32_t, std::pair<double, Index>> per_class;
  for (const auto& r : rankings) {
    const PositiveMask mask = truth.positives(r.query);
    if (options.skip_empty && positives_in(r, mask) == 0) continue;
    const double ap = average_precision(r, mask, options.cutoff);
    for (auto label : truth.queries().labels.at(static_cast<std::size_t>(r.query))) {
      auto& [sum, count] = per_class[label];
      sum += ap;
      ++count;
    }
  }
  if (per_class.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [label, acc] : per_class) {
    total += acc.first / static_cast<double>(acc.second);
  }
  return total / static_cast<double>(per_class.size());
}

EvalReport evaluate_retrieval(const PackedCodes& queries,
                              const PackedCodes& database,
                              const GroundTruth& truth,
                              const EvalOptions& options) {
  if (queries.bits() != database.bits()) {
    throw Error(ErrorCode::kShape, "query codes have " + std::to_string(queries.bits()) +
                                       " bits, database has " +
                                       std::to_string(database.bits()));
  }
  if (static_cast<Index>(truth.queries().size()) != queries.size() ||
      static_cast<Index>(truth.database().size()) != database.size()) {
    throw Error(ErrorCode::kShape, "label counts do not match code counts");
  }
  if (options.exclude_self && queries.size() != database.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "self exclusion needs queries and database to be the same set");
  }
  if (queries.size() < 1) throw Error(ErrorCode::kInvalidArgument, "no queries");
  for (Index n : options.precision_at) {
    if (n < 1) throw Error(ErrorCode::kInvalidArgument, "precision@N needs N >= 1");
  }
  if (options.radius < 0) throw Error(ErrorCode::kInvalidArgument, "radius must be >= 0");

  const Index k = database.bits();
  std::vector<QueryMetrics> metrics(static_cast<std::size_t>(queries.size()));
  parallel_for(metrics.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t q = b; q < e; ++q) {
      const auto qi = static_cast<Index>(q);
      RankOptions ro;
      if (options.exclude_self) ro.exclude = qi;
      const Ranking r = rank_database(queries.code(qi), database, qi, ro);
      const PositiveMask mask = truth.positives(qi);
      QueryMetrics& m = metrics[q];
      const Index total = positives_in(r, mask);
      m.has_positive = total > 0;
      m.ap = average_precision(r, mask, options.cutoff);
      for (Index n : options.precision_at) m.precision_at.push_back(precision_at_n(r, mask, n));
      m.precision_at_radius = precision_at_radius(r, mask, options.radius);

      m.radius_curve.resize(static_cast<std::size_t>(k + 1));
      Index retrieved = 0;
      Index hits = 0;
      std::size_t p = 0;
      for (Index radius = 0; radius <= k; ++radius) {
        for (; p < r.size() && r.distances[p] <= radius; ++p) {
          ++retrieved;
          hits += relevant(mask, r.ids[p]) ? 1 : 0;
        }
        auto& point = m.radius_curve[static_cast<std::size_t>(radius)];
        point.recall = total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
        point.precision =
            retrieved == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(retrieved);
      }
    }
  });

  // reduction in query order
  EvalReport report;
  report.radius = options.radius;
  report.pr_curve.assign(static_cast<std::size_t>(k + 1), PrPoint{});
  std::vector<double> prec_sum(options.precision_at.size(), 0.0);
  std::map<std::int32_t, std::pair<double, Index>> per_class;
  double ap_sum = 0.0;
  double radius_sum = 0.0;
  for (std::size_t q = 0; q < metrics.size(); ++q) {
    const QueryMetrics& m = metrics[q];
    if (!m.has_positive) ++report.queries_without_positives;
    if (options.skip_empty && !m.has_positive) continue;
    ++report.queries;
    ap_sum += m.ap;
    radius_sum += m.precision_at_radius;
    for (std::size_t t = 0; t < prec_sum.size(); ++t) prec_sum[t] += m.precision_at[t];
    for (std::size_t r = 0; r < m.radius_curve.size(); ++r) {
      report.pr_curve[r].recall += m.radius_curve[r].recall;
      report.pr_curve[r].precision += m.radius_curve[r].precision;
    }
    for (auto label : truth.queries().labels[q]) {
      auto& [sum, count] = per_class[label];
      sum += m.ap;
      ++count;
    }
  }
  if (report.queries > 0) {
    const auto denom = static_cast<double>(report.queries);
    report.map = ap_sum / denom;
    report.precision_at_radius = radius_sum / denom;
    for (std::size_t t = 0; t < prec_sum.size(); ++t) {
      report.precision_at_n.emplace_back(options.precision_at[t], prec_sum[t] / denom);
    }
    for (auto& point : report.pr_curve) {
      point.recall /= denom;
      point.precision /= denom;
    }
    double class_sum = 0.0;
    for (const auto& [label, acc] : per_class) {
      class_sum += acc.first / static_cast<double>(acc.second);
    }
    report.macro_map = class_sum / static_cast<double>(per_class.size());
  } else {
    for (Index n : options.precision_at) report.precision_at_n.emplace_back(n, 0.0);
  }
  return report;
}

}  // namespace esh
