// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Thresholds are fixed below and are not configurable.

#include "oracles.hpp"

#include "commands.hpp"

#include <esh/anchor_graph.hpp>
#include <esh/encoder.hpp>
#include <esh/error.hpp>
#include <esh/optimizer.hpp>
#include <esh/retrieval.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <string>

using namespace esh;

namespace {

// criterion 1
constexpr double kEsh1OrthTol = 1e-8;
constexpr double kEsh2OrthTol = 1e-6;
constexpr double kFeasibilityBudgetS = 60.0;
// criterion 2
constexpr double kFdStep = 1e-6;
constexpr double kGradRelTol = 1e-5;
constexpr double kMinAbsProjection = 1e-3;
// criterion 3
constexpr int kOrthonormalSamples = 1000;
constexpr double kIdempotenceTol = 1e-10;
// criterion 4
constexpr double kFactorTol = 1e-8;
constexpr double kRowSumTol = 1e-10;
// criterion 5
constexpr double kAblationGap = 0.05;
constexpr double kAblationBudgetS = 120.0;
// criterion 6
constexpr double kLossSlack = 0.01;
// criterion 7
constexpr double kScalingRatio = 2.5;
// criterion 10
constexpr double kRetrievalMap = 0.9;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Standardize, anchor graph, S, train, encode.
struct Fitted {
  HashModel model;
  TrainTrace trace;
};

Fitted fit(const FeatureMatrix& raw, const TrainConfig& tc, Index anchors) {
  Standardized st = standardize(raw);
  AnchorParams ap;
  ap.anchors = anchors;
  ap.seed = tc.seed;
  AnchorGraph g = build_anchor_graph(st.features, ap);
  const Matrix s = compute_s(st.features, g.z, g.degrees);
  TrainResult r = train(st.features.values(), s, tc);
  ModelParts parts;
  parts.train_codes = encode_train(st.features.values(), r.w);
  parts.w = std::move(r.w);
  parts.stats = std::move(st.stats);
  parts.graph = std::move(g);
  return {make_model(std::move(parts)), std::move(r.trace)};
}

SyntheticSpec blob_spec() {
  SyntheticSpec spec;
  spec.clusters = 10;
  spec.per_cluster = 500;
  spec.dims = 32;
  return spec;
}

TrainConfig blob_config(Algorithm algo, std::uint64_t seed) {
  TrainConfig tc;
  tc.bits = 16;
  tc.iterations = 300;
  tc.algorithm = algo;
  tc.seed = seed;
  return tc;
}

Outcome feasibility() {
  const auto t0 = Clock::now();
  const Index dims[] = {8, 32, 64};
  const Index bits[] = {4, 16};
  const Index sizes[] = {500, 5000};
  std::vector<std::tuple<Index, Index, Index>> grid;
  for (Index d : dims)
    for (Index k : bits)
      for (Index n : sizes)
        if (k <= d) grid.emplace_back(d, k, n);
  double worst1 = 0.0, worst2 = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const auto [d, k, n] = grid[static_cast<std::size_t>(inst) % grid.size()];
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(inst));
    const Standardized st = standardize(FeatureMatrix(RowMatrix(oracle::gaussian(n, d, rng))));
    AnchorParams ap;
    ap.anchors = 50;
    ap.seed = static_cast<std::uint64_t>(inst);
    const AnchorGraph g = build_anchor_graph(st.features, ap);
    const Matrix s = compute_s(st.features, g.z, g.degrees);
    for (Algorithm algo : {Algorithm::kEsh1, Algorithm::kEsh2}) {
      TrainConfig tc;
      tc.bits = k;
      tc.iterations = 100;
      tc.algorithm = algo;
      tc.seed = static_cast<std::uint64_t>(inst);
      const TrainResult r = train(st.features.values(), s, tc);
      double& worst = algo == Algorithm::kEsh1 ? worst1 : worst2;
      for (const auto& rec : r.trace.records) worst = std::max(worst, rec.orth_residual);
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst1 < kEsh1OrthTol && worst2 < kEsh2OrthTol && elapsed < kFeasibilityBudgetS,
          "max residual esh1 " + fmt("%.3g", worst1) + ", esh2 " + fmt("%.3g", worst2) + ", " +
              fmt("%.1f s", elapsed)};
}

Outcome gradient_oracle() {
  double worst = 0.0;
  int done = 0;
  for (std::uint64_t inst = 0; done < 10; ++inst) {
    std::mt19937_64 rng(2000 + inst);
    const Index n = 40, d = 6, k = 3;
    const Standardized st = standardize(FeatureMatrix(RowMatrix(oracle::gaussian(n, d, rng))));
    AnchorParams ap;
    ap.anchors = 8;
    ap.seed = inst;
    const AnchorGraph g = build_anchor_graph(st.features, ap);
    const Matrix s = compute_s(st.features, g.z, g.degrees);
    const RowMatrix& x = st.features.values();
    const Matrix w = oracle::random_orthonormal(d, k, rng);
    if ((x * w).cwiseAbs().minCoeff() <= kMinAbsProjection) continue;
    const double alpha = 0.5 + static_cast<double>(inst % 4);
    const Matrix fd = oracle::finite_difference_gradient(w, x, s, alpha, kFdStep);
    worst = std::max(worst, (gradient(w, x, s, alpha) - fd).norm() / fd.norm());
    ++done;
  }
  return {worst < kGradRelTol, "max relative error " + fmt("%.3g", worst)};
}

Outcome projection_optimality() {
  std::mt19937_64 rng(3000);
  bool pass = true;
  double worst_idem = 0.0;
  double tightest = INFINITY;
  for (int inst = 0; inst < 10; ++inst) {
    const Index d = inst < 5 ? 5 : 20, k = inst < 5 ? 3 : 8;
    const Matrix w = oracle::gaussian(d, k, rng);
    const Matrix p = stiefel_project(w);
    const double mine = (p - w).norm();
    for (int t = 0; t < kOrthonormalSamples; ++t) {
      const double other = (oracle::random_orthonormal(d, k, rng) - w).norm();
      tightest = std::min(tightest, other - mine);
      if (other < mine) pass = false;
    }
    worst_idem = std::max(worst_idem, (stiefel_project(p) - p).norm());
  }
  return {pass && worst_idem < kIdempotenceTol,
          "smallest margin " + fmt("%.3g", tightest) + ", idempotence " + fmt("%.3g", worst_idem)};
}

Outcome factorization() {
  double worst_s = 0.0, worst_row = 0.0;
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    std::mt19937_64 rng(4000 + inst);
    const Index n = 100 + 25 * static_cast<Index>(inst);
    const FeatureMatrix x(RowMatrix(oracle::gaussian(n, 8, rng)));
    AnchorParams ap;
    ap.anchors = 20;
    ap.nearest = 2 + static_cast<Index>(inst % 3);
    ap.seed = inst;
    const AnchorGraph g = build_anchor_graph(x, ap);
    const Matrix s = compute_s(x, g.z, g.degrees);
    worst_s = std::max(worst_s, (s - oracle::dense_s(x.values(), g.z.to_dense())).norm());
    const Matrix a = dense_affinity(g.z, g.degrees);
    for (Index i = 0; i < n; ++i) worst_row = std::max(worst_row, std::abs(a.row(i).sum() - 1.0));
  }
  return {worst_s < kFactorTol && worst_row < kRowSumTol,
          "S error " + fmt("%.3g", worst_s) + ", row-sum error " + fmt("%.3g", worst_row)};
}

double self_map(const HashModel& model, const LabelSet& labels) {
  const PackedCodes& codes = *model.train_codes;
  EvalOptions opt;
  opt.exclude_self = true;
  return evaluate_retrieval(codes, codes, GroundTruth(labels, labels), opt).map;
}

Outcome ablation() {
  const auto t0 = Clock::now();
  const LabeledFeatures data = generate_synthetic(blob_spec());
  TrainConfig with = blob_config(Algorithm::kEsh2, 0);
  TrainConfig without = with;
  without.alpha = 0.0;
  const double map_auto = self_map(fit(data.features, with, 300).model, data.labels);
  const double map_zero = self_map(fit(data.features, without, 300).model, data.labels);
  const double elapsed = seconds_since(t0);
  return {map_auto - map_zero >= kAblationGap && elapsed < kAblationBudgetS,
          "mAP auto-alpha " + fmt("%.4f", map_auto) + " vs alpha=0 " + fmt("%.4f", map_zero) +
              ", " + fmt("%.1f s", elapsed)};
}

Outcome convergence() {
  const LabeledFeatures data = generate_synthetic(blob_spec());
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {0u, 1u}) {
    const Fitted e1 = fit(data.features, blob_config(Algorithm::kEsh1, seed), 300);
    const Fitted e2 = fit(data.features, blob_config(Algorithm::kEsh2, seed), 300);
    const double target = e1.trace.records.back().loss;
    const double bound = target + kLossSlack * std::abs(target);
    const int budget = static_cast<int>(e1.trace.records.size()) / 2;
    int reached = -1;
    for (const auto& rec : e2.trace.records) {
      if (rec.loss <= bound) {
        reached = rec.iteration;
        break;
      }
    }
    pass = pass && reached > 0 && reached <= budget;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) +
              ": esh1 final " + fmt("%.4f", target) + ", esh2 within 1% at iteration " +
              std::to_string(reached) + " (budget " + std::to_string(budget) + ")";
  }
  return {pass, detail};
}

double pipeline_seconds(const FeatureMatrix& raw) {
  const TrainConfig tc = blob_config(Algorithm::kEsh2, 0);
  const auto t0 = Clock::now();
  const Fitted f = fit(raw, tc, 300);
  const double t = seconds_since(t0);
  if (f.trace.records.empty()) throw Error(ErrorCode::kDegenerate, "empty trace");
  return t;
}

Outcome scaling() {
  SyntheticSpec spec = blob_spec();
  spec.per_cluster = 2000;
  const FeatureMatrix small = generate_synthetic(spec).features;
  spec.per_cluster = 4000;
  const FeatureMatrix large = generate_synthetic(spec).features;
  auto median3 = [](const FeatureMatrix& x) {
    std::vector<double> t;
    for (int r = 0; r < 3; ++r) t.push_back(pipeline_seconds(x));
    std::sort(t.begin(), t.end());
    return t[1];
  };
  const double t_small = median3(small);
  const double t_large = median3(large);
  const double ratio = t_large / t_small;
  return {ratio <= kScalingRatio, "n=20000 " + fmt("%.3f s", t_small) + ", n=40000 " +
                                      fmt("%.3f s", t_large) + ", ratio " + fmt("%.2f", ratio)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(8000);
  auto signs = [&](Index n, Index k) {
    Matrix b(n, k);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < k; ++j) b(i, j) = rng() & 1 ? 1.0 : -1.0;
    return b;
  };
  auto labels = [&](Index n, int classes, bool multi) {
    std::vector<std::vector<std::int32_t>> rows;
    for (Index i = 0; i < n; ++i) {
      std::vector<std::int32_t> r = {static_cast<std::int32_t>(rng() % classes)};
      if (multi && rng() % 3 == 0) r.push_back(static_cast<std::int32_t>(rng() % classes));
      rows.push_back(r);
    }
    return LabelSet::from_rows(rows);
  };

  int mismatches = 0;
  int empty_balls = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const Index n = 10 + static_cast<Index>(rng() % 91);
    const Index k = 2 + static_cast<Index>(rng() % 15);
    const Index nq = 1 + static_cast<Index>(rng() % 12);
    const Matrix db = signs(n, k), qs = signs(nq, k);
    const LabelSet dbl = labels(n, 2 + inst % 5, inst % 3 == 0);
    const LabelSet ql = labels(nq, 2 + inst % 5, inst % 3 == 0);
    const Index pn = 1 + static_cast<Index>(rng() % 20);
    EvalOptions opt;
    opt.precision_at = {pn};
    const EvalReport rep = evaluate_retrieval(PackedCodes::pack(qs), PackedCodes::pack(db),
                                              GroundTruth(ql, dbl), opt);

    double ap_sum = 0.0, pn_sum = 0.0, pr_sum = 0.0;
    std::map<std::int32_t, std::pair<double, int>> per_class;
    std::vector<std::pair<double, double>> curve(static_cast<std::size_t>(k + 1), {0.0, 0.0});
    const PackedCodes pdb = PackedCodes::pack(db), pq = PackedCodes::pack(qs);
    for (Index q = 0; q < nq; ++q) {
      std::vector<bool> rel;
      for (const auto& l : dbl.labels) rel.push_back(oracle::share(ql.labels[q], l));
      const oracle::Ranked o = oracle::rank(qs.row(q).transpose(), db);
      const double ap = oracle::average_precision(o, rel, o.ids.size());
      ap_sum += ap;
      pn_sum += oracle::precision_at_n(o, rel, static_cast<std::size_t>(pn));
      pr_sum += oracle::precision_at_radius(o, rel, 2);
      if (std::none_of(o.dist.begin(), o.dist.end(), [](int d) { return d <= 2; })) ++empty_balls;
      for (auto label : ql.labels[q]) {
        per_class[label].first += ap;
        ++per_class[label].second;
      }
      for (int r = 0; r <= k; ++r) {
        curve[static_cast<std::size_t>(r)].first += oracle::recall_at_radius(o, rel, r);
        curve[static_cast<std::size_t>(r)].second += oracle::precision_at_radius(o, rel, r);
      }
      // per-ranking PR curve
      const Ranking fast = rank_database(pq.code(q), pdb, q);
      PositiveMask mask(rel.begin(), rel.end());
      const auto got = pr_curve(fast, mask);
      const auto want = oracle::pr_curve(o, rel);
      if (got.size() != want.size()) {
        ++mismatches;
      } else {
        for (std::size_t p = 0; p < got.size(); ++p)
          if (got[p].recall != want[p].first || got[p].precision != want[p].second) ++mismatches;
      }
    }
    const double denom = static_cast<double>(nq);
    double macro = 0.0;
    for (const auto& [label, acc] : per_class) macro += acc.first / acc.second;
    macro /= static_cast<double>(per_class.size());

    if (rep.map != ap_sum / denom) ++mismatches;
    if (rep.macro_map != macro) ++mismatches;
    if (rep.precision_at_n.front().second != pn_sum / denom) ++mismatches;
    if (rep.precision_at_radius != pr_sum / denom) ++mismatches;
    for (int r = 0; r <= k; ++r) {
      const auto& p = rep.pr_curve[static_cast<std::size_t>(r)];
      if (p.recall != curve[static_cast<std::size_t>(r)].first / denom ||
          p.precision != curve[static_cast<std::size_t>(r)].second / denom)
        ++mismatches;
    }
  }
  return {mismatches == 0 && empty_balls > 0,
          std::to_string(mismatches) + " mismatches over 50 instances, " +
              std::to_string(empty_balls) + " queries with an empty radius-2 ball"};
}

Outcome out_of_sample() {
  SyntheticSpec spec;
  spec.clusters = 6;
  spec.per_cluster = 50;
  spec.dims = 16;
  spec.spread = 1.0;
  spec.seed = 9000;
  const FeatureMatrix raw = generate_synthetic(spec).features;
  TrainConfig tc;
  tc.bits = 12;
  tc.iterations = 50;
  const Fitted f = fit(raw, tc, 30);
  const HashModel& m = f.model;

  // dense affinity of the training rows, rebuilt by the oracle
  const FeatureMatrix x = apply_standardization(raw, m.stats);
  Matrix z(x.rows(), m.anchors.size());
  for (Index i = 0; i < x.rows(); ++i)
    z.row(i) = oracle::affinity_row(x.row(i).transpose(), m.anchors.centers, m.anchors.s,
                                    m.anchors.sigma2)
                   .transpose();
  const Vector lambda = oracle::column_sums(z);
  const Matrix b = m.train_codes->unpack();

  std::mt19937_64 rng(9001);
  int agree = 0;
  for (int q = 0; q < 20; ++q) {
    const Vector query_raw = raw.row(static_cast<Index>(rng() % raw.rows())).transpose() +
                             0.5 * oracle::gaussian(16, 1, rng);
    Vector xq(16);
    for (Index a = 0; a < 16; ++a) xq(a) = (query_raw(a) - m.stats.mean(a)) / m.stats.std(a);
    const Vector zq = oracle::affinity_row(xq, m.anchors.centers, m.anchors.s, m.anchors.sigma2);
    const Vector v = b.transpose() * z * lambda.cwiseInverse().asDiagonal() * zq;
    const Vector best = oracle::exhaustive_maximizer(v);
    const Vector got = encode_query_graph(query_raw, m);
    bool same = std::abs(got.dot(v) - best.dot(v)) <= 1e-12 * std::max(1.0, std::abs(best.dot(v)));
    for (Index j = 0; j < v.size(); ++j)
      if (std::abs(v(j)) > 1e-12 && got(j) != best(j)) same = false;
    agree += same ? 1 : 0;
  }
  return {agree == 20, std::to_string(agree) + "/20 queries equal the exhaustive maximizer (k=12)"};
}

Outcome retrieval() {
  const LabeledFeatures data = generate_synthetic(blob_spec());
  const HoldoutSplit split = holdout_split(data.labels, 0.1, 0);
  const FeatureMatrix train_x = data.features.select_rows(split.train);
  const FeatureMatrix query_x = data.features.select_rows(split.query);
  const GroundTruth truth(data.labels.select_rows(split.query), data.labels.select_rows(split.train));
  bool pass = true;
  std::string detail;
  for (Algorithm algo : {Algorithm::kEsh1, Algorithm::kEsh2}) {
    const Fitted f = fit(train_x, blob_config(algo, 0), 300);
    const PackedCodes q = encode_queries(query_x, f.model, QueryMode::kGraph);
    const double map = evaluate_retrieval(q, *f.model.train_codes, truth).map;
    pass = pass && map >= kRetrievalMap;
    detail += std::string(detail.empty() ? "" : ", ") +
              (algo == Algorithm::kEsh1 ? "esh1" : "esh2") + " mAP " + fmt("%.4f", map);
  }
  return {pass, detail + " (" + std::to_string(split.query.size()) + " held-out queries)"};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / "esh_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  SyntheticSpec spec = blob_spec();
  spec.per_cluster = 100;
  save_features(root / "x.bin", generate_synthetic(spec).features, FeatureFormat::kBinary);

  cli::TrainCommandConfig c;
  c.features = root / "x.bin";
  c.train.bits = 16;
  c.train.iterations = 100;
  c.train.seed = 7;
  c.anchors.anchors = 100;
  c.out = root / "a";
  const auto a = cli::cmd_train(c);
  c.out = root / "b";
  const auto b = cli::cmd_train(c);
  const bool model_same = slurp(a.model) == slurp(b.model) && !slurp(a.model).empty();
  const bool trace_same = slurp(a.trace) == slurp(b.trace) && !slurp(a.trace).empty();
  std::filesystem::remove_all(root);
  return {model_same && trace_same, std::string("model ") + (model_same ? "identical" : "differs") +
                                        ", trace " + (trace_same ? "identical" : "differs")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"feasibility of every iterate", feasibility},
      {"analytic gradient vs central differences", gradient_oracle},
      {"Stiefel projection optimality and idempotence", projection_optimality},
      {"factored S equals dense anchor affinity", factorization},
      {"quantization regularizer ablation", ablation},
      {"ESH2 converges faster than ESH1", convergence},
      {"linear scaling of training time", scaling},
      {"retrieval metrics vs enumeration", metric_oracles},
      {"graph query codes vs exhaustive maximizer", out_of_sample},
      {"end-to-end retrieval on held-out queries", retrieval},
      {"byte-identical training runs", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %zu: %s - %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
