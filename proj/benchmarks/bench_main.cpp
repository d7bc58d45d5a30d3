#include <esh/anchor_graph.hpp>
#include <esh/encoder.hpp>
#include <esh/optimizer.hpp>
#include <esh/retrieval.hpp>

#include <benchmark/benchmark.h>

using namespace esh;

namespace {

Standardized blobs(Index n) {
  SyntheticSpec spec;
  spec.per_cluster = static_cast<std::size_t>(n / 10);
  return standardize(generate_synthetic(spec).features);
}

void BM_AnchorGraph(benchmark::State& state) {
  const Standardized st = blobs(state.range(0));
  AnchorParams p;
  for (auto _ : state) benchmark::DoNotOptimize(build_anchor_graph(st.features, p));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_AnchorGraph)->Arg(5000)->Arg(10000)->Arg(20000)->Unit(benchmark::kMillisecond)->Complexity();

void BM_ComputeS(benchmark::State& state) {
  const Standardized st = blobs(state.range(0));
  const AnchorGraph g = build_anchor_graph(st.features, {});
  for (auto _ : state) benchmark::DoNotOptimize(compute_s(st.features, g.z, g.degrees));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ComputeS)->Arg(5000)->Arg(20000)->Unit(benchmark::kMicrosecond)->Complexity();

void BM_Evaluate(benchmark::State& state) {
  const Standardized st = blobs(state.range(0));
  const AnchorGraph g = build_anchor_graph(st.features, {});
  const Matrix s = compute_s(st.features, g.z, g.degrees);
  const Matrix w = init_w(32, 16, 0);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(w, st.features.values(), s, 1.0));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Evaluate)->Arg(5000)->Arg(20000)->Arg(40000)->Unit(benchmark::kMicrosecond)->Complexity();

void BM_Train(benchmark::State& state) {
  const Standardized st = blobs(5000);
  const AnchorGraph g = build_anchor_graph(st.features, {});
  const Matrix s = compute_s(st.features, g.z, g.degrees);
  TrainConfig c;
  c.iterations = 100;
  c.algorithm = state.range(0) == 1 ? Algorithm::kEsh1 : Algorithm::kEsh2;
  for (auto _ : state) benchmark::DoNotOptimize(train(st.features.values(), s, c));
}
BENCHMARK(BM_Train)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_RankDatabase(benchmark::State& state) {
  Matrix b = Matrix::Random(state.range(0), 64);
  const PackedCodes db = PackedCodes::pack(b);
  Index q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rank_database(db.code(q), db, q));
    q = (q + 1) % db.size();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RankDatabase)->Arg(10000)->Arg(100000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
