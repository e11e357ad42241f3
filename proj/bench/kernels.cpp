// Serial reference vs OpenMP kernel for each parallel stage.

#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "permurank/bm25.hpp"
#include "permurank/distill.hpp"
#include "permurank/gateway.hpp"
#include "permurank/metrics.hpp"
#include "permurank/rerank.hpp"
#include "permurank/synthetic.hpp"

using namespace permurank;

namespace {

struct Retrieval {
  synthetic::Collection collection;
  sparse::Index index;
  std::vector<Ranking> run;
  std::vector<CandidateList> lists;
};

const Retrieval& retrieval() {
  static const Retrieval r = [] {
    Retrieval out;
    out.collection = synthetic::make_collection({});
    out.index = sparse::Index::build(out.collection.corpus);
    out.lists = sparse::search_batch_serial(out.index, {}, out.collection.queries, 100);
    for (const auto& l : out.lists) {
      std::vector<RankedDoc> entries;
      for (const auto& c : l.candidates()) entries.push_back({c.passage.docid, c.initial_score});
      out.run.emplace_back(l.query().id, std::move(entries));
    }
    return out;
  }();
  return r;
}

const synthetic::TeacherTask& teacher() {
  static const synthetic::TeacherTask t = synthetic::make_teacher_task({});
  return t;
}

void BM_SearchSerial(benchmark::State& state) {
  const auto& r = retrieval();
  for (auto _ : state) benchmark::DoNotOptimize(sparse::search_batch_serial(r.index, {}, r.collection.queries, 100));
}

void BM_SearchParallel(benchmark::State& state) {
  const auto& r = retrieval();
  for (auto _ : state) benchmark::DoNotOptimize(sparse::search_batch(r.index, {}, r.collection.queries, 100));
}

const std::vector<std::size_t> kCutoffs{1, 5, 10};

void BM_EvaluateSerial(benchmark::State& state) {
  const auto& r = retrieval();
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate_serial(r.run, r.collection.qrels, kCutoffs));
}

void BM_EvaluateParallel(benchmark::State& state) {
  const auto& r = retrieval();
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate(r.run, r.collection.qrels, kCutoffs));
}

void BM_FeaturesSerial(benchmark::State& state) {
  const auto& t = teacher();
  for (auto _ : state) benchmark::DoNotOptimize(distill::build_training_set_serial(t.train, t.index, {}));
}

void BM_FeaturesParallel(benchmark::State& state) {
  const auto& t = teacher();
  for (auto _ : state) benchmark::DoNotOptimize(distill::build_training_set(t.train, t.index, {}));
}

// Mock-oracle re-ranking of every query; the argument is the number of concurrent queries.
void BM_RerankBatch(benchmark::State& state) {
  const auto& r = retrieval();
  auto model = gateway::MockOracle::from_judgments(r.collection.qrels);
  const int jobs = static_cast<int>(state.range(0));
  gateway::Gateway gw(model, jobs);
  for (auto _ : state) benchmark::DoNotOptimize(rerank::rerank_batch(r.lists, WindowConfig{}, gw, {}, jobs));
}

}  // namespace

BENCHMARK(BM_SearchSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SearchParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EvaluateSerial)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_EvaluateParallel)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_FeaturesSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FeaturesParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RerankBatch)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
