#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "permurank/error.hpp"
#include "permurank/metrics.hpp"

using namespace permurank;
using namespace permurank::metrics;

namespace {

Ranking ranking_of(const std::vector<std::string>& ids, const std::string& qid = "q") {
  return Ranking::from_order(qid, ids);
}

std::vector<std::string> random_list(SplitMix64& rng, std::size_t n, std::size_t universe) {
  std::vector<std::string> pool;
  for (std::size_t i = 0; i < universe; ++i) pool.push_back("x" + std::to_string(i));
  shuffle(std::span<std::string>(pool), rng);
  pool.resize(std::min(n, universe));
  return pool;
}

}  // namespace

TEST_CASE("ndcg hand case") {
  Judgments j;
  j.set("q", "d1", 0);
  j.set("q", "d2", 2);
  j.set("q", "d3", 1);
  const double v = ndcg_at_k(ranking_of({"d1", "d2", "d3"}), j, 3);
  CHECK(std::abs(v - 0.6697) < 1e-4);
  const double dcg = 2.0 / std::log2(3.0) + 1.0 / std::log2(4.0);
  const double idcg = 2.0 + 1.0 / std::log2(3.0);
  CHECK(v == doctest::Approx(dcg / idcg).epsilon(1e-15));
  CHECK(ndcg_at_k(ranking_of({"d2", "d3", "d1"}), j, 3) == 1.0);

  // Every ordering of the three: only the ideal one scores 1.
  std::vector<std::string> perm{"d1", "d2", "d3"};
  int perfect = 0;
  do {
    const double x = ndcg_at_k(ranking_of(perm), j, 3);
    std::map<std::string, int> judged{{"d1", 0}, {"d2", 2}, {"d3", 1}};
    CHECK(std::abs(x - oracle::ndcg(perm, judged, 3)) < 1e-12);
    if (x == 1.0) ++perfect;
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(perfect == 1);
}

TEST_CASE("ndcg conventions") {
  Judgments zero;
  zero.set("q", "a", 0);
  CHECK(ndcg_at_k(ranking_of({"a"}), zero, 10) == 0.0);
  Judgments j;
  j.set("q", "a", 1);
  CHECK(ndcg_at_k(ranking_of({"zz", "a"}), j, 1) == 0.0);
  CHECK(ndcg_at_k(ranking_of({"a", "zz"}), j, 10) == 1.0);
  CHECK_THROWS(ndcg_at_k(ranking_of({"a"}), j, 0));
}

TEST_CASE("ndcg matches the brute-force oracle") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const auto ids = random_list(rng, 1 + rng.below(15), 20);
    Judgments j;
    std::map<std::string, int> judged;
    for (int d = 0; d < 20; ++d) {
      if (rng.below(2) == 0) continue;
      const int g = static_cast<int>(rng.below(4));
      j.set("q", "x" + std::to_string(d), g);
      judged["x" + std::to_string(d)] = g;
    }
    if (judged.empty()) continue;
    const std::size_t k = 1 + rng.below(12);
    const double got = ndcg_at_k(ranking_of(ids), j, k);
    REQUIRE(std::abs(got - oracle::ndcg(ids, judged, k)) < 1e-12);
    REQUIRE(got >= 0.0);
    REQUIRE(got <= 1.0 + 1e-15);
  }
}

TEST_CASE("beneficial swap never lowers ndcg") {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    auto ids = random_list(rng, 10, 10);
    Judgments j;
    for (const auto& d : ids) j.set("q", d, static_cast<int>(rng.below(4)));
    const std::size_t a = rng.below(10);
    const std::size_t b = rng.below(10);
    const std::size_t lo = std::min(a, b);
    const std::size_t hi = std::max(a, b);
    if (j.grade("q", ids[hi]) <= j.grade("q", ids[lo])) continue;
    const double before = ndcg_at_k(ranking_of(ids), j, 5);
    std::swap(ids[lo], ids[hi]);
    CHECK(ndcg_at_k(ranking_of(ids), j, 5) >= before);
  }
}

TEST_CASE("rbo basics") {
  const std::vector<std::string> x{"a", "b", "c"};
  CHECK(rbo(x, x, 0.9) == 1.0);
  CHECK(rbo(x, x, 0.5) == 1.0);
  const std::vector<std::string> y{"d", "e", "f"};
  CHECK(rbo(x, y) == 0.0);
  const std::vector<std::string> swapped{"b", "a", "c"};
  CHECK(std::abs(rbo(x, swapped, 0.9) - oracle::rbo_ext(x, swapped, 0.9)) < 1e-9);
  CHECK(rbo(x, swapped) < 1.0);
  CHECK(rbo(x, {}) == 0.0);
  CHECK(rbo({}, {}) == 1.0);
  const std::vector<std::string> dup{"a", "a"};
  CHECK_THROWS(rbo(dup, x));
  CHECK_THROWS(rbo(x, x, 1.0));
  CHECK_THROWS(rbo(x, x, 0.0));
}

TEST_CASE("rbo matches the reference and is symmetric") {
  SplitMix64 rng(123);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_list(rng, 1 + rng.below(20), 25);
    const auto b = random_list(rng, 1 + rng.below(20), 25);
    const double p = 0.05 + 0.9 * rng.uniform();
    const double got = rbo(a, b, p);
    REQUIRE(std::abs(got - oracle::rbo_ext(a, b, p)) < 1e-9);
    REQUIRE(std::abs(got - rbo(b, a, p)) < 1e-12);
    REQUIRE(got >= 0.0);
    REQUIRE(got <= 1.0);
  }
}

TEST_CASE("evaluate reports and skips") {
  Judgments j;
  j.set("q1", "a", 2);
  j.set("q1", "b", 1);
  std::vector<Ranking> run{ranking_of({"a", "b"}, "q1"), ranking_of({"x"}, "q9")};
  const std::vector<std::size_t> ks{1, 5, 10};
  const auto r = evaluate(run, j, ks);
  CHECK(r.evaluated == 1);
  CHECK(r.skipped == 1);
  CHECK(r.averages.at("ndcg_cut_10") == 1.0);
  std::ostringstream table;
  r.print_table(table);
  CHECK(table.str().find("nDCG@10  1.0000") != std::string::npos);
  const auto json = nlohmann::json::parse(r.to_json());
  CHECK(json["averages"]["ndcg_cut_1"] == 1.0);

  std::vector<Ranking> unrelated{ranking_of({"x"}, "q9")};
  CHECK_THROWS_AS(evaluate(unrelated, j, ks), DataError);
  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(evaluate(run, j, none), UsageError);
}

TEST_CASE("averages are the mean of per-query values; parallel equals serial") {
  SplitMix64 rng(6);
  Judgments j;
  std::vector<Ranking> run;
  for (int q = 0; q < 40; ++q) {
    const std::string qid = "q" + std::to_string(q);
    const auto ids = random_list(rng, 15, 30);
    for (int d = 0; d < 30; d += 2) j.set(qid, "x" + std::to_string(d), static_cast<int>(rng.below(4)));
    run.push_back(ranking_of(ids, qid));
  }
  const std::vector<std::size_t> ks{1, 5, 10};
  const auto par = evaluate(run, j, ks);
  const auto ser = evaluate_serial(run, j, ks);
  CHECK(par.to_json() == ser.to_json());
  double sum = 0.0;
  for (const auto& qm : par.per_query) sum += qm.values.at("ndcg_cut_5");
  CHECK(par.averages.at("ndcg_cut_5") == doctest::Approx(sum / static_cast<double>(par.evaluated)).epsilon(1e-15));
}

TEST_CASE("behavior counters") {
  std::vector<WindowBehavior> stream{{1, 0, false}, {0, 2, false}, {0, 0, true}};
  const std::vector<double> samples{0.5, 1.0};
  const auto s = collect_behavior(stream, samples);
  CHECK(s.repetition == 1);
  CHECK(s.missing == 2);
  CHECK(s.rejection == 1);
  CHECK(s.windows == 3);
  CHECK(s.rbo_mean == 0.75);
  const auto empty = collect_behavior({}, {});
  CHECK(empty.rbo_mean == 0.0);
  std::ostringstream out;
  s.print_table(out);
  CHECK(out.str().find("repetition  1") != std::string::npos);
}
