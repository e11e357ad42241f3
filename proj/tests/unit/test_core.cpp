#include <cmath>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "permurank/error.hpp"

using namespace permurank;

TEST_CASE("query and passage validation") {
  CHECK_NOTHROW(validate_query({"q1", "text"}));
  CHECK_THROWS_AS(validate_query({"", "text"}), DataError);
  CHECK_THROWS_AS(validate_query({"q 1", "text"}), DataError);
  CHECK_THROWS_AS(validate_query({"q1", ""}), DataError);
  CHECK_THROWS_AS(validate_passage({"d 1", "x", std::nullopt}), DataError);
  CHECK_THROWS_AS(validate_passage({"", "x", std::nullopt}), DataError);
}

TEST_CASE("corpus rejects duplicate docids") {
  Corpus c;
  c.add(testutil::passage("a"));
  c.add(testutil::passage("b"));
  CHECK(c.size() == 2);
  CHECK(c.at("b").docid == "b");
  CHECK(c.find("zz") == nullptr);
  CHECK_THROWS_AS(c.add(testutil::passage("a")), DataError);
  CHECK_THROWS_AS(c.at("zz"), DataError);
}

TEST_CASE("candidate list rank invariants") {
  Query q{"q", "t"};
  std::vector<Candidate> ok{{testutil::passage("a"), 1, 2.0}, {testutil::passage("b"), 2, 1.0}};
  CHECK_NOTHROW(CandidateList(q, ok));

  std::vector<Candidate> gap{{testutil::passage("a"), 1, 2.0}, {testutil::passage("b"), 3, 1.0}};
  CHECK_THROWS_AS(CandidateList(q, gap), DataError);

  std::vector<Candidate> dup{{testutil::passage("a"), 1, 2.0}, {testutil::passage("a"), 2, 1.0}};
  CHECK_THROWS_AS(CandidateList(q, dup), DataError);

  std::vector<Candidate> nan{{testutil::passage("a"), 1, std::nan("")}};
  CHECK_THROWS_AS(CandidateList(q, nan), DataError);
}

TEST_CASE("from_unordered re-sorting a permuted list is the identity") {
  const auto list = testutil::numbered_list(12);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto shuffled = list.candidates();
    SplitMix64 rng(seed);
    shuffle(std::span<Candidate>(shuffled), rng);
    const auto back = CandidateList::from_unordered(list.query(), shuffled);
    REQUIRE(back.size() == list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      CHECK(back[i].passage.docid == list[i].passage.docid);
      CHECK(back[i].initial_rank == static_cast<int>(i) + 1);
    }
  }
}

TEST_CASE("window config validation") {
  WindowConfig c;
  CHECK(c.window == 20);
  CHECK(c.step == 10);
  CHECK(c.passes == 1);
  CHECK_NOTHROW(c.validate());
  c.step = 21;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.step = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = WindowConfig{};
  c.window = 1001;
  c.step = 1;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = WindowConfig{};
  c.passes = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("initial order names round-trip") {
  for (auto o : {InitialOrder::AsRetrieved, InitialOrder::Random, InitialOrder::Reversed}) {
    CHECK(parse_initial_order(to_string(o)) == o);
  }
  CHECK_THROWS_AS(parse_initial_order("sideways"), UsageError);
}

TEST_CASE("teacher permutation") {
  TeacherPermutation t("q", {"a", "b", "c"}, {2, 1, 3});
  CHECK(t.size() == 3);
  CHECK_THROWS_AS(TeacherPermutation("q", {"a", "b"}, {1, 1}), DataError);
  CHECK_THROWS_AS(TeacherPermutation("q", {"a", "b"}, {1}), DataError);

  const std::vector<int> order{2, 3, 1};
  const auto f = TeacherPermutation::from_order("q", {"a", "b", "c"}, order);
  CHECK(f.ranks() == std::vector<int>{3, 1, 2});
  CHECK(is_rank_permutation(std::vector<int>{3, 1, 2}));
  CHECK_FALSE(is_rank_permutation(std::vector<int>{0, 1, 2}));
  CHECK_FALSE(is_rank_permutation(std::vector<int>{1, 1}));
}

TEST_CASE("ranking construction") {
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  const std::vector<double> scores{1.0, 3.0, 1.0, 2.0};
  const auto r = Ranking::from_scores("q", ids, scores);
  CHECK(r.docids() == std::vector<std::string>{"b", "d", "a", "c"});
  CHECK(Ranking::from_scores("q", ids, scores) == r);

  const auto o = Ranking::from_order("q", ids);
  CHECK(o.entries().front().score == 4.0);
  CHECK(o.entries().back().score == 1.0);

  CHECK_THROWS_AS(Ranking("q", {{"a", 1.0}, {"b", 2.0}}), DataError);
  CHECK_THROWS_AS(Ranking("q", {{"a", 2.0}, {"a", 1.0}}), DataError);
  const std::vector<double> bad{1.0, std::nan(""), 0.0, 0.0};
  CHECK_THROWS_AS(Ranking::from_scores("q", ids, bad), DataError);
}

TEST_CASE("judgments") {
  Judgments j;
  j.set("q", "a", 2);
  j.set("q", "a", 3);
  CHECK(j.grade("q", "a") == 3);
  CHECK(j.grade("q", "zz") == 0);
  CHECK(j.grade("other", "a") == 0);
  CHECK(j.has_query("q"));
  CHECK_FALSE(j.has_query("other"));
  CHECK_THROWS_AS(j.set("q", "b", 4), DataError);
  CHECK_THROWS_AS(j.set("q", "b", -1), DataError);
}

TEST_CASE("splitmix is deterministic and uniform-ish") {
  SplitMix64 a(42);
  SplitMix64 b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  SplitMix64 r(7);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 10000.0 == doctest::Approx(0.5).epsilon(0.02));
  CHECK(mix_seed(1, "q1") != mix_seed(1, "q2"));
  CHECK(mix_seed(1, "q1") == mix_seed(1, "q1"));
}
