#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "permurank/error.hpp"
#include "permurank/textio.hpp"

using namespace permurank;
using testutil::TempDir;

TEST_CASE("qrels parsing") {
  std::istringstream one("7 0 d3 2\n");
  const auto j = textio::parse_qrels(one);
  CHECK(j.grade("7", "d3") == 2);
  CHECK(j.size() == 1);

  std::istringstream empty("");
  CHECK(textio::parse_qrels(empty).empty());

  std::istringstream bad("7 0 d3 two\n");
  try {
    textio::parse_qrels(bad);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }

  std::istringstream negative("1 0 a 1\n1 0 b -1\n");
  CHECK_THROWS_WITH_AS(textio::parse_qrels(negative), doctest::Contains("line 2"), DataError);

  std::istringstream short_line("1 0 a\n");
  CHECK_THROWS_AS(textio::parse_qrels(short_line), DataError);

  std::istringstream dupes("1 0 a 1\n\n1 0 a 3\n");
  CHECK(textio::parse_qrels(dupes).grade("1", "a") == 3);

  std::istringstream bom("\xEF\xBB\xBFq 0 d 1\n");
  CHECK(textio::parse_qrels(bom).grade("q", "d") == 1);
}

TEST_CASE("qrels write/read round-trip") {
  TempDir dir;
  Judgments j;
  j.set("q1", "a", 1);
  j.set("q1", "b", 0);
  j.set("q2", "c", 3);
  textio::write_qrels(j, dir / "qrels.txt");
  const auto back = textio::read_qrels(dir / "qrels.txt");
  CHECK(back.size() == 3);
  CHECK(back.grade("q2", "c") == 3);
  CHECK(back.has_query("q1"));
  CHECK(testutil::read_file(dir / "qrels.txt").find("q1 0 a 1\n") != std::string::npos);
}

TEST_CASE("run lines match the documented format") {
  std::vector<Ranking> run{Ranking("q1", {{"dA", 2.5}, {"dB", 1.0}})};
  std::ostringstream out;
  textio::write_run(run, "pg", out);
  CHECK(out.str() == "q1 Q0 dA 1 2.5 pg\nq1 Q0 dB 2 1.0 pg\n");
}

TEST_CASE("score formatting round-trips doubles") {
  CHECK(textio::format_score(1.0) == "1.0");
  CHECK(textio::format_score(2.5) == "2.5");
  CHECK(textio::format_score(-3.0) == "-3.0");
  SplitMix64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
    CHECK(std::stod(textio::format_score(v)) == v);
  }
}

TEST_CASE("run files round-trip (property)") {
  TempDir dir;
  SplitMix64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Ranking> run;
    const int queries = 1 + static_cast<int>(rng.below(5));
    for (int q = 0; q < queries; ++q) {
      const int n = 1 + static_cast<int>(rng.below(30));
      std::vector<std::string> ids;
      std::vector<double> scores;
      for (int d = 0; d < n; ++d) {
        ids.push_back("doc" + std::to_string(rng.below(1000000)) + "_" + std::to_string(d));
        scores.push_back(rng.normal() * 10.0);
      }
      run.push_back(Ranking::from_scores("q" + std::to_string(q), ids, scores));
    }
    const auto path = dir / "run.txt";
    textio::write_run(run, "tag", path);
    const auto back = textio::read_run(path);
    REQUIRE(back == run);
    textio::write_run(back, "tag", dir / "run2.txt");
    CHECK(testutil::read_file(path) == testutil::read_file(dir / "run2.txt"));
  }
}

TEST_CASE("run writer rejects whitespace docids before writing") {
  TempDir dir;
  CHECK_THROWS_AS(Ranking("q1", {{"ok", 2.0}, {"bad id", 1.0}}), DataError);
  std::vector<Ranking> run{Ranking("q1", {{"ok", 2.0}})};
  CHECK_THROWS_AS(textio::write_run(run, "bad tag", dir / "run.txt"), DataError);
  CHECK_FALSE(std::filesystem::exists(dir / "run.txt"));
  CHECK_FALSE(std::filesystem::exists(dir / "run.txt.partial"));
}

TEST_CASE("run reader reports rank gaps with the query id") {
  std::istringstream gap("q7 Q0 a 1 2.0 t\nq7 Q0 b 3 1.0 t\n");
  CHECK_THROWS_WITH_AS(textio::parse_run(gap), doctest::Contains("q7"), DataError);
  std::istringstream fields("q Q0 a 1 2.0\n");
  CHECK_THROWS_AS(textio::parse_run(fields), DataError);
  std::istringstream increasing("q Q0 a 1 1.0 t\nq Q0 b 2 2.0 t\n");
  CHECK_THROWS_AS(textio::parse_run(increasing), DataError);
}

TEST_CASE("jsonl corpus") {
  TempDir dir;
  testutil::write_file(dir / "c.jsonl",
                       "{\"docid\": \"a\", \"text\": \"alpha text\"}\n"
                       "{\"docid\": \"b\", \"text\": \"beta\", \"title\": \"Beta\"}\n");
  const auto c = textio::load_jsonl_corpus(dir / "c.jsonl");
  CHECK(c.size() == 2);
  CHECK(c.at("a").text == "alpha text");
  CHECK(c.at("b").title.value() == "Beta");
  CHECK(c.passages()[0].docid == "a");

  textio::write_jsonl_corpus(c, dir / "c2.jsonl");
  const auto back = textio::load_jsonl_corpus(dir / "c2.jsonl");
  CHECK(back.size() == 2);
  CHECK(back.at("b").title.value() == "Beta");

  testutil::write_file(dir / "dup.jsonl", "{\"docid\":\"a\",\"text\":\"x\"}\n{\"docid\":\"a\",\"text\":\"y\"}\n");
  CHECK_THROWS_AS(textio::load_jsonl_corpus(dir / "dup.jsonl"), DataError);
  testutil::write_file(dir / "bad.jsonl", "{\"docid\":\"a\",\"text\":\"x\"}\nnot json\n");
  CHECK_THROWS_WITH_AS(textio::load_jsonl_corpus(dir / "bad.jsonl"), doctest::Contains("line 2"), DataError);
  CHECK_THROWS_AS(textio::load_jsonl_corpus(dir / "missing.jsonl"), DataError);
}

TEST_CASE("queries load from TSV and JSONL") {
  TempDir dir;
  testutil::write_file(dir / "q.tsv", "q1\thow many eye drops per ml\nq2\tbeta query\n");
  auto qs = textio::load_queries(dir / "q.tsv");
  REQUIRE(qs.size() == 2);
  CHECK(qs[0].id == "q1");
  CHECK(qs[0].text == "how many eye drops per ml");

  testutil::write_file(dir / "q.jsonl", "{\"qid\": \"x\", \"query\": \"first\"}\n{\"qid\": \"y\", \"text\": \"second\"}\n");
  qs = textio::load_queries(dir / "q.jsonl");
  REQUIRE(qs.size() == 2);
  CHECK(qs[1].text == "second");

  textio::write_queries_tsv(qs, dir / "out.tsv");
  CHECK(textio::load_queries(dir / "out.tsv")[0].id == "x");
}

namespace {

std::string graded_line(int q, int d, int rel) {
  return "{\"qid\": \"n" + std::to_string(q) + "\", \"query\": \"question " + std::to_string(q) +
         "\", \"docid\": \"n" + std::to_string(q) + "_" + std::to_string(d) + "\", \"text\": \"passage\", \"rel\": " +
         std::to_string(rel) + "}\n";
}

}  // namespace

TEST_CASE("graded set with 21 queries x 20 passages and the published grade totals") {
  // 290 zeros, 40 ones, 90 twos spread over 420 rows.
  std::vector<int> grades;
  grades.insert(grades.end(), 290, 0);
  grades.insert(grades.end(), 40, 1);
  grades.insert(grades.end(), 90, 2);
  SplitMix64 rng(5);
  shuffle(std::span<int>(grades), rng);
  std::string content;
  for (int q = 0; q < 21; ++q) {
    for (int d = 0; d < 20; ++d) content += graded_line(q, d, grades[static_cast<std::size_t>(q * 20 + d)]);
  }
  TempDir dir;
  testutil::write_file(dir / "novel.jsonl", content);
  const auto set = textio::load_graded_set(dir / "novel.jsonl");
  REQUIRE(set.candidates.size() == 21);
  int counts[3] = {0, 0, 0};
  for (const auto& list : set.candidates) {
    CHECK(list.size() == 20);
    CHECK(list[0].passage.docid == list.query().id + "_0");
    for (const auto& c : list.candidates()) ++counts[set.judgments.grade(list.query().id, c.passage.docid)];
  }
  CHECK(counts[0] == 290);
  CHECK(counts[1] == 40);
  CHECK(counts[2] == 90);
  CHECK(set.queries.size() == 21);

  testutil::write_file(dir / "bad.jsonl", graded_line(0, 0, 3));
  CHECK_THROWS_AS(textio::load_graded_set(dir / "bad.jsonl"), DataError);
}

TEST_CASE("teacher records round-trip") {
  TempDir dir;
  std::vector<textio::TeacherRecord> recs{{"q1", "query one", {"a", "b", "c"}, {2, 3, 1}},
                                          {"q2", "query two", {"x", "y"}, {1, 2}}};
  textio::write_teacher_records(recs, dir / "t.jsonl");
  const auto back = textio::load_teacher_records(dir / "t.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].permutation == std::vector<int>{2, 3, 1});
  CHECK(back[0].to_permutation().ranks() == std::vector<int>{3, 1, 2});

  testutil::write_file(dir / "bad.jsonl",
                       "{\"qid\":\"q\",\"query\":\"t\",\"docids\":[\"a\",\"b\"],\"permutation\":[1,1]}\n");
  CHECK_THROWS_AS(textio::load_teacher_records(dir / "bad.jsonl"), DataError);
}

TEST_CASE("atomic file leaves nothing behind without commit") {
  TempDir dir;
  {
    textio::AtomicFile f(dir / "out.txt");
    f.stream() << "partial";
  }
  CHECK_FALSE(std::filesystem::exists(dir / "out.txt"));
  CHECK_FALSE(std::filesystem::exists(dir / "out.txt.partial"));
  {
    textio::AtomicFile f(dir / "out.txt");
    f.stream() << "done";
    f.commit();
  }
  CHECK(testutil::read_file(dir / "out.txt") == "done");
}
