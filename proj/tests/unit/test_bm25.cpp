#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "permurank/bm25.hpp"
#include "permurank/error.hpp"
#include "permurank/synthetic.hpp"

using namespace permurank;
using sparse::Bm25Params;
using sparse::Index;

namespace {

Corpus ascii_corpus(std::size_t n, std::uint64_t seed, std::vector<std::vector<std::string>>* tokens) {
  SplitMix64 rng(seed);
  Corpus c;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    const std::size_t len = 3 + rng.below(25);
    for (std::size_t w = 0; w < len; ++w) {
      if (w) text += rng.below(4) == 0 ? ", " : " ";
      text += "w" + std::to_string(rng.below(30));
    }
    if (tokens) tokens->push_back(oracle::ascii_tokens(text));
    c.add({"doc" + std::to_string(i), text, std::nullopt});
  }
  return c;
}

}  // namespace

TEST_CASE("tokenizer") {
  CHECK(sparse::tokenize("Hello, world") == std::vector<std::string>{"hello", "world"});
  CHECK(sparse::tokenize("  ") .empty());
  CHECK(sparse::tokenize("COVID-19 vaccine's") == std::vector<std::string>{"covid", "19", "vaccine", "s"});
  CHECK(sparse::tokenize("Ärger ÜBER Straße") == std::vector<std::string>{"ärger", "über", "straße"});
  CHECK(sparse::tokenize("ΑΘΗΝΑ Москва") == std::vector<std::string>{"αθηνα", "москва"});
  CHECK(sparse::tokenize("ＡＢＣ") == std::vector<std::string>{"ａｂｃ"});
  CHECK(sparse::tokenize("a\xFF" "b") == std::vector<std::string>{"a", "b"});
  CHECK(sparse::query_terms("b a b") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("build examples") {
  Corpus one;
  one.add({"d", "Hello, world", std::nullopt});
  const auto idx = Index::build(one);
  CHECK(idx.doc_lengths() == std::vector<std::uint32_t>{2});
  CHECK(idx.postings("hello").size() == 1);
  CHECK(idx.postings("world").size() == 1);
  CHECK(idx.postings("missing").empty());

  Corpus two;
  two.add({"a", "same text here", std::nullopt});
  two.add({"b", "same text here", std::nullopt});
  const auto idx2 = Index::build(two);
  CHECK(idx2.doc_lengths()[0] == idx2.doc_lengths()[1]);
  CHECK(idx2.postings("same").size() == 2);
  CHECK(idx2.postings("text").size() == 2);

  CHECK_THROWS_AS(Index::build(Corpus{}), DataError);

  Corpus titled;
  titled.add({"t", "body words", std::string("Title")});
  const auto idx3 = Index::build(titled);
  CHECK(idx3.doc_lengths()[0] == 3);
  CHECK(idx3.term_frequency("title", 0) == 1);
}

TEST_CASE("average document length matches an independent mean") {
  std::vector<std::vector<std::string>> toks;
  const auto c = ascii_corpus(100, 1, &toks);
  const auto idx = Index::build(c);
  double sum = 0.0;
  for (const auto& t : toks) sum += static_cast<double>(t.size());
  CHECK(std::abs(idx.avg_doclen() - sum / 100.0) < 1e-12);
  CHECK(idx.doc_count() == 100);
}

TEST_CASE("bm25 closed-form examples") {
  Corpus one;
  one.add({"d", "x", std::nullopt});
  const auto idx = Index::build(one);
  // N=1, df=1: idf = ln(0.5/1.5 + 1); tf part is 1 at tf=1, len=avglen.
  const double expected = std::log(0.5 / 1.5 + 1.0);
  CHECK(sparse::bm25_score(idx, {}, "x", "d") == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.2877).epsilon(1e-4));
  CHECK(sparse::bm25_score(idx, {1.8, 0.4}, "x", "d") == doctest::Approx(expected).epsilon(1e-12));
  CHECK(sparse::bm25_score(idx, {}, "y", "d") == 0.0);
  CHECK_THROWS_AS(sparse::bm25_score(idx, {}, "x", "nope"), DataError);
}

TEST_CASE("bm25 matches the brute-force oracle") {
  std::vector<std::vector<std::string>> toks;
  const auto c = ascii_corpus(60, 2, &toks);
  const auto idx = Index::build(c);
  SplitMix64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::string q = "w" + std::to_string(rng.below(30)) + " W" + std::to_string(rng.below(30)) + " w" +
                    std::to_string(rng.below(30));
    const Bm25Params params{0.5 + rng.uniform(), rng.uniform()};
    for (std::size_t d = 0; d < 60; ++d) {
      const double got = sparse::bm25_score(idx, params, q, "doc" + std::to_string(d));
      const double want = oracle::bm25(toks, d, q, params.k1, params.b);
      REQUIRE(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("search equals the exhaustive sort") {
  std::vector<std::vector<std::string>> toks;
  const auto c = ascii_corpus(50, 3, &toks);
  const auto idx = Index::build(c);
  SplitMix64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Query q{"q", "w" + std::to_string(rng.below(30)) + " w" + std::to_string(rng.below(30))};
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t d = 0; d < 50; ++d) {
      const std::string id = "doc" + std::to_string(d);
      const double s = sparse::bm25_score(idx, {}, q.text, id);
      if (s > 0.0) all.push_back({s, id});
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const auto got = sparse::search(idx, {}, q, 50);
    REQUIRE(got.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      CHECK(got[i].passage.docid == all[i].second);
      CHECK(got[i].initial_score == all[i].first);
      CHECK(got[i].initial_rank == static_cast<int>(i) + 1);
    }
    const auto top5 = sparse::search(idx, {}, q, 5);
    CHECK(top5.size() == std::min<std::size_t>(5, all.size()));
  }
}

TEST_CASE("search size and tie rule") {
  Corpus c;
  for (int i = 0; i < 10; ++i) c.add({"d" + std::to_string(i), i < 3 ? "match filler" : "other filler", std::nullopt});
  const auto idx = Index::build(c);
  const auto res = sparse::search(idx, {}, {"q", "match"}, 100);
  CHECK(res.size() == 3);
  CHECK(res[0].passage.docid == "d0");
  CHECK(res[1].passage.docid == "d1");

  Corpus tie;
  tie.add({"zeta", "same", std::nullopt});
  tie.add({"alpha", "same", std::nullopt});
  const auto tidx = Index::build(tie);
  const auto tres = sparse::search(tidx, {}, {"q", "same"}, 10);
  REQUIRE(tres.size() == 2);
  CHECK(tres[0].passage.docid == "alpha");
  CHECK(sparse::search(tidx, {}, {"q", "nothing"}, 10).empty());
}

TEST_CASE("index build is independent of corpus order") {
  const auto c = ascii_corpus(40, 5, nullptr);
  auto passages = c.passages();
  SplitMix64 rng(1);
  shuffle(std::span<Passage>(passages), rng);
  Corpus shuffled;
  for (auto& p : passages) shuffled.add(p);
  const auto a = Index::build(c);
  const auto b = Index::build(shuffled);
  for (int t = 0; t < 30; ++t) {
    const std::string q = "w" + std::to_string(t) + " w" + std::to_string((t * 7) % 30);
    for (const auto& p : c.passages()) {
      CHECK(sparse::bm25_score(a, {}, q, p.docid) == sparse::bm25_score(b, {}, q, p.docid));
    }
  }
}

TEST_CASE("index save/load preserves scores") {
  testutil::TempDir dir;
  const auto c = ascii_corpus(30, 6, nullptr);
  const auto idx = Index::build(c);
  idx.save(dir / "idx.json");
  const auto back = Index::load(dir / "idx.json");
  CHECK(back.doc_count() == idx.doc_count());
  CHECK(back.avg_doclen() == idx.avg_doclen());
  for (const auto& p : c.passages()) {
    CHECK(sparse::bm25_score(back, {}, "w1 w2 w3", p.docid) == sparse::bm25_score(idx, {}, "w1 w2 w3", p.docid));
  }
  testutil::write_file(dir / "junk.json", "{\"format\": \"other\"}");
  CHECK_THROWS_AS(Index::load(dir / "junk.json"), DataError);
}

TEST_CASE("bm25 params validation") {
  CHECK_NOTHROW(Bm25Params{}.validate());
  CHECK_THROWS_AS((Bm25Params{-1.0, 0.4}.validate()), UsageError);
  CHECK_THROWS_AS((Bm25Params{0.9, 1.5}.validate()), UsageError);
}

TEST_CASE("parallel batch search equals the serial reference") {
  synthetic::CollectionSpec spec;
  spec.passages = 800;
  spec.queries = 30;
  spec.seed = 12;
  const auto col = synthetic::make_collection(spec);
  const auto idx = Index::build(col.corpus);
  const auto par = sparse::search_batch(idx, {}, col.queries, 50);
  const auto ser = sparse::search_batch_serial(idx, {}, col.queries, 50);
  REQUIRE(par.size() == ser.size());
  for (std::size_t q = 0; q < par.size(); ++q) {
    REQUIRE(par[q].size() == ser[q].size());
    for (std::size_t i = 0; i < par[q].size(); ++i) {
      CHECK(par[q][i].passage.docid == ser[q][i].passage.docid);
      CHECK(par[q][i].initial_score == ser[q][i].initial_score);
    }
  }
}
