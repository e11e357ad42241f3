#include "permurank/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "permurank/error.hpp"
#include "permurank/random.hpp"

namespace permurank {

bool contains_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

void validate_query(const Query& query) {
  if (query.id.empty()) throw DataError("query id is empty");
  if (contains_whitespace(query.id)) throw DataError("query id contains whitespace: '" + query.id + "'");
  if (query.text.empty()) throw DataError("query '" + query.id + "' has empty text");
}

void validate_passage(const Passage& passage) {
  if (passage.docid.empty()) throw DataError("passage docid is empty");
  if (contains_whitespace(passage.docid)) {
    throw DataError("docid contains whitespace: '" + passage.docid + "'");
  }
}

void Corpus::add(Passage passage) {
  validate_passage(passage);
  auto [it, inserted] = by_docid_.emplace(passage.docid, passages_.size());
  if (!inserted) throw DataError("duplicate docid '" + passage.docid + "'");
  passages_.push_back(std::move(passage));
}

const Passage* Corpus::find(std::string_view docid) const {
  auto it = by_docid_.find(std::string(docid));
  return it == by_docid_.end() ? nullptr : &passages_[it->second];
}

const Passage& Corpus::at(std::string_view docid) const {
  const Passage* p = find(docid);
  if (p == nullptr) throw DataError("unknown docid '" + std::string(docid) + "'");
  return *p;
}

CandidateList::CandidateList(Query query, std::vector<Candidate> candidates)
    : query_(std::move(query)), candidates_(std::move(candidates)) {
  validate_query(query_);
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    const Candidate& c = candidates_[i];
    validate_passage(c.passage);
    if (c.initial_rank != static_cast<int>(i) + 1) {
      throw DataError("query '" + query_.id + "': candidate ranks must be 1..M in order, found rank " +
                      std::to_string(c.initial_rank) + " at position " + std::to_string(i + 1));
    }
    if (std::isnan(c.initial_score)) {
      throw DataError("query '" + query_.id + "': NaN score for " + c.passage.docid);
    }
    if (!seen.insert(c.passage.docid).second) {
      throw DataError("query '" + query_.id + "': duplicate candidate " + c.passage.docid);
    }
  }
}

CandidateList CandidateList::from_unordered(Query query, std::vector<Candidate> candidates) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.initial_rank < b.initial_rank; });
  return CandidateList(std::move(query), std::move(candidates));
}

CandidateList CandidateList::from_passages(Query query, std::vector<Passage> passages,
                                           std::span<const double> scores) {
  if (!scores.empty() && scores.size() != passages.size()) {
    throw DataError("score count does not match passage count");
  }
  std::vector<Candidate> out;
  out.reserve(passages.size());
  for (std::size_t i = 0; i < passages.size(); ++i) {
    out.push_back({std::move(passages[i]), static_cast<int>(i) + 1, scores.empty() ? 0.0 : scores[i]});
  }
  return CandidateList(std::move(query), std::move(out));
}

void WindowConfig::validate() const {
  if (window < 1 || window > kMaxWindow) {
    throw UsageError("window size must be in 1.." + std::to_string(kMaxWindow) + ", got " +
                     std::to_string(window));
  }
  if (step < 1 || step > window) {
    throw UsageError("step must be in 1..window (" + std::to_string(window) + "), got " +
                     std::to_string(step));
  }
  if (passes < 1) throw UsageError("passes must be positive");
}

std::string_view to_string(InitialOrder order) {
  switch (order) {
    case InitialOrder::AsRetrieved: return "as-retrieved";
    case InitialOrder::Random: return "random";
    case InitialOrder::Reversed: return "reversed";
  }
  return "?";
}

InitialOrder parse_initial_order(std::string_view name) {
  if (name == "as-retrieved") return InitialOrder::AsRetrieved;
  if (name == "random") return InitialOrder::Random;
  if (name == "reversed") return InitialOrder::Reversed;
  throw UsageError("unknown initial order '" + std::string(name) + "'");
}

bool is_rank_permutation(std::span<const int> ranks) {
  std::vector<char> seen(ranks.size(), 0);
  for (int r : ranks) {
    if (r < 1 || static_cast<std::size_t>(r) > ranks.size() || seen[r - 1]) return false;
    seen[r - 1] = 1;
  }
  return true;
}

TeacherPermutation::TeacherPermutation(std::string query_id, std::vector<std::string> docids,
                                       std::vector<int> ranks)
    : query_id_(std::move(query_id)), docids_(std::move(docids)), ranks_(std::move(ranks)) {
  if (docids_.size() != ranks_.size()) {
    throw DataError("teacher '" + query_id_ + "': " + std::to_string(docids_.size()) + " docids but " +
                    std::to_string(ranks_.size()) + " ranks");
  }
  if (!is_rank_permutation(ranks_)) {
    throw DataError("teacher '" + query_id_ + "': ranks are not a permutation of 1..M");
  }
}

TeacherPermutation TeacherPermutation::from_order(std::string query_id, std::vector<std::string> docids,
                                                  std::span<const int> order) {
  if (order.size() != docids.size() || !is_rank_permutation(order)) {
    throw DataError("teacher '" + query_id + "': permutation is not a permutation of 1.." +
                    std::to_string(docids.size()));
  }
  std::vector<int> ranks(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) ranks[order[k] - 1] = static_cast<int>(k) + 1;
  return TeacherPermutation(std::move(query_id), std::move(docids), std::move(ranks));
}

Ranking::Ranking(std::string query_id, std::vector<RankedDoc> entries)
    : query_id_(std::move(query_id)), entries_(std::move(entries)) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const RankedDoc& e = entries_[i];
    if (std::isnan(e.score)) throw DataError("query '" + query_id_ + "': NaN score for " + e.docid);
    if (e.docid.empty() || contains_whitespace(e.docid)) {
      throw DataError("query '" + query_id_ + "': invalid docid '" + e.docid + "'");
    }
    if (!seen.insert(e.docid).second) {
      throw DataError("query '" + query_id_ + "': duplicate docid " + e.docid);
    }
    if (i > 0 && e.score > entries_[i - 1].score) {
      throw DataError("query '" + query_id_ + "': scores must be non-increasing (position " +
                      std::to_string(i + 1) + ")");
    }
  }
}

Ranking Ranking::from_scores(std::string query_id, std::span<const std::string> docids,
                             std::span<const double> scores) {
  if (docids.size() != scores.size()) throw DataError("docid/score length mismatch");
  for (double s : scores) {
    if (std::isnan(s)) throw DataError("query '" + query_id + "': NaN score");
  }
  std::vector<std::size_t> order(docids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RankedDoc> entries;
  entries.reserve(order.size());
  for (std::size_t i : order) entries.push_back({docids[i], scores[i]});
  return Ranking(std::move(query_id), std::move(entries));
}

Ranking Ranking::from_order(std::string query_id, std::span<const std::string> docids) {
  std::vector<RankedDoc> entries;
  entries.reserve(docids.size());
  const auto n = static_cast<double>(docids.size());
  for (std::size_t i = 0; i < docids.size(); ++i) entries.push_back({docids[i], n - static_cast<double>(i)});
  return Ranking(std::move(query_id), std::move(entries));
}

std::vector<std::string> Ranking::docids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.docid);
  return out;
}

void Judgments::set(const std::string& query_id, const std::string& docid, int grade) {
  if (grade < 0 || grade > kMaxGrade) {
    throw DataError("relevance grade " + std::to_string(grade) + " for (" + query_id + ", " + docid +
                    ") outside 0.." + std::to_string(kMaxGrade));
  }
  by_query_[query_id][docid] = grade;
}

int Judgments::grade(const std::string& query_id, const std::string& docid) const {
  auto q = by_query_.find(query_id);
  if (q == by_query_.end()) return 0;
  auto d = q->second.find(docid);
  return d == q->second.end() ? 0 : d->second;
}

bool Judgments::has_query(const std::string& query_id) const { return by_query_.contains(query_id); }

std::vector<int> Judgments::grades_for(const std::string& query_id) const {
  std::vector<int> out;
  if (auto q = by_query_.find(query_id); q != by_query_.end()) {
    out.reserve(q->second.size());
    for (const auto& [docid, g] : q->second) out.push_back(g);
  }
  return out;
}

const std::unordered_map<std::string, int>* Judgments::query_map(const std::string& query_id) const {
  auto q = by_query_.find(query_id);
  return q == by_query_.end() ? nullptr : &q->second;
}

std::vector<std::string> Judgments::query_ids() const {
  std::vector<std::string> out;
  out.reserve(by_query_.size());
  for (const auto& [qid, docs] : by_query_) out.push_back(qid);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t Judgments::size() const {
  std::size_t n = 0;
  for (const auto& [qid, docs] : by_query_) n += docs.size();
  return n;
}

}  // namespace permurank
