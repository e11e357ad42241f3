#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace permurank {

// Ranks are 1-indexed at every public interface.

struct Query {
  std::string id;
  std::string text;
};

struct Passage {
  std::string docid;
  std::string text;
  std::optional<std::string> title;
};

/// Throws DataError if the id is empty or contains whitespace, or the text is empty.
void validate_query(const Query& query);
/// Throws DataError if the docid is empty or contains whitespace.
void validate_passage(const Passage& passage);

bool contains_whitespace(std::string_view s);

/// Passages in insertion order, addressable by docid.
class Corpus {
 public:
  /// Throws DataError on an invalid or duplicate docid.
  void add(Passage passage);
  const Passage* find(std::string_view docid) const;
  /// Throws DataError if the docid is unknown.
  const Passage& at(std::string_view docid) const;

  const std::vector<Passage>& passages() const { return passages_; }
  std::size_t size() const { return passages_.size(); }
  bool empty() const { return passages_.empty(); }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> by_docid_;
};

struct Candidate {
  Passage passage;
  int initial_rank = 0;
  double initial_score = 0.0;
};

/// A query plus its M first-stage candidates, stored in initial_rank order.
class CandidateList {
 public:
  CandidateList() = default;
  /// Candidates must already be in initial_rank order with ranks 1..M.
  CandidateList(Query query, std::vector<Candidate> candidates);

  /// Accepts candidates in any order and sorts them by initial_rank.
  static CandidateList from_unordered(Query query, std::vector<Candidate> candidates);

  /// Builds a list from passages in their given order, assigning ranks 1..M.
  static CandidateList from_passages(Query query, std::vector<Passage> passages,
                                     std::span<const double> scores = {});

  const Query& query() const { return query_; }
  const std::vector<Candidate>& candidates() const { return candidates_; }
  std::size_t size() const { return candidates_.size(); }
  bool empty() const { return candidates_.empty(); }
  const Candidate& operator[](std::size_t i) const { return candidates_[i]; }

 private:
  Query query_;
  std::vector<Candidate> candidates_;
};

enum class InitialOrder { AsRetrieved, Random, Reversed };

struct WindowConfig {
  int window = 20;
  int step = 10;
  int passes = 1;
  InitialOrder initial_order = InitialOrder::AsRetrieved;
  std::uint64_t seed = 0;  // used by InitialOrder::Random

  static constexpr int kMaxWindow = 1000;

  /// Throws UsageError unless 1 <= step <= window <= kMaxWindow and passes >= 1.
  void validate() const;
};

std::string_view to_string(InitialOrder order);
/// Accepts "as-retrieved", "random", "reversed".
InitialOrder parse_initial_order(std::string_view name);

/// Teacher rank labels r_1..r_M aligned with docids in original candidate order.
class TeacherPermutation {
 public:
  TeacherPermutation() = default;
  TeacherPermutation(std::string query_id, std::vector<std::string> docids, std::vector<int> ranks);

  /// `order` lists 1-indexed positions into `docids`, best first.
  static TeacherPermutation from_order(std::string query_id, std::vector<std::string> docids,
                                       std::span<const int> order);

  const std::string& query_id() const { return query_id_; }
  const std::vector<std::string>& docids() const { return docids_; }
  const std::vector<int>& ranks() const { return ranks_; }
  std::size_t size() const { return ranks_.size(); }

 private:
  std::string query_id_;
  std::vector<std::string> docids_;
  std::vector<int> ranks_;
};

/// True if `ranks` is a permutation of 1..ranks.size().
bool is_rank_permutation(std::span<const int> ranks);

struct RankedDoc {
  std::string docid;
  double score = 0.0;

  bool operator==(const RankedDoc&) const = default;
};

/// Final ordering for one query: distinct docids, non-increasing scores.
class Ranking {
 public:
  Ranking() = default;
  /// Entries must already be in order; throws DataError otherwise.
  Ranking(std::string query_id, std::vector<RankedDoc> entries);

  /// Sorts by descending score; ties keep their input order.
  static Ranking from_scores(std::string query_id, std::span<const std::string> docids,
                             std::span<const double> scores);
  /// Assigns synthetic scores n, n-1, ..., 1 to the given order.
  static Ranking from_order(std::string query_id, std::span<const std::string> docids);

  const std::string& query_id() const { return query_id_; }
  const std::vector<RankedDoc>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> docids() const;

  bool operator==(const Ranking&) const = default;

 private:
  std::string query_id_;
  std::vector<RankedDoc> entries_;
};

/// Graded relevance judgments keyed by (query id, docid).
class Judgments {
 public:
  static constexpr int kMaxGrade = 3;

  /// Throws DataError for grades outside 0..kMaxGrade. Later calls overwrite.
  void set(const std::string& query_id, const std::string& docid, int grade);
  /// Unjudged pairs have grade 0.
  int grade(const std::string& query_id, const std::string& docid) const;
  bool has_query(const std::string& query_id) const;
  /// Grades of every judged document for the query (empty if none).
  std::vector<int> grades_for(const std::string& query_id) const;
  const std::unordered_map<std::string, int>* query_map(const std::string& query_id) const;

  std::vector<std::string> query_ids() const;
  std::size_t size() const;
  bool empty() const { return by_query_.empty(); }

 private:
  std::unordered_map<std::string, std::unordered_map<std::string, int>> by_query_;
};

}  // namespace permurank
