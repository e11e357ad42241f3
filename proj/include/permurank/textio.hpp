#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "permurank/core.hpp"

namespace permurank::textio {

// TREC qrels: `qid iter docid rel`. Later duplicates win.
Judgments read_qrels(const std::filesystem::path& path);
Judgments parse_qrels(std::istream& in);
void write_qrels(const Judgments& judgments, const std::filesystem::path& path);

// TREC run: `qid Q0 docid rank score tag`.
void write_run(std::span<const Ranking> rankings, std::string_view tag, const std::filesystem::path& path);
void write_run(std::span<const Ranking> rankings, std::string_view tag, std::ostream& out);
/// Queries are returned in order of first appearance.
std::vector<Ranking> read_run(const std::filesystem::path& path);
std::vector<Ranking> parse_run(std::istream& in);

/// Shortest decimal that round-trips the double; always contains a '.' or exponent.
std::string format_score(double score);

/// JSONL: {"docid", "text", "title"?}.
Corpus load_jsonl_corpus(const std::filesystem::path& path);
void write_jsonl_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// JSONL ({"qid", "query"} or {"qid", "text"}) or TSV (`qid<TAB>text`), detected per line.
std::vector<Query> load_queries(const std::filesystem::path& path);
void write_queries_tsv(std::span<const Query> queries, const std::filesystem::path& path);

struct GradedSet {
  std::vector<Query> queries;
  std::vector<CandidateList> candidates;  // one per query, file order
  Judgments judgments;
};

/// JSONL: {"qid", "query", "docid", "text", "rel" in {0,1,2}}. Rows of a
/// query form its candidate list in file order.
GradedSet load_graded_set(const std::filesystem::path& path);

struct TeacherRecord {
  std::string query_id;
  std::string query_text;
  std::vector<std::string> docids;
  std::vector<int> permutation;  // 1-indexed into docids, best first

  TeacherPermutation to_permutation() const;
};

/// JSONL: {"qid", "query", "docids": [...], "permutation": [...]}.
std::vector<TeacherRecord> load_teacher_records(const std::filesystem::path& path);
void write_teacher_records(std::span<const TeacherRecord> records, const std::filesystem::path& path);

/// Removes a UTF-8 byte-order mark from the front of `line`.
void strip_bom(std::string& line);

/// Writes to `<path>.partial` and renames on commit; removes the partial
/// file if destroyed without commit.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path path);
  ~AtomicFile();
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  std::ostream& stream() { return out_; }
  void commit();

 private:
  std::filesystem::path path_;
  std::filesystem::path partial_;
  std::ofstream out_;
  bool committed_ = false;
};

}  // namespace permurank::textio
