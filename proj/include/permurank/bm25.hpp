#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "permurank/core.hpp"

namespace permurank::sparse {

/// Lowercases (ASCII, Latin-1, Latin Extended-A, Greek, Cyrillic) and splits
/// on non-alphanumeric code points. Invalid UTF-8 bytes act as separators.
std::vector<std::string> tokenize(std::string_view text);

/// Sorted distinct tokens of a query.
std::vector<std::string> query_terms(std::string_view text);

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;

  void validate() const;
};

struct Posting {
  std::uint32_t doc = 0;  // ordinal into the passage table
  std::uint32_t tf = 0;
};

/// Immutable in-memory inverted index over a corpus.
class Index {
 public:
  /// Throws DataError on an empty corpus.
  static Index build(const Corpus& corpus);

  std::size_t doc_count() const { return passages_.size(); }
  double avg_doclen() const { return avg_doclen_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  const std::vector<Passage>& passages() const { return passages_; }

  /// Postings sorted by ascending ordinal; empty span for unknown terms.
  std::span<const Posting> postings(std::string_view term) const;
  std::size_t document_frequency(std::string_view term) const { return postings(term).size(); }
  std::size_t vocabulary_size() const { return postings_.size(); }

  /// Throws DataError for unknown docids.
  std::uint32_t ordinal(std::string_view docid) const;
  bool contains(std::string_view docid) const;
  std::uint32_t term_frequency(std::string_view term, std::uint32_t doc) const;

  /// Lucene-style idf: ln((N - df + 0.5) / (df + 0.5) + 1).
  double idf(std::string_view term) const;

  void save(const std::filesystem::path& path) const;
  static Index load(const std::filesystem::path& path);

 private:
  std::vector<Passage> passages_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_doclen_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::uint32_t> ordinals_;

  void finalize();
};

/// BM25 of one document. Terms absent from the document contribute 0.
double bm25_score(const Index& index, const Bm25Params& params, std::string_view query_text,
                  std::string_view docid);

/// Top-k documents with positive score, ties by ascending docid.
CandidateList search(const Index& index, const Bm25Params& params, const Query& query, std::size_t k = 100);

/// Searches every query. Queries are processed in parallel with OpenMP.
std::vector<CandidateList> search_batch(const Index& index, const Bm25Params& params,
                                        std::span<const Query> queries, std::size_t k = 100);
/// Single-threaded reference for search_batch.
std::vector<CandidateList> search_batch_serial(const Index& index, const Bm25Params& params,
                                               std::span<const Query> queries, std::size_t k = 100);

}  // namespace permurank::sparse
