#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "permurank/bm25.hpp"
#include "permurank/core.hpp"
#include "permurank/distill.hpp"
#include "permurank/textio.hpp"

namespace permurank::synthetic {

/// Deterministic pseudo-word for vocabulary slot `i` (lowercase letters only).
std::string word(std::size_t i);

struct CollectionSpec {
  std::size_t passages = 5000;
  std::size_t queries = 100;
  std::size_t relevant_per_query = 20;  // planted passages per query
  std::size_t vocabulary = 4000;
  std::size_t query_terms = 4;
  std::size_t min_words = 30;
  std::size_t max_words = 80;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Random-text corpus with planted relevance.
///
/// Each query owns a disjoint block of passages; a planted passage carries
/// k in 1..query_terms of the query's terms and is judged grade
/// min(3, k - 1). The remaining passages are background text.
struct Collection {
  Corpus corpus;
  std::vector<Query> queries;
  Judgments qrels;
  std::vector<std::vector<std::string>> planted;  // per query, docids
};

Collection make_collection(const CollectionSpec& spec);

struct TeacherSpec {
  std::size_t train_queries = 1000;
  std::size_t heldout_queries = 200;
  std::size_t candidates = 20;
  std::uint64_t seed = 0;
  /// Hidden linear teacher over the student feature set.
  distill::FeatureVector hidden = {1.0, 0.6, 0.4, 0.8, -1.5, 0.0};
};

/// Distillation task: every query's candidates are its planted passages and
/// the teacher permutation sorts them by the hidden linear score.
struct TeacherTask {
  Collection collection;
  sparse::Index index;
  std::vector<textio::TeacherRecord> train;
  std::vector<textio::TeacherRecord> heldout;
};

TeacherTask make_teacher_task(const TeacherSpec& spec, const sparse::Bm25Params& params = {});

/// Grades a teacher permutation for nDCG: ranks 1-5 get 3, 6-10 get 2,
/// 11-15 get 1, the rest 0.
Judgments teacher_judgments(std::span<const textio::TeacherRecord> records);

}  // namespace permurank::synthetic
