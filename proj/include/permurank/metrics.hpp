#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "permurank/core.hpp"

namespace permurank::metrics {

/// Linear-gain nDCG@k (trec_eval ndcg_cut): DCG = sum rel_i / log2(i + 1),
/// normalized by the ideal ordering of all judged grades for the query.
/// Unjudged documents have grade 0; returns 0 when the ideal DCG is 0.
double ndcg_at_k(const Ranking& ranking, const Judgments& judgments, std::size_t k);

/// Extrapolated rank-biased overlap (RBO_ext) with persistence p in (0, 1).
/// Symmetric, in [0, 1]; identical lists give exactly 1, disjoint lists 0.
/// Throws std::invalid_argument on duplicate items or p outside (0, 1).
double rbo(std::span<const std::string> a, std::span<const std::string> b, double p = 0.9);

struct QueryMetrics {
  std::string query_id;
  std::map<std::string, double> values;  // "ndcg_cut_10" -> value
};

struct EvalReport {
  std::vector<std::size_t> cutoffs;
  std::vector<QueryMetrics> per_query;  // run order, evaluated queries only
  std::map<std::string, double> averages;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // run queries with no judgments

  std::string to_json() const;
  /// Aligned plain-text table; `per_query` adds one row per query.
  void print_table(std::ostream& out, bool per_query = false) const;
};

std::string ndcg_name(std::size_t k);
/// Label used in tables, e.g. "nDCG@10".
std::string ndcg_label(std::size_t k);

/// Per-query nDCG at each cutoff, macro-averaged. Queries are evaluated in parallel.
/// Throws DataError if no run query has judgments.
EvalReport evaluate(std::span<const Ranking> run, const Judgments& qrels, std::span<const std::size_t> cutoffs);
/// Single-threaded reference for evaluate.
EvalReport evaluate_serial(std::span<const Ranking> run, const Judgments& qrels,
                           std::span<const std::size_t> cutoffs);

struct WindowBehavior {
  int repetition = 0;
  int missing = 0;
  bool rejected = false;
};

struct BehaviorStats {
  long long repetition = 0;
  long long missing = 0;
  long long rejection = 0;
  long long windows = 0;
  double rbo_mean = 0.0;  // 0 when there are no samples
  long long rbo_samples = 0;

  std::string to_json() const;
  void print_table(std::ostream& out) const;
};

BehaviorStats collect_behavior(std::span<const WindowBehavior> windows, std::span<const double> rbo_samples);

}  // namespace permurank::metrics
