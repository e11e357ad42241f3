#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "permurank/core.hpp"
#include "permurank/error.hpp"
#include "permurank/gateway.hpp"
#include "permurank/prompting.hpp"

namespace permurank::rerank {

struct Anomalies {
  int repetition = 0;
  int missing = 0;
  bool rejected = false;

  bool any() const { return repetition > 0 || missing > 0 || rejected; }
  bool operator==(const Anomalies&) const = default;
};

struct ParsedPermutation {
  std::vector<int> order;  // 1-indexed identifiers, a permutation of 1..m
  bool repaired = false;
  Anomalies anomalies;
};

/// Recovers an identifier order from free-form model text.
///
/// Maximal digit runs are identifiers; values outside 1..m are ignored.
/// The first occurrence of each identifier wins and later ones count as
/// repetitions. Identifiers never mentioned are appended in ascending order
/// and counted as missing. Text with no valid identifier is a rejection
/// and yields the identity order. Total over all inputs.
ParsedPermutation parse_permutation(std::string_view text, int m);

/// output[k] = window[order[k] - 1].
template <typename T>
std::vector<T> apply_permutation(std::span<const T> window, const ParsedPermutation& parsed) {
  if (window.size() != parsed.order.size()) {
    throw std::invalid_argument("apply_permutation: window has " + std::to_string(window.size()) +
                                " items but the permutation has " + std::to_string(parsed.order.size()));
  }
  std::vector<T> out;
  out.reserve(window.size());
  for (int id : parsed.order) out.push_back(window[static_cast<std::size_t>(id - 1)]);
  return out;
}

/// Half-open 0-indexed window [begin, end) over the current ordering.
struct WindowSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const WindowSpan&) const = default;
};

/// Back-to-first window geometry for one pass: the first window covers the
/// last `window` positions, each next one starts `step` earlier, clamped at
/// 0; the final window always starts at 0. One window when m <= window.
std::vector<WindowSpan> window_schedule(std::size_t m, std::size_t window, std::size_t step);

/// Everything observed for one window call.
struct WindowRecord {
  std::string query_id;
  int pass = 0;    // 1-based
  int index = 0;   // 1-based within the pass
  std::size_t start = 0;  // 1-indexed inclusive
  std::size_t end = 0;    // 1-indexed inclusive
  std::uint64_t prompt_hash = 0;
  std::string raw_text;
  std::vector<std::string> window_docids;  // incoming order
  std::vector<int> parsed_order;
  Anomalies anomalies;
  std::optional<double> rbo;  // overlap consistency with the previous window
};

struct RerankResult {
  Ranking ranking;
  std::vector<WindowRecord> windows;
  std::vector<double> rbo_samples;
  Anomalies totals;  // repetition/missing summed, rejected if any window rejected
  int rejected_windows = 0;
};

/// Raised when a window's model call fails; wraps the gateway error.
class WindowError : public GatewayError {
 public:
  WindowError(const std::string& query_id, int pass, int index, const std::string& what);
};

struct RerankOptions {
  prompting::InstructionKind kind = prompting::InstructionKind::PermutationChat;
  std::size_t max_words = prompting::kDefaultMaxWords;
  double rbo_persistence = 0.9;
};

/// Applies the initial-order policy. Random uses a seed mixed with the query id.
std::vector<Candidate> initial_ordering(const CandidateList& candidates, const WindowConfig& config);

/// Permutation re-ranking with back-to-first sliding windows.
RerankResult sliding_rerank(const CandidateList& candidates, const WindowConfig& config, gateway::Gateway& gateway,
                            const RerankOptions& options = {});

/// Re-ranks only the first k entries of `base` (already in base order);
/// the rest keep their positions. Scores are n..1 by final position.
RerankResult hybrid_topk_rerank(const CandidateList& base, std::size_t k, const WindowConfig& config,
                                gateway::Gateway& gateway, const RerankOptions& options = {});

/// Re-ranks many queries concurrently (at most `jobs` at once).
std::vector<RerankResult> rerank_batch(std::span<const CandidateList> lists, const WindowConfig& config,
                                       gateway::Gateway& gateway, const RerankOptions& options, int jobs,
                                       std::optional<std::size_t> top_k = std::nullopt);

/// Query-likelihood: mean token log-probability of the query given each passage.
std::vector<double> score_query_gen(gateway::Gateway& gateway, const CandidateList& candidates,
                                    std::size_t max_words = prompting::kDefaultMaxWords);

struct RelevanceScores {
  std::vector<double> scores;  // each in [0, 2]
  int anomalies = 0;           // judgments that were neither yes nor no
};

/// 1 + p(yes) for a "yes" judgment, 1 - p(no) for "no", 1.0 otherwise.
double relevance_score(std::string_view judgment_token, double probability, bool* anomaly = nullptr);

RelevanceScores score_relevance_gen(gateway::Gateway& gateway, const CandidateList& candidates, bool few_shot,
                                    std::size_t max_words = prompting::kDefaultMaxWords);

/// Orders candidates by score, ties by initial rank.
Ranking rank_by_scores(const CandidateList& candidates, std::span<const double> scores);

}  // namespace permurank::rerank
