#include "permurank/rerank.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>

#include "permurank/error.hpp"
#include "permurank/metrics.hpp"
#include "permurank/random.hpp"

namespace permurank::rerank {

using prompting::InstructionKind;

ParsedPermutation parse_permutation(std::string_view text, int m) {
  if (m < 1) throw std::invalid_argument("parse_permutation: m must be >= 1");
  ParsedPermutation out;
  std::vector<char> seen(static_cast<std::size_t>(m) + 1, 0);
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    // Digit runs longer than m's width (after leading zeros) are out of range.
    std::size_t k = i;
    while (k + 1 < j && text[k] == '0') ++k;
    long long value = -1;
    if (j - k <= 9) {
      value = 0;
      for (std::size_t p = k; p < j; ++p) value = value * 10 + (text[p] - '0');
    }
    i = j;
    if (value < 1 || value > m) continue;
    if (seen[value]) {
      ++out.anomalies.repetition;
      continue;
    }
    seen[value] = 1;
    out.order.push_back(static_cast<int>(value));
  }
  if (out.order.empty()) {
    out.anomalies = Anomalies{0, 0, true};
    out.order.resize(static_cast<std::size_t>(m));
    for (int id = 1; id <= m; ++id) out.order[id - 1] = id;
    out.repaired = true;
    return out;
  }
  for (int id = 1; id <= m; ++id) {
    if (!seen[id]) {
      out.order.push_back(id);
      ++out.anomalies.missing;
    }
  }
  out.repaired = out.anomalies.any();
  return out;
}

std::vector<WindowSpan> window_schedule(std::size_t m, std::size_t window, std::size_t step) {
  if (window == 0 || step == 0 || step > window) {
    throw std::invalid_argument("window_schedule: need 1 <= step <= window");
  }
  std::vector<WindowSpan> out;
  if (m == 0) return out;
  if (m <= window) {
    out.push_back({0, m});
    return out;
  }
  std::size_t begin = m - window;
  while (true) {
    out.push_back({begin, std::min(begin + window, m)});
    if (begin == 0) break;
    begin = begin > step ? begin - step : 0;
  }
  return out;
}

WindowError::WindowError(const std::string& query_id, int pass, int index, const std::string& what)
    : GatewayError("query '" + query_id + "', pass " + std::to_string(pass) + ", window " + std::to_string(index) +
                   ": " + what) {}

std::vector<Candidate> initial_ordering(const CandidateList& candidates, const WindowConfig& config) {
  std::vector<Candidate> order = candidates.candidates();
  switch (config.initial_order) {
    case InitialOrder::AsRetrieved:
      break;
    case InitialOrder::Reversed:
      std::reverse(order.begin(), order.end());
      break;
    case InitialOrder::Random: {
      SplitMix64 rng(mix_seed(config.seed, candidates.query().id));
      shuffle(std::span<Candidate>(order), rng);
      break;
    }
  }
  return order;
}

namespace {

std::vector<std::string> docids_of(std::span<const Candidate> items) {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& c : items) out.push_back(c.passage.docid);
  return out;
}

void check_permutation_kind(const RerankOptions& options) {
  if (!prompting::is_permutation(options.kind)) {
    throw UsageError("sliding re-ranking needs a permutation template (pg-text or pg-chat)");
  }
}

}  // namespace

RerankResult sliding_rerank(const CandidateList& candidates, const WindowConfig& config, gateway::Gateway& gateway,
                            const RerankOptions& options) {
  config.validate();
  check_permutation_kind(options);
  const Query& query = candidates.query();
  std::vector<Candidate> current = initial_ordering(candidates, config);
  const std::size_t m = current.size();
  const prompting::RenderOptions render{options.max_words, static_cast<std::size_t>(config.window)};

  RerankResult result;
  for (int pass = 1; pass <= config.passes; ++pass) {
    const auto schedule = window_schedule(m, static_cast<std::size_t>(config.window),
                                          static_cast<std::size_t>(config.step));
    std::optional<WindowSpan> previous;
    for (std::size_t w = 0; w < schedule.size(); ++w) {
      const WindowSpan span = schedule[w];
      const int index = static_cast<int>(w) + 1;
      std::span<const Candidate> window(current.data() + span.begin, span.size());

      // Items the previous window left in the overlap, in that window's order.
      std::vector<std::string> overlap_before;
      if (previous && previous->begin < span.end) {
        const std::size_t hi = std::min(previous->end, span.end);
        for (std::size_t p = previous->begin; p < hi; ++p) overlap_before.push_back(current[p].passage.docid);
      }

      const auto prompt = prompting::render_permutation(options.kind, query, window, render);
      gateway::LlmResponse response;
      try {
        response = gateway.complete(prompt, false);
      } catch (const GatewayError& e) {
        throw WindowError(query.id, pass, index, e.what());
      }
      const auto parsed = parse_permutation(response.text, static_cast<int>(span.size()));
      auto reordered = apply_permutation(window, parsed);

      WindowRecord record;
      record.query_id = query.id;
      record.pass = pass;
      record.index = index;
      record.start = span.begin + 1;
      record.end = span.end;
      record.prompt_hash = fnv1a(prompt.canonical());
      record.raw_text = response.text;
      record.window_docids = docids_of(window);
      record.parsed_order = parsed.order;
      record.anomalies = parsed.anomalies;

      std::copy(reordered.begin(), reordered.end(), current.begin() + static_cast<std::ptrdiff_t>(span.begin));

      if (!overlap_before.empty()) {
        std::vector<std::string> overlap_after;
        for (const auto& c : reordered) {
          if (std::find(overlap_before.begin(), overlap_before.end(), c.passage.docid) != overlap_before.end()) {
            overlap_after.push_back(c.passage.docid);
          }
        }
        record.rbo = metrics::rbo(overlap_before, overlap_after, options.rbo_persistence);
        result.rbo_samples.push_back(*record.rbo);
      }

      result.totals.repetition += parsed.anomalies.repetition;
      result.totals.missing += parsed.anomalies.missing;
      if (parsed.anomalies.rejected) {
        result.totals.rejected = true;
        ++result.rejected_windows;
      }
      result.windows.push_back(std::move(record));
      previous = span;
    }
  }
  const auto final_ids = docids_of(current);
  result.ranking = Ranking::from_order(query.id, final_ids);
  return result;
}

RerankResult hybrid_topk_rerank(const CandidateList& base, std::size_t k, const WindowConfig& config,
                                gateway::Gateway& gateway, const RerankOptions& options) {
  if (k == 0) throw UsageError("top-k re-ranking needs k >= 1");
  const std::size_t head = std::min(k, base.size());
  std::vector<Candidate> top(base.candidates().begin(), base.candidates().begin() + static_cast<std::ptrdiff_t>(head));
  RerankResult result = sliding_rerank(CandidateList(base.query(), std::move(top)), config, gateway, options);
  std::vector<std::string> order = result.ranking.docids();
  for (std::size_t i = head; i < base.size(); ++i) order.push_back(base[i].passage.docid);
  result.ranking = Ranking::from_order(base.query().id, order);
  return result;
}

std::vector<RerankResult> rerank_batch(std::span<const CandidateList> lists, const WindowConfig& config,
                                       gateway::Gateway& gateway, const RerankOptions& options, int jobs,
                                       std::optional<std::size_t> top_k) {
  if (jobs < 1) throw UsageError("jobs must be >= 1");
  config.validate();
  check_permutation_kind(options);
  std::vector<RerankResult> out(lists.size());
  std::vector<std::exception_ptr> errors(lists.size());
  const auto n = static_cast<std::ptrdiff_t>(lists.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = top_k ? hybrid_topk_rerank(lists[i], *top_k, config, gateway, options)
                     : sliding_rerank(lists[i], config, gateway, options);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<double> score_query_gen(gateway::Gateway& gateway, const CandidateList& candidates,
                                    std::size_t max_words) {
  const prompting::RenderOptions render{max_words, prompting::kDefaultWindow};
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates.candidates()) {
    const auto prompt = prompting::render_single(InstructionKind::QueryGen, candidates.query(), c.passage, render);
    const auto response = gateway.complete(prompt, true);
    if (!response.token_logprobs || response.token_logprobs->empty()) {
      throw GatewayError("no query tokens were scored for '" + c.passage.docid + "'");
    }
    double sum = 0.0;
    for (const auto& t : *response.token_logprobs) sum += t.logprob;
    scores.push_back(sum / static_cast<double>(response.token_logprobs->size()));
  }
  return scores;
}

double relevance_score(std::string_view judgment_token, double probability, bool* anomaly) {
  std::string token;
  for (char c : judgment_token) {
    if (!std::isspace(static_cast<unsigned char>(c))) token.push_back(static_cast<char>(std::tolower(c)));
  }
  const double p = std::clamp(probability, 0.0, 1.0);
  if (anomaly) *anomaly = false;
  if (token == "yes") return 1.0 + p;
  if (token == "no") return 1.0 - p;
  if (anomaly) *anomaly = true;
  return 1.0;
}

RelevanceScores score_relevance_gen(gateway::Gateway& gateway, const CandidateList& candidates, bool few_shot,
                                    std::size_t max_words) {
  const auto kind = few_shot ? InstructionKind::RelevanceGenFewShot : InstructionKind::RelevanceGenZeroShot;
  const prompting::RenderOptions render{max_words, prompting::kDefaultWindow};
  RelevanceScores out;
  out.scores.reserve(candidates.size());
  for (const auto& c : candidates.candidates()) {
    const auto prompt = prompting::render_single(kind, candidates.query(), c.passage, render);
    const auto response = gateway.complete(prompt, true);
    const gateway::TokenLogprob* first = nullptr;
    if (response.token_logprobs) {
      for (const auto& t : *response.token_logprobs) {
        if (t.token.find_first_not_of(" \t\r\n") != std::string::npos) {
          first = &t;
          break;
        }
      }
    }
    bool anomaly = true;
    const double score = first ? relevance_score(first->token, std::exp(first->logprob), &anomaly) : 1.0;
    if (anomaly) ++out.anomalies;
    out.scores.push_back(score);
  }
  return out;
}

Ranking rank_by_scores(const CandidateList& candidates, std::span<const double> scores) {
  if (scores.size() != candidates.size()) throw DataError("score count does not match candidate count");
  std::vector<std::string> ids;
  ids.reserve(candidates.size());
  for (const auto& c : candidates.candidates()) ids.push_back(c.passage.docid);
  return Ranking::from_scores(candidates.query().id, ids, scores);
}

}  // namespace permurank::rerank
