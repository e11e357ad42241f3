#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "permurank/core.hpp"
#include "permurank/prompting.hpp"
#include "permurank/random.hpp"

namespace permurank::gateway {

using prompting::RenderedPrompt;

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct LlmResponse {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

/// Anything that turns a rendered prompt into model text.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  /// Throws CapabilityError if want_logprobs is set and unsupported.
  virtual LlmResponse complete(const RenderedPrompt& prompt, bool want_logprobs) = 0;
  virtual bool supports_logprobs() const = 0;
};

struct UsageTotals {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t requests = 0;

  std::int64_t tokens() const { return prompt_tokens + completion_tokens; }
};

/// Monotone per-query usage counters; safe for concurrent updates.
class UsageLedger {
 public:
  void record(const std::string& query_id, std::int64_t prompt_tokens, std::int64_t completion_tokens);
  UsageTotals totals() const;
  UsageTotals for_query(const std::string& query_id) const;
  std::vector<std::string> query_ids() const;

 private:
  mutable std::mutex mutex_;
  UsageTotals totals_;
  std::unordered_map<std::string, UsageTotals> per_query_;
};

/// Admission-bounded, usage-accounted access to a model.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<LanguageModel> model, int max_in_flight = 4);

  LlmResponse complete(const RenderedPrompt& prompt, bool want_logprobs);
  bool supports_logprobs() const { return model_->supports_logprobs(); }
  const UsageLedger& usage() const { return usage_; }
  int max_in_flight() const { return max_in_flight_; }

  /// Appends one JSON line per request/response pair to `out`.
  void set_request_log(std::shared_ptr<std::ostream> out);

 private:
  std::shared_ptr<LanguageModel> model_;
  int max_in_flight_;
  std::unique_ptr<std::counting_semaphore<>> admission_;
  UsageLedger usage_;
  std::mutex log_mutex_;
  std::shared_ptr<std::ostream> request_log_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP client

struct GatewayConfig {
  std::string endpoint_url = "http://127.0.0.1:8000";
  std::string model_name = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_output_tokens = 256;
  std::chrono::milliseconds request_timeout{60'000};
  int max_retries = 3;
  int max_in_flight = 4;
  std::chrono::milliseconds backoff_base{1'000};
  bool logprobs_supported = true;
  std::uint64_t jitter_seed = 0;

  void validate() const;
};

inline constexpr const char* kApiKeyEnv = "PERMURANK_API_KEY";

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Raised by transports for connection failures and timeouts.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

/// cpp-httplib backed transport. `base_url` is scheme://host[:port].
std::shared_ptr<Transport> make_http_transport(const std::string& base_url, std::chrono::milliseconds timeout);

/// Splits an endpoint URL into origin and the request path for `suffix`
/// ("chat/completions" or "completions"), inserting "/v1" unless present.
std::pair<std::string, std::string> resolve_endpoint(const std::string& endpoint_url, const std::string& suffix);

bool is_retryable_status(int status);

class OpenAiClient final : public LanguageModel {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  /// Uses an HTTP transport for config.endpoint_url and the key from PERMURANK_API_KEY.
  explicit OpenAiClient(GatewayConfig config);
  OpenAiClient(GatewayConfig config, std::shared_ptr<Transport> transport, std::string api_key,
               Sleeper sleeper = {});

  LlmResponse complete(const RenderedPrompt& prompt, bool want_logprobs) override;
  bool supports_logprobs() const override { return config_.logprobs_supported; }

  /// JSON request body for the prompt.
  std::string request_body(const RenderedPrompt& prompt, bool want_logprobs) const;
  static LlmResponse parse_response(const std::string& body, const RenderedPrompt& prompt, bool want_logprobs);

 private:
  GatewayConfig config_;
  std::shared_ptr<Transport> transport_;
  std::string api_key_;
  std::string path_prefix_;
  Sleeper sleeper_;
  std::mutex jitter_mutex_;
  SplitMix64 jitter_;

  std::chrono::milliseconds backoff_delay(int attempt);
};

// ---------------------------------------------------------------------------
// In-process models for tests and offline runs

struct FaultRates {
  double duplicate = 0.0;
  double drop = 0.0;
  double reject = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool any() const { return duplicate > 0.0 || drop > 0.0 || reject > 0.0; }
};

inline constexpr std::string_view kRejectionText =
    "None of the provided passages is directly relevant to the query";

/// Deterministic model that ranks by a hidden truth score.
///
/// Permutation prompts get identifiers sorted by descending truth (ties by
/// ascending identifier) as "[i] > [j] > ...", with optional seeded faults.
/// Fault draws are seeded from the prompt bytes, so results do not depend
/// on call order or threading. QG prompts get one token per query word with
/// logprob -exp(-truth); RG prompts answer "Yes" with p = sigmoid(truth)
/// when truth > 0 and "No" with p = 1 - sigmoid(truth) otherwise.
class MockOracle final : public LanguageModel {
 public:
  using Truth = std::function<std::optional<double>(const std::string& query_id, const std::string& docid)>;

  MockOracle(Truth truth, FaultRates faults = {});

  /// Truth keyed by docid alone; unknown docids are an error.
  static std::shared_ptr<MockOracle> from_scores(std::unordered_map<std::string, double> scores,
                                                 FaultRates faults = {});
  /// Truth is the judged grade; unjudged pairs have truth 0.
  static std::shared_ptr<MockOracle> from_judgments(Judgments judgments, FaultRates faults = {});

  LlmResponse complete(const RenderedPrompt& prompt, bool want_logprobs) override;
  bool supports_logprobs() const override { return true; }

  /// The fault-free ordering of identifiers (1-indexed) for a window.
  std::vector<int> truth_order(const RenderedPrompt& prompt) const;

 private:
  Truth truth_;
  FaultRates faults_;

  double truth_of(const std::string& query_id, const std::string& docid) const;
};

/// Formats identifiers as "[a] > [b] > ...".
std::string format_permutation(std::span<const int> order);

/// Wraps a callable as a LanguageModel.
class FunctionModel final : public LanguageModel {
 public:
  using Fn = std::function<LlmResponse(const RenderedPrompt&, bool)>;
  explicit FunctionModel(Fn fn, bool logprobs = true) : fn_(std::move(fn)), logprobs_(logprobs) {}

  LlmResponse complete(const RenderedPrompt& prompt, bool want_logprobs) override;
  bool supports_logprobs() const override { return logprobs_; }

 private:
  Fn fn_;
  bool logprobs_;
};

/// Rough whitespace token count used for offline usage accounting.
std::int64_t approximate_tokens(const RenderedPrompt& prompt);

}  // namespace permurank::gateway
