#include "permurank/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "permurank/error.hpp"

namespace permurank::gateway {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Usage

void UsageLedger::record(const std::string& query_id, std::int64_t prompt_tokens, std::int64_t completion_tokens) {
  std::lock_guard lock(mutex_);
  for (UsageTotals* t : {&totals_, &per_query_[query_id]}) {
    t->prompt_tokens += std::max<std::int64_t>(prompt_tokens, 0);
    t->completion_tokens += std::max<std::int64_t>(completion_tokens, 0);
    t->requests += 1;
  }
}

UsageTotals UsageLedger::totals() const {
  std::lock_guard lock(mutex_);
  return totals_;
}

UsageTotals UsageLedger::for_query(const std::string& query_id) const {
  std::lock_guard lock(mutex_);
  auto it = per_query_.find(query_id);
  return it == per_query_.end() ? UsageTotals{} : it->second;
}

std::vector<std::string> UsageLedger::query_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [qid, t] : per_query_) out.push_back(qid);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<LanguageModel> model, int max_in_flight)
    : model_(std::move(model)), max_in_flight_(max_in_flight) {
  if (!model_) throw UsageError("gateway requires a model");
  if (max_in_flight_ < 1) throw UsageError("max_in_flight must be >= 1");
  admission_ = std::make_unique<std::counting_semaphore<>>(max_in_flight_);
}

void Gateway::set_request_log(std::shared_ptr<std::ostream> out) {
  std::lock_guard lock(log_mutex_);
  request_log_ = std::move(out);
}

LlmResponse Gateway::complete(const RenderedPrompt& prompt, bool want_logprobs) {
  if (want_logprobs && !model_->supports_logprobs()) {
    throw CapabilityError("model does not provide token log-probabilities");
  }
  admission_->acquire();
  LlmResponse response;
  try {
    response = model_->complete(prompt, want_logprobs);
  } catch (...) {
    admission_->release();
    throw;
  }
  admission_->release();
  if (response.token_logprobs) {
    for (const auto& t : *response.token_logprobs) {
      if (!(t.logprob <= 0.0)) throw GatewayError("model returned a positive or NaN log-probability");
    }
  }
  usage_.record(prompt.query_id, response.prompt_tokens, response.completion_tokens);
  std::lock_guard lock(log_mutex_);
  if (request_log_) {
    json rec = {{"query_id", prompt.query_id},
                {"kind", std::string(prompting::template_name(prompt.kind))},
                {"prompt", prompt.canonical()},
                {"response", response.text},
                {"prompt_tokens", response.prompt_tokens},
                {"completion_tokens", response.completion_tokens}};
    *request_log_ << rec.dump() << '\n';
  }
  return response;
}

// ---------------------------------------------------------------------------
// HTTP

void GatewayConfig::validate() const {
  if (!(temperature >= 0.0)) throw UsageError("temperature must be >= 0");
  if (max_retries < 0) throw UsageError("max_retries must be >= 0");
  if (max_in_flight < 1) throw UsageError("max_in_flight must be >= 1");
  if (max_output_tokens < 1) throw UsageError("max_output_tokens must be >= 1");
  if (model_name.empty()) throw UsageError("model name is empty");
}

namespace {

class HttplibTransport final : public Transport {
 public:
  HttplibTransport(const std::string& base_url, std::chrono::milliseconds timeout)
      : base_url_(base_url), timeout_(timeout) {}

  HttpResponse post(const std::string& path, const std::string& body,
                    const std::vector<std::pair<std::string, std::string>>& headers) override {
    httplib::Client client(base_url_);
    if (!client.is_valid()) throw TransportError("invalid endpoint " + base_url_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) throw TransportError("POST " + base_url_ + path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(const std::string& base_url, std::chrono::milliseconds timeout) {
  return std::make_shared<HttplibTransport>(base_url, timeout);
}

std::pair<std::string, std::string> resolve_endpoint(const std::string& endpoint_url, const std::string& suffix) {
  std::string url = endpoint_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme = url.find("://");
  const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  if (prefix.size() < 3 || prefix.compare(prefix.size() - 3, 3, "/v1") != 0) prefix += "/v1";
  return {origin, prefix + "/" + suffix};
}

bool is_retryable_status(int status) { return status == 429 || status >= 500; }

OpenAiClient::OpenAiClient(GatewayConfig config)
    : OpenAiClient(config, make_http_transport(resolve_endpoint(config.endpoint_url, "").first,
                                               config.request_timeout),
                   [] {
                     const char* key = std::getenv(kApiKeyEnv);
                     return std::string(key ? key : "");
                   }()) {}

OpenAiClient::OpenAiClient(GatewayConfig config, std::shared_ptr<Transport> transport, std::string api_key,
                           Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      api_key_(std::move(api_key)),
      sleeper_(std::move(sleeper)),
      jitter_(config_.jitter_seed) {
  config_.validate();
  if (!transport_) throw UsageError("OpenAiClient requires a transport");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string OpenAiClient::request_body(const RenderedPrompt& prompt, bool want_logprobs) const {
  json body = {{"model", config_.model_name}, {"temperature", config_.temperature}};
  if (!prompt.messages.empty()) {
    json messages = json::array();
    for (const auto& m : prompt.messages) {
      messages.push_back({{"role", std::string(prompting::to_string(m.role))}, {"content", m.content}});
    }
    body["messages"] = std::move(messages);
    body["max_tokens"] = config_.max_output_tokens;
    if (want_logprobs) body["logprobs"] = true;
  } else if (prompt.echo_suffix) {
    // Score the suffix: echo the full prompt back with logprobs, generate nothing.
    body["prompt"] = prompt.text + *prompt.echo_suffix;
    body["max_tokens"] = 0;
    body["echo"] = true;
    if (want_logprobs) body["logprobs"] = 1;
  } else {
    body["prompt"] = prompt.text;
    body["max_tokens"] = config_.max_output_tokens;
    if (want_logprobs) body["logprobs"] = 1;
  }
  return body.dump();
}

LlmResponse OpenAiClient::parse_response(const std::string& body, const RenderedPrompt& prompt,
                                         bool want_logprobs) {
  LlmResponse out;
  try {
    const json root = json::parse(body);
    const json& choice = root.at("choices").at(0);
    if (choice.contains("message")) {
      const json& content = choice.at("message").at("content");
      out.text = content.is_string() ? content.get<std::string>() : "";
      if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object() && lp->contains("content")) {
        std::vector<TokenLogprob> tokens;
        for (const auto& t : lp->at("content")) {
          tokens.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
        }
        out.token_logprobs = std::move(tokens);
      }
    } else {
      out.text = choice.value("text", "");
      if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
        const auto& toks = lp->at("tokens");
        const auto& lps = lp->at("token_logprobs");
        const json* offsets = lp->contains("text_offset") ? &lp->at("text_offset") : nullptr;
        std::vector<TokenLogprob> tokens;
        for (std::size_t i = 0; i < toks.size(); ++i) {
          if (prompt.echo_suffix) {
            if (offsets == nullptr) throw GatewayError("echo response lacks text_offset");
            if (offsets->at(i).get<std::size_t>() < prompt.text.size()) continue;
          }
          if (lps.at(i).is_null()) continue;
          tokens.push_back({toks.at(i).get<std::string>(), lps.at(i).get<double>()});
        }
        out.token_logprobs = std::move(tokens);
      }
      if (prompt.echo_suffix) {
        const std::string full = prompt.text + *prompt.echo_suffix;
        if (out.text.rfind(full, 0) == 0) out.text.erase(0, full.size());
      }
    }
    if (auto usage = root.find("usage"); usage != root.end() && usage->is_object()) {
      out.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
      out.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
    }
  } catch (const json::exception& e) {
    throw GatewayError(std::string("malformed completion response: ") + e.what());
  }
  if (want_logprobs && !out.token_logprobs) {
    throw CapabilityError("endpoint returned no log-probabilities");
  }
  return out;
}

std::chrono::milliseconds OpenAiClient::backoff_delay(int attempt) {
  double jitter;
  {
    std::lock_guard lock(jitter_mutex_);
    jitter = 0.5 + jitter_.uniform();
  }
  const double ms = static_cast<double>(config_.backoff_base.count()) * std::ldexp(1.0, attempt) * jitter;
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

LlmResponse OpenAiClient::complete(const RenderedPrompt& prompt, bool want_logprobs) {
  if (want_logprobs && !config_.logprobs_supported) {
    throw CapabilityError("endpoint is configured without log-probability support");
  }
  const std::string suffix = prompt.messages.empty() ? "completions" : "chat/completions";
  const std::string path = resolve_endpoint(config_.endpoint_url, suffix).second;
  const std::string body = request_body(prompt, want_logprobs);
  std::vector<std::pair<std::string, std::string>> headers;
  if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) sleeper_(backoff_delay(attempt - 1));
    HttpResponse res;
    try {
      res = transport_->post(path, body, headers);
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }
    if (res.status >= 200 && res.status < 300) return parse_response(res.body, prompt, want_logprobs);
    last_error = "HTTP " + std::to_string(res.status) + ": " + res.body;
    if (!is_retryable_status(res.status)) throw GatewayError(last_error);
  }
  throw GatewayError("request failed after " + std::to_string(config_.max_retries + 1) +
                     " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// In-process models

void FaultRates::validate() const {
  for (double r : {duplicate, drop, reject}) {
    if (!(r >= 0.0 && r <= 1.0)) throw UsageError("fault rates must lie in [0, 1]");
  }
}

std::string format_permutation(std::span<const int> order) {
  std::string out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0) out += " > ";
    out += "[" + std::to_string(order[i]) + "]";
  }
  return out;
}

MockOracle::MockOracle(Truth truth, FaultRates faults) : truth_(std::move(truth)), faults_(faults) {
  faults_.validate();
}

std::shared_ptr<MockOracle> MockOracle::from_scores(std::unordered_map<std::string, double> scores,
                                                    FaultRates faults) {
  auto shared = std::make_shared<const std::unordered_map<std::string, double>>(std::move(scores));
  return std::make_shared<MockOracle>(
      [shared](const std::string&, const std::string& docid) -> std::optional<double> {
        auto it = shared->find(docid);
        if (it == shared->end()) return std::nullopt;
        return it->second;
      },
      faults);
}

std::shared_ptr<MockOracle> MockOracle::from_judgments(Judgments judgments, FaultRates faults) {
  auto shared = std::make_shared<const Judgments>(std::move(judgments));
  return std::make_shared<MockOracle>(
      [shared](const std::string& qid, const std::string& docid) -> std::optional<double> {
        return static_cast<double>(shared->grade(qid, docid));
      },
      faults);
}

double MockOracle::truth_of(const std::string& query_id, const std::string& docid) const {
  auto t = truth_(query_id, docid);
  if (!t) throw DataError("mock oracle has no truth score for '" + docid + "'");
  return *t;
}

std::vector<int> MockOracle::truth_order(const RenderedPrompt& prompt) const {
  const auto& ids = prompt.identifier_map;
  std::vector<double> truth(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) truth[i] = truth_of(prompt.query_id, ids[i]);
  std::vector<int> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i) + 1;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return truth[a - 1] > truth[b - 1]; });
  return order;
}

LlmResponse MockOracle::complete(const RenderedPrompt& prompt, bool want_logprobs) {
  LlmResponse out;
  out.prompt_tokens = approximate_tokens(prompt);
  if (prompting::is_permutation(prompt.kind)) {
    const auto order = truth_order(prompt);
    if (!faults_.any()) {
      out.text = format_permutation(order);
    } else {
      SplitMix64 rng(mix_seed(faults_.seed, prompt.canonical()));
      if (rng.uniform() < faults_.reject) {
        out.text = std::string(kRejectionText);
      } else {
        std::vector<int> emitted;
        std::vector<int> repeats;
        for (int id : order) {
          const bool drop = rng.uniform() < faults_.drop;
          const bool dup = rng.uniform() < faults_.duplicate;
          if (drop) continue;
          emitted.push_back(id);
          if (dup) repeats.push_back(id);
        }
        emitted.insert(emitted.end(), repeats.begin(), repeats.end());
        out.text = format_permutation(emitted);
      }
    }
  } else {
    if (!prompt.docid) throw UsageError("mock oracle: single-passage prompt without a docid");
    const double t = truth_of(prompt.query_id, *prompt.docid);
    if (prompt.kind == prompting::InstructionKind::QueryGen) {
      std::vector<TokenLogprob> tokens;
      std::istringstream words(prompt.echo_suffix.value_or(""));
      std::string w;
      bool first = true;
      while (words >> w) {
        tokens.push_back({first ? w : " " + w, -std::exp(-t)});
        first = false;
      }
      out.token_logprobs = std::move(tokens);
    } else {
      const double p_yes = 1.0 / (1.0 + std::exp(-t));
      if (t > 0.0) {
        out.text = "Yes";
        out.token_logprobs = std::vector<TokenLogprob>{{"Yes", std::log(p_yes)}};
      } else {
        out.text = "No";
        out.token_logprobs = std::vector<TokenLogprob>{{"No", std::log1p(-p_yes)}};
      }
    }
    if (!want_logprobs) out.token_logprobs.reset();
  }
  std::istringstream words(out.text);
  std::string w;
  while (words >> w) ++out.completion_tokens;
  return out;
}

LlmResponse FunctionModel::complete(const RenderedPrompt& prompt, bool want_logprobs) {
  if (want_logprobs && !logprobs_) throw CapabilityError("model does not provide token log-probabilities");
  return fn_(prompt, want_logprobs);
}

std::int64_t approximate_tokens(const RenderedPrompt& prompt) {
  std::int64_t n = 0;
  auto count = [&](const std::string& s) {
    std::istringstream in(s);
    std::string w;
    while (in >> w) ++n;
  };
  for (const auto& m : prompt.messages) count(m.content);
  count(prompt.text);
  if (prompt.echo_suffix) count(*prompt.echo_suffix);
  return n;
}

}  // namespace permurank::gateway
