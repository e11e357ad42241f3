#include "permurank/prompting.hpp"

#include <utility>

#include "permurank/error.hpp"

namespace permurank::prompting {

namespace {

// Instruction texts. Paragraph breaks are "\n\n"; the bytes here are the
// contract with the model and are pinned by tests.

constexpr std::string_view kQueryGen =
    "Please write a question based on this passage.\n\n"
    "Passage: {{passage}}\n\n"
    "Question: {{query}}";

constexpr std::string_view kRelevanceHeader =
    "Given a passage and a query, predict whether the passage includes an answer to the query by producing "
    "either `Yes` or `No`.\n\n";

constexpr std::string_view kRelevanceDemonstrations =
    "Passage: Its 25 drops per ml, you guys are all wrong. If it is water, the standard was changed 15 - 20 "
    "years ago to make 20 drops = 1mL. The viscosity of most things is temperature dependent, so this would "
    "be at room temperature. Hope this helps.\n\n"
    "Query: how many eye drops per ml\n\n"
    "Does the passage answer the query?\n\n"
    "Answer: Yes\n\n"
    "Passage: RE: How many eyedrops are there in a 10 ml bottle of Cosopt? My Kaiser pharmacy insists that 2 "
    "bottles should last me 100 days but I run out way before that time when I am using 4 drops per day.In "
    "the past other pharmacies have given me 3 10-ml bottles for 100 days.E: How many eyedrops are there in a "
    "10 ml bottle of Cosopt? My Kaiser pharmacy insists that 2 bottles should last me 100 days but I run out "
    "way before that time when I am using 4 drops per day.\n\n"
    "Query: how many eye drops per ml\n\n"
    "Does the passage answer the query?\n\n"
    "Answer: No\n\n"
    "Passage: : You can transfer money to your checking account from other Wells Fargo. accounts through "
    "Wells Fargo Mobile Banking with the mobile app, online, at any. Wells Fargo ATM, or at a Wells Fargo "
    "branch. 1 Money in \xE2\x80\x94 deposits.\n\n"
    "Query: can you open a wells fargo account online\n\n"
    "Does the passage answer the query?\n\n"
    "Answer: No\n\n"
    "Passage: You can open a Wells Fargo banking account from your home or even online. It is really easy to "
    "do, provided you have all of the appropriate documentation. Wells Fargo has so many bank account options "
    "that you will be sure to find one that works for you. They offer free checking accounts with free online "
    "banking.\n\n"
    "Query: can you open a wells fargo account online\n\n"
    "Does the passage answer the query?\n\n"
    "Answer: Yes\n\n";

// The few-shot target keeps the original "Query:" with no space.
constexpr std::string_view kRelevanceFewShotTarget =
    "Passage: {{passage}}\n\n"
    "Query:{{query}}\n\n"
    "Does the passage answer the query?\n\n"
    "Answer:";

constexpr std::string_view kRelevanceZeroShotTarget =
    "Passage: {{passage}}\n\n"
    "Query: {{query}}\n\n"
    "Does the passage answer the query?\n\n"
    "Answer:";

constexpr std::string_view kPermTextHead =
    "This is RankGPT, an intelligent assistant that can rank passages based on their relevancy to the "
    "query.\n\n"
    "The following are {{num}} passages, each indicated by number identifier []. I can rank them based on "
    "their relevance to query: {{query}}\n\n";
constexpr std::string_view kPermTextPassage = "[{{id}}] {{passage}}\n\n";
constexpr std::string_view kPermTextTail =
    "The search query is: {{query}}\n\n"
    "I will rank the {{num}} passages above based on their relevance to the search query. The passages will "
    "be listed in descending order using identifiers, and the most relevant passages should be listed first, "
    "and the output format should be [] > [] > etc, e.g., [1] > [2] > etc.\n\n"
    "The ranking results of the {{num}} passages (only identifiers) is:";

constexpr std::string_view kPermChatSystem =
    "You are RankGPT, an intelligent assistant that can rank passages based on their relevancy to the query.";
constexpr std::string_view kPermChatPreamble =
    "I will provide you with {{num}} passages, each indicated by number identifier []. Rank them based on "
    "their relevance to query: {{query}}.";
constexpr std::string_view kPermChatReady = "Okay, please provide the passages.";
constexpr std::string_view kPermChatPassage = "[{{id}}] {{passage}}";
constexpr std::string_view kPermChatAck = "Received passage [{{id}}]";
constexpr std::string_view kPermChatFinal =
    "Search Query: {{query}}.\n\n"
    "Rank the {{num}} passages above based on their relevance to the search query. The passages should be "
    "listed in descending order using identifiers, and the most relevant passages should be listed first, and "
    "the output format should be [] > [], e.g., [1] > [2]. Only response the ranking results, do not say any "
    "word or explain.";

using Bindings = std::vector<std::pair<std::string_view, std::string_view>>;

// Single pass: substituted values are never re-scanned for placeholders.
std::string substitute(std::string_view tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tmpl.size() + 64);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const auto open = tmpl.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    out.append(tmpl.substr(i, open - i));
    const auto name = tmpl.substr(open + 2, close - open - 2);
    bool bound = false;
    for (const auto& [key, value] : bindings) {
      if (key == name) {
        out.append(value);
        bound = true;
        break;
      }
    }
    if (!bound) throw Error("unbound template placeholder {{" + std::string(name) + "}}");
    i = close + 2;
  }
  return out;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

}  // namespace

std::string_view template_name(InstructionKind kind) {
  switch (kind) {
    case InstructionKind::QueryGen: return "qg";
    case InstructionKind::RelevanceGenFewShot: return "rg-few";
    case InstructionKind::RelevanceGenZeroShot: return "rg-zero";
    case InstructionKind::PermutationText: return "pg-text";
    case InstructionKind::PermutationChat: return "pg-chat";
  }
  return "?";
}

InstructionKind parse_instruction_kind(std::string_view name) {
  for (auto kind : {InstructionKind::QueryGen, InstructionKind::RelevanceGenFewShot,
                    InstructionKind::RelevanceGenZeroShot, InstructionKind::PermutationText,
                    InstructionKind::PermutationChat}) {
    if (template_name(kind) == name) return kind;
  }
  throw UsageError("unknown instruction template '" + std::string(name) + "'");
}

bool is_permutation(InstructionKind kind) {
  return kind == InstructionKind::PermutationText || kind == InstructionKind::PermutationChat;
}

bool is_chat(InstructionKind kind) { return kind == InstructionKind::PermutationChat; }

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "?";
}

std::string RenderedPrompt::canonical() const {
  std::string out;
  out.append(template_name(kind));
  out.push_back('\n');
  if (!messages.empty()) {
    for (const auto& m : messages) {
      out.append("<|").append(to_string(m.role)).append("|>\n").append(m.content).push_back('\n');
    }
  } else {
    out.append(text);
    if (echo_suffix) out.append(*echo_suffix);
  }
  return out;
}

std::string truncate_passage(std::string_view text, std::size_t max_words) {
  if (max_words == 0) throw UsageError("max_words must be >= 1");
  std::string out;
  std::size_t words = 0;
  std::size_t i = 0;
  while (i < text.size() && words < max_words) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (words > 0) out.push_back(' ');
    out.append(text.substr(i, j - i));
    ++words;
    i = j;
  }
  return out;
}

std::string passage_content(const Passage& passage, std::size_t max_words) {
  if (passage.title && !passage.title->empty()) {
    return truncate_passage(*passage.title + " " + passage.text, max_words);
  }
  return truncate_passage(passage.text, max_words);
}

RenderedPrompt render_permutation(InstructionKind kind, const Query& query, std::span<const Candidate> window,
                                  const RenderOptions& options) {
  if (!is_permutation(kind)) throw UsageError("render_permutation requires a permutation template");
  if (window.empty()) throw UsageError("cannot render a permutation prompt over zero passages");
  if (window.size() > options.window_limit) {
    throw UsageError("window of " + std::to_string(window.size()) + " passages exceeds the limit of " +
                     std::to_string(options.window_limit));
  }
  RenderedPrompt out;
  out.kind = kind;
  out.query_id = query.id;
  const std::string num = std::to_string(window.size());
  const Bindings head{{"num", num}, {"query", query.text}};
  out.identifier_map.reserve(window.size());
  for (const auto& c : window) out.identifier_map.push_back(c.passage.docid);

  if (kind == InstructionKind::PermutationText) {
    out.text = substitute(kPermTextHead, head);
    for (std::size_t i = 0; i < window.size(); ++i) {
      const std::string id = std::to_string(i + 1);
      const std::string content = passage_content(window[i].passage, options.max_words);
      out.text += substitute(kPermTextPassage, {{"id", id}, {"passage", content}});
    }
    out.text += substitute(kPermTextTail, head);
    return out;
  }

  out.messages.reserve(3 + 2 * window.size() + 1);
  out.messages.push_back({Role::System, std::string(kPermChatSystem)});
  out.messages.push_back({Role::User, substitute(kPermChatPreamble, head)});
  out.messages.push_back({Role::Assistant, std::string(kPermChatReady)});
  for (std::size_t i = 0; i < window.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    const std::string content = passage_content(window[i].passage, options.max_words);
    out.messages.push_back({Role::User, substitute(kPermChatPassage, {{"id", id}, {"passage", content}})});
    out.messages.push_back({Role::Assistant, substitute(kPermChatAck, {{"id", id}})});
  }
  out.messages.push_back({Role::User, substitute(kPermChatFinal, head)});
  return out;
}

RenderedPrompt render_single(InstructionKind kind, const Query& query, const Passage& passage,
                             const RenderOptions& options) {
  if (is_permutation(kind)) throw UsageError("render_single does not accept permutation templates");
  RenderedPrompt out;
  out.kind = kind;
  out.query_id = query.id;
  out.docid = passage.docid;
  const std::string content = passage_content(passage, options.max_words);
  switch (kind) {
    case InstructionKind::QueryGen: {
      // Everything before {{query}} is the conditioning prefix; the query is the scored continuation.
      const auto cut = kQueryGen.find("{{query}}");
      out.text = substitute(kQueryGen.substr(0, cut), {{"passage", content}});
      out.echo_suffix = query.text;
      break;
    }
    case InstructionKind::RelevanceGenFewShot:
      out.text = std::string(kRelevanceHeader) + std::string(kRelevanceDemonstrations) +
                 substitute(kRelevanceFewShotTarget, {{"passage", content}, {"query", query.text}});
      break;
    case InstructionKind::RelevanceGenZeroShot:
      out.text = std::string(kRelevanceHeader) +
                 substitute(kRelevanceZeroShotTarget, {{"passage", content}, {"query", query.text}});
      break;
    default:
      break;
  }
  return out;
}

std::string_view template_source(InstructionKind kind) {
  static const std::string few = std::string(kRelevanceHeader) + std::string(kRelevanceDemonstrations) +
                                 std::string(kRelevanceFewShotTarget);
  static const std::string zero = std::string(kRelevanceHeader) + std::string(kRelevanceZeroShotTarget);
  static const std::string text =
      std::string(kPermTextHead) + "[1] {{passage_1}}\n\n[2] {{passage_2}}\n\n(more passages) ...\n\n" +
      std::string(kPermTextTail);
  static const std::string chat = "system:\n" + std::string(kPermChatSystem) + "\n\nuser:\n" +
                                  std::string(kPermChatPreamble) + "\n\nassistant:\n" +
                                  std::string(kPermChatReady) +
                                  "\n\nuser:\n[1] {{passage_1}}\n\nassistant:\nReceived passage [1]\n\n"
                                  "user:\n[2] {{passage_2}}\n\nassistant:\nReceived passage [2]\n\n"
                                  "(more passages) ...\n\nuser:\n" +
                                  std::string(kPermChatFinal);
  switch (kind) {
    case InstructionKind::QueryGen: return kQueryGen;
    case InstructionKind::RelevanceGenFewShot: return few;
    case InstructionKind::RelevanceGenZeroShot: return zero;
    case InstructionKind::PermutationText: return text;
    case InstructionKind::PermutationChat: return chat;
  }
  return {};
}

}  // namespace permurank::prompting
