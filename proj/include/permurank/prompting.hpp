#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "permurank/core.hpp"

namespace permurank::prompting {

enum class InstructionKind { QueryGen, RelevanceGenFewShot, RelevanceGenZeroShot, PermutationText, PermutationChat };

/// CLI names: qg, rg-few, rg-zero, pg-text, pg-chat.
std::string_view template_name(InstructionKind kind);
InstructionKind parse_instruction_kind(std::string_view name);
bool is_permutation(InstructionKind kind);
bool is_chat(InstructionKind kind);

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);

struct PromptMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const PromptMessage&) const = default;
};

struct RenderedPrompt {
  InstructionKind kind = InstructionKind::PermutationChat;
  std::string query_id;
  std::vector<PromptMessage> messages;  // chat kinds
  std::string text;                     // completion kinds
  /// identifier_map[i - 1] is the docid shown as [i]; permutation kinds only.
  std::vector<std::string> identifier_map;
  /// Docid of the single passage for QG/RG prompts.
  std::optional<std::string> docid;
  /// Continuation whose token log-probabilities are scored (QG only).
  std::optional<std::string> echo_suffix;

  /// Byte-stable serialization of the prompt content, used for hashing and traces.
  std::string canonical() const;
};

inline constexpr std::size_t kDefaultMaxWords = 120;
inline constexpr std::size_t kDefaultWindow = 20;

/// First `max_words` whitespace-delimited words joined by single spaces.
std::string truncate_passage(std::string_view text, std::size_t max_words);

/// Passage text as shown to the model: title (if any) then body, truncated.
std::string passage_content(const Passage& passage, std::size_t max_words);

struct RenderOptions {
  std::size_t max_words = kDefaultMaxWords;
  std::size_t window_limit = kDefaultWindow;  // cap on passages per permutation prompt
};

/// Renders a permutation prompt over `window` (1 <= size <= window_limit).
RenderedPrompt render_permutation(InstructionKind kind, const Query& query, std::span<const Candidate> window,
                                  const RenderOptions& options = {});

/// Renders a QG or RG prompt for one passage.
RenderedPrompt render_single(InstructionKind kind, const Query& query, const Passage& passage,
                             const RenderOptions& options = {});

/// Raw template text with {{placeholders}}, as embedded in the binary.
std::string_view template_source(InstructionKind kind);

}  // namespace permurank::prompting
