#pragma once

// Prompt templates. Placeholders are written {{name}} where name matches
// [A-Za-z_][A-Za-z0-9_]*. Rendering is a single left-to-right pass, so bound
// values are inserted verbatim and never re-expanded.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "grs/error.hpp"

namespace grs::llm {

enum class PromptId { kRelevanceJudgement, kReasoningGeneration, kDecision, kGeneration };

inline std::string_view to_string(PromptId id) {
  switch (id) {
    case PromptId::kRelevanceJudgement: return "relevance_judgement";
    case PromptId::kReasoningGeneration: return "reasoning_generation";
    case PromptId::kDecision: return "decision";
    case PromptId::kGeneration: return "generation";
  }
  return "";
}

struct PromptTemplate {
  PromptId id = PromptId::kRelevanceJudgement;
  std::string text;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

namespace detail {

inline bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

// Returns the placeholder name if `s` begins with "{{name}}", and its length.
inline std::optional<std::pair<std::string_view, std::size_t>> match_placeholder(std::string_view s) {
  if (s.size() < 5 || s[0] != '{' || s[1] != '{' || !is_ident_start(s[2])) return std::nullopt;
  std::size_t i = 3;
  while (i < s.size() && is_ident_char(s[i])) ++i;
  if (i + 1 >= s.size() || s[i] != '}' || s[i + 1] != '}') return std::nullopt;
  return std::pair{s.substr(2, i - 2), i + 2};
}

}  // namespace detail

/// Placeholder names in order of first appearance.
inline std::vector<std::string> placeholders(std::string_view text) {
  std::vector<std::string> names;
  std::set<std::string, std::less<>> seen;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (auto m = detail::match_placeholder(text.substr(i))) {
      if (seen.insert(std::string(m->first)).second) names.emplace_back(m->first);
      i += m->second - 1;
    }
  }
  return names;
}

inline std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tmpl.text.size());
  std::string_view text = tmpl.text;
  std::size_t i = 0;
  while (i < text.size()) {
    if (auto m = detail::match_placeholder(text.substr(i))) {
      auto it = bindings.find(m->first);
      if (it == bindings.end()) {
        throw Error(ErrorCode::kMissingPlaceholder,
                    "no binding for placeholder '" + std::string(m->first) + "'", std::string(m->first));
      }
      out += it->second;
      i += m->second;
    } else {
      out.push_back(text[i]);
      ++i;
    }
  }
  return out;
}

// Shipped defaults. The judgement prompt appends this toolkit's answer
// convention (one canonical token) after the task instruction slot.

inline constexpr std::string_view kRelevanceJudgementText =
    "In information retrieval scenario, the search query: <{{q}}>, please identify if the "
    "retrieved document <{{d_i}}> is relevant to the query.\n"
    "\n"
    "{{task_instruction}}\n"
    "\n"
    "Answer with a single word first: RELEVANT or IRRELEVANT.";

inline constexpr std::string_view kReasoningGenerationText =
    "In search scenario, it is known that the document <{{d_i}}> is {{label}} to the search "
    "query <{{q}}>, please explain the reason.";

inline constexpr std::string_view kDecisionText =
    "Given the search query: <{{q}}>, the retrieved documents: {{candidates}}, please output the "
    "titles of the relevant documents that satisfy the query's requirements from the perspective "
    "of <{{persp_name}}>. Output one title per line.";

// The serving prompt of a fine-tuned generator is deployment specific.
inline constexpr std::string_view kGenerationText =
    "Search query: <{{q}}>. Generate the titles of up to {{k}} relevant documents, "
    "separated by \"; \".";

inline constexpr std::string_view kDefaultTaskInstruction =
    "A document is relevant only if it matches the product category, company and other "
    "constraints expressed by the query.";

inline PromptTemplate default_template(PromptId id) {
  switch (id) {
    case PromptId::kRelevanceJudgement: return {id, std::string(kRelevanceJudgementText)};
    case PromptId::kReasoningGeneration: return {id, std::string(kReasoningGenerationText)};
    case PromptId::kDecision: return {id, std::string(kDecisionText)};
    case PromptId::kGeneration: return {id, std::string(kGenerationText)};
  }
  return {id, {}};
}

inline PromptTemplate load_template(PromptId id, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, "file not found: " + path, path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return {id, buf.str()};
}

/// The three role prompts used by a pipeline.
struct PromptSet {
  PromptTemplate judgement = default_template(PromptId::kRelevanceJudgement);
  PromptTemplate reasoning = default_template(PromptId::kReasoningGeneration);
  PromptTemplate decision = default_template(PromptId::kDecision);
};

}  // namespace grs::llm
