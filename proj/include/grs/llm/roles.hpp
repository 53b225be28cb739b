#pragma once

// The three model roles: relevance judge, reasoning generator and
// per-perspective decision model, plus parsing of their replies.

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "grs/catalog.hpp"
#include "grs/error.hpp"
#include "grs/llm/endpoint.hpp"
#include "grs/llm/prompt.hpp"
#include "grs/text.hpp"

namespace grs {

enum class Label { kPositive, kNegative };

inline std::string_view to_symbol(Label l) { return l == Label::kPositive ? "+" : "-"; }
inline std::string_view to_word(Label l) { return l == Label::kPositive ? "relevant" : "irrelevant"; }

}  // namespace grs

namespace grs::llm {

enum class JudgeVerdict { kRelevant, kIrrelevant, kUnparseable };

inline std::string_view to_string(JudgeVerdict v) {
  switch (v) {
    case JudgeVerdict::kRelevant: return "relevant";
    case JudgeVerdict::kIrrelevant: return "irrelevant";
    case JudgeVerdict::kUnparseable: return "unparseable";
  }
  return "";
}

/// First canonical verdict token in the reply. ASCII tokens are matched as
/// whole words, case-insensitively; at any position "不相关" is tested
/// before "相关".
inline JudgeVerdict parse_verdict(std::string_view reply) {
  static constexpr std::string_view kZhIrrelevant = "不相关";
  static constexpr std::string_view kZhRelevant = "相关";
  const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };

  std::size_t i = 0;
  while (i < reply.size()) {
    if (reply.substr(i, kZhIrrelevant.size()) == kZhIrrelevant) return JudgeVerdict::kIrrelevant;
    if (reply.substr(i, kZhRelevant.size()) == kZhRelevant) return JudgeVerdict::kRelevant;
    if (is_word(reply[i])) {
      std::size_t j = i;
      std::string word;
      while (j < reply.size() && is_word(reply[j])) {
        word.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(reply[j]))));
        ++j;
      }
      if (word == "IRRELEVANT") return JudgeVerdict::kIrrelevant;
      if (word == "RELEVANT") return JudgeVerdict::kRelevant;
      i = j;
      continue;
    }
    ++i;
  }
  return JudgeVerdict::kUnparseable;
}

/// Asks one judge whether `doc` is relevant to `query`. Gateway failures
/// yield kUnparseable; the failure text is stored in `failure` when given.
inline JudgeVerdict judge_relevance(ChatClient& client, const ModelEndpoint& endpoint,
                                    const PromptTemplate& tmpl, const std::string& query,
                                    const Document& doc, const std::string& task_instruction,
                                    std::string* failure = nullptr) {
  const std::string prompt =
      render_prompt(tmpl, {{"q", query}, {"d_i", doc.title}, {"task_instruction", task_instruction}});
  try {
    return parse_verdict(client.complete(endpoint, prompt));
  } catch (const Error& e) {
    if (!e.is_gateway_failure()) throw;
    if (failure) *failure = e.what();
    return JudgeVerdict::kUnparseable;
  }
}

inline std::string render_reasoning_prompt(const PromptTemplate& tmpl, const std::string& query,
                                           const std::string& title, Label label) {
  return render_prompt(tmpl, {{"q", query}, {"d_i", title}, {"label", std::string(to_word(label))}});
}

/// Rationale for a labeled pair. Throws EmptyResponse on a blank reply.
inline std::string generate_reasoning(ChatClient& client, const ModelEndpoint& endpoint,
                                      const PromptTemplate& tmpl, const std::string& query,
                                      const std::string& title, Label label) {
  std::string reply = text::trim_unicode(
      client.complete(endpoint, render_reasoning_prompt(tmpl, query, title, label)));
  if (reply.empty()) {
    throw Error(ErrorCode::kEmptyResponse, endpoint.name + ": empty reasoning", endpoint.name);
  }
  return reply;
}

struct DecisionCandidate {
  std::string title;
  std::string value;  // the perspective's attribute value
};

struct DecisionOutcome {
  std::vector<std::string> retained;  // input titles, in input order
  std::size_t hallucinated = 0;       // reply items naming no input title
  bool unparseable = false;           // reply had items but none matched
};

/// "{<title: A, duration: short-term>, <title: B, duration: annual>}"
inline std::string serialize_candidates(const std::vector<DecisionCandidate>& candidates,
                                        const std::string& perspective) {
  std::string out = "{";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i > 0) out += ", ";
    out += "<title: " + candidates[i].title + ", " + perspective + ": " + candidates[i].value + ">";
  }
  out += "}";
  return out;
}

/// Strips list decoration a model may wrap around a title: bullets,
/// numbering, angle brackets, quotes, a "title:" prefix and an echoed
/// ", <perspective>: value" suffix.
inline std::string clean_title_item(std::string item, const std::string& perspective) {
  std::string s = text::trim_unicode(item);
  const auto starts = [&](std::string_view p) { return std::string_view(s).substr(0, p.size()) == p; };
  for (std::string_view bullet : {"- ", "* ", "• ", "· "}) {
    if (starts(bullet)) {
      s = text::trim_unicode(s.substr(bullet.size()));
      break;
    }
  }
  std::size_t digits = 0;
  while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
  if (digits > 0 && digits + 1 < s.size() && (s[digits] == '.' || s[digits] == ')') && s[digits + 1] == ' ') {
    s = text::trim_unicode(s.substr(digits + 2));
  }
  if (s.size() >= 2 && s.front() == '<' && s.back() == '>') s = text::trim_unicode(s.substr(1, s.size() - 2));
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    s = text::trim_unicode(s.substr(1, s.size() - 2));
  }
  if (starts("title:")) s = text::trim_unicode(s.substr(6));
  if (!perspective.empty()) {
    const std::string suffix = ", " + perspective + ":";
    if (auto pos = s.find(suffix); pos != std::string::npos) s = text::trim_unicode(s.substr(0, pos));
  }
  return s;
}

/// Titles the decision model keeps from `reply`, restricted to the inputs.
inline DecisionOutcome parse_decision(std::string_view reply,
                                      const std::vector<DecisionCandidate>& candidates,
                                      const std::string& perspective) {
  std::vector<std::string> input_ids;
  input_ids.reserve(candidates.size());
  for (const auto& c : candidates) input_ids.push_back(text::normalize_docid(c.title));

  std::vector<bool> keep(candidates.size(), false);
  DecisionOutcome out;
  const auto items = text::split_items(reply);
  std::size_t matched = 0;
  for (const auto& raw : items) {
    const std::string id = text::normalize_docid(clean_title_item(raw, perspective));
    auto it = std::find(input_ids.begin(), input_ids.end(), id);
    if (id.empty() || it == input_ids.end()) {
      ++out.hallucinated;
      continue;
    }
    ++matched;
    keep[static_cast<std::size_t>(it - input_ids.begin())] = true;
  }
  out.unparseable = !items.empty() && matched == 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (keep[i]) out.retained.push_back(candidates[i].title);
  }
  return out;
}

/// One decision call for one perspective over a batch of candidates.
/// Gateway errors propagate.
inline DecisionOutcome decide(ChatClient& client, const ModelEndpoint& endpoint,
                              const PromptTemplate& tmpl, const std::string& query,
                              const std::vector<DecisionCandidate>& candidates,
                              const std::string& perspective) {
  if (candidates.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "decide: candidate list is empty");
  }
  const std::string prompt =
      render_prompt(tmpl, {{"q", query},
                           {"candidates", serialize_candidates(candidates, perspective)},
                           {"persp_name", perspective}});
  std::string reply;
  try {
    reply = client.complete(endpoint, prompt);
  } catch (const Error& e) {
    // A blank reply is a well-formed "nothing relevant".
    if (e.code() != ErrorCode::kEmptyResponse) throw;
  }
  return parse_decision(reply, candidates, perspective);
}

}  // namespace grs::llm
