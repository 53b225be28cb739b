#pragma once

// OpenAI-compatible chat-completions wire format.

#include <string>

#include <json.hpp>

#include "grs/error.hpp"
#include "grs/llm/endpoint.hpp"

namespace grs::llm::wire {

inline constexpr const char* kCompletionsPath = "/v1/chat/completions";

inline std::string request_body(const ModelEndpoint& endpoint, const std::string& prompt) {
  nlohmann::json body = {
      {"model", endpoint.model_id},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", endpoint.temperature},
      {"max_tokens", endpoint.max_output_tokens},
  };
  return body.dump();
}

/// Content of the last message in a request body.
inline std::string last_message_content(const std::string& body) {
  try {
    const auto req = nlohmann::json::parse(body);
    const auto& messages = req.at("messages");
    if (!messages.is_array() || messages.empty()) {
      throw Error(ErrorCode::kProtocol, "request has no messages");
    }
    return messages.back().at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("malformed request: ") + e.what());
  }
}

inline std::string response_body(const std::string& model, const std::string& content) {
  nlohmann::json body = {
      {"object", "chat.completion"},
      {"model", model},
      {"choices", nlohmann::json::array({{{"index", 0},
                                          {"message", {{"role", "assistant"}, {"content", content}}},
                                          {"finish_reason", "stop"}}})},
  };
  return body.dump();
}

/// Reads choices[0].message.content.
inline std::string parse_response(const std::string& body) {
  try {
    const auto resp = nlohmann::json::parse(body);
    const auto& content = resp.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("malformed response: ") + e.what());
  }
}

}  // namespace grs::llm::wire
