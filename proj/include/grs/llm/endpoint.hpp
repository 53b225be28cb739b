#pragma once

#include <cctype>
#include <chrono>
#include <string>
#include <string_view>

#include "grs/error.hpp"

namespace grs::llm {

struct ModelEndpoint {
  std::string name;
  std::string base_url;
  std::string model_id;
  double temperature = 0.0;
  int max_output_tokens = 512;
  std::chrono::milliseconds timeout{30'000};
  int max_retries = 3;
  int max_in_flight = 8;

  void validate() const {
    if (name.empty()) throw Error(ErrorCode::kConfig, "endpoint name is empty");
    if (temperature < 0.0) throw Error(ErrorCode::kConfig, "endpoint '" + name + "': temperature < 0", name);
    if (max_retries < 0) throw Error(ErrorCode::kConfig, "endpoint '" + name + "': max_retries < 0", name);
    if (max_in_flight < 1) throw Error(ErrorCode::kConfig, "endpoint '" + name + "': max_in_flight < 1", name);
    if (max_output_tokens < 1) {
      throw Error(ErrorCode::kConfig, "endpoint '" + name + "': max_output_tokens < 1", name);
    }
  }

  /// Environment variable holding this endpoint's bearer token, e.g.
  /// GRS_API_KEY_QWEN_72B for an endpoint named "qwen-72b".
  std::string api_key_variable() const {
    std::string var = "GRS_API_KEY_";
    for (char c : name) {
      const auto u = static_cast<unsigned char>(c);
      var.push_back(std::isalnum(u) ? static_cast<char>(std::toupper(u)) : '_');
    }
    return var;
  }
};

/// Chat-completion transport. Implementations must be safe for concurrent
/// calls and must throw grs::Error with a gateway error code on failure.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ModelEndpoint& endpoint, const std::string& prompt) = 0;
};

}  // namespace grs::llm
