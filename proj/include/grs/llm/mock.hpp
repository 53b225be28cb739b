#pragma once

// Scripted stand-ins for chat models. A MockScript maps the last message of a
// request to a fixed reply through an ordered rule list; the first matching
// rule wins, otherwise `default_reply` is returned. Scripts are stateless, so
// replies never depend on request order.
//
// Script file:
//   {"rules": [{"match_type": "substring"|"regex", "pattern": "...", "reply": "..."}, ...],
//    "default_reply": "..."}

#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "grs/error.hpp"
#include "grs/llm/endpoint.hpp"
#include "grs/llm/wire.hpp"
#include "grs/text.hpp"

namespace grs::llm {

enum class MatchType { kSubstring, kRegex };

struct MockRule {
  MatchType match_type = MatchType::kSubstring;
  std::string pattern;
  std::string reply;
  std::shared_ptr<const std::regex> compiled;

  bool matches(const std::string& content) const {
    if (match_type == MatchType::kSubstring) return content.find(pattern) != std::string::npos;
    return std::regex_search(content, *compiled);
  }
};

class MockScript {
 public:
  MockScript() = default;

  void add_substring(std::string pattern, std::string reply) {
    rules_.push_back({MatchType::kSubstring, std::move(pattern), std::move(reply), nullptr});
  }

  void add_regex(std::string pattern, std::string reply) {
    auto re = std::make_shared<const std::regex>(pattern, std::regex::ECMAScript);
    rules_.push_back({MatchType::kRegex, std::move(pattern), std::move(reply), std::move(re)});
  }

  void set_default_reply(std::string reply) { default_reply_ = std::move(reply); }

  const std::string& reply_for(const std::string& content) const {
    for (const auto& rule : rules_) {
      if (rule.matches(content)) return rule.reply;
    }
    return default_reply_;
  }

  const std::vector<MockRule>& rules() const noexcept { return rules_; }
  const std::string& default_reply() const noexcept { return default_reply_; }

  static MockScript from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::kScript, "mock script must be a JSON object");
    MockScript script;
    if (auto d = doc.find("default_reply"); d != doc.end()) {
      if (!d->is_string()) throw Error(ErrorCode::kScript, "default_reply must be a string");
      script.default_reply_ = d->get<std::string>();
    }
    auto rules = doc.find("rules");
    if (rules == doc.end()) return script;
    if (!rules->is_array()) throw Error(ErrorCode::kScript, "rules must be an array");
    for (std::size_t i = 0; i < rules->size(); ++i) {
      const auto& r = (*rules)[i];
      const auto fail = [i](const std::string& why) {
        return Error(ErrorCode::kScript, "rule " + std::to_string(i) + ": " + why, std::to_string(i));
      };
      if (!r.is_object()) throw fail("not an object");
      const auto type = r.value("match_type", std::string("substring"));
      if (!r.contains("pattern") || !r["pattern"].is_string()) throw fail("missing string 'pattern'");
      if (!r.contains("reply") || !r["reply"].is_string()) throw fail("missing string 'reply'");
      auto pattern = r["pattern"].get<std::string>();
      auto reply = r["reply"].get<std::string>();
      if (type == "substring") {
        script.add_substring(std::move(pattern), std::move(reply));
      } else if (type == "regex") {
        try {
          script.add_regex(std::move(pattern), std::move(reply));
        } catch (const std::regex_error& e) {
          throw fail(std::string("invalid regex: ") + e.what());
        }
      } else {
        throw fail("unknown match_type '" + type + "'");
      }
    }
    return script;
  }

  nlohmann::json to_json() const {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : rules_) {
      rules.push_back({{"match_type", r.match_type == MatchType::kRegex ? "regex" : "substring"},
                       {"pattern", r.pattern},
                       {"reply", r.reply}});
    }
    return {{"rules", rules}, {"default_reply", default_reply_}};
  }

 private:
  std::vector<MockRule> rules_;
  std::string default_reply_;
};

inline MockScript load_mock_script(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, "file not found: " + path, path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kScript, path + ": " + e.what(), path);
  }
  return MockScript::from_json(doc);
}

/// In-process client answering from scripts keyed by endpoint name, with an
/// optional fallback script. Behaves like HttpChatClient on empty replies.
class ScriptedChatClient final : public ChatClient {
 public:
  ScriptedChatClient() = default;
  explicit ScriptedChatClient(MockScript fallback) : fallback_(std::move(fallback)) {}

  void set_fallback(MockScript script) { fallback_ = std::move(script); }

  void set_script(const std::string& endpoint_name, MockScript script) {
    scripts_[endpoint_name] = std::move(script);
  }

  std::string complete(const ModelEndpoint& endpoint, const std::string& prompt) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    const MockScript* script = nullptr;
    if (auto it = scripts_.find(endpoint.name); it != scripts_.end()) {
      script = &it->second;
    } else if (fallback_) {
      script = &*fallback_;
    } else {
      throw Error(ErrorCode::kTransport, "no mock script for endpoint '" + endpoint.name + "'",
                  endpoint.name);
    }
    const std::string& reply = script->reply_for(prompt);
    if (text::trim_unicode(reply).empty()) {
      throw Error(ErrorCode::kEmptyResponse, endpoint.name + ": empty completion", endpoint.name);
    }
    return reply;
  }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::map<std::string, MockScript> scripts_;
  std::optional<MockScript> fallback_;
  std::atomic<std::size_t> calls_{0};
};

struct MockServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::chrono::milliseconds latency{0};
};

/// Chat-completions server answering from a MockScript. Counts requests and
/// tracks the peak number of concurrently handled requests.
class MockServer {
 public:
  MockServer(MockScript script, MockServerOptions options = {})
      : script_(std::move(script)), options_(std::move(options)) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(32); };
    // No SO_REUSEPORT: binding a port another server holds must fail.
    server_.set_socket_options([](auto sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    server_.Post(wire::kCompletionsPath, [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
    if (options_.port == 0) {
      port_ = server_.bind_to_any_port(options_.host);
      if (port_ < 0) throw Error(ErrorCode::kPortInUse, "could not bind any port on " + options_.host);
    } else {
      if (!server_.bind_to_port(options_.host, options_.port)) {
        throw Error(ErrorCode::kPortInUse, "port " + std::to_string(options_.port) + " is in use",
                    std::to_string(options_.port));
      }
      port_ = options_.port;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() { stop(); }
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  /// Blocks until the server stops.
  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }
  std::string base_url() const { return "http://" + options_.host + ":" + std::to_string(port_); }
  std::size_t requests() const noexcept { return requests_.load(); }
  int peak_in_flight() const noexcept { return peak_.load(); }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const int now = in_flight_.fetch_add(1) + 1;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    requests_.fetch_add(1);
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
    try {
      const std::string content = wire::last_message_content(req.body);
      std::string model = "mock";
      try {
        model = nlohmann::json::parse(req.body).value("model", model);
      } catch (...) {
      }
      res.set_content(wire::response_body(model, script_.reply_for(content)), "application/json");
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
    }
    in_flight_.fetch_sub(1);
  }

  MockScript script_;
  MockServerOptions options_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::atomic<std::size_t> requests_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

}  // namespace grs::llm
