#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>

#include "grs/error.hpp"
#include "grs/llm/endpoint.hpp"
#include "grs/llm/wire.hpp"
#include "grs/text.hpp"

namespace grs::llm {

struct RetryPolicy {
  std::chrono::milliseconds base{500};
  double factor = 2.0;
};

namespace detail {

class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : limit_(limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int active_ = 0;
};

class SlotGuard {
 public:
  explicit SlotGuard(InFlightLimiter& l) : limiter_(l) { limiter_.acquire(); }
  ~SlotGuard() { limiter_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  InFlightLimiter& limiter_;
};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

inline SplitUrl split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfig, "base_url lacks a scheme: " + url, url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) out.prefix = url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

}  // namespace detail

/// Chat client over HTTP. Each endpoint name gets its own in-flight limit;
/// transport failures, timeouts, 429 and 5xx replies are retried with full
/// jitter exponential backoff.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(RetryPolicy retry = {}) : retry_(retry) {}

  std::string complete(const ModelEndpoint& endpoint, const std::string& prompt) override {
    const auto url = detail::split_base_url(endpoint.base_url);
    const std::string path = url.prefix + wire::kCompletionsPath;
    const std::string body = wire::request_body(endpoint, prompt);
    auto& limiter = limiter_for(endpoint);

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint.api_key_variable().c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    Error last(ErrorCode::kTransport, "no attempt made", endpoint.name);
    for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
      if (attempt > 0) backoff(attempt);
      const auto started = std::chrono::steady_clock::now();
      httplib::Result res;
      {
        detail::SlotGuard slot(limiter);
        httplib::Client cli(url.origin);
        if (!cli.is_valid()) {
          throw Error(ErrorCode::kConfig, "unsupported base_url: " + endpoint.base_url, endpoint.name);
        }
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
        cli.set_connection_timeout(secs.count(), usecs.count());
        cli.set_read_timeout(secs.count(), usecs.count());
        cli.set_write_timeout(secs.count(), usecs.count());
        res = cli.Post(path, headers, body, "application/json");
      }
      const auto elapsed = std::chrono::steady_clock::now() - started;

      if (!res) {
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                               (err == httplib::Error::Read && elapsed >= endpoint.timeout * 9 / 10);
        last = Error(timed_out ? ErrorCode::kTimeout : ErrorCode::kTransport,
                     endpoint.name + ": " + httplib::to_string(err), endpoint.name);
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last = Error(ErrorCode::kTransport, endpoint.name + ": HTTP " + std::to_string(res->status),
                     endpoint.name);
        continue;
      }
      if (res->status != 200) {
        throw Error(ErrorCode::kTransport, endpoint.name + ": HTTP " + std::to_string(res->status),
                    endpoint.name);
      }
      std::string content = wire::parse_response(res->body);
      if (text::trim_unicode(content).empty()) {
        throw Error(ErrorCode::kEmptyResponse, endpoint.name + ": empty completion", endpoint.name);
      }
      return content;
    }
    throw last;
  }

 private:
  detail::InFlightLimiter& limiter_for(const ModelEndpoint& endpoint) {
    std::lock_guard lock(mu_);
    auto& slot = limiters_[endpoint.name];
    if (!slot) slot = std::make_unique<detail::InFlightLimiter>(endpoint.max_in_flight);
    return *slot;
  }

  void backoff(int attempt) {
    const double cap_ms = static_cast<double>(retry_.base.count()) * std::pow(retry_.factor, attempt - 1);
    double wait_ms = 0.0;
    {
      std::lock_guard lock(mu_);
      wait_ms = std::uniform_real_distribution<double>(0.0, cap_ms)(jitter_);
    }
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(wait_ms));
  }

  RetryPolicy retry_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<detail::InFlightLimiter>> limiters_;
  std::mt19937_64 jitter_{std::random_device{}()};
};

}  // namespace grs::llm
