// Gateway behaviour against real sockets on localhost.

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>

#include "grs/llm/http_client.hpp"
#include "grs/llm/mock.hpp"

using namespace grs;
using namespace grs::llm;

namespace {

// A bare server whose handler is supplied by the test.
class LocalServer {
 public:
  explicit LocalServer(httplib::Server::Handler handler, const std::string& prefix = "") {
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    server_.Post(prefix + wire::kCompletionsPath, std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

ModelEndpoint endpoint_at(const std::string& url, const std::string& name = "ep") {
  ModelEndpoint e;
  e.name = name;
  e.base_url = url;
  e.model_id = "m";
  e.timeout = std::chrono::milliseconds(2000);
  return e;
}

const RetryPolicy kFastRetry{std::chrono::milliseconds(5), 2.0};

}  // namespace

TEST(HttpClient, ScriptedReplyOverHttp) {
  MockScript s;
  s.set_default_reply("RELEVANT");
  MockServer server(std::move(s));
  HttpChatClient client(kFastRetry);
  EXPECT_EQ(client.complete(endpoint_at(server.base_url()), "anything"), "RELEVANT");
  EXPECT_EQ(server.requests(), 1u);
}

TEST(HttpClient, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    if (calls.fetch_add(1) < 2) {
      res.status = 500;
      return;
    }
    res.set_content(wire::response_body("m", "ok"), "application/json");
  });
  HttpChatClient client(kFastRetry);
  auto e = endpoint_at(server.url());
  e.max_retries = 3;
  EXPECT_EQ(client.complete(e, "p"), "ok");
  EXPECT_EQ(calls.load(), 3);
}

TEST(HttpClient, RateLimitRetriedClientErrorNot) {
  std::atomic<int> calls{0};
  LocalServer limited([&](const httplib::Request&, httplib::Response& res) {
    if (calls.fetch_add(1) == 0) {
      res.status = 429;
      return;
    }
    res.set_content(wire::response_body("m", "ok"), "application/json");
  });
  HttpChatClient client(kFastRetry);
  EXPECT_EQ(client.complete(endpoint_at(limited.url()), "p"), "ok");

  std::atomic<int> bad_calls{0};
  LocalServer bad([&](const httplib::Request&, httplib::Response& res) {
    ++bad_calls;
    res.status = 404;
  });
  try {
    client.complete(endpoint_at(bad.url()), "p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTransport);
  }
  EXPECT_EQ(bad_calls.load(), 1);
}

TEST(HttpClient, TimeoutAfterAllAttempts) {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    res.set_content(wire::response_body("m", "late"), "application/json");
  });
  HttpChatClient client(kFastRetry);
  auto e = endpoint_at(server.url());
  e.timeout = std::chrono::milliseconds(100);
  e.max_retries = 2;
  try {
    client.complete(e, "p");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::kTimeout);
  }
  EXPECT_EQ(calls.load(), 3);
}

TEST(HttpClient, ConnectionRefusedIsTransport) {
  // Nothing listens on port 1 of the loopback interface.
  HttpChatClient client(kFastRetry);
  auto e = endpoint_at("http://127.0.0.1:1");
  e.max_retries = 1;
  try {
    client.complete(e, "p");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::kTransport);
    EXPECT_TRUE(err.is_gateway_failure());
  }
}

TEST(HttpClient, EmptyAndMalformedReplies) {
  LocalServer empty([](const httplib::Request&, httplib::Response& res) {
    res.set_content(wire::response_body("m", "  "), "application/json");
  });
  LocalServer garbage([](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  HttpChatClient client(kFastRetry);
  try {
    client.complete(endpoint_at(empty.url()), "p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyResponse);
  }
  try {
    client.complete(endpoint_at(garbage.url()), "p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocol);
  }
}

TEST(HttpClient, SendsBearerTokenFromEnvironment) {
  std::string seen;
  std::mutex mu;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    seen = req.get_header_value("Authorization");
    res.set_content(wire::response_body("m", "ok"), "application/json");
  });
  ::setenv("GRS_API_KEY_SECURE_EP", "sekret", 1);
  HttpChatClient client(kFastRetry);
  client.complete(endpoint_at(server.url(), "secure-ep"), "p");
  ::unsetenv("GRS_API_KEY_SECURE_EP");
  EXPECT_EQ(seen, "Bearer sekret");
}

TEST(HttpClient, PathPrefixInBaseUrl) {
  LocalServer server(
      [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(wire::response_body("m", "ok"), "application/json");
      },
      "/gateway");
  HttpChatClient client(kFastRetry);
  EXPECT_EQ(client.complete(endpoint_at(server.url() + "/gateway"), "p"), "ok");
  EXPECT_EQ(client.complete(endpoint_at(server.url() + "/gateway/"), "p"), "ok");
}

TEST(HttpClient, InFlightBoundedPerEndpoint) {
  MockScript s;
  s.set_default_reply("ok");
  MockServer server(std::move(s), {"127.0.0.1", 0, std::chrono::milliseconds(40)});
  HttpChatClient client(kFastRetry);
  auto e = endpoint_at(server.base_url());
  e.max_in_flight = 2;
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.complete(e, "p"); });
  for (auto& t : threads) t.join();
  EXPECT_EQ(server.requests(), 8u);
  EXPECT_LE(server.peak_in_flight(), 2);
}

TEST(MockServer, ConcurrentRequestsAreIndependent) {
  MockScript s;
  s.add_substring("alpha", "A");
  s.add_substring("beta", "B");
  MockServer server(std::move(s), {"127.0.0.1", 0, std::chrono::milliseconds(20)});
  HttpChatClient client(kFastRetry);
  const auto e = endpoint_at(server.base_url());
  std::string ra, rb;
  std::thread ta([&] { ra = client.complete(e, "alpha"); });
  std::thread tb([&] { rb = client.complete(e, "beta"); });
  ta.join();
  tb.join();
  EXPECT_EQ(ra, "A");
  EXPECT_EQ(rb, "B");
  EXPECT_GE(server.peak_in_flight(), 1);
}

TEST(MockServer, MalformedRequestIs400) {
  MockServer server(MockScript{});
  httplib::Client cli(server.base_url());
  auto res = cli.Post(wire::kCompletionsPath, "not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST(MockServer, PortInUse) {
  MockServer first(MockScript{});
  try {
    MockServer second(MockScript{}, {"127.0.0.1", first.port(), std::chrono::milliseconds(0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPortInUse);
  }
}
