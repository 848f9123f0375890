#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "secexpo/client.hpp"

using namespace secexpo;
using nlohmann::json;

namespace {

// Local endpoint double. Each test case installs handlers, then talks to it
// over a real socket so the whole request/retry path is exercised.
struct LocalEndpoint {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    LocalEndpoint() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalEndpoint() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

EndpointConfig fast_config(const LocalEndpoint& ep) {
    EndpointConfig cfg;
    cfg.base_url = ep.url();
    cfg.timeout_s = 5.0;
    cfg.max_retries = 2;
    cfg.backoff_base_s = 0.01;
    return cfg;
}

}  // namespace

TEST_CASE("complete: sends chat request with sampling params, parses reply") {
    LocalEndpoint ep;
    json seen;
    ep.server.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                               httplib::Response& res) {
        seen = json::parse(req.body);
        json reply = {{"choices",
                       {{{"message", {{"role", "assistant"}, {"content", "def f(): pass"}}},
                         {"finish_reason", "stop"}}}}};
        res.set_content(reply.dump(), "application/json");
    });

    HttpCompletionClient client(fast_config(ep));
    SamplingParams params;
    params.temperature = 0.2;
    params.seed = 42;
    auto result = client.complete("write a function", "model-x", params);
    CHECK(result.text == "def f(): pass");
    CHECK(result.finish_reason == "stop");
    CHECK(seen["model"] == "model-x");
    CHECK(seen["temperature"] == doctest::Approx(0.2));
    CHECK(seen["top_p"] == doctest::Approx(0.95));
    CHECK(seen["max_tokens"] == 1024);
    CHECK(seen["seed"] == 42);
    REQUIRE(seen["messages"].size() == 1);
    CHECK(seen["messages"][0]["role"] == "user");
    CHECK(seen["messages"][0]["content"] == "write a function");
}

TEST_CASE("complete: system prompt is prepended when configured") {
    LocalEndpoint ep;
    json seen;
    ep.server.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                               httplib::Response& res) {
        seen = json::parse(req.body);
        json reply = {{"choices",
                       {{{"message", {{"content", "ok"}}}, {"finish_reason", "stop"}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    auto cfg = fast_config(ep);
    cfg.system_prompt = "You are a coding assistant.";
    HttpCompletionClient client(cfg);
    client.complete("p", "m", {});
    REQUIRE(seen["messages"].size() == 2);
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen["messages"][1]["role"] == "user");
}

TEST_CASE("retries: transient 500s are retried, then recovered") {
    LocalEndpoint ep;
    std::atomic<int> hits{0};
    ep.server.Post("/v1/chat/completions", [&](const httplib::Request&,
                                               httplib::Response& res) {
        if (++hits <= 2) {
            res.status = 500;
            return;
        }
        json reply = {{"choices",
                       {{{"message", {{"content", "recovered"}}},
                         {"finish_reason", "stop"}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    HttpCompletionClient client(fast_config(ep));
    CHECK(client.complete("p", "m", {}).text == "recovered");
    CHECK(hits == 3);
}

TEST_CASE("retries: persistent 500 exhausts the budget and reports it") {
    LocalEndpoint ep;
    std::atomic<int> hits{0};
    ep.server.Post("/v1/chat/completions", [&](const httplib::Request&,
                                               httplib::Response& res) {
        ++hits;
        res.status = 500;
    });
    HttpCompletionClient client(fast_config(ep));
    CHECK_THROWS_WITH_AS(client.complete("p", "m", {}),
                         doctest::Contains("HTTP 500"), ToolError);
    CHECK(hits == 3);  // initial attempt + max_retries=2
}

TEST_CASE("auth failures are configuration errors, not retried") {
    LocalEndpoint ep;
    std::atomic<int> hits{0};
    ep.server.Post("/v1/chat/completions", [&](const httplib::Request&,
                                               httplib::Response& res) {
        ++hits;
        res.status = 401;
    });
    HttpCompletionClient client(fast_config(ep));
    CHECK_THROWS_AS(client.complete("p", "m", {}), ConfigError);
    CHECK(hits == 1);
}

TEST_CASE("api key is read from the named env var and sent as a bearer token") {
    LocalEndpoint ep;
    std::string auth_header;
    ep.server.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                               httplib::Response& res) {
        auth_header = req.get_header_value("Authorization");
        json reply = {{"choices",
                       {{{"message", {{"content", "ok"}}}, {"finish_reason", "stop"}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    setenv("SECEXPO_TEST_KEY", "sk-test-123", 1);
    auto cfg = fast_config(ep);
    cfg.api_key_env = "SECEXPO_TEST_KEY";
    HttpCompletionClient client(cfg);
    client.complete("p", "m", {});
    CHECK(auth_header == "Bearer sk-test-123");
    unsetenv("SECEXPO_TEST_KEY");
}

TEST_CASE("score_logprobs: echo-mode request, null first token skipped") {
    LocalEndpoint ep;
    json seen;
    ep.server.Post("/v1/completions", [&](const httplib::Request& req,
                                          httplib::Response& res) {
        seen = json::parse(req.body);
        json reply = {{"choices",
                       {{{"text", "the prompt"},
                         {"logprobs",
                          {{"token_logprobs", {nullptr, -1.5, -0.25, -2.0}}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    HttpCompletionClient client(fast_config(ep));
    auto lps = client.score_logprobs("the prompt", "ref-model");
    CHECK(lps == std::vector<double>{-1.5, -0.25, -2.0});
    CHECK(seen["echo"] == true);
    CHECK(seen["max_tokens"] == 0);
    CHECK(seen["logprobs"] == 0);
    CHECK(seen["prompt"] == "the prompt");
}

TEST_CASE("score_logprobs: endpoint without echo support is a tool error") {
    LocalEndpoint ep;
    ep.server.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
        json reply = {{"choices", {{{"text", "the prompt"}}}}};  // no logprobs field
        res.set_content(reply.dump(), "application/json");
    });
    HttpCompletionClient client(fast_config(ep));
    CHECK_THROWS_WITH_AS(client.score_logprobs("p", "m"),
                         doctest::Contains("logprobs"), ToolError);
}

TEST_CASE("config validation: empty base_url and empty prompt are rejected") {
    CHECK_THROWS_AS(HttpCompletionClient(EndpointConfig{}), ConfigError);

    LocalEndpoint ep;
    HttpCompletionClient client(fast_config(ep));
    CHECK_THROWS_AS(client.score_logprobs("", "m"), DataError);
}

TEST_CASE("unreachable endpoint surfaces a transport error after retries") {
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";  // reserved port, nothing listens
    cfg.max_retries = 1;
    cfg.backoff_base_s = 0.01;
    cfg.timeout_s = 1.0;
    HttpCompletionClient client(cfg);
    CHECK_THROWS_WITH_AS(client.complete("p", "m", {}),
                         doctest::Contains("transport error"), ToolError);
}
