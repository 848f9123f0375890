// OpenAI-compatible completion endpoint client with bounded retries.
//
// Generation goes through /v1/chat/completions with the instruction as a
// single user message. Prompt scoring uses /v1/completions in echo mode
// (max_tokens=0, echo=true, logprobs=0) and reads prompt token logprobs.
#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "secexpo/common.hpp"

namespace secexpo {

struct SamplingParams {
    long m = 25;
    double temperature = 0.2;
    double top_p = 0.95;
    long max_new_tokens = 1024;
    std::optional<long> seed;
};

struct CompletionResult {
    std::string text;
    std::string finish_reason;
};

class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    // One sampled completion for an instruction prompt.
    virtual CompletionResult complete(const std::string& prompt, const std::string& model,
                                      const SamplingParams& params) = 0;
    // Natural-log per-token probabilities of the prompt itself.
    virtual std::vector<double> score_logprobs(const std::string& prompt,
                                               const std::string& model) = 0;
};

struct EndpointConfig {
    std::string base_url;          // e.g. "http://localhost:8000"
    std::string api_key_env;       // name of env var holding the key; may be empty
    std::optional<std::string> system_prompt;
    double timeout_s = 120.0;
    int max_retries = 5;
    double backoff_base_s = 0.5;
};

class HttpCompletionClient : public CompletionClient {
public:
    explicit HttpCompletionClient(EndpointConfig config)
        : config_(std::move(config)), rng_(std::random_device{}()) {
        if (config_.base_url.empty())
            throw ConfigError("endpoint base_url is empty");
        if (!config_.api_key_env.empty()) {
            const char* key = std::getenv(config_.api_key_env.c_str());
            if (key) api_key_ = key;
        }
    }

    CompletionResult complete(const std::string& prompt, const std::string& model,
                              const SamplingParams& params) override {
        nlohmann::json messages = nlohmann::json::array();
        if (config_.system_prompt)
            messages.push_back({{"role", "system"}, {"content", *config_.system_prompt}});
        messages.push_back({{"role", "user"}, {"content", prompt}});
        nlohmann::json body = {{"model", model},
                               {"messages", messages},
                               {"temperature", params.temperature},
                               {"top_p", params.top_p},
                               {"max_tokens", params.max_new_tokens}};
        if (params.seed) body["seed"] = *params.seed;
        auto resp = post_with_retries("/v1/chat/completions", body);
        const auto& choice = resp.at("choices").at(0);
        return {choice.at("message").at("content").get<std::string>(),
                choice.value("finish_reason", "stop")};
    }

    std::vector<double> score_logprobs(const std::string& prompt,
                                       const std::string& model) override {
        if (prompt.empty()) throw DataError("score_logprobs: empty prompt");
        nlohmann::json body = {{"model", model}, {"prompt", prompt},
                               {"max_tokens", 0},  {"echo", true},
                               {"logprobs", 0}};
        auto resp = post_with_retries("/v1/completions", body);
        const auto& choice = resp.at("choices").at(0);
        if (!choice.contains("logprobs") || choice["logprobs"].is_null() ||
            !choice["logprobs"].contains("token_logprobs"))
            throw ToolError("endpoint does not return prompt logprobs; use a replay "
                            "archive or an endpoint with echo/scoring support");
        std::vector<double> out;
        for (const auto& lp : choice["logprobs"]["token_logprobs"])
            if (!lp.is_null()) out.push_back(lp.get<double>());  // first token has none
        if (out.empty()) throw ToolError("endpoint returned no token logprobs");
        return out;
    }

private:
    nlohmann::json post_with_retries(const std::string& path, const nlohmann::json& body) {
        httplib::Client cli(config_.base_url);
        cli.set_connection_timeout(std::chrono::duration<double>(config_.timeout_s));
        cli.set_read_timeout(std::chrono::duration<double>(config_.timeout_s));
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        std::string payload = body.dump();
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) sleep_backoff(attempt);
            auto res = cli.Post(path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 401 || res->status == 403)
                throw ConfigError("endpoint auth failure (HTTP " +
                                  std::to_string(res->status) + "); check " +
                                  config_.api_key_env);
            if (res->status >= 200 && res->status < 300) {
                try {
                    return nlohmann::json::parse(res->body);
                } catch (const std::exception& e) {
                    last_error = std::string("bad JSON in response: ") + e.what();
                    continue;
                }
            }
            last_error = "HTTP " + std::to_string(res->status);
            if (res->status >= 400 && res->status < 500 && res->status != 429)
                break;  // non-retryable client error
        }
        throw ToolError("endpoint request failed after retries: " + last_error);
    }

    void sleep_backoff(int attempt) {
        double base = config_.backoff_base_s * static_cast<double>(1 << (attempt - 1));
        std::uniform_real_distribution<double> jitter(0.0, base * 0.25);
        std::this_thread::sleep_for(
            std::chrono::duration<double>(base + jitter(rng_)));
    }

    EndpointConfig config_;
    std::string api_key_;
    std::mt19937_64 rng_;
};

}  // namespace secexpo
