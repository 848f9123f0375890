// Harness configuration: one structured JSON document drives every
// subcommand; flags override individual values.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "secexpo/client.hpp"
#include "secexpo/common.hpp"
#include "secexpo/metrics.hpp"

namespace secexpo {

struct SeverityConfig {
    std::string source = "fallback";  // "cve" | "table" | "fallback"
    std::string cve_file;
    std::string cve_format = "simple-jsonl";
    std::string table_file;
    DateRange date_range{{2025, 1, 1}, {2025, 9, 30}};
    bool use_fallback = true;  // shipped default severities for CWEs with no records
};

struct DetectorConfig {
    std::string kind = "builtin";  // "builtin" | "command"
    std::string command;
    double timeout_s = 30.0;
};

struct ValidityConfig {
    std::string kind = "python";  // "python" | "command"
    std::vector<std::string> command;
    std::string extension = "py";
    double timeout_s = 30.0;
};

struct HarnessConfig {
    EndpointConfig endpoint;
    std::string model_id;
    std::string reference_model_id;  // defaults to model_id
    SamplingParams sampling;
    double base = 2.0;
    LikelihoodParams likelihood;
    std::string scenario_file;
    SeverityConfig severity;
    DetectorConfig detector;
    ValidityConfig validity;
    std::string archive_root = "runs";
    int endpoint_concurrency = 4;
    int analysis_workers = 4;
    std::string resolved_digest;  // of the resolved config document

    std::filesystem::path archive_dir() const {
        return std::filesystem::path(archive_root) / model_id;
    }
};

inline HarnessConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }

    HarnessConfig c;
    if (j.contains("endpoint")) {
        const auto& e = j["endpoint"];
        c.endpoint.base_url = e.value("base_url", std::string());
        c.endpoint.api_key_env = e.value("api_key_env", std::string());
        c.endpoint.timeout_s = e.value("timeout_s", 120.0);
        c.endpoint.max_retries = e.value("max_retries", 5);
        if (e.contains("system_prompt") && !e["system_prompt"].is_null())
            c.endpoint.system_prompt = e["system_prompt"].get<std::string>();
    }
    c.model_id = j.value("model_id", std::string());
    c.reference_model_id = j.value("reference_model_id", c.model_id);
    if (j.contains("sampling")) {
        const auto& s = j["sampling"];
        c.sampling.m = s.value("m", 25L);
        c.sampling.temperature = s.value("temperature", 0.2);
        c.sampling.top_p = s.value("top_p", 0.95);
        c.sampling.max_new_tokens = s.value("max_new_tokens", 1024L);
        if (s.contains("seed") && !s["seed"].is_null())
            c.sampling.seed = s["seed"].get<long>();
    }
    c.base = j.value("base", 2.0);
    if (j.contains("likelihood")) {
        c.likelihood.mu = j["likelihood"].value("mu", 20.0);
        c.likelihood.k = j["likelihood"].value("k", 10.0);
    }
    c.scenario_file = j.value("scenario_file", std::string());
    if (j.contains("severity")) {
        const auto& s = j["severity"];
        c.severity.source = s.value("source", std::string("fallback"));
        c.severity.cve_file = s.value("cve_file", std::string());
        c.severity.cve_format = s.value("cve_format", std::string("simple-jsonl"));
        c.severity.table_file = s.value("table_file", std::string());
        if (s.contains("date_range"))
            c.severity.date_range = {parse_date(s["date_range"][0].get<std::string>()),
                                     parse_date(s["date_range"][1].get<std::string>())};
        c.severity.use_fallback = s.value("fallback", true);
    }
    if (j.contains("detector")) {
        c.detector.kind = j["detector"].value("kind", std::string("builtin"));
        c.detector.command = j["detector"].value("command", std::string());
        c.detector.timeout_s = j["detector"].value("timeout_s", 30.0);
    }
    if (j.contains("validity")) {
        c.validity.kind = j["validity"].value("kind", std::string("python"));
        for (const auto& a : j["validity"].value("command", nlohmann::json::array()))
            c.validity.command.push_back(a.get<std::string>());
        c.validity.extension = j["validity"].value("extension", std::string("py"));
        c.validity.timeout_s = j["validity"].value("timeout_s", 30.0);
    }
    c.archive_root = j.value("archive_root", std::string("runs"));
    if (j.contains("concurrency")) {
        c.endpoint_concurrency = j["concurrency"].value("endpoint", 4);
        c.analysis_workers = j["concurrency"].value("analysis", 4);
    }
    c.resolved_digest = digest_hex(j.dump());
    return c;
}

// Checks invariants and referenced paths before any side effect.
inline void validate_config(const HarnessConfig& c) {
    std::vector<std::string> problems;
    if (!(c.base > 1.0)) problems.push_back("base must be > 1");
    if (!(c.likelihood.k > 0.0)) problems.push_back("likelihood.k must be > 0");
    if (c.sampling.m < 1) problems.push_back("sampling.m must be >= 1");
    if (!(c.sampling.temperature >= 0.0)) problems.push_back("temperature must be >= 0");
    if (!(c.sampling.top_p > 0.0 && c.sampling.top_p <= 1.0))
        problems.push_back("top_p must be in (0,1]");
    if (c.endpoint_concurrency < 1) problems.push_back("concurrency.endpoint must be >= 1");
    if (!c.scenario_file.empty() && !std::filesystem::exists(c.scenario_file))
        problems.push_back("scenario_file does not exist: " + c.scenario_file);
    if (c.severity.source == "cve" && !std::filesystem::exists(c.severity.cve_file))
        problems.push_back("severity.cve_file does not exist: " + c.severity.cve_file);
    if (c.severity.source == "table" && !std::filesystem::exists(c.severity.table_file))
        problems.push_back("severity.table_file does not exist: " + c.severity.table_file);
    if (c.severity.source != "cve" && c.severity.source != "table" &&
        c.severity.source != "fallback")
        problems.push_back("severity.source must be cve, table, or fallback");
    if (c.detector.kind == "command" && c.detector.command.empty())
        problems.push_back("detector.kind=command requires detector.command");
    if (c.validity.kind == "command" && c.validity.command.empty())
        problems.push_back("validity.kind=command requires validity.command");
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

}  // namespace secexpo
