// Scenario dataset: vulnerability-inducing prompts, their target CWEs, and
// stored reformulation sets.
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "secexpo/client.hpp"
#include "secexpo/common.hpp"

namespace secexpo {

struct Scenario {
    std::string scenario_id;   // "CWE-NN - k"
    std::string target_cwe;
    std::string language;
    std::string original_prompt;
    std::vector<std::string> reformulations;  // excludes the original
    std::optional<double> severity_override;
    std::optional<std::string> detector_hint;

    // The full prompt set: index 0 is the original, 1..N the reformulations.
    std::vector<std::string> prompts() const {
        std::vector<std::string> out{original_prompt};
        out.insert(out.end(), reformulations.begin(), reformulations.end());
        return out;
    }
    size_t prompt_count() const { return reformulations.size() + 1; }
};

struct ScenarioSet {
    std::string name;
    std::string version;
    std::vector<Scenario> scenarios;
    std::string digest;  // of the file bytes this set was loaded from
};

namespace detail {

inline Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario s;
    s.scenario_id = j.at("scenario_id").get<std::string>();
    s.target_cwe = j.at("target_cwe").get<std::string>();
    s.language = j.at("language").get<std::string>();
    s.original_prompt = j.at("original_prompt").get<std::string>();
    for (const auto& r : j.value("reformulations", nlohmann::json::array()))
        s.reformulations.push_back(r.get<std::string>());
    if (j.contains("severity_override") && !j["severity_override"].is_null())
        s.severity_override = j["severity_override"].get<double>();
    if (j.contains("detector_hint") && !j["detector_hint"].is_null())
        s.detector_hint = j["detector_hint"].get<std::string>();
    return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
    nlohmann::json j = {{"scenario_id", s.scenario_id},
                        {"target_cwe", s.target_cwe},
                        {"language", s.language},
                        {"original_prompt", s.original_prompt},
                        {"reformulations", s.reformulations}};
    if (s.severity_override) j["severity_override"] = *s.severity_override;
    if (s.detector_hint) j["detector_hint"] = *s.detector_hint;
    return j;
}

}  // namespace detail

// Validates a set, collecting every violation instead of stopping at one.
inline void validate_scenario_set(const ScenarioSet& set) {
    std::vector<std::string> problems;
    std::set<std::string> ids;
    for (const auto& s : set.scenarios) {
        if (!ids.insert(s.scenario_id).second)
            problems.push_back("duplicate scenario_id '" + s.scenario_id + "'");
        if (s.original_prompt.empty())
            problems.push_back(s.scenario_id + ": empty original_prompt");
        if (!is_cwe_id(s.target_cwe))
            problems.push_back(s.scenario_id + ": bad CWE id '" + s.target_cwe + "'");
        std::set<std::string> texts{s.original_prompt};
        for (const auto& r : s.reformulations) {
            if (r.empty())
                problems.push_back(s.scenario_id + ": empty reformulation");
            else if (!texts.insert(r).second)
                problems.push_back(s.scenario_id + ": duplicate reformulation text");
        }
        if (s.severity_override &&
            !(*s.severity_override >= 0.0 && *s.severity_override <= 10.0))
            problems.push_back(s.scenario_id + ": severity_override outside [0,10]");
    }
    if (!problems.empty()) {
        std::string msg = "scenario validation failed:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw DataError(msg);
    }
}

inline ScenarioSet load_scenarios(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ToolError("cannot read scenario file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    std::string bytes = buf.str();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes);
    } catch (const std::exception& e) {
        throw DataError("malformed scenario file " + path.string() + ": " + e.what());
    }
    ScenarioSet set;
    set.name = j.value("name", std::string());
    set.version = j.value("version", std::string());
    for (const auto& sj : j.at("scenarios"))
        set.scenarios.push_back(detail::scenario_from_json(sj));
    set.digest = digest_hex(bytes);
    validate_scenario_set(set);
    return set;
}

// Canonical form: 2-space indent, keys in the documented order, trailing newline.
inline std::string render_scenarios(const ScenarioSet& set) {
    nlohmann::json j = {{"name", set.name},
                        {"version", set.version},
                        {"scenarios", nlohmann::json::array()}};
    for (const auto& s : set.scenarios)
        j["scenarios"].push_back(detail::scenario_to_json(s));
    return j.dump(2) + "\n";
}

inline void save_scenarios(const ScenarioSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ToolError("cannot write scenario file: " + path.string());
    out << render_scenarios(set);
}

// Asks a chat endpoint for n distinct reformulations of a scenario's prompt.
// The template must contain "{prompt}". Exact-string duplicates (including
// the original) are rejected and resampled within the retry budget; on
// exhaustion the partial result travels with the error.
struct PartialReformulations : PartialError {
    std::vector<std::string> obtained;
    PartialReformulations(std::string msg, std::vector<std::string> got)
        : PartialError(std::move(msg)), obtained(std::move(got)) {}
};

inline std::vector<std::string> generate_reformulations(
    const Scenario& scenario, CompletionClient& client, const std::string& model,
    long n, const std::string& prompt_template, int retry_budget = 10) {
    if (n == 0) return {};
    auto pos = prompt_template.find("{prompt}");
    if (pos == std::string::npos)
        throw ConfigError("reformulation template lacks {prompt} placeholder");
    std::string request = prompt_template;
    request.replace(pos, 8, scenario.original_prompt);

    SamplingParams params;
    params.m = 1;
    params.temperature = 0.8;  // reformulation wants diversity, not protocol T
    params.max_new_tokens = 256;

    std::set<std::string> seen{scenario.original_prompt};
    std::vector<std::string> out;
    int retries = 0;
    while (static_cast<long>(out.size()) < n) {
        auto result = client.complete(request, model, params);
        std::string text = result.text;
        // trim
        auto b = text.find_first_not_of(" \t\r\n");
        auto e = text.find_last_not_of(" \t\r\n");
        text = (b == std::string::npos) ? std::string() : text.substr(b, e - b + 1);
        if (!text.empty() && seen.insert(text).second) {
            out.push_back(text);
            continue;
        }
        if (++retries > retry_budget)
            throw PartialReformulations(
                "reformulation retry budget exhausted for " + scenario.scenario_id +
                " (" + std::to_string(out.size()) + "/" + std::to_string(n) + ")",
                out);
    }
    return out;
}

}  // namespace secexpo
