// Campaign sampling: persistent run archive, resumable campaign runner, and
// prompt logprob scoring with an on-disk cache.
//
// Archive layout (one archive per model under test):
//   <root>/manifest.json
//   <root>/<scenario_id>/<reformulation_index>/<sample_index>.json
//   <root>/logprobs/<prompt-digest>.json
#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "secexpo/client.hpp"
#include "secexpo/common.hpp"
#include "secexpo/scenarios.hpp"

namespace secexpo {

struct SampleKey {
    std::string scenario_id;
    int reformulation_index = 0;  // 0 = original prompt
    int sample_index = 0;

    friend auto operator<=>(const SampleKey&, const SampleKey&) = default;
};

struct CompletionSample {
    SampleKey key;
    std::string raw_text;
    std::string model_id;
    std::string finish_reason;
    std::string timestamp;  // ISO-8601 UTC
};

struct PromptLogprobs {
    std::string prompt_text;
    std::string reference_model_id;
    std::vector<double> token_logprobs;  // natural log
};

namespace detail {

inline std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& data) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ToolError("cannot write " + path.string());
        out << data;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

enum class CellStatus { Pending, Done, Failed };

// One archive records one model's campaign against one scenario set.
class RunArchive {
public:
    explicit RunArchive(std::filesystem::path root) : root_(std::move(root)) {
        std::filesystem::create_directories(root_);
        std::filesystem::create_directories(root_ / "logprobs");
        auto mpath = root_ / "manifest.json";
        if (std::filesystem::exists(mpath)) {
            std::ifstream in(mpath);
            manifest_ = nlohmann::json::parse(in);
        } else {
            manifest_ = {{"model_id", ""}, {"params", nullptr},
                         {"scenario_digest", ""}, {"cells", nlohmann::json::object()}};
        }
    }

    const std::filesystem::path& root() const { return root_; }

    std::string model_id() const { return manifest_.value("model_id", std::string()); }
    std::string scenario_digest() const {
        return manifest_.value("scenario_digest", std::string());
    }
    bool empty_manifest() const { return manifest_["cells"].empty(); }

    // Binds the archive to a (model, params, scenario set). Refuses to mix
    // datasets: rebinding with a different digest on a non-empty archive throws.
    void bind(const std::string& model_id, const SamplingParams& params,
              const std::string& scenario_digest) {
        std::scoped_lock lock(mu_);
        auto prev = manifest_.value("scenario_digest", std::string());
        if (!prev.empty() && prev != scenario_digest)
            throw ConfigError("archive at " + root_.string() +
                              " was built from a different scenario set (digest " + prev +
                              " vs " + scenario_digest + "); refusing to run");
        manifest_["model_id"] = model_id;
        manifest_["params"] = {{"m", params.m},
                               {"temperature", params.temperature},
                               {"top_p", params.top_p},
                               {"max_new_tokens", params.max_new_tokens}};
        manifest_["scenario_digest"] = scenario_digest;
        save_manifest_locked();
    }

    CellStatus cell_status(const std::string& scenario_id, int ri) const {
        std::scoped_lock lock(mu_);
        auto it = manifest_["cells"].find(cell_key(scenario_id, ri));
        if (it == manifest_["cells"].end()) return CellStatus::Pending;
        return *it == "done" ? CellStatus::Done : CellStatus::Failed;
    }

    void set_cell_status(const std::string& scenario_id, int ri, CellStatus st) {
        std::scoped_lock lock(mu_);
        manifest_["cells"][cell_key(scenario_id, ri)] =
            (st == CellStatus::Done) ? "done" : "failed";
        save_manifest_locked();
    }

    std::filesystem::path sample_path(const SampleKey& key) const {
        return root_ / key.scenario_id / std::to_string(key.reformulation_index) /
               (std::to_string(key.sample_index) + ".json");
    }

    void write_sample(const CompletionSample& s) {
        auto path = sample_path(s.key);
        std::filesystem::create_directories(path.parent_path());
        nlohmann::json j = {{"scenario_id", s.key.scenario_id},
                            {"reformulation_index", s.key.reformulation_index},
                            {"sample_index", s.key.sample_index},
                            {"raw_text", s.raw_text},
                            {"model_id", s.model_id},
                            {"finish_reason", s.finish_reason},
                            {"timestamp", s.timestamp}};
        detail::write_file_atomic(path, j.dump(2) + "\n");
    }

    std::optional<CompletionSample> read_sample(const SampleKey& key) const {
        auto path = sample_path(key);
        std::ifstream in(path);
        if (!in) return std::nullopt;
        nlohmann::json j = nlohmann::json::parse(in);
        CompletionSample s;
        s.key = key;
        s.raw_text = j.at("raw_text").get<std::string>();
        s.model_id = j.value("model_id", std::string());
        s.finish_reason = j.value("finish_reason", std::string());
        s.timestamp = j.value("timestamp", std::string());
        return s;
    }

    // Cache key covers both the prompt and the reference model.
    static std::string logprob_digest(const std::string& prompt,
                                      const std::string& reference_model) {
        return digest_hex(reference_model + "\n" + prompt);
    }

    std::optional<PromptLogprobs> read_logprobs(const std::string& prompt,
                                                const std::string& reference_model) const {
        auto path = root_ / "logprobs" / (logprob_digest(prompt, reference_model) + ".json");
        std::ifstream in(path);
        if (!in) return std::nullopt;
        nlohmann::json j = nlohmann::json::parse(in);
        PromptLogprobs out;
        out.prompt_text = j.at("prompt_text").get<std::string>();
        out.reference_model_id = j.at("reference_model_id").get<std::string>();
        for (const auto& lp : j.at("token_logprobs")) out.token_logprobs.push_back(lp.get<double>());
        return out;
    }

    void write_logprobs(const PromptLogprobs& lp) {
        auto path = root_ / "logprobs" /
                    (logprob_digest(lp.prompt_text, lp.reference_model_id) + ".json");
        nlohmann::json j = {{"prompt_text", lp.prompt_text},
                            {"reference_model_id", lp.reference_model_id},
                            {"token_logprobs", lp.token_logprobs}};
        detail::write_file_atomic(path, j.dump(2) + "\n");
    }

private:
    static std::string cell_key(const std::string& scenario_id, int ri) {
        return scenario_id + "/" + std::to_string(ri);
    }
    void save_manifest_locked() {
        detail::write_file_atomic(root_ / "manifest.json", manifest_.dump(2) + "\n");
    }

    std::filesystem::path root_;
    nlohmann::json manifest_;
    mutable std::mutex mu_;
};

// Fetches exactly params.m samples for one prompt, persisting each before it
// is returned. Existing sample files are reused, which is what makes replay
// and resume free.
inline std::vector<CompletionSample> sample_completions(
    CompletionClient* client, RunArchive& archive, const std::string& scenario_id,
    int reformulation_index, const std::string& prompt, const std::string& model,
    const SamplingParams& params) {
    std::vector<CompletionSample> out;
    for (long i = 0; i < params.m; ++i) {
        SampleKey key{scenario_id, reformulation_index, static_cast<int>(i)};
        if (auto existing = archive.read_sample(key)) {
            out.push_back(std::move(*existing));
            continue;
        }
        if (!client)
            throw DataError("replay archive is missing sample " + scenario_id + "/" +
                            std::to_string(reformulation_index) + "/" + std::to_string(i));
        auto result = client->complete(prompt, model, params);
        CompletionSample s{key, result.text, model, result.finish_reason,
                           detail::now_iso8601()};
        archive.write_sample(s);
        out.push_back(std::move(s));
    }
    return out;
}

// Prompt logprobs under the reference model, served from the archive cache
// when present.
inline PromptLogprobs score_prompt_logprobs(CompletionClient* client, RunArchive& archive,
                                            const std::string& prompt,
                                            const std::string& reference_model) {
    if (prompt.empty()) throw DataError("score_prompt_logprobs: empty prompt");
    if (auto cached = archive.read_logprobs(prompt, reference_model)) return *cached;
    if (!client)
        throw DataError("replay archive has no logprobs for prompt digest " +
                        RunArchive::logprob_digest(prompt, reference_model));
    PromptLogprobs lp{prompt, reference_model, client->score_logprobs(prompt, reference_model)};
    archive.write_logprobs(lp);
    return lp;
}

struct CampaignSummary {
    long planned_samples = 0;
    long fetched_samples = 0;  // actually pulled from the endpoint this run
    long completed_cells = 0;
    long skipped_cells = 0;
    std::vector<std::string> failed_cells;  // "scenario_id/reformulation_index"
};

// Total sample grid: |Theta| * (N+1) * M.
inline long plan_cells(const ScenarioSet& scenarios, const SamplingParams& params) {
    long total = 0;
    for (const auto& s : scenarios.scenarios)
        total += static_cast<long>(s.prompt_count()) * params.m;
    return total;
}

// Runs (or resumes) the whole sampling grid. client == nullptr means replay:
// every cell must already be in the archive. Failed cells are recorded and
// reported, never silently skipped.
inline CampaignSummary run_campaign(const ScenarioSet& scenarios,
                                    const SamplingParams& params, RunArchive& archive,
                                    CompletionClient* client, const std::string& model,
                                    int concurrency_limit = 4) {
    if (concurrency_limit < 1) throw ConfigError("concurrency_limit must be >= 1");
    archive.bind(model, params, scenarios.digest);

    struct Cell {
        const Scenario* scenario;
        int ri;
        std::string prompt;
    };
    std::vector<Cell> cells;
    for (const auto& s : scenarios.scenarios) {
        auto prompts = s.prompts();
        for (size_t ri = 0; ri < prompts.size(); ++ri)
            cells.push_back({&s, static_cast<int>(ri), prompts[ri]});
    }

    CampaignSummary summary;
    summary.planned_samples = plan_cells(scenarios, params);

    std::atomic<size_t> next{0};
    std::atomic<long> fetched{0};
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const auto& cell = cells[i];
            const auto& sid = cell.scenario->scenario_id;
            if (archive.cell_status(sid, cell.ri) == CellStatus::Done) {
                std::scoped_lock lock(mu);
                ++summary.skipped_cells;
                continue;
            }
            try {
                // Count endpoint pulls: samples that were not already on disk.
                long before = 0;
                for (long k = 0; k < params.m; ++k)
                    if (std::filesystem::exists(archive.sample_path(
                            {sid, cell.ri, static_cast<int>(k)})))
                        ++before;
                sample_completions(client, archive, sid, cell.ri, cell.prompt, model,
                                   params);
                fetched += params.m - before;
                archive.set_cell_status(sid, cell.ri, CellStatus::Done);
                std::scoped_lock lock(mu);
                ++summary.completed_cells;
            } catch (const std::exception& e) {
                archive.set_cell_status(sid, cell.ri, CellStatus::Failed);
                std::scoped_lock lock(mu);
                summary.failed_cells.push_back(sid + "/" + std::to_string(cell.ri) +
                                               ": " + e.what());
            }
        }
    };

    int threads = std::min<int>(concurrency_limit, static_cast<int>(cells.size()));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    summary.fetched_samples = fetched.load();
    return summary;
}

// Reads every sample of a completed campaign in deterministic
// (scenario, reformulation, sample) order.
inline std::vector<CompletionSample> collect_samples(const ScenarioSet& scenarios,
                                                     const SamplingParams& params,
                                                     const RunArchive& archive) {
    std::vector<CompletionSample> out;
    for (const auto& s : scenarios.scenarios)
        for (size_t ri = 0; ri < s.prompt_count(); ++ri)
            for (long k = 0; k < params.m; ++k) {
                SampleKey key{s.scenario_id, static_cast<int>(ri), static_cast<int>(k)};
                if (auto sample = archive.read_sample(key)) out.push_back(std::move(*sample));
            }
    return out;
}

}  // namespace secexpo
