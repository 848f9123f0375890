#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "secexpo/sampler.hpp"

using namespace secexpo;
namespace fs = std::filesystem;

namespace {

struct CountingClient : CompletionClient {
    std::atomic<int> calls{0};
    bool fail = false;

    CompletionResult complete(const std::string& prompt, const std::string&,
                              const SamplingParams&) override {
        ++calls;
        if (fail) throw ToolError("endpoint request failed after retries: HTTP 500");
        return {"echo: " + prompt, "stop"};
    }
    std::vector<double> score_logprobs(const std::string&, const std::string&) override {
        ++calls;
        return {-1.0, -2.0};
    }
};

ScenarioSet two_scenarios() {
    ScenarioSet set;
    set.name = "t";
    set.version = "1";
    set.digest = "d1";
    set.scenarios.push_back(
        {"CWE-89 - 0", "CWE-89", "python", "p0", {"p0a", "p0b"}, {}, {}});
    set.scenarios.push_back(
        {"CWE-79 - 0", "CWE-79", "python", "p1", {"p1a", "p1b"}, {}, {}});
    return set;
}

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("sampling defaults match the case-study protocol") {
    SamplingParams p;
    CHECK(p.m == 25);
    CHECK(p.temperature == 0.2);
    CHECK(p.top_p == 0.95);
    CHECK(p.max_new_tokens == 1024);
}

TEST_CASE("sample_completions: m samples in index order, persisted first") {
    auto dir = fresh_dir("secexpo_arch1");
    RunArchive archive(dir);
    CountingClient client;
    SamplingParams params;
    params.m = 25;
    auto samples =
        sample_completions(&client, archive, "CWE-89 - 0", 0, "prompt", "model-x", params);
    REQUIRE(samples.size() == 25);
    for (int i = 0; i < 25; ++i) {
        CHECK(samples[i].key.sample_index == i);
        CHECK(fs::exists(archive.sample_path(samples[i].key)));
    }

    SUBCASE("replay serves the same samples with no client") {
        auto replay =
            sample_completions(nullptr, archive, "CWE-89 - 0", 0, "prompt", "model-x", params);
        REQUIRE(replay.size() == 25);
        CHECK(replay[7].raw_text == samples[7].raw_text);
    }
    SUBCASE("m=1 replay returns the single canned sample") {
        params.m = 1;
        auto one =
            sample_completions(nullptr, archive, "CWE-89 - 0", 0, "prompt", "model-x", params);
        REQUIRE(one.size() == 1);
        CHECK(one[0].raw_text == "echo: prompt");
    }
}

TEST_CASE("replay with a missing cell is an explicit error") {
    auto dir = fresh_dir("secexpo_arch2");
    RunArchive archive(dir);
    SamplingParams params;
    params.m = 1;
    CHECK_THROWS_WITH_AS(
        sample_completions(nullptr, archive, "CWE-89 - 0", 2, "p", "m", params),
        doctest::Contains("CWE-89 - 0/2"), DataError);
}

TEST_CASE("run_campaign: grid arithmetic and idempotence") {
    auto set = two_scenarios();
    SamplingParams params;
    params.m = 5;
    CHECK(plan_cells(set, params) == 30);  // 2 scenarios x 3 prompts x 5

    auto dir = fresh_dir("secexpo_arch3");
    RunArchive archive(dir);
    CountingClient client;
    auto summary = run_campaign(set, params, archive, &client, "model-x", 3);
    CHECK(summary.planned_samples == 30);
    CHECK(summary.fetched_samples == 30);
    CHECK(summary.completed_cells == 6);
    CHECK(summary.failed_cells.empty());
    CHECK(client.calls == 30);

    SUBCASE("rerun over a complete archive makes zero endpoint calls") {
        CountingClient fresh;
        RunArchive again(dir);
        auto rerun = run_campaign(set, params, again, &fresh, "model-x", 3);
        CHECK(fresh.calls == 0);
        CHECK(rerun.skipped_cells == 6);
        CHECK(rerun.fetched_samples == 0);
    }
    SUBCASE("full replay needs no client at all") {
        RunArchive again(dir);
        auto rerun = run_campaign(set, params, again, nullptr, "model-x", 1);
        CHECK(rerun.skipped_cells == 6);
    }
}

TEST_CASE("run_campaign: failing endpoint marks cells failed with coordinates") {
    auto set = two_scenarios();
    SamplingParams params;
    params.m = 2;
    auto dir = fresh_dir("secexpo_arch4");
    RunArchive archive(dir);
    CountingClient client;
    client.fail = true;
    auto summary = run_campaign(set, params, archive, &client, "model-x", 2);
    CHECK(summary.completed_cells == 0);
    REQUIRE(summary.failed_cells.size() == 6);
    CHECK(summary.failed_cells[0].find("HTTP 500") != std::string::npos);
    bool named = false;
    for (const auto& f : summary.failed_cells)
        if (f.find("CWE-89 - 0/1") != std::string::npos) named = true;
    CHECK(named);
    CHECK(archive.cell_status("CWE-89 - 0", 0) == CellStatus::Failed);
}

TEST_CASE("run_campaign: scenario digest mismatch is refused") {
    auto set = two_scenarios();
    SamplingParams params;
    params.m = 1;
    auto dir = fresh_dir("secexpo_arch5");
    RunArchive archive(dir);
    CountingClient client;
    run_campaign(set, params, archive, &client, "model-x", 1);

    auto other = set;
    other.digest = "d2-different";
    RunArchive again(dir);
    CHECK_THROWS_WITH_AS(run_campaign(other, params, again, &client, "model-x", 1),
                         doctest::Contains("different scenario set"), ConfigError);
}

TEST_CASE("prompt logprobs: cache idempotence and exact storage") {
    auto dir = fresh_dir("secexpo_arch6");
    RunArchive archive(dir);

    // fixture record: 10 tokens summing to -46.05
    PromptLogprobs fixture{"the prompt", "ref-model",
                           {-4.605, -4.605, -4.605, -4.605, -4.605, -4.605, -4.605,
                            -4.605, -4.605, -4.605}};
    archive.write_logprobs(fixture);
    auto first = score_prompt_logprobs(nullptr, archive, "the prompt", "ref-model");
    REQUIRE(first.token_logprobs.size() == 10);
    double sum = 0;
    for (double lp : first.token_logprobs) sum += lp;
    CHECK(sum == doctest::Approx(-46.05).epsilon(1e-12));

    CountingClient client;
    auto second = score_prompt_logprobs(&client, archive, "the prompt", "ref-model");
    CHECK(client.calls == 0);  // served from cache
    CHECK(second.token_logprobs == first.token_logprobs);

    // replay record with [-1,-1,-1]
    archive.write_logprobs({"p2", "ref-model", {-1, -1, -1}});
    CHECK(score_prompt_logprobs(nullptr, archive, "p2", "ref-model").token_logprobs.size() ==
          3);

    // uncached prompt in replay mode is an explicit error
    CHECK_THROWS_AS(score_prompt_logprobs(nullptr, archive, "unseen", "ref-model"),
                    DataError);
    CHECK_THROWS_AS(score_prompt_logprobs(nullptr, archive, "", "ref-model"), DataError);
}

TEST_CASE("cache key distinguishes reference models") {
    auto dir = fresh_dir("secexpo_arch7");
    RunArchive archive(dir);
    archive.write_logprobs({"p", "ref-a", {-1.0}});
    CHECK_THROWS_AS(score_prompt_logprobs(nullptr, archive, "p", "ref-b"), DataError);
    CHECK(score_prompt_logprobs(nullptr, archive, "p", "ref-a").token_logprobs ==
          std::vector<double>{-1.0});
}

TEST_CASE("collect_samples is ordered by (scenario, reformulation, sample)") {
    auto set = two_scenarios();
    SamplingParams params;
    params.m = 2;
    auto dir = fresh_dir("secexpo_arch8");
    RunArchive archive(dir);
    CountingClient client;
    run_campaign(set, params, archive, &client, "model-x", 4);
    auto samples = collect_samples(set, params, archive);
    REQUIRE(samples.size() == 12);
    for (size_t i = 1; i < samples.size(); ++i) {
        bool same_scenario = samples[i - 1].key.scenario_id == samples[i].key.scenario_id;
        if (same_scenario) CHECK(samples[i - 1].key < samples[i].key);
    }
}
