// Command-line front-end for the exposure-scoring harness.
//
// Subcommands: severity, run, analyze, score, report, reformulate.
// Exit codes: 0 success, 2 config error, 3 data/validation error,
// 4 external-tool error, 5 partial campaign.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "secexpo/analysis.hpp"
#include "secexpo/client.hpp"
#include "secexpo/config.hpp"
#include "secexpo/report.hpp"
#include "secexpo/sampler.hpp"
#include "secexpo/scenarios.hpp"
#include "secexpo/scoring.hpp"
#include "secexpo/severity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::string config_path = "secexpo.json";
    bool replay = false;
    double base_override = 0.0;  // 0 = use config
    std::string out_dir = "out";
};

secexpo::HarnessConfig load_and_validate(const GlobalOpts& g) {
    auto config = secexpo::load_config(g.config_path);
    if (g.base_override > 0.0) config.base = g.base_override;
    secexpo::validate_config(config);
    return config;
}

std::unique_ptr<secexpo::ValidityChecker> make_checker(const secexpo::HarnessConfig& c) {
    if (c.validity.kind == "command")
        return std::make_unique<secexpo::CommandValidityChecker>(
            c.validity.command, c.validity.extension, c.validity.timeout_s);
    return secexpo::make_python_syntax_checker(c.validity.timeout_s);
}

std::unique_ptr<secexpo::Detector> make_detector(const secexpo::HarnessConfig& c) {
    if (c.detector.kind == "command")
        return std::make_unique<secexpo::CommandDetector>(
            c.detector.command, c.validity.extension, c.detector.timeout_s);
    return std::make_unique<secexpo::BuiltinRuleDetector>();
}

secexpo::CweSeverityTable build_table(const secexpo::HarnessConfig& config,
                                      const std::set<std::string>& cwes) {
    const auto& sev = config.severity;
    if (sev.source == "table") {
        std::ifstream in(sev.table_file);
        return secexpo::severity_table_from_json(json::parse(in));
    }
    const std::map<std::string, double>* fallback =
        sev.use_fallback ? &secexpo::default_severity_fallback() : nullptr;
    std::vector<secexpo::CveRecord> records;
    std::string digest = "fallback-only";
    if (sev.source == "cve") {
        std::ifstream in(sev.cve_file, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        digest = secexpo::digest_hex(buf.str());
        std::istringstream stream(buf.str());
        auto parsed =
            secexpo::parse_cve_records(stream, secexpo::parse_cve_format(sev.cve_format));
        for (const auto& d : parsed.diagnostics) std::cerr << "cve: " << d << "\n";
        records = secexpo::filter_records(parsed.records, sev.date_range);
    }
    auto table = secexpo::build_severity_table(records, config.base, cwes, fallback);
    table.date_range = sev.date_range;
    table.source_digest = digest;
    return table;
}

std::set<std::string> scenario_cwes(const secexpo::HarnessConfig& config) {
    if (!config.scenario_file.empty()) {
        auto set = secexpo::load_scenarios(config.scenario_file);
        std::set<std::string> cwes;
        for (const auto& s : set.scenarios) cwes.insert(s.target_cwe);
        return cwes;
    }
    std::set<std::string> cwes;
    for (const auto& [cwe, _] : secexpo::default_severity_fallback()) cwes.insert(cwe);
    return cwes;
}

int cmd_severity(const GlobalOpts& g) {
    auto config = load_and_validate(g);
    auto table = build_table(config, scenario_cwes(config));
    fs::create_directories(g.out_dir);
    auto path = fs::path(g.out_dir) / "severity.json";
    std::ofstream out(path, std::ios::binary);
    out << secexpo::severity_table_to_json(table).dump(2) << "\n";
    for (const auto& [cwe, e] : table.entries)
        std::cout << cwe << " " << std::fixed << std::setprecision(1) << e.severity
                  << " (n=" << e.sample_count << ")\n";
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_run(const GlobalOpts& g, bool dry_run) {
    auto config = load_and_validate(g);
    if (config.scenario_file.empty())
        throw secexpo::ConfigError("run: scenario_file is required");
    auto scenarios = secexpo::load_scenarios(config.scenario_file);
    if (dry_run) {
        long cells = secexpo::plan_cells(scenarios, config.sampling);
        std::cout << "planned cells: " << scenarios.scenarios.size() << " scenarios -> "
                  << cells << " samples\n";
        return 0;
    }
    secexpo::RunArchive archive(config.archive_dir());
    std::unique_ptr<secexpo::HttpCompletionClient> client;
    if (!g.replay)
        client = std::make_unique<secexpo::HttpCompletionClient>(config.endpoint);
    auto summary = secexpo::run_campaign(scenarios, config.sampling, archive,
                                         client.get(), config.model_id,
                                         config.endpoint_concurrency);
    std::cout << "completed cells: " << summary.completed_cells
              << ", skipped: " << summary.skipped_cells
              << ", fetched samples: " << summary.fetched_samples << "/"
              << summary.planned_samples << "\n";
    if (!summary.failed_cells.empty()) {
        for (const auto& f : summary.failed_cells) std::cerr << "failed: " << f << "\n";
        return 5;
    }
    return 0;
}

int cmd_analyze(const GlobalOpts& g, const std::string& sarif_path,
                const std::string& rule_map_path, const std::string& workspace_dir) {
    auto config = load_and_validate(g);
    if (config.scenario_file.empty())
        throw secexpo::ConfigError("analyze: scenario_file is required");
    auto scenarios = secexpo::load_scenarios(config.scenario_file);
    secexpo::RunArchive archive(config.archive_dir());
    fs::create_directories(g.out_dir);

    if (!workspace_dir.empty()) {
        auto mapping = secexpo::write_analysis_workspace(scenarios, config.sampling,
                                                         archive, workspace_dir);
        std::cout << "exported " << mapping.size() << " snippets to " << workspace_dir
                  << "\n";
        return 0;
    }

    auto checker = make_checker(config);
    std::vector<secexpo::SnippetVerdict> verdicts;

    if (!sarif_path.empty()) {
        // Validity-only base pass, then SARIF deltas on top.
        struct NullDetector : secexpo::Detector {
            const char* id() const override { return "sarif"; }
            secexpo::DetectionResult detect(const std::string&, const std::string&) override {
                return {};
            }
        } null_detector;
        auto report = secexpo::analyze_archive(scenarios, config.sampling, archive,
                                               *checker, null_detector,
                                               config.analysis_workers);
        for (const auto& e : report.errors) std::cerr << "excluded: " << e << "\n";

        std::map<std::string, secexpo::SampleKey> mapping;
        for (const auto& s : scenarios.scenarios) {
            auto ext = secexpo::language_extension(s.language);
            for (size_t ri = 0; ri < s.prompt_count(); ++ri)
                for (long k = 0; k < config.sampling.m; ++k)
                    mapping[s.scenario_id + "/" + std::to_string(ri) + "/" +
                            std::to_string(k) + "." + ext] =
                        secexpo::SampleKey{s.scenario_id, static_cast<int>(ri),
                                           static_cast<int>(k)};
        }
        std::map<std::string, std::string> rule_map;
        if (!rule_map_path.empty()) {
            std::ifstream in(rule_map_path);
            if (!in) throw secexpo::ConfigError("cannot read rule map: " + rule_map_path);
            json map_doc = json::parse(in);
            for (const auto& [rule, cwe] : map_doc.items())
                rule_map[rule] = cwe.get<std::string>();
        }
        std::map<std::string, std::string> targets;
        for (const auto& s : scenarios.scenarios) targets[s.scenario_id] = s.target_cwe;
        std::ifstream sin(sarif_path);
        if (!sin) throw secexpo::ToolError("cannot read SARIF file: " + sarif_path);
        auto ingestion = secexpo::ingest_sarif(json::parse(sin), mapping, rule_map, targets);
        for (const auto& d : ingestion.diagnostics) std::cerr << "sarif: " << d << "\n";
        verdicts = secexpo::merge_verdicts(std::move(report.verdicts), ingestion.deltas);
    } else {
        auto detector = make_detector(config);
        auto report = secexpo::analyze_archive(scenarios, config.sampling, archive,
                                               *checker, *detector,
                                               config.analysis_workers);
        for (const auto& e : report.errors) std::cerr << "excluded: " << e << "\n";
        verdicts = std::move(report.verdicts);
    }

    if (verdicts.empty())
        std::cerr << "warning: archive produced zero verdicts\n";
    auto path = fs::path(g.out_dir) / "verdicts.jsonl";
    secexpo::write_verdicts(verdicts, path);
    long valid = 0, vulnerable = 0;
    for (const auto& v : verdicts) {
        valid += v.valid;
        vulnerable += v.vulnerable;
    }
    std::cout << "verdicts: " << verdicts.size() << " (valid " << valid << ", vulnerable "
              << vulnerable << ") -> " << path.string() << "\n";
    return 0;
}

int cmd_score(const GlobalOpts& g, const std::string& verdicts_path,
              const std::string& severity_path) {
    auto config = load_and_validate(g);
    if (config.scenario_file.empty())
        throw secexpo::ConfigError("score: scenario_file is required");
    auto scenarios = secexpo::load_scenarios(config.scenario_file);
    auto resolved_verdicts = verdicts_path.empty()
                                 ? (fs::path(g.out_dir) / "verdicts.jsonl").string()
                                 : verdicts_path;
    auto verdicts = secexpo::read_verdicts(resolved_verdicts);

    secexpo::CweSeverityTable table;
    if (!severity_path.empty()) {
        std::ifstream in(severity_path);
        if (!in) throw secexpo::ConfigError("cannot read severity table: " + severity_path);
        table = secexpo::severity_table_from_json(json::parse(in));
    } else {
        std::set<std::string> cwes;
        for (const auto& s : scenarios.scenarios) cwes.insert(s.target_cwe);
        table = build_table(config, cwes);
    }

    secexpo::RunArchive archive(config.archive_dir());
    std::unique_ptr<secexpo::HttpCompletionClient> client;
    if (!g.replay)
        client = std::make_unique<secexpo::HttpCompletionClient>(config.endpoint);
    auto logprobs = [&](const std::string& prompt) {
        return secexpo::score_prompt_logprobs(client.get(), archive, prompt,
                                              config.reference_model_id)
            .token_logprobs;
    };

    auto doc = secexpo::compute_scores(scenarios, verdicts, table, logprobs, config.base,
                                       config.likelihood, config.model_id);
    doc.config_digest = config.resolved_digest;

    fs::create_directories(g.out_dir);
    fs::path out_dir(g.out_dir);
    {
        std::ofstream out(out_dir / "scores.json", std::ios::binary);
        out << secexpo::score_document_to_json(doc).dump(2) << "\n";
    }
    auto bundle = secexpo::make_bundle({doc});
    std::ofstream(out_dir / "exposure.md", std::ios::binary)
        << secexpo::render_exposure_table(bundle, secexpo::ReportFormat::Markdown);
    std::ofstream(out_dir / "exposure.csv", std::ios::binary)
        << secexpo::render_exposure_table(bundle, secexpo::ReportFormat::Csv);
    std::ofstream(out_dir / "naive.md", std::ios::binary)
        << secexpo::render_naive_table(bundle, secexpo::ReportFormat::Markdown);
    std::ofstream(out_dir / "naive.csv", std::ios::binary)
        << secexpo::render_naive_table(bundle, secexpo::ReportFormat::Csv);
    std::ofstream(out_dir / "py_distribution.csv", std::ios::binary)
        << secexpo::export_py_distribution(bundle);
    std::cout << "ME = " << std::fixed << std::setprecision(4) << doc.me
              << ", naive fraction = " << doc.naive_fraction << " -> "
              << (out_dir / "scores.json").string() << "\n";
    return 0;
}

int cmd_report(const GlobalOpts& g, const std::vector<std::string>& score_files,
               const std::string& format_name) {
    std::vector<secexpo::ScoreDocument> docs;
    for (const auto& f : score_files) {
        std::ifstream in(f);
        if (!in) throw secexpo::ConfigError("cannot read score file: " + f);
        docs.push_back(secexpo::score_document_from_json(json::parse(in)));
    }
    auto bundle = secexpo::make_bundle(std::move(docs));
    auto format = secexpo::parse_report_format(format_name);
    fs::create_directories(g.out_dir);
    auto ext = format == secexpo::ReportFormat::Markdown
                   ? "md"
                   : (format == secexpo::ReportFormat::Csv ? "csv" : "json");
    std::ofstream(fs::path(g.out_dir) / (std::string("exposure.") + ext), std::ios::binary)
        << secexpo::render_exposure_table(bundle, format);
    std::ofstream(fs::path(g.out_dir) / (std::string("naive.") + ext), std::ios::binary)
        << secexpo::render_naive_table(bundle, format);
    std::ofstream(fs::path(g.out_dir) / "py_distribution.csv", std::ios::binary)
        << secexpo::export_py_distribution(bundle);
    std::cout << "wrote exposure." << ext << ", naive." << ext
              << ", py_distribution.csv in " << g.out_dir << "\n";
    return 0;
}

int cmd_reformulate(const GlobalOpts& g, const std::string& scenario_id, long n,
                    const std::string& template_text) {
    auto config = load_and_validate(g);
    if (g.replay)
        throw secexpo::ConfigError("reformulate requires network mode (no --replay)");
    if (config.scenario_file.empty())
        throw secexpo::ConfigError("reformulate: scenario_file is required");
    auto scenarios = secexpo::load_scenarios(config.scenario_file);
    secexpo::HttpCompletionClient client(config.endpoint);
    bool found = false;
    for (auto& s : scenarios.scenarios) {
        if (s.scenario_id != scenario_id) continue;
        found = true;
        auto extra = secexpo::generate_reformulations(s, client, config.model_id, n,
                                                      template_text);
        s.reformulations.insert(s.reformulations.end(), extra.begin(), extra.end());
    }
    if (!found) throw secexpo::DataError("no such scenario: " + scenario_id);
    // Written back to the scenario file so downstream runs are reproducible.
    secexpo::save_scenarios(scenarios, config.scenario_file);
    std::cout << "updated " << config.scenario_file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Security exposure scoring harness for code-generating LLMs"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "Path to harness config JSON");
    app.add_flag("--replay", g.replay, "Forbid network; serve everything from the archive");
    app.add_option("--base", g.base_override, "Override exponential base b");
    app.add_option("--out", g.out_dir, "Output directory");

    auto* severity = app.add_subcommand("severity", "Build the per-CWE severity table");

    bool dry_run = false;
    auto* run = app.add_subcommand("run", "Run (or resume) the sampling campaign");
    run->add_flag("--dry-run", dry_run, "Print the planned cell count and exit");

    std::string sarif_path, rule_map_path, workspace_dir;
    auto* analyze = app.add_subcommand("analyze", "Produce per-sample verdicts");
    analyze->add_option("--sarif", sarif_path, "Ingest a SARIF 2.1.0 report");
    analyze->add_option("--rule-map", rule_map_path, "JSON map rule-id -> CWE id");
    analyze->add_option("--export-workspace", workspace_dir,
                        "Write snippets for an out-of-band analyzer and exit");

    std::string verdicts_path, severity_path;
    auto* score = app.add_subcommand("score", "Compute PE/ME and render reports");
    score->add_option("--verdicts", verdicts_path,
                      "Verdicts JSONL file (default: <out>/verdicts.jsonl)");
    score->add_option("--severity-table", severity_path, "Severity table JSON file");

    std::vector<std::string> score_files;
    std::string report_format = "markdown";
    auto* report = app.add_subcommand("report", "Render comparison tables");
    report->add_option("--scores", score_files, "Score JSON files (one per model)")
        ->required();
    report->add_option("--format", report_format, "markdown | csv | json");

    std::string reform_id, reform_template =
        "Rewrite the following coding instruction in different words, keeping the exact "
        "same meaning. Reply with the rewritten instruction only.\n\n{prompt}";
    long reform_n = 10;
    auto* reformulate =
        app.add_subcommand("reformulate", "Generate and store prompt reformulations");
    reformulate->add_option("--scenario-id", reform_id, "Scenario to reformulate")->required();
    reformulate->add_option("--n", reform_n, "Number of reformulations");
    reformulate->add_option("--template", reform_template, "Request template with {prompt}");

    CLI11_PARSE(app, argc, argv);

    try {
        if (severity->parsed()) return cmd_severity(g);
        if (run->parsed()) return cmd_run(g, dry_run);
        if (analyze->parsed()) return cmd_analyze(g, sarif_path, rule_map_path, workspace_dir);
        if (score->parsed()) return cmd_score(g, verdicts_path, severity_path);
        if (report->parsed()) return cmd_report(g, score_files, report_format);
        if (reformulate->parsed())
            return cmd_reformulate(g, reform_id, reform_n, reform_template);
    } catch (const secexpo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const secexpo::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const secexpo::ToolError& e) {
        std::cerr << "tool error: " << e.what() << "\n";
        return 4;
    } catch (const secexpo::PartialError& e) {
        std::cerr << "partial result: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
