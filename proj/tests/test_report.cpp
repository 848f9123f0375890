#include <doctest.h>

#include "secexpo/report.hpp"

using namespace secexpo;

namespace {

ReformulationStats stats(const std::string& sid, int ri, double p, long valid,
                         long vulnerable) {
    ReformulationStats r;
    r.scenario_id = sid;
    r.reformulation_index = ri;
    r.p_vulnerable = p;
    r.likelihood = 0.5;
    r.valid_count = valid;
    r.vulnerable_count = vulnerable;
    return r;
}

ScoreDocument doc(const std::string& model,
                  const std::vector<std::pair<std::string, double>>& scenario_pes,
                  double me, double naive) {
    ScoreDocument d;
    d.model_id = model;
    d.me = me;
    d.naive_fraction = naive;
    for (const auto& [sid, pe] : scenario_pes) {
        ScenarioScore s;
        s.scenario_id = sid;
        s.severity = 7.5;
        s.pe = pe;
        s.per_reformulation = {stats(sid, 0, pe > 0 ? 1.0 : 0.0, 5, pe > 0 ? 5 : 0)};
        d.per_scenario.push_back(std::move(s));
    }
    return d;
}

}  // namespace

TEST_CASE("exposure table: two scenarios, two models, markdown") {
    auto bundle = make_bundle({doc("m1", {{"S-1", 5.4}, {"S-2", 0.0}}, 3.5, 0.25),
                               doc("m2", {{"S-1", 0.0}, {"S-2", 6.5}}, 4.5, 0.10)});
    auto md = render_exposure_table(bundle, ReportFormat::Markdown);
    CHECK(md ==
          "| Scenario | m1 | m2 |\n"
          "| --- | --- | --- |\n"
          "| S-1 | 5.4 | 0.0 |\n"
          "| S-2 | 0.0 | 6.5 |\n"
          "| **ME Score** | 3.5 | 4.5 |\n");
}

TEST_CASE("exposure table: CSV uses CRLF line endings and a final summary row") {
    auto bundle = make_bundle({doc("m1", {{"S-1", 5.44}}, 5.44, 1.0)});
    auto csv = render_exposure_table(bundle, ReportFormat::Csv);
    CHECK(csv == "scenario,m1\r\nS-1,5.4\r\nME Score,5.4\r\n");
}

TEST_CASE("exposure table: model id with comma is quoted in CSV") {
    auto bundle = make_bundle({doc("model, tuned", {{"S-1", 1.0}}, 1.0, 0.1)});
    auto csv = render_exposure_table(bundle, ReportFormat::Csv);
    CHECK(csv.find("\"model, tuned\"") != std::string::npos);
}

TEST_CASE("exposure table: a model missing a scenario renders a gap, not a zero") {
    auto bundle = make_bundle({doc("full", {{"S-1", 2.0}, {"S-2", 3.0}}, 2.6, 0.2),
                               doc("partial", {{"S-1", 1.0}}, 1.0, 0.1)});
    auto md = render_exposure_table(bundle, ReportFormat::Markdown);
    CHECK(md.find("| S-2 | 3.0 | \xE2\x80\x94 |") != std::string::npos);  // em dash
    auto csv = render_exposure_table(bundle, ReportFormat::Csv);
    CHECK(csv.find("S-2,3.0,\r\n") != std::string::npos);
    auto json_rows = nlohmann::json::parse(
        render_exposure_table(bundle, ReportFormat::Json));
    CHECK(json_rows[1]["partial"].is_null());
    CHECK(json_rows[1]["full"] == doctest::Approx(3.0));
    CHECK(json_rows.back()["scenario_id"] == "ME Score");
}

TEST_CASE("naive table: two decimals, footnote for a zero-valid model") {
    auto empty = doc("hollow", {{"S-1", 0.0}}, 0.0, 0.0);
    empty.per_scenario[0].per_reformulation = {stats("S-1", 0, 0.0, 0, 0)};
    auto bundle = make_bundle({doc("solid", {{"S-1", 2.0}}, 2.0, 0.258620), empty});

    auto md = render_naive_table(bundle, ReportFormat::Markdown);
    CHECK(md ==
          "| solid | hollow |\n"
          "| --- | --- |\n"
          "| 0.26 | 0.00* |\n"
          "\n\\* no valid snippets\n");
    auto csv = render_naive_table(bundle, ReportFormat::Csv);
    CHECK(csv == "solid,hollow\r\n0.26,0.00*\r\n");
}

TEST_CASE("naive table: no footnote when every model has valid snippets") {
    auto bundle = make_bundle({doc("m1", {{"S-1", 2.0}}, 2.0, 0.5)});
    CHECK(render_naive_table(bundle, ReportFormat::Markdown).find("*") == std::string::npos);
}

TEST_CASE("P_y distribution export: long rows plus min/median/max block") {
    ScoreDocument d;
    d.model_id = "m";
    ScenarioScore s;
    s.scenario_id = "S-1";
    s.severity = 7.5;
    s.per_reformulation = {stats("S-1", 0, 1.0, 5, 5), stats("S-1", 1, 0.0, 5, 0),
                           stats("S-1", 2, 0.5, 4, 2)};
    s.pe = 1.0;
    d.per_scenario.push_back(s);
    auto csv = export_py_distribution(make_bundle({d}));
    CHECK(csv.find("model,scenario_id,reformulation_index,p_y\r\n") == 0);
    CHECK(csv.find("m,S-1,0,1.000000\r\n") != std::string::npos);
    CHECK(csv.find("m,S-1,1,0.000000\r\n") != std::string::npos);
    CHECK(csv.find("m,S-1,2,0.500000\r\n") != std::string::npos);
    // the same scenario holds both extremes; the summary shows the spread
    CHECK(csv.find("m,S-1,0.000000,0.500000,1.000000\r\n") != std::string::npos);
}

TEST_CASE("rendering is deterministic") {
    auto bundle = make_bundle({doc("m1", {{"S-1", 5.4}, {"S-2", 0.0}}, 3.5, 0.25)});
    CHECK(render_exposure_table(bundle, ReportFormat::Markdown) ==
          render_exposure_table(bundle, ReportFormat::Markdown));
    CHECK(export_py_distribution(bundle) == export_py_distribution(bundle));
}

TEST_CASE("report format parsing and empty bundles") {
    CHECK(parse_report_format("md") == ReportFormat::Markdown);
    CHECK(parse_report_format("markdown") == ReportFormat::Markdown);
    CHECK(parse_report_format("csv") == ReportFormat::Csv);
    CHECK(parse_report_format("json") == ReportFormat::Json);
    CHECK_THROWS_AS(parse_report_format("tsv"), ConfigError);
    CHECK_THROWS_AS(make_bundle({}), DataError);
}

TEST_CASE("score document JSON round-trips") {
    auto d = doc("m1", {{"S-1", 5.4}, {"S-2", 0.0}}, 3.5, 0.25);
    d.config_digest = "abc123";
    auto back = score_document_from_json(score_document_to_json(d));
    CHECK(back.model_id == d.model_id);
    CHECK(back.me == d.me);
    CHECK(back.naive_fraction == d.naive_fraction);
    CHECK(back.config_digest == "abc123");
    REQUIRE(back.per_scenario.size() == 2);
    CHECK(back.per_scenario[0].pe == d.per_scenario[0].pe);
    CHECK(back.per_scenario[0].per_reformulation[0].p_vulnerable == 1.0);
    CHECK(back.per_scenario[0].per_reformulation[0].valid_count == 5);
}
