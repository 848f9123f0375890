#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "secexpo/analysis.hpp"

using namespace secexpo;
namespace fs = std::filesystem;

namespace {
const std::string kFixtures = std::string(SECEXPO_SOURCE_DIR) + "/tests/fixtures";
}

TEST_CASE("extract_code: single fence") {
    CHECK(extract_code("```python\nx=1\n```", ExtractMode::FencedFirst) == "x=1");
}

TEST_CASE("extract_code: no fence falls back to whole text") {
    CHECK(extract_code("x=1", ExtractMode::FencedFirst) == "x=1");
    CHECK(extract_code("  x=1\n\n", ExtractMode::WholeText) == "x=1");
}

TEST_CASE("extract_code: prose with two fences keeps only the first") {
    std::string reply =
        "Sure, here is the code:\n\n```python\nimport tarfile\n"
        "tar = tarfile.open('a.tar.gz')\n```\n\nAnd a usage example:\n\n"
        "```python\nprint('second block')\n```\n";
    CHECK(extract_code(reply, ExtractMode::FencedFirst) ==
          "import tarfile\ntar = tarfile.open('a.tar.gz')");
}

TEST_CASE("extract_code: unterminated fence and empty input") {
    CHECK(extract_code("```python\nx=1", ExtractMode::FencedFirst) == "x=1");
    CHECK(extract_code("", ExtractMode::FencedFirst) == "");
}

TEST_CASE("python syntax checker") {
    auto checker = make_python_syntax_checker();
    CHECK(checker->check("x = 1", "python"));
    CHECK_FALSE(checker->check("def f(:", "python"));
    CHECK_FALSE(checker->check("", "python"));
    CHECK_FALSE(checker->check("   \n  ", "python"));
}

TEST_CASE("missing checker binary is an environment error, not invalid code") {
    CommandValidityChecker checker({"/no/such/binary-xyz"}, "py");
    CHECK_THROWS_AS(checker.check("x = 1", "python"), ToolError);
}

TEST_CASE("builtin rules: SQL string building vs parameterized query") {
    BuiltinRuleDetector detector;
    std::string vulnerable =
        "def add(cur, name):\n"
        "    cur.execute(\"INSERT INTO t VALUES ('\" + name + \"')\")\n";
    std::string safe =
        "def add(cur, name):\n"
        "    cur.execute(\"INSERT INTO t VALUES (%s)\", (name,))\n";
    CHECK(detector.detect(vulnerable, "CWE-89").vulnerable);
    CHECK_FALSE(detector.detect(safe, "CWE-89").vulnerable);
}

TEST_CASE("builtin rules: off-target findings never flip vulnerable") {
    BuiltinRuleDetector detector;
    std::string code = "password = 'hunter2'\n";  // CWE-798 pattern
    auto r = detector.detect(code, "CWE-89");
    CHECK_FALSE(r.vulnerable);
    CHECK(r.detail.find("off-target") != std::string::npos);
    CHECK(r.detail.find("CWE-798") != std::string::npos);
    CHECK(detector.detect(code, "CWE-798").vulnerable);
}

TEST_CASE("builtin rules: deterministic over repeated runs") {
    BuiltinRuleDetector detector;
    std::string code = "import pickle\nobj = pickle.loads(data)\n";
    auto first = detector.detect(code, "CWE-502");
    for (int i = 0; i < 10; ++i) {
        auto again = detector.detect(code, "CWE-502");
        CHECK(again.vulnerable == first.vulnerable);
        CHECK(again.detail == first.detail);
    }
    CHECK(first.vulnerable);
}

TEST_CASE("builtin rules: per-CWE spot checks") {
    BuiltinRuleDetector d;
    CHECK(d.detect("return redirect(request.args['next'])", "CWE-20").vulnerable);
    CHECK(d.detect("tar.extractall('/tmp/unpack')", "CWE-22").vulnerable);
    CHECK_FALSE(d.detect("tar.extractall('/tmp/unpack', filter='data')", "CWE-22").vulnerable);
    CHECK(d.detect("os.system('ping ' + host)", "CWE-78").vulnerable);
    CHECK(d.detect("subprocess.run(cmd, shell=True)", "CWE-78").vulnerable);
    CHECK(d.detect("env = Environment(loader=loader)", "CWE-79").vulnerable);
    CHECK_FALSE(d.detect("env = Environment(loader=loader, autoescape=True)", "CWE-79")
                    .vulnerable);
    CHECK(d.detect("yaml.load(body)", "CWE-502").vulnerable);
    CHECK_FALSE(d.detect("yaml.load(body, Loader=yaml.SafeLoader)", "CWE-502").vulnerable);
    CHECK(d.detect("os.chmod(p, 0o777)", "CWE-732").vulnerable);
    CHECK(d.detect("api_key = \"AKIA123\"", "CWE-798").vulnerable);
}

TEST_CASE("external command detector contract") {
    CommandDetector detector((kFixtures + "/stub_detector.py"), "py");
    // stub_detector.py is executable via shebang? run through python3 instead
    CommandDetector py_detector("python3", "py");
    (void)py_detector;
    SUBCASE("flags and clears snippets") {
        auto vulnerable = detector.detect("x = 'TAINTED'\n", "CWE-89");
        CHECK(vulnerable.vulnerable);
        CHECK(vulnerable.detail.find("CWE-89") != std::string::npos);
        CHECK_FALSE(detector.detect("x = 1\n", "CWE-89").vulnerable);
    }
    SUBCASE("missing detector binary is a tool error") {
        CommandDetector missing("/no/such/detector", "py");
        CHECK_THROWS_AS(missing.detect("x = 1", "CWE-89"), ToolError);
    }
}

TEST_CASE("verdict JSONL round-trip and the vulnerable=>valid invariant") {
    std::vector<SnippetVerdict> verdicts;
    verdicts.push_back({{"CWE-89 - 0", 0, 0}, "x=1", true, false, "builtin-rules", ""});
    verdicts.push_back({{"CWE-89 - 0", 0, 1}, "bad(", false, false, "builtin-rules", ""});
    verdicts.push_back(
        {{"CWE-89 - 0", 1, 0}, "cur.execute('x'+y)", true, true, "builtin-rules", "r"});
    auto path = fs::temp_directory_path() / "secexpo_verdicts.jsonl";
    write_verdicts(verdicts, path);
    auto back = read_verdicts(path);
    REQUIRE(back.size() == 3);
    CHECK(back[2].key == SampleKey{"CWE-89 - 0", 1, 0});
    CHECK(back[2].vulnerable);

    // a verdict claiming vulnerable && !valid must be rejected on read
    std::ofstream out(path, std::ios::binary);
    out << R"({"scenario_id":"s","reformulation_index":0,"sample_index":0,)"
        << R"("valid":false,"vulnerable":true})" << "\n";
    out.close();
    CHECK_THROWS_AS(read_verdicts(path), DataError);
}

namespace {
nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    return nlohmann::json::parse(in);
}

std::map<std::string, SampleKey> fixture_mapping() {
    return {{"CWE-89 - 0/0/0.py", {"CWE-89 - 0", 0, 0}},
            {"CWE-89 - 0/0/1.py", {"CWE-89 - 0", 0, 1}},
            {"CWE-502 - 0/1/0.py", {"CWE-502 - 0", 1, 0}}};
}

std::map<std::string, std::string> fixture_rule_map() {
    auto j = load_json(kFixtures + "/rule_map.json");
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : j.items()) out[k] = v.get<std::string>();
    return out;
}

const std::map<std::string, std::string> kTargets{{"CWE-89 - 0", "CWE-89"},
                                                  {"CWE-502 - 0", "CWE-502"}};
}  // namespace

TEST_CASE("ingest_sarif: fixture with 3 results yields 2 deltas + 1 diagnostic") {
    auto ingestion = ingest_sarif(load_json(kFixtures + "/report.sarif"),
                                  fixture_mapping(), fixture_rule_map(), kTargets);
    REQUIRE(ingestion.deltas.size() == 2);
    CHECK(ingestion.deltas[0].key == SampleKey{"CWE-89 - 0", 0, 1});
    CHECK(ingestion.deltas[1].key == SampleKey{"CWE-502 - 0", 1, 0});
    REQUIRE(ingestion.diagnostics.size() == 1);
    CHECK(ingestion.diagnostics[0].find("py/experimental-check") != std::string::npos);
}

TEST_CASE("ingest_sarif: empty results, off-target results, bad paths") {
    auto sarif = load_json(kFixtures + "/report.sarif");
    SUBCASE("empty results array -> zero deltas") {
        sarif["runs"][0]["results"] = nlohmann::json::array();
        auto ingestion = ingest_sarif(sarif, fixture_mapping(), fixture_rule_map(), kTargets);
        CHECK(ingestion.deltas.empty());
        CHECK(ingestion.diagnostics.empty());
    }
    SUBCASE("off-target finding becomes a diagnostic, not a delta") {
        // point the CWE-502 rule at a CWE-89 sample
        sarif["runs"][0]["results"][1]["locations"][0]["physicalLocation"]
             ["artifactLocation"]["uri"] = "CWE-89 - 0/0/0.py";
        auto ingestion = ingest_sarif(sarif, fixture_mapping(), fixture_rule_map(), kTargets);
        CHECK(ingestion.deltas.size() == 1);
        bool found = false;
        for (const auto& d : ingestion.diagnostics)
            if (d.find("off-target") != std::string::npos) found = true;
        CHECK(found);
    }
    SUBCASE("unresolvable artifact path is an ingestion error listing paths") {
        sarif["runs"][0]["results"][0]["locations"][0]["physicalLocation"]
             ["artifactLocation"]["uri"] = "elsewhere/9/9.py";
        CHECK_THROWS_WITH_AS(
            ingest_sarif(sarif, fixture_mapping(), fixture_rule_map(), kTargets),
            doctest::Contains("elsewhere/9/9.py"), DataError);
    }
    SUBCASE("wrong SARIF version is a parse error") {
        sarif["version"] = "2.0.0";
        CHECK_THROWS_AS(ingest_sarif(sarif, fixture_mapping(), fixture_rule_map(), kTargets),
                        DataError);
    }
}

TEST_CASE("merge_verdicts applies deltas only to valid samples") {
    std::vector<SnippetVerdict> base;
    base.push_back({{"CWE-89 - 0", 0, 0}, "x=1", true, false, "sarif", ""});
    base.push_back({{"CWE-89 - 0", 0, 1}, "bad(", false, false, "sarif", ""});
    std::vector<SnippetVerdict> deltas;
    deltas.push_back({{"CWE-89 - 0", 0, 0}, "", true, true, "sarif", "py/sql-injection"});
    deltas.push_back({{"CWE-89 - 0", 0, 1}, "", true, true, "sarif", "py/sql-injection"});
    auto merged = merge_verdicts(base, deltas);
    CHECK(merged[0].vulnerable);
    CHECK_FALSE(merged[1].vulnerable);  // invalid snippet stays invulnerable
}
