// CVE ingestion and per-CWE representative CVSS-B severity computation.
#pragma once

#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "secexpo/common.hpp"
#include "secexpo/metrics.hpp"

namespace secexpo {

enum class CvssVersion { v2, v30, v31, v40 };

inline CvssVersion parse_cvss_version(const std::string& s) {
    if (s == "v2" || s == "2.0") return CvssVersion::v2;
    if (s == "v3.0" || s == "3.0") return CvssVersion::v30;
    if (s == "v3.1" || s == "3.1") return CvssVersion::v31;
    if (s == "v4.0" || s == "4.0") return CvssVersion::v40;
    throw DataError("unknown CVSS version: '" + s + "'");
}

inline const char* cvss_version_name(CvssVersion v) {
    switch (v) {
        case CvssVersion::v2: return "v2";
        case CvssVersion::v30: return "v3.0";
        case CvssVersion::v31: return "v3.1";
        case CvssVersion::v40: return "v4.0";
    }
    return "?";
}

struct CveRecord {
    std::string cve_id;
    std::vector<std::string> cwe_ids;
    double cvss_score = 0.0;
    CvssVersion cvss_version = CvssVersion::v31;
    Date published;
};

struct CveParseResult {
    std::vector<CveRecord> records;
    std::vector<std::string> diagnostics;  // one entry per rejected record
};

enum class CveFormat { SimpleJsonl, NvdFeed };

inline CveFormat parse_cve_format(const std::string& s) {
    if (s == "simple-jsonl") return CveFormat::SimpleJsonl;
    if (s == "nvd-feed") return CveFormat::NvdFeed;
    throw ConfigError("unknown CVE format tag: '" + s + "'");
}

namespace detail {

inline CveRecord record_from_simple(const nlohmann::json& j) {
    CveRecord r;
    r.cve_id = j.at("cve_id").get<std::string>();
    const auto& cwe = j.at("cwe");
    if (cwe.is_array())
        for (const auto& c : cwe) r.cwe_ids.push_back(c.get<std::string>());
    else
        r.cwe_ids.push_back(cwe.get<std::string>());
    for (const auto& c : r.cwe_ids)
        if (!is_cwe_id(c)) throw DataError("bad CWE id: '" + c + "'");
    r.cvss_score = j.at("cvss").get<double>();
    if (!(r.cvss_score >= 0.0 && r.cvss_score <= 10.0))
        throw DataError("cvss out of [0,10]: " + std::to_string(r.cvss_score));
    r.cvss_version = parse_cvss_version(j.at("version").get<std::string>());
    r.published = parse_date(j.at("published").get<std::string>());
    return r;
}

// NVD API 2.0 vulnerability object. Reads only id, weaknesses, base score,
// version, and published date.
inline std::optional<CveRecord> record_from_nvd(const nlohmann::json& vuln,
                                                std::vector<std::string>& diagnostics) {
    const auto& cve = vuln.at("cve");
    CveRecord r;
    r.cve_id = cve.at("id").get<std::string>();
    if (cve.contains("weaknesses"))
        for (const auto& w : cve["weaknesses"])
            for (const auto& d : w.value("description", nlohmann::json::array())) {
                auto v = d.value("value", std::string());
                if (is_cwe_id(v)) r.cwe_ids.push_back(v);
            }
    if (r.cwe_ids.empty()) {
        diagnostics.push_back(r.cve_id + ": no CWE mapping, dropped");
        return std::nullopt;
    }
    const auto& metrics = cve.value("metrics", nlohmann::json::object());
    bool scored = false;
    for (auto [key, ver] : {std::pair{"cvssMetricV40", CvssVersion::v40},
                            std::pair{"cvssMetricV31", CvssVersion::v31},
                            std::pair{"cvssMetricV30", CvssVersion::v30},
                            std::pair{"cvssMetricV2", CvssVersion::v2}}) {
        if (metrics.contains(key) && !metrics[key].empty()) {
            r.cvss_score = metrics[key][0].at("cvssData").at("baseScore").get<double>();
            r.cvss_version = ver;
            scored = true;
            break;
        }
    }
    if (!scored) {
        diagnostics.push_back(r.cve_id + ": no CVSS score, dropped");
        return std::nullopt;
    }
    if (!(r.cvss_score >= 0.0 && r.cvss_score <= 10.0))
        throw DataError(r.cve_id + ": cvss out of [0,10]");
    r.published = parse_date(cve.at("published").get<std::string>());
    return r;
}

}  // namespace detail

// Parses a CVE source. Malformed records become diagnostics; a stream that is
// mostly malformed is treated as a wrong-format hard error.
inline CveParseResult parse_cve_records(std::istream& in, CveFormat format) {
    if (!in) throw ToolError("parse_cve_records: unreadable stream");
    CveParseResult out;
    if (format == CveFormat::SimpleJsonl) {
        std::string line;
        long lines = 0, bad = 0;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            ++lines;
            try {
                out.records.push_back(detail::record_from_simple(nlohmann::json::parse(line)));
            } catch (const std::exception& e) {
                ++bad;
                out.diagnostics.push_back("line " + std::to_string(lines) + ": " + e.what());
            }
        }
        if (lines > 0 && bad * 2 > lines)
            throw DataError("parse_cve_records: >50% malformed lines (" +
                            std::to_string(bad) + "/" + std::to_string(lines) +
                            "); wrong format?");
    } else {
        nlohmann::json feed;
        try {
            feed = nlohmann::json::parse(in);
        } catch (const std::exception& e) {
            throw DataError(std::string("parse_cve_records: malformed NVD feed: ") + e.what());
        }
        long total = 0, bad = 0;
        for (const auto& vuln : feed.value("vulnerabilities", nlohmann::json::array())) {
            ++total;
            try {
                if (auto r = detail::record_from_nvd(vuln, out.diagnostics))
                    out.records.push_back(std::move(*r));
            } catch (const std::exception& e) {
                ++bad;
                out.diagnostics.push_back("vulnerability " + std::to_string(total) + ": " + e.what());
            }
        }
        if (total > 0 && bad * 2 > total)
            throw DataError("parse_cve_records: >50% malformed NVD entries");
    }
    return out;
}

// Keeps records published inside the range, optionally restricted to a CWE set.
inline std::vector<CveRecord> filter_records(const std::vector<CveRecord>& records,
                                             const DateRange& range,
                                             const std::set<std::string>* cwes = nullptr) {
    if (range.end < range.start)
        throw ConfigError("filter_records: inverted date range");
    std::vector<CveRecord> out;
    for (const auto& r : records) {
        if (!range.contains(r.published)) continue;
        if (cwes) {
            bool hit = false;
            for (const auto& c : r.cwe_ids)
                if (cwes->count(c)) { hit = true; break; }
            if (!hit) continue;
        }
        out.push_back(r);
    }
    return out;
}

struct SeverityEntry {
    double severity = 0.0;
    long sample_count = 0;  // 0 marks a fallback value
};

struct CweSeverityTable {
    std::map<std::string, SeverityEntry> entries;
    double base = 2.0;
    DateRange date_range;
    std::string source_digest;

    const SeverityEntry& at(const std::string& cwe) const {
        auto it = entries.find(cwe);
        if (it == entries.end())
            throw DataError("no severity available for " + cwe);
        return it->second;
    }
};

// Representative CVSS-B scores from the shipped fallback table, used when a
// CWE has no CVE records of its own.
inline const std::map<std::string, double>& default_severity_fallback() {
    static const std::map<std::string, double> table = {
        {"CWE-20", 7.9},  {"CWE-22", 7.7},  {"CWE-78", 8.4},  {"CWE-79", 6.4},
        {"CWE-89", 7.5},  {"CWE-502", 8.8}, {"CWE-732", 7.7}, {"CWE-798", 8.6},
    };
    return table;
}

// Groups records per CWE (a multi-CWE record contributes to every bucket) and
// aggregates. A CWE with zero records needs a fallback or fails loudly.
inline CweSeverityTable build_severity_table(
    const std::vector<CveRecord>& records, double base,
    const std::set<std::string>& cwes,
    const std::map<std::string, double>* fallback = nullptr) {
    if (!(base > 1.0)) throw ConfigError("build_severity_table: base must be > 1");
    if (cwes.empty()) throw ConfigError("build_severity_table: empty CWE set");
    CweSeverityTable table;
    table.base = base;
    for (const auto& cwe : cwes) {
        std::vector<double> scores;
        for (const auto& r : records)
            for (const auto& c : r.cwe_ids)
                if (c == cwe) { scores.push_back(r.cvss_score); break; }
        if (!scores.empty()) {
            table.entries[cwe] = {aggregate_cvss(scores, base),
                                  static_cast<long>(scores.size())};
        } else if (fallback && fallback->count(cwe)) {
            table.entries[cwe] = {fallback->at(cwe), 0};
        } else {
            throw DataError("build_severity_table: no CVE records and no fallback for " + cwe);
        }
    }
    return table;
}

inline nlohmann::json severity_table_to_json(const CweSeverityTable& table) {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [cwe, e] : table.entries)
        entries[cwe] = {{"severity", e.severity}, {"count", e.sample_count}};
    return {{"entries", entries},
            {"metadata",
             {{"base", table.base},
              {"date_range",
               {format_date(table.date_range.start), format_date(table.date_range.end)}},
              {"source_digest", table.source_digest}}}};
}

inline CweSeverityTable severity_table_from_json(const nlohmann::json& j) {
    CweSeverityTable table;
    for (const auto& [cwe, e] : j.at("entries").items())
        table.entries[cwe] = {e.at("severity").get<double>(), e.at("count").get<long>()};
    const auto& meta = j.at("metadata");
    table.base = meta.at("base").get<double>();
    table.date_range = {parse_date(meta.at("date_range")[0].get<std::string>()),
                        parse_date(meta.at("date_range")[1].get<std::string>())};
    table.source_digest = meta.value("source_digest", std::string());
    return table;
}

}  // namespace secexpo
