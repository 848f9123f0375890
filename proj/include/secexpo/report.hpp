// Rendering of exposure scores into markdown, CSV (RFC 4180), and JSON
// tables, plus the long-format P_y distribution export.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "secexpo/common.hpp"
#include "secexpo/scoring.hpp"

namespace secexpo {

enum class ReportFormat { Markdown, Csv, Json };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "markdown" || s == "md") return ReportFormat::Markdown;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    throw ConfigError("unknown report format: '" + s + "'");
}

// Scores for several models over one scenario set. Cells a model lacks are
// rendered as explicit gaps, never zeros.
struct ReportBundle {
    std::vector<std::string> scenario_order;
    std::vector<ScoreDocument> models;
};

inline ReportBundle make_bundle(std::vector<ScoreDocument> docs) {
    if (docs.empty()) throw DataError("report bundle is empty");
    ReportBundle bundle;
    for (const auto& s : docs.front().per_scenario)
        bundle.scenario_order.push_back(s.scenario_id);
    bundle.models = std::move(docs);
    return bundle;
}

namespace detail {

inline std::string fixed(double v, int decimals) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline std::optional<double> find_pe(const ScoreDocument& doc, const std::string& sid) {
    for (const auto& s : doc.per_scenario)
        if (s.scenario_id == sid) return s.pe;
    return std::nullopt;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace detail

// PE per scenario, one column per model, final "ME Score" row. One decimal.
inline std::string render_exposure_table(const ReportBundle& bundle, ReportFormat format) {
    if (bundle.models.empty()) throw DataError("render_exposure_table: empty bundle");
    if (format == ReportFormat::Json) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& sid : bundle.scenario_order) {
            nlohmann::json row = {{"scenario_id", sid}};
            for (const auto& m : bundle.models) {
                auto pe = detail::find_pe(m, sid);
                row[m.model_id] =
                    pe ? nlohmann::json(std::stod(detail::fixed(*pe, 1))) : nlohmann::json();
            }
            rows.push_back(row);
        }
        nlohmann::json me = {{"scenario_id", "ME Score"}};
        for (const auto& m : bundle.models)
            me[m.model_id] = std::stod(detail::fixed(m.me, 1));
        rows.push_back(me);
        return rows.dump(2) + "\n";
    }

    bool md = format == ReportFormat::Markdown;
    std::string out;
    auto emit_row = [&](const std::vector<std::string>& cells) {
        if (md) {
            out += "|";
            for (const auto& c : cells) out += " " + c + " |";
            out += "\n";
        } else {
            for (size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ",";
                out += detail::csv_field(cells[i]);
            }
            out += "\r\n";
        }
    };
    std::vector<std::string> header{md ? "Scenario" : "scenario"};
    for (const auto& m : bundle.models) header.push_back(m.model_id);
    emit_row(header);
    if (md) {
        std::vector<std::string> sep(header.size(), "---");
        emit_row(sep);
    }
    for (const auto& sid : bundle.scenario_order) {
        std::vector<std::string> row{sid};
        for (const auto& m : bundle.models) {
            auto pe = detail::find_pe(m, sid);
            row.push_back(pe ? detail::fixed(*pe, 1) : (md ? "—" : ""));
        }
        emit_row(row);
    }
    std::vector<std::string> me_row{md ? "**ME Score**" : "ME Score"};
    for (const auto& m : bundle.models) me_row.push_back(detail::fixed(m.me, 1));
    emit_row(me_row);
    return out;
}

// One row of campaign-wide vulnerable/valid fractions, two decimals. A model
// with zero valid snippets gets a footnote marker.
inline std::string render_naive_table(const ReportBundle& bundle, ReportFormat format) {
    if (bundle.models.empty()) throw DataError("render_naive_table: empty bundle");
    bool any_zero_valid = false;
    for (const auto& m : bundle.models) {
        long valid = 0;
        for (const auto& s : m.per_scenario)
            for (const auto& r : s.per_reformulation) valid += r.valid_count;
        if (valid == 0) any_zero_valid = true;
    }
    auto cell = [&](const ScoreDocument& m) {
        long valid = 0;
        for (const auto& s : m.per_scenario)
            for (const auto& r : s.per_reformulation) valid += r.valid_count;
        std::string v = detail::fixed(m.naive_fraction, 2);
        if (valid == 0) v += "*";
        return v;
    };
    if (format == ReportFormat::Json) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& m : bundle.models)
            row[m.model_id] = std::stod(detail::fixed(m.naive_fraction, 2));
        return row.dump(2) + "\n";
    }
    bool md = format == ReportFormat::Markdown;
    std::string out;
    if (md) {
        out += "|";
        for (const auto& m : bundle.models) out += " " + m.model_id + " |";
        out += "\n|";
        for (size_t i = 0; i < bundle.models.size(); ++i) out += " --- |";
        out += "\n|";
        for (const auto& m : bundle.models) out += " " + cell(m) + " |";
        out += "\n";
        if (any_zero_valid) out += "\n\\* no valid snippets\n";
    } else {
        for (size_t i = 0; i < bundle.models.size(); ++i) {
            if (i) out += ",";
            out += detail::csv_field(bundle.models[i].model_id);
        }
        out += "\r\n";
        for (size_t i = 0; i < bundle.models.size(); ++i) {
            if (i) out += ",";
            out += cell(bundle.models[i]);
        }
        out += "\r\n";
    }
    return out;
}

// Long-format P_y rows for external plotting, with a per-(model, scenario)
// min/median/max summary block at the end.
inline std::string export_py_distribution(const ReportBundle& bundle) {
    std::string out = "model,scenario_id,reformulation_index,p_y\r\n";
    for (const auto& m : bundle.models)
        for (const auto& s : m.per_scenario)
            for (const auto& r : s.per_reformulation)
                out += detail::csv_field(m.model_id) + "," + detail::csv_field(s.scenario_id) +
                       "," + std::to_string(r.reformulation_index) + "," +
                       detail::fixed(r.p_vulnerable, 6) + "\r\n";
    out += "\r\nmodel,scenario_id,min,median,max\r\n";
    for (const auto& m : bundle.models)
        for (const auto& s : m.per_scenario) {
            std::vector<double> ps;
            for (const auto& r : s.per_reformulation) ps.push_back(r.p_vulnerable);
            std::sort(ps.begin(), ps.end());
            double median = ps.size() % 2 ? ps[ps.size() / 2]
                                          : (ps[ps.size() / 2 - 1] + ps[ps.size() / 2]) / 2.0;
            out += detail::csv_field(m.model_id) + "," + detail::csv_field(s.scenario_id) +
                   "," + detail::fixed(ps.front(), 6) + "," + detail::fixed(median, 6) + "," +
                   detail::fixed(ps.back(), 6) + "\r\n";
        }
    return out;
}

}  // namespace secexpo
