// Shared error types, dates, and small utilities used across the harness.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace secexpo {

// Error categories map 1:1 onto CLI exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ToolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PartialError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Calendar date, no timezone. Good enough for CVE publication filtering.
struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    friend auto operator<=>(const Date&, const Date&) = default;
};

// Parses "YYYY-MM-DD" (a leading prefix of an ISO-8601 timestamp also works).
inline Date parse_date(std::string_view s) {
    auto bad = [&] { throw DataError("invalid date: '" + std::string(s) + "'"); };
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') bad();
    auto num = [&](size_t pos, size_t len) {
        int v = 0;
        for (size_t i = pos; i < pos + len; ++i) {
            if (s[i] < '0' || s[i] > '9') bad();
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    Date d{num(0, 4), num(5, 2), num(8, 2)};
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) bad();
    return d;
}

inline std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

struct DateRange {
    Date start;
    Date end;

    bool contains(const Date& d) const { return start <= d && d <= end; }
};

// FNV-1a 64-bit. Used for content digests in manifests and caches; not
// security-relevant, only needs to be stable across runs and platforms.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string digest_hex(std::string_view data) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data)));
    return buf;
}

// Valid CWE id: "CWE-" followed by digits.
inline bool is_cwe_id(std::string_view s) {
    if (s.size() < 5 || s.substr(0, 4) != "CWE-") return false;
    for (char c : s.substr(4))
        if (c < '0' || c > '9') return false;
    return true;
}

}  // namespace secexpo
