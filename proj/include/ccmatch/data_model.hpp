#ifndef CCMATCH_DATA_MODEL_HPP
#define CCMATCH_DATA_MODEL_HPP

#include <cctype>
#include <cstddef>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ccmatch/date.hpp"

namespace ccmatch {

/// Normalized diagnosis code: uppercase, dots and whitespace stripped, so
/// "I20.0" and "I200" compare equal.
class CodeId {
public:
    CodeId() = default;
    explicit CodeId(std::string_view raw) : value_(normalize(raw)) {}

    static std::string normalize(std::string_view raw) {
        std::string out;
        out.reserve(raw.size());
        for (char c : raw) {
            if (c == '.' || std::isspace(static_cast<unsigned char>(c))) continue;
            out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        }
        return out;
    }

    const std::string& str() const { return value_; }
    bool empty() const { return value_.empty(); }

    friend bool operator==(const CodeId&, const CodeId&) = default;
    friend auto operator<=>(const CodeId&, const CodeId&) = default;

private:
    std::string value_;
};

enum class Gender { male, female };

enum class ReadmissionStatus {
    missing,
    readmitted_other_facility,
    readmitted_same_facility,
    not_readmitted,
};

inline constexpr int kReadmissionStatusCount = 4;

inline std::string_view to_token(Gender g) { return g == Gender::male ? "male" : "female"; }

inline std::optional<Gender> gender_from_token(std::string_view t) {
    if (t == "male") return Gender::male;
    if (t == "female") return Gender::female;
    return std::nullopt;
}

inline std::string_view to_token(ReadmissionStatus s) {
    switch (s) {
        case ReadmissionStatus::missing: return "missing";
        case ReadmissionStatus::readmitted_other_facility: return "other";
        case ReadmissionStatus::readmitted_same_facility: return "same";
        case ReadmissionStatus::not_readmitted: return "none";
    }
    return "none";
}

inline std::optional<ReadmissionStatus> readmission_from_token(std::string_view t) {
    if (t == "missing") return ReadmissionStatus::missing;
    if (t == "other") return ReadmissionStatus::readmitted_other_facility;
    if (t == "same") return ReadmissionStatus::readmitted_same_facility;
    if (t == "none") return ReadmissionStatus::not_readmitted;
    return std::nullopt;
}

/// One hospital episode.
struct Admission {
    std::string admission_id;
    std::string patient_id;
    std::string hospital;
    int admission_year = 0;
    Date discharge_date;
    Gender gender = Gender::male;
    int age_years = 0;
    std::vector<CodeId> codes;
    ReadmissionStatus readmission = ReadmissionStatus::missing;
    std::optional<Date> death_date;
};

struct DatasetFilterConfig {
    int min_code_count = 30;
    Date censor_date{2008, 12, 31};
};

struct RowError {
    std::size_t line = 0;  // physical line number; the header is line 1
    std::string message;
};

struct ParseResult {
    std::vector<Admission> admissions;
    std::vector<RowError> errors;
};

inline constexpr std::string_view kAdmissionsHeader =
    "admission_id,patient_id,hospital,year,discharge_date,gender,age,codes,readmission,death_date";

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

inline std::optional<long> parse_long(std::string_view s) {
    if (s.empty()) return std::nullopt;
    bool neg = false;
    std::size_t i = 0;
    if (s[0] == '-') {
        neg = true;
        i = 1;
        if (s.size() == 1) return std::nullopt;
    }
    if (s.size() - i > 15) return std::nullopt;  // overflow guard; fields are small numbers
    long v = 0;
    for (; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
        v = v * 10 + (s[i] - '0');
    }
    return neg ? -v : v;
}

}  // namespace detail

/// Reads the delimited admissions format. Malformed rows are collected in
/// ParseResult::errors (one entry per bad row) instead of aborting; a header
/// that does not match the schema throws.
inline ParseResult parse_admissions(std::istream& in) {
    ParseResult result;
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw std::runtime_error("admissions input is empty, expected header row");
    ++line_no;
    if (detail::strip_cr(line) != kAdmissionsHeader)
        throw std::runtime_error("admissions header mismatch: got \"" + line + "\"");

    std::unordered_set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = detail::strip_cr(line);
        if (row.empty()) continue;

        auto bad = [&](std::string msg) { result.errors.push_back({line_no, std::move(msg)}); };
        auto fields = detail::split(row, ',');
        if (fields.size() != 10) {
            bad("expected 10 fields, got " + std::to_string(fields.size()));
            continue;
        }

        Admission a;
        a.admission_id = std::string(fields[0]);
        a.patient_id = std::string(fields[1]);
        a.hospital = std::string(fields[2]);
        if (a.admission_id.empty()) {
            bad("empty admission_id");
            continue;
        }
        if (seen_ids.count(a.admission_id)) {
            bad("duplicate admission_id \"" + a.admission_id + "\"");
            continue;
        }

        auto year = detail::parse_long(fields[3]);
        if (!year) {
            bad("malformed year \"" + std::string(fields[3]) + "\"");
            continue;
        }
        a.admission_year = static_cast<int>(*year);

        auto discharge = Date::parse(fields[4]);
        if (!discharge) {
            bad("malformed discharge_date \"" + std::string(fields[4]) + "\"");
            continue;
        }
        a.discharge_date = *discharge;

        auto gender = gender_from_token(fields[5]);
        if (!gender) {
            bad("unknown gender token \"" + std::string(fields[5]) + "\"");
            continue;
        }
        a.gender = *gender;

        auto age = detail::parse_long(fields[6]);
        if (!age || *age < 0) {
            bad("malformed age \"" + std::string(fields[6]) + "\"");
            continue;
        }
        a.age_years = static_cast<int>(*age);

        if (fields[7].empty()) {
            bad("empty codes field");
            continue;
        }
        bool codes_ok = true;
        for (std::string_view tok : detail::split(fields[7], ';')) {
            CodeId code(tok);
            if (code.empty()) {
                bad("empty code in codes field");
                codes_ok = false;
                break;
            }
            a.codes.push_back(std::move(code));
        }
        if (!codes_ok) continue;

        auto readmission = readmission_from_token(fields[8]);
        if (!readmission) {
            bad("unknown readmission token \"" + std::string(fields[8]) + "\"");
            continue;
        }
        a.readmission = *readmission;

        if (!fields[9].empty()) {
            auto death = Date::parse(fields[9]);
            if (!death) {
                bad("malformed death_date \"" + std::string(fields[9]) + "\"");
                continue;
            }
            if (*death < a.discharge_date) {
                bad("death_date precedes discharge_date");
                continue;
            }
            a.death_date = *death;
        }

        seen_ids.insert(a.admission_id);
        result.admissions.push_back(std::move(a));
    }
    return result;
}

inline void write_admission_row(std::ostream& out, const Admission& a) {
    out << a.admission_id << ',' << a.patient_id << ',' << a.hospital << ',' << a.admission_year
        << ',' << a.discharge_date.to_string() << ',' << to_token(a.gender) << ',' << a.age_years
        << ',';
    for (std::size_t i = 0; i < a.codes.size(); ++i) {
        if (i) out << ';';
        out << a.codes[i].str();
    }
    out << ',' << to_token(a.readmission) << ',';
    if (a.death_date) out << a.death_date->to_string();
    out << '\n';
}

inline void write_admissions_csv(std::ostream& out, std::span<const Admission> admissions) {
    out << kAdmissionsHeader << '\n';
    for (const Admission& a : admissions) write_admission_row(out, a);
}

/// Deletes every code occurring fewer than cfg.min_code_count times across
/// the whole list; admissions left without codes are dropped. Order is
/// preserved on both axes.
inline std::vector<Admission> filter_rare_codes(std::vector<Admission> admissions,
                                                const DatasetFilterConfig& cfg) {
    std::unordered_map<std::string, long> counts;
    for (const Admission& a : admissions)
        for (const CodeId& c : a.codes) ++counts[c.str()];

    std::vector<Admission> out;
    out.reserve(admissions.size());
    for (Admission& a : admissions) {
        std::vector<CodeId> kept;
        kept.reserve(a.codes.size());
        for (CodeId& c : a.codes)
            if (counts[c.str()] >= cfg.min_code_count) kept.push_back(std::move(c));
        if (kept.empty()) continue;
        a.codes = std::move(kept);
        out.push_back(std::move(a));
    }
    return out;
}

/// Keeps exactly the admissions discharged on or before the censor date.
inline std::vector<Admission> filter_by_censor_date(std::vector<Admission> admissions,
                                                    const DatasetFilterConfig& cfg) {
    std::vector<Admission> out;
    out.reserve(admissions.size());
    for (Admission& a : admissions)
        if (a.discharge_date <= cfg.censor_date) out.push_back(std::move(a));
    return out;
}

/// Censor-date cut first, then rare-code removal, so code counts reflect the
/// study window.
inline std::vector<Admission> apply_filters(std::vector<Admission> admissions,
                                            const DatasetFilterConfig& cfg) {
    return filter_rare_codes(filter_by_censor_date(std::move(admissions), cfg), cfg);
}

}  // namespace ccmatch

template <>
struct std::hash<ccmatch::CodeId> {
    std::size_t operator()(const ccmatch::CodeId& c) const noexcept {
        return std::hash<std::string>{}(c.str());
    }
};

#endif
