#pragma once

// Calendar feature encoding: one 19-wide date vector per time step.
//
// Gregorian features are computed arithmetically. Chinese lunar and solar-term
// (jieqi) features come from a day-by-day lookup table shipped as CSV.
// All features are date granular; the time of day never changes a vector.

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "d2v/errors.hpp"
#include "d2v/tensor.hpp"

namespace d2v {

// ---------------------------------------------------------------------------
// Civil date arithmetic (proleptic Gregorian, no time zones)
// ---------------------------------------------------------------------------

inline bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

inline int days_in_month(int y, int m) {
    static constexpr std::array<int, 12> len{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap_year(y) ? 29 : len[static_cast<std::size_t>(m - 1)];
}

inline int days_in_year(int y) { return is_leap_year(y) ? 366 : 365; }

/// Days since 1970-01-01.
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 + static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
    int year;
    int month;
    int day;
};

inline CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

struct CivilDateTime {
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    int second = 0;

    friend bool operator==(const CivilDateTime&, const CivilDateTime&) = default;

    std::int64_t day_number() const { return days_from_civil(year, month, day); }

    /// Seconds since 1970-01-01 00:00:00.
    std::int64_t to_seconds() const { return day_number() * 86400 + hour * 3600 + minute * 60 + second; }

    static CivilDateTime from_seconds(std::int64_t s) {
        std::int64_t days = s / 86400;
        std::int64_t rem = s % 86400;
        if (rem < 0) {
            rem += 86400;
            --days;
        }
        const CivilDate d = civil_from_days(days);
        return {d.year, d.month, d.day, static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60),
                static_cast<int>(rem % 60)};
    }

    static CivilDateTime from_day_number(std::int64_t days) {
        const CivilDate d = civil_from_days(days);
        return {d.year, d.month, d.day, 0, 0, 0};
    }

    int day_of_year() const { return static_cast<int>(day_number() - days_from_civil(year, 1, 1)) + 1; }

    /// ISO weekday, Monday = 1 ... Sunday = 7.
    int iso_weekday() const {
        const std::int64_t z = day_number();
        return static_cast<int>(((z + 3) % 7 + 7) % 7) + 1;
    }

    int iso_week() const {
        auto weeks_in = [](int y) {
            // Years whose Jan 1 is a Thursday, or leap years starting on Wednesday, have 53 weeks.
            const CivilDateTime jan1{y, 1, 1};
            const int wd = jan1.iso_weekday();
            return (wd == 4 || (wd == 3 && is_leap_year(y))) ? 53 : 52;
        };
        const int week = (day_of_year() - iso_weekday() + 10) / 7;
        if (week < 1) return weeks_in(year - 1);
        if (week > weeks_in(year)) return 1;
        return week;
    }
};

inline std::string format_date(const CivilDateTime& t) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", t.year, t.month, t.day);
    return buf;
}

inline std::string format_timestamp(const CivilDateTime& t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d:%02d", t.year, t.month, t.day, t.hour, t.minute,
                  t.second);
    return buf;
}

namespace detail {

inline int parse_field(std::string_view s, std::size_t pos, std::size_t len, const char* field, std::string_view full) {
    if (pos + len > s.size()) throw ParseError("timestamp '" + std::string(full) + "': missing " + field);
    int value = 0;
    const char* first = s.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc() || ptr != first + len) {
        throw ParseError("timestamp '" + std::string(full) + "': malformed " + field);
    }
    return value;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
    return s;
}

}  // namespace detail

/// Accepts "YYYY-MM-DD" and "YYYY-MM-DD HH:MM:SS" (a 'T' separator is also accepted).
inline CivilDateTime parse_timestamp(std::string_view text) {
    const std::string_view s = detail::trim(text);
    if (s.size() != 10 && s.size() != 19) {
        throw ParseError("timestamp '" + std::string(s) + "': expected YYYY-MM-DD or YYYY-MM-DD HH:MM:SS");
    }
    if (s[4] != '-' || s[7] != '-') throw ParseError("timestamp '" + std::string(s) + "': bad date separators");
    CivilDateTime t;
    t.year = detail::parse_field(s, 0, 4, "year", s);
    t.month = detail::parse_field(s, 5, 2, "month", s);
    t.day = detail::parse_field(s, 8, 2, "day", s);
    if (s.size() == 19) {
        if ((s[10] != ' ' && s[10] != 'T') || s[13] != ':' || s[16] != ':') {
            throw ParseError("timestamp '" + std::string(s) + "': bad time separators");
        }
        t.hour = detail::parse_field(s, 11, 2, "hour", s);
        t.minute = detail::parse_field(s, 14, 2, "minute", s);
        t.second = detail::parse_field(s, 17, 2, "second", s);
    }
    if (t.month < 1 || t.month > 12) throw ParseError("timestamp '" + std::string(s) + "': invalid month");
    if (t.day < 1 || t.day > days_in_month(t.year, t.month)) {
        throw ParseError("timestamp '" + std::string(s) + "': invalid day");
    }
    if (t.hour > 23) throw ParseError("timestamp '" + std::string(s) + "': invalid hour");
    if (t.minute > 59) throw ParseError("timestamp '" + std::string(s) + "': invalid minute");
    if (t.second > 59) throw ParseError("timestamp '" + std::string(s) + "': invalid second");
    return t;
}

// ---------------------------------------------------------------------------
// Lunar / solar-term table
// ---------------------------------------------------------------------------

struct LunarRecord {
    int lunar_year = 0;
    int lunar_month = 0;  // 1..12; a leap month carries the number of the month it repeats
    int lunar_day = 0;
    int days_in_lunar_month = 0;
    int days_in_lunar_year = 0;
    int jieqi_index = 0;  // 1 = Minor Cold (early January) ... 24 = Winter Solstice
    int day_within_jieqi = 0;
    int days_in_jieqi = 0;
    int lunar_year_day = 0;  // derived at load time, 1-based
};

class LunarTable {
public:
    LunarTable(std::int64_t first_day, std::vector<LunarRecord> records)
        : first_day_(first_day), records_(std::move(records)) {}

    CivilDateTime coverage_start() const { return CivilDateTime::from_day_number(first_day_); }
    CivilDateTime coverage_end() const {
        return CivilDateTime::from_day_number(first_day_ + static_cast<std::int64_t>(records_.size()) - 1);
    }
    std::size_t size() const { return records_.size(); }

    bool covers(const CivilDateTime& t) const {
        const std::int64_t z = t.day_number();
        return z >= first_day_ && z < first_day_ + static_cast<std::int64_t>(records_.size());
    }

    const LunarRecord* find(const CivilDateTime& t) const {
        if (!covers(t)) return nullptr;
        return &records_[static_cast<std::size_t>(t.day_number() - first_day_)];
    }

    const LunarRecord& at(const CivilDateTime& t) const {
        const LunarRecord* r = find(t);
        if (!r) {
            throw CoverageError("date " + format_date(t) + " outside lunar table coverage " +
                                format_date(coverage_start()) + " .. " + format_date(coverage_end()));
        }
        return *r;
    }

private:
    std::int64_t first_day_;
    std::vector<LunarRecord> records_;
};

inline constexpr std::string_view kLunarTableHeader =
    "gregorian_date,lunar_year,lunar_month,lunar_day,days_in_lunar_month,days_in_lunar_year,jieqi_index,"
    "day_within_jieqi,days_in_jieqi";

/// Parses and validates a lunar table. Errors name the first offending line.
inline LunarTable parse_lunar_table(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty()) throw ValidationError("lunar table: empty file");
    if (detail::trim(line) != kLunarTableHeader) throw ValidationError("lunar table: unexpected header '" + line + "'");

    std::vector<LunarRecord> records;
    std::int64_t first_day = 0;
    std::size_t line_no = 1;
    auto fail = [&](const std::string& why) {
        throw ValidationError("lunar table line " + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<std::string_view> cells;
        std::string_view rest = line;
        while (true) {
            const auto comma = rest.find(',');
            cells.push_back(detail::trim(rest.substr(0, comma)));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (cells.size() != 9) fail("expected 9 columns, got " + std::to_string(cells.size()));
        CivilDateTime date;
        try {
            date = parse_timestamp(cells[0]);
        } catch (const ParseError& e) {
            fail(e.what());
        }
        std::array<int, 8> v{};
        for (std::size_t i = 0; i < 8; ++i) {
            const std::string_view c = cells[i + 1];
            auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v[i]);
            if (ec != std::errc() || ptr != c.data() + c.size()) fail("non-integer cell '" + std::string(c) + "'");
        }
        LunarRecord r{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], 0};
        const std::int64_t z = date.day_number();
        if (records.empty()) {
            first_day = z;
        } else if (z != first_day + static_cast<std::int64_t>(records.size())) {
            fail("gap or disorder in daily coverage at " + format_date(date));
        }
        if (r.lunar_month < 1 || r.lunar_month > 12) fail("lunar_month out of range");
        if (r.days_in_lunar_month != 29 && r.days_in_lunar_month != 30) fail("days_in_lunar_month must be 29 or 30");
        if (r.lunar_day < 1 || r.lunar_day > r.days_in_lunar_month) fail("lunar_day out of range");
        if (r.days_in_lunar_year < 353 || r.days_in_lunar_year > 385) fail("days_in_lunar_year out of range");
        if (r.jieqi_index < 1 || r.jieqi_index > 24) fail("jieqi_index out of range");
        if (r.days_in_jieqi < 14 || r.days_in_jieqi > 17) fail("days_in_jieqi out of range");
        if (r.day_within_jieqi < 1 || r.day_within_jieqi > r.days_in_jieqi) fail("day_within_jieqi out of range");
        if (!records.empty()) {
            const LunarRecord& p = records.back();
            const bool same_month = r.lunar_day == p.lunar_day + 1;
            if (!same_month && !(r.lunar_day == 1 && p.lunar_day == p.days_in_lunar_month)) {
                fail("lunar_day does not follow the previous day");
            }
            if (same_month && (r.lunar_month != p.lunar_month || r.days_in_lunar_month != p.days_in_lunar_month)) {
                fail("lunar month changed mid-month");
            }
            const bool same_term = r.day_within_jieqi == p.day_within_jieqi + 1;
            if (!same_term && !(r.day_within_jieqi == 1 && p.day_within_jieqi == p.days_in_jieqi)) {
                fail("day_within_jieqi does not follow the previous day");
            }
            if (!same_term && r.jieqi_index != p.jieqi_index % 24 + 1) fail("solar terms out of sequence");
            if (same_term && r.jieqi_index != p.jieqi_index) fail("solar term changed mid-term");
        }
        records.push_back(r);
    }
    if (records.empty()) throw ValidationError("lunar table: no data rows");

    // Day within the lunar year. The leading partial year is counted back from its end.
    std::size_t year_start = 0;
    bool first_year = true;
    auto close_year = [&](std::size_t end) {
        const int len = records[year_start].days_in_lunar_year;
        const auto count = static_cast<int>(end - year_start);
        if (first_year) {
            if (count > len) throw ValidationError("lunar table: lunar year " + std::to_string(records[year_start].lunar_year) + " longer than declared");
            for (std::size_t i = year_start; i < end; ++i) records[i].lunar_year_day = len - count + 1 + static_cast<int>(i - year_start);
        } else {
            for (std::size_t i = year_start; i < end; ++i) records[i].lunar_year_day = static_cast<int>(i - year_start) + 1;
            if (end != records.size() && count != len) {
                throw ValidationError("lunar table: lunar year " + std::to_string(records[year_start].lunar_year) +
                                      " has " + std::to_string(count) + " days, declared " + std::to_string(len));
            }
        }
        first_year = false;
    };
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].lunar_year != records[i - 1].lunar_year) {
            if (records[i].lunar_year != records[i - 1].lunar_year + 1 || records[i].lunar_month != 1 ||
                records[i].lunar_day != 1) {
                throw ValidationError("lunar table line " + std::to_string(i + 2) + ": lunar year boundary not at 1/1");
            }
            close_year(i);
            year_start = i;
        }
    }
    close_year(records.size());
    return LunarTable(first_day, std::move(records));
}

inline LunarTable load_lunar_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open lunar table '" + path + "'");
    return parse_lunar_table(in);
}

// ---------------------------------------------------------------------------
// Date vectors
// ---------------------------------------------------------------------------

enum class DateFeature : std::size_t {
    abs_day,
    year,
    day,
    year_day,
    weekofyear,
    lunar_year,
    lunar_month,
    lunar_day,
    lunar_year_day,
    dayofyear,
    dayofmonth,
    monthofyear,
    dayofweek,
    dayoflunaryear,
    dayoflunarmonth,
    monthoflunaryear,
    jieqiofyear,
    jieqi_day,
    dayofjieqi,
};

inline constexpr std::size_t kDateFeatures = 19;

inline constexpr std::array<std::string_view, kDateFeatures> kDateFeatureNames{
    "abs_day",     "year",         "day",         "year_day",        "weekofyear",      "lunar_year",
    "lunar_month", "lunar_day",    "lunar_year_day", "dayofyear",    "dayofmonth",      "monthofyear",
    "dayofweek",   "dayoflunaryear", "dayoflunarmonth", "monthoflunaryear", "jieqiofyear", "jieqi_day",
    "dayofjieqi"};

inline bool is_lunar_feature(DateFeature f) {
    switch (f) {
        case DateFeature::lunar_year:
        case DateFeature::lunar_month:
        case DateFeature::lunar_day:
        case DateFeature::lunar_year_day:
        case DateFeature::dayoflunaryear:
        case DateFeature::dayoflunarmonth:
        case DateFeature::monthoflunaryear:
        case DateFeature::jieqiofyear:
        case DateFeature::jieqi_day:
        case DateFeature::dayofjieqi:
            return true;
        default:
            return false;
    }
}

struct DateVector {
    std::array<double, kDateFeatures> values{};

    double operator[](DateFeature f) const { return values[static_cast<std::size_t>(f)]; }
    double& operator[](DateFeature f) { return values[static_cast<std::size_t>(f)]; }
    friend bool operator==(const DateVector&, const DateVector&) = default;
};

/// One date vector per time step.
struct DateMatrix {
    std::vector<DateVector> rows;

    std::size_t size() const { return rows.size(); }

    DateMatrix slice(std::size_t begin, std::size_t count) const {
        if (begin + count > rows.size()) throw ContractError("date matrix slice out of range");
        return {std::vector<DateVector>(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                        rows.begin() + static_cast<std::ptrdiff_t>(begin + count))};
    }

    /// rows × 19 tensor.
    Tensor tensor() const {
        if (rows.empty()) throw ContractError("empty date matrix");
        std::vector<double> flat;
        flat.reserve(rows.size() * kDateFeatures);
        for (const DateVector& r : rows) flat.insert(flat.end(), r.values.begin(), r.values.end());
        return Tensor({rows.size(), kDateFeatures}, std::move(flat));
    }
};

inline std::function<void(const std::string&)>& warning_handler() {
    static std::function<void(const std::string&)> handler = [](const std::string& msg) {
        std::cerr << "warning: " << msg << '\n';
    };
    return handler;
}

inline void warn(const std::string& msg) {
    if (warning_handler()) warning_handler()(msg);
}

/// Gregorian part of the vector; lunar slots stay 0.
inline DateVector encode_gregorian(const CivilDateTime& t) {
    DateVector v;
    using F = DateFeature;
    const double day = t.day;
    const double ordinal = t.day_of_year();
    const std::int64_t epoch = days_from_civil(2000, 12, 31);
    v[F::abs_day] = static_cast<double>(t.day_number() - epoch) / (365.25 * 5);
    v[F::year] = (t.year - 1998.5) / 25.0;
    v[F::day] = day / 31.0;
    v[F::year_day] = ordinal / 366.0;
    v[F::weekofyear] = t.iso_week() / 54.0;
    v[F::dayofyear] = (ordinal - 1.0) / (days_in_year(t.year) - 1.0) - 0.5;
    v[F::dayofmonth] = (day - 1.0) / (days_in_month(t.year, t.month) - 1.0) - 0.5;
    v[F::monthofyear] = (t.month - 1.0) / 11.0 - 0.5;
    v[F::dayofweek] = (t.iso_weekday() - 1.0) / 6.0 - 0.5;
    return v;
}

inline void apply_lunar(DateVector& v, const LunarRecord& r) {
    using F = DateFeature;
    v[F::lunar_year] = (r.lunar_year - 1998.5) / 25.0;
    v[F::lunar_month] = r.lunar_month / 12.0;
    v[F::lunar_day] = r.lunar_day / 30.0;
    v[F::lunar_year_day] = r.lunar_year_day / 384.0;
    v[F::dayoflunaryear] = (r.lunar_year_day - 1.0) / (r.days_in_lunar_year - 1.0) - 0.5;
    v[F::dayoflunarmonth] = (r.lunar_day - 1.0) / (r.days_in_lunar_month - 1.0) - 0.5;
    v[F::monthoflunaryear] = (r.lunar_month - 1.0) / 11.0 - 0.5;
    v[F::jieqiofyear] = (r.jieqi_index - 1.0) / 23.0 - 0.5;
    v[F::jieqi_day] = r.day_within_jieqi / 15.0;
    v[F::dayofjieqi] = (r.day_within_jieqi - 1.0) / (r.days_in_jieqi - 1.0) - 0.5;
}

/// Full 19-feature vector. Without a table the lunar slots are zero; with a
/// table, dates outside its coverage throw CoverageError.
inline DateVector encode_date(const CivilDateTime& t, const LunarTable* table) {
    DateVector v = encode_gregorian(t);
    if (table) apply_lunar(v, table->at(t));
    return v;
}

/// Encodes timestamps with an optional lunar table and a coverage policy.
class DateEncoder {
public:
    /// Zeroed-lunar mode.
    DateEncoder() { warn("no lunar table loaded; lunar and solar-term features are zero"); }

    explicit DateEncoder(std::shared_ptr<const LunarTable> table, bool strict = true)
        : table_(std::move(table)), strict_(strict) {
        if (!table_) warn("no lunar table loaded; lunar and solar-term features are zero");
    }

    bool has_table() const { return static_cast<bool>(table_); }
    bool strict() const { return strict_; }
    const LunarTable* table() const { return table_.get(); }

    DateVector encode(const CivilDateTime& t) const {
        if (table_ && !strict_ && !table_->covers(t)) return encode_gregorian(t);
        return encode_date(t, table_.get());
    }

    DateMatrix encode_range(const CivilDateTime& start, std::size_t n, std::int64_t step_seconds) const {
        if (n < 1) throw ContractError("encode_range needs n >= 1");
        if (step_seconds <= 0) throw ContractError("encode_range needs a positive step");
        DateMatrix m;
        m.rows.reserve(n);
        const std::int64_t s0 = start.to_seconds();
        for (std::size_t i = 0; i < n; ++i) {
            m.rows.push_back(encode(CivilDateTime::from_seconds(s0 + static_cast<std::int64_t>(i) * step_seconds)));
        }
        return m;
    }

    DateMatrix encode_all(const std::vector<CivilDateTime>& stamps) const {
        DateMatrix m;
        m.rows.reserve(stamps.size());
        for (const auto& t : stamps) m.rows.push_back(encode(t));
        return m;
    }

private:
    std::shared_ptr<const LunarTable> table_;
    bool strict_ = true;
};

/// Row i encodes start + i * step_seconds.
inline DateMatrix encode_range(const CivilDateTime& start, std::size_t n, std::int64_t step_seconds,
                               const LunarTable* table) {
    if (n < 1) throw ContractError("encode_range needs n >= 1");
    if (step_seconds <= 0) throw ContractError("encode_range needs a positive step");
    DateMatrix m;
    m.rows.reserve(n);
    const std::int64_t s0 = start.to_seconds();
    for (std::size_t i = 0; i < n; ++i) {
        m.rows.push_back(encode_date(CivilDateTime::from_seconds(s0 + static_cast<std::int64_t>(i) * step_seconds), table));
    }
    return m;
}

}  // namespace d2v
