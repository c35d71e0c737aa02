#include <gtest/gtest.h>

#include <chrono>
#include <set>
#include <sstream>

#include "d2v/calendar.hpp"
#include "test_support.hpp"

using namespace d2v;
using F = DateFeature;
namespace chr = std::chrono;

namespace {

const LunarTable& bundled() {
    static const LunarTable table = load_lunar_table(d2v::testing::lunar_table_path());
    return table;
}

chr::sys_days to_sys(int y, int m, int d) {
    return chr::sys_days{chr::year{y} / chr::month{static_cast<unsigned>(m)} / chr::day{static_cast<unsigned>(d)}};
}

// Gregorian features from std::chrono, independent of the library's date arithmetic.
std::array<double, 9> chrono_oracle(int y, int m, int d) {
    const auto day = to_sys(y, m, d);
    const double abs = static_cast<double>((day - to_sys(2000, 12, 31)).count());
    const double ordinal = static_cast<double>((day - to_sys(y, 1, 1)).count()) + 1;
    const double year_len = static_cast<double>((to_sys(y + 1, 1, 1) - to_sys(y, 1, 1)).count());
    const auto ymd_last = chr::year_month_day_last{chr::year{y} / chr::month{static_cast<unsigned>(m)} / chr::last};
    const double month_len = static_cast<double>(static_cast<unsigned>(ymd_last.day()));
    const unsigned iso_wd = chr::weekday{day}.iso_encoding();
    const auto thursday = day + chr::days{4 - static_cast<int>(iso_wd)};
    const int iso_year = static_cast<int>(chr::year_month_day{thursday}.year());
    const double week = static_cast<double>((thursday - to_sys(iso_year, 1, 1)).count() / 7 + 1);
    return {abs / (365.25 * 5),
            (y - 1998.5) / 25.0,
            d / 31.0,
            ordinal / 366.0,
            week / 54.0,
            (ordinal - 1) / (year_len - 1) - 0.5,
            (d - 1.0) / (month_len - 1) - 0.5,
            (m - 1.0) / 11.0 - 0.5,
            (iso_wd - 1.0) / 6.0 - 0.5};
}

constexpr F kGregorian[9] = {F::abs_day,   F::year,       F::day,         F::year_day, F::weekofyear,
                             F::dayofyear, F::dayofmonth, F::monthofyear, F::dayofweek};

std::string table_text(const std::vector<std::string>& rows) {
    std::string s = std::string(kLunarTableHeader) + "\n";
    for (const auto& r : rows) s += r + "\n";
    return s;
}

}  // namespace

TEST(Calendar, ParseTimestampExamples) {
    EXPECT_EQ(parse_timestamp("2016-07-01 00:00:00"), (CivilDateTime{2016, 7, 1, 0, 0, 0}));
    EXPECT_EQ(parse_timestamp("2001-01-01"), (CivilDateTime{2001, 1, 1, 0, 0, 0}));
    EXPECT_EQ(parse_timestamp("2020-02-29T13:45:10"), (CivilDateTime{2020, 2, 29, 13, 45, 10}));
    EXPECT_THROW(parse_timestamp("2016-02-30"), ParseError);
    EXPECT_THROW(parse_timestamp("2015-02-29"), ParseError);
    EXPECT_THROW(parse_timestamp("2016-13-01"), ParseError);
    EXPECT_THROW(parse_timestamp("2016-01-01 24:00:00"), ParseError);
    EXPECT_THROW(parse_timestamp("16-01-01"), ParseError);
    EXPECT_THROW(parse_timestamp(""), ParseError);
}

TEST(Calendar, ParseErrorNamesField) {
    try {
        parse_timestamp("2016-02-30");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("day"), std::string::npos) << e.what();
    }
    try {
        parse_timestamp("2016-01-01 10:61:00");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("minute"), std::string::npos) << e.what();
    }
}

TEST(Calendar, DayNumberRoundTrip) {
    for (std::int64_t z = -800000; z <= 800000; z += 997) {
        const auto c = civil_from_days(z);
        EXPECT_EQ(days_from_civil(c.year, c.month, c.day), z);
    }
    EXPECT_EQ(days_from_civil(1970, 1, 1), 0);
    const auto t = CivilDateTime{2016, 7, 1, 13, 5, 9};
    EXPECT_EQ(CivilDateTime::from_seconds(t.to_seconds()), t);
}

TEST(Calendar, GregorianExamples) {
    const DateVector v = encode_date(parse_timestamp("2001-01-01"), nullptr);
    EXPECT_NEAR(v[F::abs_day], 1.0 / (365.25 * 5), 1e-15);
    EXPECT_NEAR(v[F::abs_day], 5.47571e-4, 1e-9);
    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2016-05-05"), nullptr)[F::year], 0.7);

    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2024-01-01"), nullptr)[F::dayofweek], -0.5);  // Monday
    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2024-01-07"), nullptr)[F::dayofweek], 0.5);   // Sunday
    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2023-01-01"), nullptr)[F::dayofmonth], -0.5);
    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2023-01-31"), nullptr)[F::dayofmonth], 0.5);
    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2023-12-31"), nullptr)[F::dayofyear], 0.5);
    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2020-12-31"), nullptr)[F::year_day], 1.0);

    // ISO week 53 and a late-December date in week 1.
    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2020-12-31"), nullptr)[F::weekofyear], 53.0 / 54.0);
    EXPECT_DOUBLE_EQ(encode_date(parse_timestamp("2019-12-30"), nullptr)[F::weekofyear], 1.0 / 54.0);
}

TEST(Calendar, GregorianMatchesChronoOracle) {
    for (std::int64_t z = days_from_civil(1960, 1, 1); z <= days_from_civil(2040, 12, 31); ++z) {
        const auto c = civil_from_days(z);
        const DateVector v = encode_date(CivilDateTime{c.year, c.month, c.day, 0, 0, 0}, nullptr);
        const auto expect = chrono_oracle(c.year, c.month, c.day);
        for (std::size_t i = 0; i < 9; ++i) {
            ASSERT_NEAR(v[kGregorian[i]], expect[i], 1e-12)
                << kDateFeatureNames[static_cast<std::size_t>(kGregorian[i])] << " at " << c.year << "-" << c.month << "-" << c.day;
        }
    }
}

TEST(Calendar, SubDailyTimestampsUseCalendarDate) {
    const auto dm = encode_range(parse_timestamp("2016-07-01 00:00:00"), 24, 3600, &bundled());
    for (const auto& row : dm.rows) EXPECT_EQ(row, dm.rows.front());
    EXPECT_EQ(dm.rows.front(), encode_date(parse_timestamp("2016-07-01"), &bundled()));
}

TEST(Calendar, EncodeRangeExamples) {
    const auto start = parse_timestamp("2016-07-01");
    const auto one = encode_range(start, 1, 86400, &bundled());
    ASSERT_EQ(one.rows.size(), 1u);
    EXPECT_EQ(one.rows[0], encode_date(start, &bundled()));

    const auto week = encode_range(start, 7, 86400, &bundled());
    std::set<double> dow;
    for (const auto& r : week.rows) dow.insert(r[F::dayofweek]);
    EXPECT_EQ(dow.size(), 7u);

    EXPECT_THROW(encode_range(start, 0, 86400, nullptr), ContractError);
    EXPECT_THROW(encode_range(start, 3, 0, nullptr), ContractError);
}

TEST(Calendar, PeriodicityAndMonotonicity) {
    const auto dm = encode_range(parse_timestamp("1999-03-01"), 800, 86400, nullptr);
    for (std::size_t i = 7; i < dm.rows.size(); ++i) EXPECT_EQ(dm.rows[i][F::dayofweek], dm.rows[i - 7][F::dayofweek]);
    for (std::size_t i = 1; i < dm.rows.size(); ++i) EXPECT_GT(dm.rows[i][F::abs_day], dm.rows[i - 1][F::abs_day]);

    std::vector<double> moy;
    for (int k = 0; k < 36; ++k) {
        moy.push_back(encode_date(CivilDateTime{2000 + k / 12, k % 12 + 1, 15, 0, 0, 0}, nullptr)[F::monthofyear]);
    }
    for (std::size_t i = 12; i < moy.size(); ++i) EXPECT_EQ(moy[i], moy[i - 12]);

    for (int y = 1990; y < 2022; ++y) {
        EXPECT_DOUBLE_EQ(encode_date(CivilDateTime{y, 1, 1, 0, 0, 0}, nullptr)[F::year_day], 1.0 / 366.0);
    }
}

TEST(Calendar, RangeInvariantsOverSweep) {
    const auto& table = bundled();
    for (std::int64_t z = days_from_civil(1990, 1, 1); z <= days_from_civil(2021, 12, 31); ++z) {
        const DateVector v = encode_date(CivilDateTime::from_day_number(z), &table);
        for (F f : {F::dayofyear, F::dayofmonth, F::monthofyear, F::dayofweek, F::dayoflunaryear, F::dayoflunarmonth,
                    F::monthoflunaryear, F::jieqiofyear, F::dayofjieqi}) {
            ASSERT_GE(v[f], -0.5);
            ASSERT_LE(v[f], 0.5);
        }
        for (F f : {F::day, F::weekofyear, F::lunar_day}) {
            ASSERT_GT(v[f], 0.0);
            ASSERT_LE(v[f], 1.0);
        }
        ASSERT_GE(v[F::jieqi_day], 0.0);
        ASSERT_LE(v[F::jieqi_day], 1.2);
    }
}

TEST(Calendar, BundledTableCoverage) {
    const auto& t = bundled();
    EXPECT_EQ(format_date(t.coverage_start()), "1950-01-01");
    EXPECT_EQ(format_date(t.coverage_end()), "2030-12-31");
    EXPECT_TRUE(t.covers(parse_timestamp("2016-07-01 12:00:00")));
    EXPECT_FALSE(t.covers(parse_timestamp("2031-01-01")));
    EXPECT_THROW(encode_date(parse_timestamp("1949-12-31"), &t), CoverageError);
}

TEST(Calendar, BundledTableKnownDates) {
    const auto& t = bundled();
    // Lunar New Year 2024 (Year of the Dragon) and the day before.
    const auto& ny = t.at(parse_timestamp("2024-02-10"));
    EXPECT_EQ(ny.lunar_year, 2024);
    EXPECT_EQ(ny.lunar_month, 1);
    EXPECT_EQ(ny.lunar_day, 1);
    EXPECT_EQ(ny.lunar_year_day, 1);
    const auto& eve = t.at(parse_timestamp("2024-02-09"));
    EXPECT_EQ(eve.lunar_year, 2023);
    EXPECT_EQ(eve.lunar_year_day, eve.days_in_lunar_year);
    // 2023 had a leap second month (384-day lunar year).
    EXPECT_EQ(eve.days_in_lunar_year, 384);
    // Winter solstice 2021 began at 23:59 Beijing time on Dec 21.
    const auto& ws = t.at(parse_timestamp("2021-12-21"));
    EXPECT_EQ(ws.jieqi_index, 24);
    EXPECT_EQ(ws.day_within_jieqi, 1);
}

TEST(Calendar, SpotCheckFileMatchesTable) {
    std::ifstream in(std::string(D2V_DATA_DIR) + "/lunar_spotcheck.csv");
    ASSERT_TRUE(in);
    std::string line;
    std::getline(in, line);
    int n = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        ASSERT_EQ(cells.size(), 10u);
        const auto& r = bundled().at(parse_timestamp(cells[0]));
        EXPECT_EQ(r.lunar_year, std::stoi(cells[1])) << cells[0];
        EXPECT_EQ(r.lunar_month, std::stoi(cells[2])) << cells[0];
        EXPECT_EQ(r.lunar_day, std::stoi(cells[3])) << cells[0];
        EXPECT_EQ(r.jieqi_index, std::stoi(cells[6])) << cells[0];
        EXPECT_EQ(r.day_within_jieqi, std::stoi(cells[7])) << cells[0];
        ++n;
    }
    EXPECT_EQ(n, 50);
}

TEST(Calendar, LunarFeaturesFollowRecord) {
    const auto& t = bundled();
    const auto date = parse_timestamp("2016-07-01");
    const auto& r = t.at(date);
    const DateVector v = encode_date(date, &t);
    EXPECT_DOUBLE_EQ(v[F::lunar_year], (r.lunar_year - 1998.5) / 25.0);
    EXPECT_DOUBLE_EQ(v[F::lunar_month], r.lunar_month / 12.0);
    EXPECT_DOUBLE_EQ(v[F::lunar_day], r.lunar_day / 30.0);
    EXPECT_DOUBLE_EQ(v[F::lunar_year_day], r.lunar_year_day / 384.0);
    EXPECT_DOUBLE_EQ(v[F::dayoflunarmonth], (r.lunar_day - 1.0) / (r.days_in_lunar_month - 1.0) - 0.5);
    EXPECT_DOUBLE_EQ(v[F::jieqi_day], r.day_within_jieqi / 15.0);
    EXPECT_DOUBLE_EQ(v[F::dayofjieqi], (r.day_within_jieqi - 1.0) / (r.days_in_jieqi - 1.0) - 0.5);
}

TEST(Calendar, LunarYearDayCountsFromNewYear) {
    const auto& t = bundled();
    const std::int64_t ny = days_from_civil(2016, 2, 8);  // lunar 2016-01-01
    for (int k = 0; k < 384; ++k) {
        const auto& r = t.at(CivilDateTime::from_day_number(ny + k));
        if (r.lunar_year != 2016) break;
        EXPECT_EQ(r.lunar_year_day, k + 1);
    }
}

TEST(Calendar, ZeroedLunarMode) {
    DateEncoder zeroed;
    DateEncoder strict(std::make_shared<LunarTable>(bundled()));
    for (std::int64_t z = days_from_civil(2010, 1, 1); z < days_from_civil(2012, 1, 1); z += 3) {
        const auto date = CivilDateTime::from_day_number(z);
        const DateVector a = zeroed.encode(date), b = strict.encode(date);
        for (std::size_t i = 0; i < kDateFeatures; ++i) {
            if (is_lunar_feature(static_cast<F>(i))) {
                EXPECT_EQ(a.values[i], 0.0);
            } else {
                EXPECT_EQ(a.values[i], b.values[i]);
            }
        }
    }
}

TEST(Calendar, LunarFeatureIndicesAreSixToNineAndFourteenUp) {
    for (std::size_t i = 0; i < kDateFeatures; ++i) {
        const bool lunar = (i >= 5 && i <= 8) || i >= 13;
        EXPECT_EQ(is_lunar_feature(static_cast<F>(i)), lunar) << kDateFeatureNames[i];
    }
}

TEST(Calendar, NonStrictEncoderZeroesOutsideCoverage) {
    DateEncoder lenient(std::make_shared<LunarTable>(bundled()), false);
    const auto outside = parse_timestamp("2035-06-01");
    EXPECT_EQ(lenient.encode(outside), encode_date(outside, nullptr));
    DateEncoder strict(std::make_shared<LunarTable>(bundled()), true);
    EXPECT_THROW(strict.encode(outside), CoverageError);
}

TEST(Calendar, TableValidationErrors) {
    // Two consistent rows taken from the bundled table.
    const std::string r1 = "2016-07-01,2016,5,27,29,355,12,11,16";
    const std::string r2 = "2016-07-02,2016,5,28,29,355,12,12,16";
    const std::string r4 = "2016-07-04,2016,6,1,30,355,12,14,16";
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_lunar_table(in);
    };
    EXPECT_NO_THROW(parse(table_text({r1, r2})));
    EXPECT_THROW(parse(""), ValidationError);
    EXPECT_THROW(parse(table_text({})), ValidationError);
    EXPECT_THROW(parse("date,a,b\n" + r1 + "\n"), ValidationError);

    try {
        parse(table_text({r1, r2, r4}));  // 2016-07-03 missing
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse(table_text({"2016-07-01,2016,5,31,30,355,12,11,16"})), ValidationError);   // lunar_day
    EXPECT_THROW(parse(table_text({"2016-07-01,2016,5,27,31,355,12,11,16"})), ValidationError);   // month length
    EXPECT_THROW(parse(table_text({"2016-07-01,2016,5,27,29,355,25,11,16"})), ValidationError);   // jieqi index
    EXPECT_THROW(parse(table_text({"2016-07-01,2016,5,27,29,355,0,11,16"})), ValidationError);
    EXPECT_THROW(parse(table_text({"2016-07-01,2016,5,27,29,355,12,17,16"})), ValidationError);   // day in term
    EXPECT_THROW(parse(table_text({r1, "2016-07-02,2016,5,29,29,355,12,12,16"})), ValidationError);  // skipped day
}

TEST(Calendar, BundledTableRoundTripsThroughText) {
    std::ifstream in(d2v::testing::lunar_table_path());
    std::string header, line;
    std::getline(in, header);
    int checked = 0;
    while (std::getline(in, line) && checked < 2000) {
        if (++checked % 97) continue;
        std::stringstream ss(line);
        std::string date;
        std::getline(ss, date, ',');
        std::array<int, 8> v{};
        for (int& x : v) {
            std::string cell;
            std::getline(ss, cell, ',');
            x = std::stoi(cell);
        }
        const auto& r = bundled().at(parse_timestamp(date));
        EXPECT_EQ((std::array<int, 8>{r.lunar_year, r.lunar_month, r.lunar_day, r.days_in_lunar_month, r.days_in_lunar_year,
                                      r.jieqi_index, r.day_within_jieqi, r.days_in_jieqi}),
                  v);
    }
}
