#!/usr/bin/env python3
"""Generate data/lunar_table.csv and data/lunar_spotcheck.csv.

Lunar months come from the `lunardate` package (Hong Kong Observatory
derived month tables). Solar terms are found by solving for the instants
when the Sun's apparent longitude crosses multiples of 15 degrees,
converted to Beijing civil dates (UTC+8).

Every published date in PUBLISHED below is checked against the generated
rows; the run fails on any mismatch. Those checked dates are written to
the spot-check file used by the test suite.

usage: gen_lunar_table.py [--start 1950-01-01] [--end 2030-12-31] [--out data]
"""

import argparse
import csv
import datetime as dt
import math
import pathlib
import sys

from lunardate import LunarDate

HEADER = [
    "gregorian_date", "lunar_year", "lunar_month", "lunar_day", "days_in_lunar_month",
    "days_in_lunar_year", "jieqi_index", "day_within_jieqi", "days_in_jieqi",
]

# Index 1 is Minor Cold (285 deg); index 24 is the winter solstice (270 deg).
TERM_NAMES = [
    "xiaohan", "dahan", "lichun", "yushui", "jingzhe", "chunfen", "qingming", "guyu",
    "lixia", "xiaoman", "mangzhong", "xiazhi", "xiaoshu", "dashu", "liqiu", "chushu",
    "bailu", "qiufen", "hanlu", "shuangjiang", "lidong", "xiaoxue", "daxue", "dongzhi",
]

# Chinese New Year (lunar 1/1) and solar-term start dates from published
# almanacs, Beijing time.
PUBLISHED_NEW_YEAR = [
    "1950-02-17", "1960-01-28", "1970-02-06", "1980-02-16", "1985-02-20", "1990-01-27",
    "1995-01-31", "2000-02-05", "2001-01-24", "2002-02-12", "2003-02-01", "2004-01-22",
    "2005-02-09", "2006-01-29", "2007-02-18", "2008-02-07", "2009-01-26", "2010-02-14",
    "2011-02-03", "2012-01-23", "2013-02-10", "2014-01-31", "2015-02-19", "2016-02-08",
    "2017-01-28", "2018-02-16", "2019-02-05", "2020-01-25", "2021-02-12", "2022-02-01",
    "2023-01-22", "2024-02-10", "2025-01-29", "2026-02-17", "2030-02-03",
]
PUBLISHED_TERMS = [
    ("2020-03-20", "chunfen"), ("2020-04-04", "qingming"), ("2020-06-21", "xiazhi"),
    ("2020-12-21", "dongzhi"), ("2021-02-03", "lichun"), ("2021-12-21", "dongzhi"),
    ("2022-02-04", "lichun"), ("2022-04-05", "qingming"), ("2022-12-22", "dongzhi"),
    ("2023-03-21", "chunfen"), ("2023-09-23", "qiufen"), ("2024-02-04", "lichun"),
    ("2024-06-21", "xiazhi"), ("2024-09-22", "qiufen"), ("2025-02-03", "lichun"),
]

# Delta T (TT - UT) in seconds, decade samples.
DELTA_T = [(1940, 24.3), (1950, 29.1), (1960, 33.2), (1970, 40.2), (1980, 50.5), (1990, 56.9),
           (2000, 63.8), (2010, 66.1), (2020, 69.4), (2030, 72.0), (2040, 75.0)]


def delta_t_days(year):
    for (y0, v0), (y1, v1) in zip(DELTA_T, DELTA_T[1:]):
        if y0 <= year <= y1:
            return (v0 + (v1 - v0) * (year - y0) / (y1 - y0)) / 86400.0
    raise ValueError(f"no delta T for {year}")


# Truncated VSOP87 series for the Earth's heliocentric longitude:
# (amplitude 1e-8 rad, phase rad, frequency rad per Julian millennium).
VSOP_L = [
    [(175347046, 0, 0), (3341656, 4.6692568, 6283.07585), (34894, 4.6261, 12566.1517),
     (3497, 2.7441, 5753.3849), (3418, 2.8289, 3.5231), (3136, 3.6277, 77713.7715),
     (2676, 4.4181, 7860.4194), (2343, 6.1352, 3930.2097), (1324, 0.7425, 11506.7698),
     (1273, 2.0371, 529.691), (1199, 1.1096, 1577.3435), (990, 5.233, 5884.927),
     (902, 2.045, 26.298), (857, 3.508, 398.149), (780, 1.179, 5223.694),
     (753, 2.533, 5507.553), (505, 4.583, 18849.228), (492, 4.205, 775.523),
     (357, 2.92, 0.067), (317, 5.849, 11790.629), (284, 1.899, 796.298),
     (271, 0.315, 10977.079), (243, 0.345, 5486.778), (206, 4.806, 2544.314),
     (205, 1.869, 5573.143), (202, 2.458, 6069.777), (156, 0.833, 213.299),
     (132, 3.411, 2942.463), (126, 1.083, 20.775), (115, 0.645, 0.98),
     (103, 0.636, 4694.003), (102, 0.976, 15720.839), (102, 4.267, 7.114),
     (99, 6.21, 2146.17), (98, 0.68, 155.42), (86, 5.98, 161000.69), (85, 1.3, 6275.96),
     (85, 3.67, 71430.7), (80, 1.81, 17260.15), (79, 3.04, 12036.46), (75, 1.76, 5088.63),
     (74, 3.5, 3154.69), (74, 4.68, 801.82), (70, 0.83, 9437.76), (62, 3.98, 8827.39),
     (61, 1.82, 7084.9), (57, 2.78, 6286.6), (56, 4.39, 14143.5), (56, 3.47, 6279.55),
     (52, 0.19, 12139.55), (52, 1.33, 1748.02), (51, 0.28, 5856.48), (49, 0.49, 1194.45),
     (41, 5.37, 8429.24), (41, 2.4, 19651.05), (39, 6.17, 10447.39), (37, 6.04, 10213.29),
     (37, 2.57, 1059.38), (36, 1.71, 2352.87), (36, 1.78, 6812.77), (33, 0.59, 17789.85),
     (30, 0.44, 83996.85), (30, 2.74, 1349.87), (25, 3.16, 4690.48)],
    [(628331966747, 0, 0), (206059, 2.678235, 6283.07585), (4303, 2.6351, 12566.1517),
     (425, 1.59, 3.523), (119, 5.796, 26.298), (109, 2.966, 1577.344), (93, 2.59, 18849.23),
     (72, 1.14, 529.69), (68, 1.87, 398.15), (67, 4.41, 5507.55), (59, 2.89, 5223.69),
     (56, 2.17, 155.42), (45, 0.4, 796.3), (36, 0.47, 775.52), (29, 2.65, 7.11),
     (21, 5.34, 0.98), (19, 1.85, 5486.78), (19, 4.97, 213.3), (17, 2.99, 6275.96),
     (16, 0.03, 2544.31), (16, 1.43, 2146.17), (15, 1.21, 10977.08), (12, 2.83, 1748.02),
     (12, 3.26, 5088.63), (12, 5.27, 1194.45), (12, 2.08, 4694.0), (11, 0.77, 553.57),
     (10, 1.3, 6286.6), (10, 4.24, 1349.87), (9, 2.7, 242.73), (9, 5.64, 951.72),
     (8, 5.3, 2352.87), (6, 2.65, 9437.76), (6, 4.67, 4690.48)],
    [(52919, 0, 0), (8720, 1.0721, 6283.0758), (309, 0.867, 12566.152), (27, 0.05, 3.52),
     (16, 5.19, 26.3), (16, 3.68, 155.42), (10, 0.76, 18849.23), (9, 2.06, 77713.77),
     (7, 0.83, 775.52), (5, 4.66, 1577.34), (4, 1.03, 7.11), (4, 3.44, 5573.14),
     (3, 5.14, 796.3), (3, 6.05, 5507.55), (3, 1.19, 242.73), (3, 6.12, 529.69),
     (3, 0.31, 398.15), (3, 2.28, 553.57), (2, 4.38, 5223.69), (2, 3.75, 0.98)],
    [(289, 5.844, 6283.076), (35, 0, 0), (17, 5.49, 12566.15), (3, 5.2, 155.42),
     (1, 4.72, 3.52), (1, 5.3, 18849.23), (1, 5.97, 242.73)],
    [(114, 3.142, 0), (8, 4.13, 6283.08), (1, 3.84, 12566.15)],
    [(1, 3.14, 0)],
]


def apparent_solar_longitude(jde):
    """Degrees, [0, 360): VSOP87 longitude, FK5 frame, nutation and aberration."""
    tau = (jde - 2451545.0) / 365250.0
    l = sum(sum(a * math.cos(p + f * tau) for a, p, f in terms) * tau ** n
            for n, terms in enumerate(VSOP_L)) / 1e8
    sun = math.degrees(l) + 180.0
    t = 10.0 * tau
    arcsec = 1.0 / 3600.0
    omega = math.radians(125.04452 - 1934.136261 * t)
    l_sun = math.radians(280.4665 + 36000.7698 * t)
    l_moon = math.radians(218.3165 + 481267.8813 * t)
    nutation = (-17.20 * math.sin(omega) - 1.32 * math.sin(2 * l_sun) - 0.23 * math.sin(2 * l_moon)
                + 0.21 * math.sin(2 * omega)) * arcsec
    return (sun - 0.09033 * arcsec + nutation - 20.4898 * arcsec) % 360.0


def term_instant_jde(year, index):
    """JDE when the apparent longitude reaches the start of term `index` (1..24) in `year`."""
    target = (285.0 + 15.0 * (index - 1)) % 360.0
    # Minor Cold starts around January 5; terms are roughly 15.2 days apart.
    jde = 2451544.5 + (year - 2000) * 365.2422 + 5.0 + 15.2184 * (index - 1)
    for _ in range(50):
        diff = (target - apparent_solar_longitude(jde) + 180.0) % 360.0 - 180.0
        step = diff / 360.0 * 365.2422
        jde += step
        if abs(step) < 1e-7:
            break
    return jde


def jd_to_beijing_date(jd_ut):
    # JD 2440587.5 is 1970-01-01 00:00 UTC.
    days = jd_ut - 2440587.5 + 8.0 / 24.0
    return dt.date(1970, 1, 1) + dt.timedelta(days=math.floor(days))


def term_starts(first_year, last_year):
    """Sorted list of (date, index 1..24) for every term start in the year range."""
    out = []
    for year in range(first_year, last_year + 1):
        for index in range(1, 25):
            jde = term_instant_jde(year, index)
            out.append((jd_to_beijing_date(jde - delta_t_days(year)), index))
    out.sort()
    for (d0, i0), (d1, i1) in zip(out, out[1:]):
        if i1 != i0 % 24 + 1 or not 14 <= (d1 - d0).days <= 17:
            raise SystemExit(f"solar term sequence broken near {d0}: {i0} -> {i1} ({(d1 - d0).days} days)")
    return out


def lunar_month_length(ld):
    start = ld.toSolarDate() - dt.timedelta(days=ld.day - 1)
    nxt = start + dt.timedelta(days=29)
    return 29 if LunarDate.fromSolarDate(nxt.year, nxt.month, nxt.day).day == 1 else 30


def lunar_year_length(lunar_year):
    return (LunarDate(lunar_year + 1, 1, 1).toSolarDate() - LunarDate(lunar_year, 1, 1).toSolarDate()).days


def build_rows(start, end):
    terms = term_starts(start.year - 1, end.year + 1)
    rows = []
    ti = 0
    day = start
    while day <= end:
        while terms[ti + 1][0] <= day:
            ti += 1
        term_start, term_index = terms[ti]
        term_len = (terms[ti + 1][0] - term_start).days
        ld = LunarDate.fromSolarDate(day.year, day.month, day.day)
        rows.append({
            "gregorian_date": day.isoformat(),
            "lunar_year": ld.year,
            "lunar_month": ld.month,
            "lunar_day": ld.day,
            "days_in_lunar_month": lunar_month_length(ld),
            "days_in_lunar_year": lunar_year_length(ld.year),
            "jieqi_index": term_index,
            "day_within_jieqi": (day - term_start).days + 1,
            "days_in_jieqi": term_len,
        })
        day += dt.timedelta(days=1)
    return rows


def check_published(rows):
    by_date = {r["gregorian_date"]: r for r in rows}
    spot = []
    failures = []
    for d in PUBLISHED_NEW_YEAR:
        r = by_date[d]
        if (r["lunar_month"], r["lunar_day"]) != (1, 1):
            failures.append(f"{d}: expected lunar 1/1, table has {r['lunar_month']}/{r['lunar_day']}")
        spot.append((r, "new_year"))
    for d, name in PUBLISHED_TERMS:
        r = by_date[d]
        want = TERM_NAMES.index(name) + 1
        if (r["jieqi_index"], r["day_within_jieqi"]) != (want, 1):
            failures.append(f"{d}: expected start of {name} ({want}), table has {r['jieqi_index']} day {r['day_within_jieqi']}")
        spot.append((r, name))
    if failures:
        raise SystemExit("published-date check failed:\n  " + "\n  ".join(failures))
    return spot


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--start", default="1950-01-01")
    ap.add_argument("--end", default="2030-12-31")
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    start, end = dt.date.fromisoformat(args.start), dt.date.fromisoformat(args.end)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = build_rows(start, end)
    spot = check_published(rows)

    with open(out / "lunar_table.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    with open(out / "lunar_spotcheck.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HEADER + ["source"])
        for r, source in spot:
            w.writerow([r[k] for k in HEADER] + [source])
    print(f"{len(rows)} rows, {len(spot)} spot checks -> {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
