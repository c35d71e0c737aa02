#pragma once

// Series ingestion, train/val/test splitting with train-only normalisation,
// and gap-aware sliding windows.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "d2v/calendar.hpp"
#include "d2v/errors.hpp"
#include "d2v/tensor.hpp"

namespace d2v {

/// Timestamps with a constant step and an N×D value block (row-major).
struct RawSeries {
    std::vector<CivilDateTime> timestamps;
    std::vector<double> values;
    std::vector<std::string> channel_names;
    std::int64_t step_seconds = 0;

    std::size_t rows() const { return timestamps.size(); }
    std::size_t channels() const { return channel_names.size(); }
    double at(std::size_t row, std::size_t ch) const { return values[row * channels() + ch]; }

    /// Rows [begin, begin + count).
    RawSeries slice(std::size_t begin, std::size_t count) const {
        if (begin + count > rows()) throw ContractError("series slice out of range");
        RawSeries out;
        out.channel_names = channel_names;
        out.step_seconds = step_seconds;
        out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                              timestamps.begin() + static_cast<std::ptrdiff_t>(begin + count));
        const std::size_t D = channels();
        out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * D),
                          values.begin() + static_cast<std::ptrdiff_t>((begin + count) * D));
        return out;
    }

    Tensor tensor() const { return Tensor({rows(), channels()}, values); }
};

/// "1h", "5min", "1d", "7d", "30s", or a bare number of seconds.
inline std::int64_t parse_granularity(std::string_view text) {
    std::int64_t n = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc() || n <= 0) throw ParseError("granularity '" + std::string(text) + "': expected e.g. 1h, 15min, 1d");
    const std::string_view unit(ptr, static_cast<std::size_t>(text.data() + text.size() - ptr));
    if (unit.empty() || unit == "s") return n;
    if (unit == "min" || unit == "m") return n * 60;
    if (unit == "h") return n * 3600;
    if (unit == "d") return n * 86400;
    if (unit == "w") return n * 7 * 86400;
    throw ParseError("granularity '" + std::string(text) + "': unknown unit '" + std::string(unit) + "'");
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    while (true) {
        const auto comma = line.find(',');
        cells.push_back(trim(line.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        line.remove_prefix(comma + 1);
    }
    return cells;
}

}  // namespace detail

/// First column `date`, remaining columns numeric. The step is inferred from the
/// first two rows unless `step_override` is given; every step must match it.
inline RawSeries parse_csv(std::istream& in, std::optional<std::int64_t> step_override = std::nullopt) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv: empty input");
    auto header = detail::split_csv_line(line);
    if (header.empty() || header[0] != "date") throw ParseError("csv: first header column must be 'date'");
    if (header.size() < 2) throw ParseError("csv: no value columns");

    RawSeries s;
    for (std::size_t i = 1; i < header.size(); ++i) s.channel_names.emplace_back(header[i]);
    const std::size_t D = s.channel_names.size();
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != D + 1) {
            throw ParseError("csv row " + std::to_string(row) + ": expected " + std::to_string(D + 1) + " cells, got " +
                             std::to_string(cells.size()));
        }
        try {
            s.timestamps.push_back(parse_timestamp(cells[0]));
        } catch (const ParseError& e) {
            throw ParseError("csv row " + std::to_string(row) + ": " + e.what());
        }
        for (std::size_t c = 1; c <= D; ++c) {
            double v = 0.0;
            const std::string_view cell = cells[c];
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
                throw ParseError("csv row " + std::to_string(row) + ", column '" + s.channel_names[c - 1] +
                                 "': non-numeric cell '" + std::string(cell) + "'");
            }
            s.values.push_back(v);
        }
    }
    if (s.timestamps.empty()) throw ParseError("csv: no data rows");

    if (step_override) {
        s.step_seconds = *step_override;
    } else if (s.rows() >= 2) {
        s.step_seconds = s.timestamps[1].to_seconds() - s.timestamps[0].to_seconds();
    } else {
        throw ValidationError("csv: a single row needs an explicit granularity");
    }
    if (s.step_seconds <= 0) throw ValidationError("csv row 3: timestamps are not strictly increasing");
    for (std::size_t i = 1; i < s.rows(); ++i) {
        const std::int64_t step = s.timestamps[i].to_seconds() - s.timestamps[i - 1].to_seconds();
        if (step <= 0) {
            throw ValidationError("csv row " + std::to_string(i + 2) + ": timestamp " +
                                  format_timestamp(s.timestamps[i]) + " is not after the previous row");
        }
        if (step != s.step_seconds) {
            throw ValidationError("csv row " + std::to_string(i + 2) + ": irregular step of " + std::to_string(step) +
                                  " s (expected " + std::to_string(s.step_seconds) + " s)");
        }
    }
    return s;
}

inline RawSeries load_csv(const std::string& path, std::optional<std::int64_t> step_override = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open csv '" + path + "'");
    return parse_csv(in, step_override);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
};

/// Validation and test take floor(N·r/Σr) rows each; train keeps the remainder.
inline SplitSpec split_spec(std::size_t n, std::array<std::size_t, 3> ratios = {6, 2, 2}) {
    const std::size_t total = ratios[0] + ratios[1] + ratios[2];
    if (ratios[0] == 0 || ratios[1] == 0 || ratios[2] == 0) throw ContractError("split ratios must be positive");
    const std::size_t val = n * ratios[1] / total;
    const std::size_t test = n * ratios[2] / total;
    const std::size_t train = n - val - test;
    if (val == 0 || test == 0 || train == 0) throw ContractError("series of " + std::to_string(n) + " rows is too short to split");
    return {train, train + val};
}

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

struct SplitSeries {
    RawSeries train;
    RawSeries val;
    RawSeries test;
    NormStats stats;
};

inline void apply_normalization(RawSeries& s, const NormStats& stats) {
    const std::size_t D = s.channels();
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = (s.values[i] - stats.mean[i % D]) / stats.std[i % D];
}

/// Per-channel population mean/std from the training rows, applied to all splits.
/// A constant training channel gets std 1 (so it normalises to zeros) and a warning.
inline SplitSeries split_and_normalize(const RawSeries& s, std::array<std::size_t, 3> ratios = {6, 2, 2}) {
    const SplitSpec spec = split_spec(s.rows(), ratios);
    SplitSeries out{s.slice(0, spec.train_end), s.slice(spec.train_end, spec.val_end - spec.train_end),
                    s.slice(spec.val_end, s.rows() - spec.val_end), {}};
    const std::size_t D = s.channels();
    const auto n = static_cast<double>(spec.train_end);
    NormStats st{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
    for (std::size_t r = 0; r < spec.train_end; ++r) {
        for (std::size_t c = 0; c < D; ++c) st.mean[c] += s.at(r, c);
    }
    for (double& m : st.mean) m /= n;
    for (std::size_t r = 0; r < spec.train_end; ++r) {
        for (std::size_t c = 0; c < D; ++c) {
            const double d = s.at(r, c) - st.mean[c];
            st.std[c] += d * d;
        }
    }
    for (std::size_t c = 0; c < D; ++c) {
        st.std[c] = std::sqrt(st.std[c] / n);
        if (st.std[c] < 1e-12) {
            warn("channel '" + s.channel_names[c] + "' is constant on the training split; using std = 1");
            st.std[c] = 1.0;
        }
    }
    apply_normalization(out.train, st);
    apply_normalization(out.val, st);
    apply_normalization(out.test, st);
    out.stats = std::move(st);
    return out;
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

struct WindowSample {
    Tensor x;        // L×D
    DateMatrix dx;   // L rows
    DateMatrix dy;   // O rows
    Tensor y;        // O×D
    std::size_t gap = 0;
    std::size_t start = 0;  // row of x[0] within its split
};

struct WindowSpec {
    std::size_t seq_len = 96;
    std::size_t gap = 0;
    std::size_t horizon = 96;

    std::size_t span() const { return seq_len + gap + horizon; }
};

/// Stride-1 windows inside one split: x = rows [i, i+L), y = rows [i+L+gap, i+L+gap+O).
inline std::vector<WindowSample> make_windows(const RawSeries& split, const WindowSpec& w, const DateEncoder& dates) {
    if (w.seq_len < 2 || w.horizon < 1) throw ContractError("window needs L >= 2 and O >= 1");
    if (split.rows() < w.span()) {
        throw ContractError("split of " + std::to_string(split.rows()) + " rows yields no windows; need at least " +
                            std::to_string(w.span()) + " (L + gap + O)");
    }
    const DateMatrix all = dates.encode_all(split.timestamps);
    const std::size_t D = split.channels();
    const std::size_t count = split.rows() - w.span() + 1;
    std::vector<WindowSample> out;
    out.reserve(count);
    auto rows = [&](std::size_t begin, std::size_t n) {
        return Tensor({n, D}, std::vector<double>(split.values.begin() + static_cast<std::ptrdiff_t>(begin * D),
                                                  split.values.begin() + static_cast<std::ptrdiff_t>((begin + n) * D)));
    };
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t target = i + w.seq_len + w.gap;
        out.push_back({rows(i, w.seq_len), all.slice(i, w.seq_len), all.slice(target, w.horizon), rows(target, w.horizon),
                       w.gap, i});
    }
    return out;
}

/// Deterministic Fisher-Yates row shuffle driven by mt19937_64.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i-- > 1;) {
        const auto j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

/// Row i of the result is row perm[i] of x.
inline Tensor shuffle_rows(const Tensor& x, std::uint64_t seed) {
    if (x.rank() != 2) throw ContractError("shuffle_rows expects a matrix");
    const std::size_t L = x.dim(0), D = x.dim(1);
    const auto perm = seeded_permutation(L, seed);
    std::vector<double> out(L * D);
    const auto in = x.data();
    for (std::size_t i = 0; i < L; ++i) std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(perm[i] * D), D, out.begin() + static_cast<std::ptrdiff_t>(i * D));
    return Tensor({L, D}, std::move(out));
}

}  // namespace d2v
