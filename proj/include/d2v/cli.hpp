#pragma once

// Command implementations behind the `d2vformer` executable. Each command
// returns a process exit code and writes its report to the given stream, so
// tests can drive them without spawning processes.
//
// Exit codes: 0 success, 1 runtime/data failure, 2 invalid configuration.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/calendar.hpp"
#include "d2v/checkpoint.hpp"
#include "d2v/data.hpp"
#include "d2v/errors.hpp"
#include "d2v/model.hpp"
#include "d2v/training.hpp"

namespace d2v::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// Configuration problem, reported with the offending key path.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    fs::path data;
    std::optional<fs::path> lunar_table;
    bool strict_lunar = true;
    std::optional<std::int64_t> granularity;
    fs::path output_dir;
    std::array<std::size_t, 3> split{6, 2, 2};
    WindowSpec window{96, 0, 96};
    TrainConfig train;
    int finetune_epochs = 3;
    std::vector<std::uint64_t> seeds;
    json echo;
};

namespace detail {

inline std::size_t positive_int(const json& j, const std::string& key, bool allow_zero = false) {
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < (allow_zero ? 0 : 1)) {
        throw ConfigError("config." + key + ": expected a " + (allow_zero ? "non-negative" : "positive") + " integer");
    }
    return v.get<std::size_t>();
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace detail

/// Flat JSON config. Relative paths resolve against the config file's directory.
inline RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
    static const std::set<std::string> known{
        "data",      "lunar_table", "strict_lunar", "granularity", "output_dir",  "split",
        "seq_len",   "gap",         "pred_len",     "hidden",      "frequencies", "ff_hidden",
        "embedding", "head",        "lr",           "max_epochs",  "patience",    "batch_size",
        "seed",      "seeds",       "finetune_epochs"};
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("config." + key + ": unknown key");
    }
    for (const char* required : {"data", "output_dir", "seq_len", "pred_len"}) {
        if (!j.contains(required)) throw ConfigError(std::string("config.") + required + ": missing required key");
    }
    auto string_at = [&](const char* key) {
        if (!j.at(key).is_string()) throw ConfigError(std::string("config.") + key + ": expected a string");
        return j.at(key).get<std::string>();
    };

    RunConfig rc;
    rc.echo = j;
    rc.data = detail::resolve(base_dir, string_at("data"));
    rc.output_dir = detail::resolve(base_dir, string_at("output_dir"));
    if (j.contains("lunar_table")) rc.lunar_table = detail::resolve(base_dir, string_at("lunar_table"));
    if (j.contains("strict_lunar")) {
        if (!j.at("strict_lunar").is_boolean()) throw ConfigError("config.strict_lunar: expected a boolean");
        rc.strict_lunar = j.at("strict_lunar").get<bool>();
    }
    if (j.contains("granularity")) {
        try {
            rc.granularity = parse_granularity(string_at("granularity"));
        } catch (const ParseError& e) {
            throw ConfigError(std::string("config.granularity: ") + e.what());
        }
    }
    if (j.contains("split")) {
        const json& s = j.at("split");
        if (!s.is_array() || s.size() != 3) throw ConfigError("config.split: expected three positive integers");
        for (std::size_t i = 0; i < 3; ++i) {
            if (!s[i].is_number_integer() || s[i].get<long long>() < 1) {
                throw ConfigError("config.split[" + std::to_string(i) + "]: expected a positive integer");
            }
            rc.split[i] = s[i].get<std::size_t>();
        }
    }
    rc.window.seq_len = detail::positive_int(j, "seq_len");
    rc.window.horizon = detail::positive_int(j, "pred_len");
    if (j.contains("gap")) rc.window.gap = detail::positive_int(j, "gap", true);
    if (rc.window.seq_len < 2) throw ConfigError("config.seq_len: must be at least 2");

    ModelConfig& m = rc.train.model;
    m.seq_len = rc.window.seq_len;
    if (j.contains("hidden")) m.hidden = detail::positive_int(j, "hidden");
    if (j.contains("frequencies")) m.frequencies = detail::positive_int(j, "frequencies");
    m.ff_hidden = j.contains("ff_hidden") ? detail::positive_int(j, "ff_hidden") : m.hidden;
    try {
        if (j.contains("embedding")) m.embedding = parse_embedding_kind(string_at("embedding"));
    } catch (const ParseError& e) {
        throw ConfigError(std::string("config.embedding: ") + e.what());
    }
    try {
        if (j.contains("head")) m.head = parse_head_kind(string_at("head"));
    } catch (const ParseError& e) {
        throw ConfigError(std::string("config.head: ") + e.what());
    }
    if (m.head == HeadKind::linear) m.linear_horizon = rc.window.horizon;

    if (j.contains("lr")) {
        if (!j.at("lr").is_number() || !(j.at("lr").get<double>() > 0.0)) {
            throw ConfigError("config.lr: expected a positive number");
        }
        rc.train.lr_hat = j.at("lr").get<double>();
    }
    if (j.contains("max_epochs")) rc.train.max_epochs = static_cast<int>(detail::positive_int(j, "max_epochs"));
    if (j.contains("patience")) rc.train.patience = static_cast<int>(detail::positive_int(j, "patience"));
    if (j.contains("batch_size")) rc.train.batch_size = detail::positive_int(j, "batch_size");
    if (j.contains("seed")) rc.train.seed = detail::positive_int(j, "seed", true);
    if (j.contains("finetune_epochs")) rc.finetune_epochs = static_cast<int>(detail::positive_int(j, "finetune_epochs", true));
    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        if (!s.is_array() || s.empty()) throw ConfigError("config.seeds: expected a non-empty array of integers");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!s[i].is_number_integer() || s[i].get<long long>() < 0) {
                throw ConfigError("config.seeds[" + std::to_string(i) + "]: expected a non-negative integer");
            }
            rc.seeds.push_back(s[i].get<std::uint64_t>());
        }
    }

    rc.echo["data"] = rc.data.string();
    rc.echo.erase("output_dir");
    if (rc.lunar_table) rc.echo["lunar_table"] = rc.lunar_table->string();

    if (!fs::exists(rc.data)) throw ConfigError("config.data: file '" + rc.data.string() + "' does not exist");
    if (rc.lunar_table && !fs::exists(*rc.lunar_table)) {
        throw ConfigError("config.lunar_table: file '" + rc.lunar_table->string() + "' does not exist");
    }
    return rc;
}

inline RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces
// ---------------------------------------------------------------------------

struct Dataset {
    RawSeries raw;
    SplitSeries splits;
    DateEncoder encoder;
};

inline DateEncoder make_encoder(const std::optional<fs::path>& table, bool strict) {
    if (!table) return DateEncoder(nullptr, strict);
    return DateEncoder(std::make_shared<const LunarTable>(load_lunar_table(table->string())), strict);
}

inline Dataset load_dataset(const RunConfig& rc) {
    RawSeries raw = load_csv(rc.data.string(), rc.granularity);
    SplitSeries splits = split_and_normalize(raw, rc.split);
    const std::size_t smallest = std::min({splits.train.rows(), splits.val.rows(), splits.test.rows()});
    if (rc.window.span() > smallest) {
        throw ConfigError("config: window L + gap + O = " + std::to_string(rc.window.span()) +
                          " exceeds the smallest split (" + std::to_string(smallest) + " rows)");
    }
    return {std::move(raw), std::move(splits), make_encoder(rc.lunar_table, rc.strict_lunar)};
}

inline json metrics_json(const Metrics& m) { return {{"mae", m.mae}, {"mse", m.mse}, {"n", m.n}}; }

inline double mean_seconds(const std::vector<EpochRecord>& h) {
    if (h.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : h) s += r.seconds;
    return s / static_cast<double>(h.size());
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

// Trains one seed into `out_dir`; returns the summary.
inline json train_into(const RunConfig& rc, const Dataset& ds, std::uint64_t seed, const fs::path& out_dir,
                       std::ostream& log) {
    TrainConfig tc = rc.train;
    tc.seed = seed;
    tc.model.channels = ds.raw.channels();
    tc.log = &log;
    const auto train_set = make_windows(ds.splits.train, rc.window, ds.encoder);
    const auto val_set = make_windows(ds.splits.val, rc.window, ds.encoder);
    const auto test_set = make_windows(ds.splits.test, rc.window, ds.encoder);
    TrainResult result = train(tc, train_set, val_set);
    const Metrics test = evaluate(result.best, test_set);

    fs::create_directories(out_dir);
    Checkpoint ck{result.best, ds.splits.stats, ds.raw.channel_names, ds.raw.step_seconds, ds.encoder.has_table(),
                  rc.echo};
    ck.config["seed"] = seed;
    save_checkpoint(ck, out_dir / "checkpoint");
    std::ostringstream hist;
    write_history_csv(hist, result.history);
    write_text(out_dir / "history.csv", hist.str());

    json summary = metrics_json(test);
    summary["params"] = count_params(result.best);
    summary["seconds_per_epoch"] = mean_seconds(result.history);
    summary["best_epoch"] = result.best_epoch;
    summary["epochs"] = result.history.size();
    summary["seed"] = seed;
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

/// Encoder consistent with how a checkpoint was trained.
inline DateEncoder checkpoint_encoder(const Checkpoint& ck, const std::optional<fs::path>& table_override) {
    std::optional<fs::path> table = table_override;
    if (!table && ck.lunar_table && ck.config.contains("lunar_table")) table = fs::path(ck.config.at("lunar_table").get<std::string>());
    if (ck.lunar_table && !table) throw ConfigError("checkpoint was trained with a lunar table; pass --lunar-table");
    bool strict = true;
    if (ck.config.contains("strict_lunar")) strict = ck.config.at("strict_lunar").get<bool>();
    return make_encoder(ck.lunar_table ? table : std::nullopt, strict);
}

inline std::array<std::size_t, 3> checkpoint_split(const Checkpoint& ck) {
    std::array<std::size_t, 3> split{6, 2, 2};
    if (ck.config.contains("split")) {
        for (std::size_t i = 0; i < 3; ++i) split[i] = ck.config.at("split")[i].get<std::size_t>();
    }
    return split;
}

/// Splits a CSV the way training did and standardises it with the checkpoint's statistics.
inline SplitSeries checkpoint_splits(const Checkpoint& ck, const RawSeries& raw) {
    if (raw.channels() != ck.params.config.channels) {
        throw ContractError("csv has " + std::to_string(raw.channels()) + " channels, checkpoint expects " +
                            std::to_string(ck.params.config.channels));
    }
    const SplitSpec spec = split_spec(raw.rows(), checkpoint_split(ck));
    SplitSeries s{raw.slice(0, spec.train_end), raw.slice(spec.train_end, spec.val_end - spec.train_end),
                  raw.slice(spec.val_end, raw.rows() - spec.val_end), ck.norm};
    if (!ck.norm.mean.empty()) {
        apply_normalization(s.train, ck.norm);
        apply_normalization(s.val, ck.norm);
        apply_normalization(s.test, ck.norm);
    }
    return s;
}

inline const RawSeries& pick_split(const SplitSeries& s, const std::string& name) {
    if (name == "train") return s.train;
    if (name == "val") return s.val;
    if (name == "test") return s.test;
    throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Trains per the config and writes checkpoint/, history.csv and summary.json
/// into output_dir (one seed_<n>/ subdirectory per entry when `seeds` is set).
inline int cmd_train(const fs::path& config_path, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig rc = load_run_config(config_path);
        const Dataset ds = load_dataset(rc);
        if (rc.seeds.empty()) {
            out << train_into(rc, ds, rc.train.seed, rc.output_dir, err).dump(2) << '\n';
            return kExitOk;
        }
        json all = json::array();
        for (std::uint64_t seed : rc.seeds) {
            all.push_back(train_into(rc, ds, seed, rc.output_dir / ("seed_" + std::to_string(seed)), err));
        }
        double mae = 0.0, mse = 0.0;
        for (const auto& s : all) {
            mae += s.at("mae").get<double>();
            mse += s.at("mse").get<double>();
        }
        json summary{{"runs", all},
                     {"mae", mae / static_cast<double>(all.size())},
                     {"mse", mse / static_cast<double>(all.size())},
                     {"n", all.front().at("n")},
                     {"params", all.front().at("params")}};
        write_text(rc.output_dir / "summary.json", summary.dump(2) + "\n");
        out << summary.dump(2) << '\n';
        return kExitOk;
    });
}

struct PredictOptions {
    fs::path checkpoint;
    fs::path csv;
    std::optional<std::string> start_date;
    std::size_t horizon = 1;
    std::size_t gap = 0;
    std::optional<fs::path> output;
    std::optional<fs::path> lunar_table;
};

/// Predicts `horizon` steps starting at `start_date` (default: the step after
/// the gap that follows the last CSV row). The input window is the L rows
/// ending `gap + 1` steps before the first predicted step.
inline int cmd_predict(const PredictOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (opt.horizon < 1) throw ConfigError("--horizon must be at least 1");
        const Checkpoint ck = load_checkpoint(opt.checkpoint);
        const DateEncoder encoder = checkpoint_encoder(ck, opt.lunar_table);
        const RawSeries raw = load_csv(opt.csv.string(), ck.step_seconds > 0 ? std::optional(ck.step_seconds) : std::nullopt);
        if (raw.channels() != ck.params.config.channels) {
            throw ContractError("csv has " + std::to_string(raw.channels()) + " channels, checkpoint expects " +
                                std::to_string(ck.params.config.channels));
        }
        const std::int64_t step = raw.step_seconds;
        const std::size_t L = ck.params.config.seq_len;
        const std::int64_t start = opt.start_date
                                       ? parse_timestamp(*opt.start_date).to_seconds()
                                       : raw.timestamps.back().to_seconds() + static_cast<std::int64_t>(opt.gap + 1) * step;
        const std::int64_t last_input = start - static_cast<std::int64_t>(opt.gap + 1) * step;
        const std::int64_t first_row = raw.timestamps.front().to_seconds();
        if (last_input < first_row || (last_input - first_row) % step != 0) {
            throw ContractError("no input row at " + format_timestamp(CivilDateTime::from_seconds(last_input)));
        }
        const auto end_row = static_cast<std::size_t>((last_input - first_row) / step);
        if (end_row >= raw.rows()) {
            throw ContractError("input window would end at " + format_timestamp(CivilDateTime::from_seconds(last_input)) +
                                ", after the last CSV row");
        }
        if (end_row + 1 < L) {
            throw ContractError("need " + std::to_string(L) + " rows of history before the prediction, have " +
                                std::to_string(end_row + 1));
        }
        RawSeries window = raw.slice(end_row + 1 - L, L);
        if (!ck.norm.mean.empty()) apply_normalization(window, ck.norm);
        const DateMatrix dx = encoder.encode_all(window.timestamps);
        const DateMatrix dy = encoder.encode_range(CivilDateTime::from_seconds(start), opt.horizon, step);
        const Tensor pred = predict_flexible(ck.params, window.tensor(), dx, dy, opt.gap);

        std::ostringstream csv;
        csv << "date";
        for (const auto& name : ck.channel_names) csv << ',' << name;
        csv << '\n' << std::setprecision(10);
        const std::size_t D = ck.params.config.channels;
        for (std::size_t o = 0; o < opt.horizon; ++o) {
            csv << format_timestamp(CivilDateTime::from_seconds(start + static_cast<std::int64_t>(o) * step));
            for (std::size_t d = 0; d < D; ++d) {
                double v = pred.data()[o * D + d];
                if (!ck.norm.mean.empty()) v = v * ck.norm.std[d] + ck.norm.mean[d];
                csv << ',' << v;
            }
            csv << '\n';
        }
        if (opt.output) {
            write_text(*opt.output, csv.str());
        } else {
            out << csv.str();
        }
        return kExitOk;
    });
}

struct EvalOptions {
    fs::path checkpoint;
    fs::path csv;
    std::optional<std::size_t> gap;
    std::optional<std::size_t> horizon;
    std::string split = "test";
    std::optional<fs::path> lunar_table;
    std::vector<std::uint64_t> shuffle_seeds;
};

inline std::vector<WindowSample> eval_windows(const Checkpoint& ck, const EvalOptions& opt) {
    const DateEncoder encoder = checkpoint_encoder(ck, opt.lunar_table);
    const RawSeries raw = load_csv(opt.csv.string(), ck.step_seconds > 0 ? std::optional(ck.step_seconds) : std::nullopt);
    const SplitSeries splits = checkpoint_splits(ck, raw);
    WindowSpec w{ck.params.config.seq_len, 0, 1};
    if (ck.config.contains("gap")) w.gap = ck.config.at("gap").get<std::size_t>();
    if (ck.config.contains("pred_len")) w.horizon = ck.config.at("pred_len").get<std::size_t>();
    if (opt.gap) w.gap = *opt.gap;
    if (opt.horizon) w.horizon = *opt.horizon;
    return make_windows(pick_split(splits, opt.split), w, encoder);
}

/// MAE/MSE of a checkpoint on one split, optionally at a new (gap, horizon).
inline int cmd_evaluate(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Checkpoint ck = load_checkpoint(opt.checkpoint);
        out << metrics_json(evaluate(ck.params, eval_windows(ck, opt))).dump(2) << '\n';
        return kExitOk;
    });
}

/// Compares metrics with ordered inputs against row-shuffled inputs.
inline json shuffle_report(const ModelParams& p, const std::vector<WindowSample>& samples,
                           const std::vector<std::uint64_t>& seeds) {
    const Metrics base = evaluate(p, samples);
    json shuffled = json::array();
    for (std::uint64_t seed : seeds) {
        const Metrics m = evaluate(p, samples, seed);
        auto rel = [](double after, double before) { return before > 0.0 ? (after - before) / before : 0.0; };
        json row = metrics_json(m);
        row["seed"] = seed;
        row["delta_mae"] = rel(m.mae, base.mae);
        row["delta_mse"] = rel(m.mse, base.mse);
        shuffled.push_back(row);
    }
    return {{"unshuffled", metrics_json(base)}, {"shuffled", shuffled}};
}

inline int cmd_shuffle_test(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Checkpoint ck = load_checkpoint(opt.checkpoint);
        const auto seeds = opt.shuffle_seeds.empty() ? std::vector<std::uint64_t>{0} : opt.shuffle_seeds;
        out << shuffle_report(ck.params, eval_windows(ck, opt), seeds).dump(2) << '\n';
        return kExitOk;
    });
}

inline int cmd_count_params(const fs::path& checkpoint, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Checkpoint ck = load_checkpoint(checkpoint);
        out << json{{"params", count_params(ck.params)}}.dump(2) << '\n';
        return kExitOk;
    });
}

/// Mean training seconds per epoch from a history.csv, if one exists.
inline std::optional<double> history_seconds_per_epoch(const fs::path& history) {
    std::ifstream in(history);
    if (!in) return std::nullopt;
    std::string line;
    std::getline(in, line);
    double total = 0.0;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) continue;
        total += std::stod(line.substr(comma + 1));
        ++n;
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

struct BenchOptions {
    EvalOptions eval;
    int trials = 50;
    std::size_t batch_size = 16;
};

/// Parameter count, inference ms/batch and training s/epoch in one JSON row.
inline int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (opt.trials < 1) throw ConfigError("--trials must be at least 1");
        const Checkpoint ck = load_checkpoint(opt.eval.checkpoint);
        const TimingReport t = timing_report(ck.params, eval_windows(ck, opt.eval), opt.trials, opt.batch_size);
        json row{{"params", t.params},
                 {"inference_ms_per_batch", t.inference_ms_per_batch},
                 {"batch", t.batch},
                 {"trials", t.trials}};
        const auto spe = history_seconds_per_epoch(opt.eval.checkpoint.parent_path() / "history.csv");
        row["seconds_per_epoch"] = spe ? json(*spe) : json(nullptr);
        out << row.dump(2) << '\n';
        return kExitOk;
    });
}

/// Fine-tunes a checkpoint on the config's (gap, pred_len) task for
/// `finetune_epochs` epochs and writes the result into output_dir.
inline int cmd_finetune(const fs::path& checkpoint, const fs::path& config_path, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Checkpoint ck = load_checkpoint(checkpoint);
        RunConfig rc = load_run_config(config_path);
        if (rc.window.seq_len != ck.params.config.seq_len) {
            throw ConfigError("config.seq_len: " + std::to_string(rc.window.seq_len) + " differs from the checkpoint's " +
                              std::to_string(ck.params.config.seq_len));
        }
        const Dataset ds = load_dataset(rc);
        if (ds.raw.channels() != ck.params.config.channels) {
            throw ContractError("dataset has " + std::to_string(ds.raw.channels()) + " channels, checkpoint expects " +
                                std::to_string(ck.params.config.channels));
        }
        const auto train_set = make_windows(ds.splits.train, rc.window, ds.encoder);
        const auto val_set = make_windows(ds.splits.val, rc.window, ds.encoder);
        const auto test_set = make_windows(ds.splits.test, rc.window, ds.encoder);
        TrainConfig tc = rc.train;
        tc.max_epochs = rc.finetune_epochs;
        tc.log = &err;
        TrainResult result = finetune(ck.params, tc, train_set, val_set);
        const Metrics test = evaluate(result.best, test_set);

        fs::create_directories(rc.output_dir);
        Checkpoint tuned{result.best, ds.splits.stats, ds.raw.channel_names, ds.raw.step_seconds,
                         ds.encoder.has_table(), rc.echo};
        save_checkpoint(tuned, rc.output_dir / "checkpoint");
        std::ostringstream hist;
        write_history_csv(hist, result.history);
        write_text(rc.output_dir / "history.csv", hist.str());
        json summary = metrics_json(test);
        summary["params"] = count_params(result.best);
        summary["seconds_per_epoch"] = mean_seconds(result.history);
        summary["epochs"] = result.history.size();
        write_text(rc.output_dir / "summary.json", summary.dump(2) + "\n");
        out << summary.dump(2) << '\n';
        return kExitOk;
    });
}

}  // namespace d2v::cli
