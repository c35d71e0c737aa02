#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "d2v/cli.hpp"

namespace {

void add_eval_options(CLI::App* cmd, d2v::cli::EvalOptions& opt, std::optional<std::size_t>& gap,
                      std::optional<std::size_t>& horizon, std::optional<std::string>& table) {
    cmd->add_option("--checkpoint", opt.checkpoint, "Checkpoint directory")->required();
    cmd->add_option("--csv", opt.csv, "Series CSV (first column 'date')")->required();
    cmd->add_option("--gap", gap, "Gap between input and target windows (default: as trained)");
    cmd->add_option("--horizon", horizon, "Target window length (default: as trained)");
    cmd->add_option("--split", opt.split, "train, val or test")->capture_default_str();
    cmd->add_option("--lunar-table", table, "Lunar table CSV (default: the one used in training)");
}

void finish_eval(d2v::cli::EvalOptions& opt, const std::optional<std::size_t>& gap,
                 const std::optional<std::size_t>& horizon, const std::optional<std::string>& table) {
    opt.gap = gap;
    opt.horizon = horizon;
    if (table) opt.lunar_table = *table;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"D2Vformer: date-embedding forecaster with flexible prediction horizons"};
    app.require_subcommand(1);

    std::string config;
    auto* train = app.add_subcommand("train", "Train a model from a JSON config");
    train->add_option("--config", config, "Run configuration (JSON)")->required();

    d2v::cli::PredictOptions predict_opt;
    std::optional<std::string> predict_start, predict_out, predict_table;
    auto* predict = app.add_subcommand("predict", "Forecast an arbitrary horizon after an arbitrary gap");
    predict->add_option("--checkpoint", predict_opt.checkpoint, "Checkpoint directory")->required();
    predict->add_option("--csv", predict_opt.csv, "History CSV")->required();
    predict->add_option("--start-date", predict_start, "First predicted timestamp");
    predict->add_option("--horizon", predict_opt.horizon, "Number of steps to predict")->required();
    predict->add_option("--gap", predict_opt.gap, "Steps between the input window and the prediction")
        ->capture_default_str();
    predict->add_option("--out", predict_out, "Write predictions CSV here instead of stdout");
    predict->add_option("--lunar-table", predict_table, "Lunar table CSV");

    d2v::cli::EvalOptions eval_opt;
    std::optional<std::size_t> eval_gap, eval_horizon;
    std::optional<std::string> eval_table;
    auto* evaluate = app.add_subcommand("evaluate", "MAE/MSE on a split");
    add_eval_options(evaluate, eval_opt, eval_gap, eval_horizon, eval_table);

    d2v::cli::EvalOptions shuffle_opt;
    std::optional<std::size_t> shuffle_gap, shuffle_horizon;
    std::optional<std::string> shuffle_table;
    auto* shuffle = app.add_subcommand("shuffle-test", "Metrics before and after shuffling input rows");
    add_eval_options(shuffle, shuffle_opt, shuffle_gap, shuffle_horizon, shuffle_table);
    shuffle->add_option("--seed", shuffle_opt.shuffle_seeds, "Shuffle seed (repeatable)");

    std::string count_checkpoint;
    auto* count = app.add_subcommand("count-params", "Number of learnable parameters");
    count->add_option("--checkpoint", count_checkpoint, "Checkpoint directory")->required();

    d2v::cli::BenchOptions bench_opt;
    std::optional<std::size_t> bench_gap, bench_horizon;
    std::optional<std::string> bench_table;
    auto* bench = app.add_subcommand("bench", "Parameter count and timing");
    add_eval_options(bench, bench_opt.eval, bench_gap, bench_horizon, bench_table);
    bench->add_option("--trials", bench_opt.trials, "Timing trials")->capture_default_str();
    bench->add_option("--batch", bench_opt.batch_size, "Samples per inference batch")->capture_default_str();

    std::string ft_checkpoint, ft_config;
    auto* finetune = app.add_subcommand("finetune", "Continue training a checkpoint on a new gap/horizon task");
    finetune->add_option("--checkpoint", ft_checkpoint, "Checkpoint directory")->required();
    finetune->add_option("--config", ft_config, "Run configuration (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    using namespace d2v::cli;
    if (*train) return cmd_train(config, std::cout, std::cerr);
    if (*predict) {
        predict_opt.start_date = predict_start;
        if (predict_out) predict_opt.output = *predict_out;
        if (predict_table) predict_opt.lunar_table = *predict_table;
        return cmd_predict(predict_opt, std::cout, std::cerr);
    }
    if (*evaluate) {
        finish_eval(eval_opt, eval_gap, eval_horizon, eval_table);
        return cmd_evaluate(eval_opt, std::cout, std::cerr);
    }
    if (*shuffle) {
        finish_eval(shuffle_opt, shuffle_gap, shuffle_horizon, shuffle_table);
        return cmd_shuffle_test(shuffle_opt, std::cout, std::cerr);
    }
    if (*count) return cmd_count_params(count_checkpoint, std::cout, std::cerr);
    if (*bench) {
        finish_eval(bench_opt.eval, bench_gap, bench_horizon, bench_table);
        return cmd_bench(bench_opt, std::cout, std::cerr);
    }
    if (*finetune) return cmd_finetune(ft_checkpoint, ft_config, std::cout, std::cerr);
    return kExitConfig;
}
