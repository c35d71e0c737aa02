#pragma once

// Loss, Adam, step-decay schedule, early stopping, the epoch loop, evaluation,
// flexible-horizon prediction, fine-tuning and timing.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "d2v/data.hpp"
#include "d2v/errors.hpp"
#include "d2v/model.hpp"
#include "d2v/tensor.hpp"

namespace d2v {

// ---------------------------------------------------------------------------
// Losses and metrics
// ---------------------------------------------------------------------------

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("mse_loss: prediction " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
    }
    return mean_all(square(sub(pred, target)));
}

inline double mae_metric(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("mae_metric: prediction " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
    }
    const auto p = pred.data(), t = target.data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - t[i]);
    return total / static_cast<double>(p.size());
}

inline double mse_metric(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) throw ShapeError("mse_metric: shape mismatch");
    const auto p = pred.data(), t = target.data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
    return total / static_cast<double>(p.size());
}

struct Metrics {
    double mae = 0.0;
    double mse = 0.0;
    std::size_t n = 0;  // samples
};

// ---------------------------------------------------------------------------
// Schedule, optimiser, early stopping
// ---------------------------------------------------------------------------

/// lr = lr_hat · 0.75^floor((epoch - 1) / 2), epochs counted from 1.
inline double lr_at_epoch(double lr_hat, int epoch) {
    if (epoch < 1) throw ContractError("lr_at_epoch: epochs are counted from 1, got " + std::to_string(epoch));
    return lr_hat * std::pow(0.75, (epoch - 1) / 2);
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Every tensor must carry a gradient.
inline void adam_step(std::vector<NamedTensor>& params, AdamState& state, double lr, const AdamConfig& cfg = {}) {
    for (const auto& p : params) {
        if (!p.value.has_grad()) throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.value.size(), 0.0);
            state.v.emplace_back(p.value.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ContractError("adam_step: optimiser state does not match parameters");
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params[i].value;
        const std::vector<double> g = t.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != g.size()) throw ContractError("adam_step: moment shape mismatch for '" + params[i].name + "'");
        auto data = t.mutable_data();
        for (std::size_t j = 0; j < g.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
        }
    }
}

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience, double best = std::numeric_limits<double>::infinity())
        : patience_(patience), best_(best) {}

    /// Returns true if `value` is a new best.
    bool update(double value) {
        if (value < best_ - 1e-12) {
            best_ = value;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }

    bool should_stop() const { return stale_ >= patience_; }
    double best() const { return best_; }
    int epochs_since_improvement() const { return stale_; }

private:
    int patience_;
    double best_;
    int stale_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation and prediction
// ---------------------------------------------------------------------------

/// Maps (sample, possibly shuffled input) to an O×D prediction.
using Predictor = std::function<Tensor(const WindowSample&, const Tensor&)>;

inline Predictor model_predictor(const ModelParams& p) {
    return [&p](const WindowSample& s, const Tensor& x) { return model_forward(x, s.dx, s.dy, p, s.gap); };
}

/// MAE/MSE over every element of every sample. With `shuffle_seed`, each input
/// window has its rows shuffled (dates untouched) before prediction.
inline Metrics evaluate(const Predictor& predict, const std::vector<WindowSample>& samples,
                        std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
    NoGradGuard no_grad;
    Metrics m;
    double abs_total = 0.0, sq_total = 0.0;
    std::size_t elements = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const WindowSample& s = samples[i];
        const Tensor x = shuffle_seed ? shuffle_rows(s.x, *shuffle_seed + i) : s.x;
        const Tensor pred = predict(s, x);
        abs_total += mae_metric(pred, s.y) * static_cast<double>(s.y.size());
        sq_total += mse_metric(pred, s.y) * static_cast<double>(s.y.size());
        elements += s.y.size();
    }
    m.n = samples.size();
    if (elements) {
        m.mae = abs_total / static_cast<double>(elements);
        m.mse = sq_total / static_cast<double>(elements);
    }
    return m;
}

inline Metrics evaluate(const ModelParams& p, const std::vector<WindowSample>& samples,
                        std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
    for (const auto& s : samples) {
        if (s.x.dim(0) != p.config.seq_len || s.x.dim(1) != p.config.channels) {
            throw ContractError("evaluate: sample window " + to_string(s.x.shape()) + " does not match the model's [" +
                                std::to_string(p.config.seq_len) + ", " + std::to_string(p.config.channels) + "]");
        }
    }
    return evaluate(model_predictor(p), samples, shuffle_seed);
}

/// One forward pass for any number of target dates; parameters are not touched.
inline Tensor predict_flexible(const ModelParams& p, const Tensor& x, const DateMatrix& dx, const DateMatrix& dy,
                               std::size_t gap = 0) {
    NoGradGuard no_grad;
    return model_forward(x, dx, dy, p, gap);
}

/// FNV-1a over the raw bytes of every parameter, in storage order.
inline std::uint64_t param_hash(const ModelParams& p) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& t : p.tensors) {
        for (double v : t.value.data()) {
            unsigned char bytes[8];
            std::memcpy(bytes, &v, 8);
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ull;
            }
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    ModelConfig model;
    double lr_hat = 1e-3;
    int max_epochs = 100;
    int patience = 5;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    AdamConfig adam;
    std::ostream* log = nullptr;
};

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mae = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    ModelParams best;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_mse = std::numeric_limits<double>::infinity();
};

/// `epoch,train_mse,val_mae,val_mse,lr,seconds`
inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history, bool include_seconds = true) {
    os << (include_seconds ? "epoch,train_mse,val_mae,val_mse,lr,seconds\n" : "epoch,train_mse,val_mae,val_mse,lr\n");
    os << std::setprecision(17);
    for (const auto& r : history) {
        os << r.epoch << ',' << r.train_mse << ',' << r.val_mae << ',' << r.val_mse << ',' << r.lr;
        if (include_seconds) os << ',' << r.seconds;
        os << '\n';
    }
}

namespace detail {

inline void check_samples(const ModelConfig& c, const std::vector<WindowSample>& samples, const char* what) {
    for (const auto& s : samples) {
        if (s.x.rank() != 2 || s.x.dim(0) != c.seq_len || s.x.dim(1) != c.channels) {
            throw ContractError(std::string(what) + ": window of shape " + to_string(s.x.shape()) +
                                " does not match L=" + std::to_string(c.seq_len) + ", D=" + std::to_string(c.channels));
        }
    }
}

// The loop shared by train and finetune. `best_val` seeds early stopping.
inline TrainResult run_epochs(ModelParams params, const TrainConfig& cfg, const std::vector<WindowSample>& train_set,
                              const std::vector<WindowSample>& val_set, double best_val) {
    using clock = std::chrono::steady_clock;
    TrainResult result;
    result.best = params.clone();
    result.best_val_mse = best_val;
    EarlyStopping stopper(cfg.patience, best_val);
    AdamState adam;
    std::mt19937_64 order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = clock::now();
        const double lr = lr_at_epoch(cfg.lr_hat, epoch);
        const auto order = seeded_permutation(train_set.size(), order_rng());
        double loss_total = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const double weight = 1.0 / static_cast<double>(end - begin);
            params.zero_grad();
            // Per-sample backward keeps one small graph alive at a time; the
            // summed gradients equal those of the batch-mean loss.
            for (std::size_t i = begin; i < end; ++i) {
                const WindowSample& s = train_set[order[i]];
                Tensor loss = mse_loss(model_forward(s.x, s.dx, s.dy, params, s.gap), s.y);
                const double value = loss.item();
                if (!std::isfinite(value)) {
                    std::ostringstream msg;
                    msg << "non-finite training loss at epoch " << epoch << ", batch " << batch_index << " (lr " << lr
                        << ")";
                    throw NumericError(msg.str());
                }
                loss_total += value;
                backward(scale(loss, weight));
            }
            adam_step(params.tensors, adam, lr, cfg.adam);
        }
        const Metrics val = evaluate(params, val_set);
        const double seconds = std::chrono::duration<double>(clock::now() - t0).count();
        result.history.push_back(
            {epoch, loss_total / static_cast<double>(train_set.size()), val.mae, val.mse, lr, seconds});
        if (stopper.update(val.mse)) {
            result.best = params.clone();
            result.best_epoch = epoch;
            result.best_val_mse = val.mse;
        }
        if (cfg.log) {
            *cfg.log << "epoch " << epoch << "  train_mse " << result.history.back().train_mse << "  val_mse "
                     << val.mse << "  val_mae " << val.mae << "  lr " << lr << "  " << seconds << " s\n";
        }
        if (stopper.should_stop()) break;
    }
    params.zero_grad();
    result.best.zero_grad();
    return result;
}

}  // namespace detail

/// Adam + MSE with step-decayed learning rate and early stopping on validation
/// MSE. Returns the best-validation parameters and the per-epoch history.
inline TrainResult train(const TrainConfig& cfg, const std::vector<WindowSample>& train_set,
                         const std::vector<WindowSample>& val_set) {
    if (train_set.empty() || val_set.empty()) throw ContractError("train: training and validation sets must be non-empty");
    if (cfg.batch_size == 0 || cfg.max_epochs < 1 || cfg.patience < 1) {
        throw ContractError("train: batch_size, max_epochs and patience must be positive");
    }
    detail::check_samples(cfg.model, train_set, "train");
    detail::check_samples(cfg.model, val_set, "train");
    return detail::run_epochs(init_params(cfg.model, cfg.seed), cfg, train_set, val_set,
                              std::numeric_limits<double>::infinity());
}

/// Continues training an existing model on a new (gap, horizon) task. The
/// starting parameters count as the first candidate, so the returned model is
/// never worse on `val_set` than the input.
inline TrainResult finetune(const ModelParams& start, const TrainConfig& cfg, const std::vector<WindowSample>& train_set,
                            const std::vector<WindowSample>& val_set) {
    detail::check_samples(start.config, train_set, "finetune");
    detail::check_samples(start.config, val_set, "finetune");
    if (cfg.max_epochs <= 0) {
        TrainResult r;
        r.best = start.clone();
        return r;
    }
    if (train_set.empty() || val_set.empty()) throw ContractError("finetune: datasets must be non-empty");
    const double initial = evaluate(start, val_set).mse;
    TrainConfig c = cfg;
    c.model = start.config;
    return detail::run_epochs(start.clone(), c, train_set, val_set, initial);
}

struct TimingReport {
    double inference_ms_per_batch = 0.0;
    std::size_t params = 0;
    std::size_t batch = 0;
    int trials = 0;
};

/// Mean wall-clock time of one inference batch (the first `batch_size` samples).
inline TimingReport timing_report(const ModelParams& p, const std::vector<WindowSample>& samples, int trials = 50,
                                  std::size_t batch_size = 16) {
    if (samples.empty()) throw ContractError("timing_report needs at least one sample");
    if (trials < 1) throw ContractError("timing_report needs at least one trial");
    using clock = std::chrono::steady_clock;
    NoGradGuard no_grad;
    const std::size_t n = std::min(batch_size, samples.size());
    double total_ms = 0.0;
    for (int t = 0; t < trials; ++t) {
        const auto t0 = clock::now();
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor out = model_forward(samples[i].x, samples[i].dx, samples[i].dy, p, samples[i].gap);
            (void)out;
        }
        total_ms += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    }
    return {total_ms / trials, count_params(p), n, trials};
}

}  // namespace d2v
