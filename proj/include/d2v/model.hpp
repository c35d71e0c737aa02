#pragma once

// The D2Vformer network:
//
//   x (L×D) ─ RevIN ─ linear (TFE) ─► T (L×H)
//   T, D_x ─ Date2Vec ─► Dx_hat ((k+1)×H×L)
//   T, D_y ─ Date2Vec ─► Dy_hat ((k+1)×H×O)
//   A[h,o,l]  = Σ_f Dy_hat[f,h,o] · Dx_hat[f,h,l]
//   Y~[h,o]   = Σ_l A[h,o,l] · T[l,h]
//   y (O×D)   = RevIN⁻¹( ReLU(Y~ᵀ W1 + b1) W2 + b2 )
//
// No parameter shape depends on O, so one set of weights serves any horizon.
// Two ablation embeddings (Time2Vec, fixed sinusoidal) and an ablation linear
// head are provided as drop-in replacements.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "d2v/calendar.hpp"
#include "d2v/errors.hpp"
#include "d2v/tensor.hpp"

namespace d2v {

enum class EmbeddingKind { d2v, t2v, sinusoidal };
enum class HeadKind { fusion, linear };

inline std::string_view to_string(EmbeddingKind k) {
    switch (k) {
        case EmbeddingKind::d2v: return "d2v";
        case EmbeddingKind::t2v: return "t2v";
        case EmbeddingKind::sinusoidal: return "sinusoidal";
    }
    return "?";
}

inline std::string_view to_string(HeadKind k) { return k == HeadKind::fusion ? "fusion" : "linear"; }

inline EmbeddingKind parse_embedding_kind(std::string_view s) {
    if (s == "d2v") return EmbeddingKind::d2v;
    if (s == "t2v") return EmbeddingKind::t2v;
    if (s == "sinusoidal") return EmbeddingKind::sinusoidal;
    throw ParseError("unknown embedding kind '" + std::string(s) + "' (expected d2v, t2v or sinusoidal)");
}

inline HeadKind parse_head_kind(std::string_view s) {
    if (s == "fusion") return HeadKind::fusion;
    if (s == "linear") return HeadKind::linear;
    throw ParseError("unknown head kind '" + std::string(s) + "' (expected fusion or linear)");
}

struct ModelConfig {
    std::size_t seq_len = 96;      // L
    std::size_t channels = 7;      // D
    std::size_t hidden = 512;      // H
    std::size_t frequencies = 63;  // k
    std::size_t ff_hidden = 512;   // H_ff
    EmbeddingKind embedding = EmbeddingKind::d2v;
    HeadKind head = HeadKind::fusion;
    std::size_t linear_horizon = 0;  // O, linear head only

    std::size_t embed_width() const { return frequencies + 1; }

    void validate() const {
        auto positive = [](std::size_t v, const char* name) {
            if (v == 0) throw ContractError(std::string("model config: ") + name + " must be positive");
        };
        positive(seq_len, "seq_len");
        positive(channels, "channels");
        positive(hidden, "hidden");
        positive(frequencies, "frequencies");
        positive(ff_hidden, "ff_hidden");
        if (seq_len < 2) throw ContractError("model config: seq_len must be at least 2");
        if (head == HeadKind::linear) positive(linear_horizon, "linear_horizon");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Learnable tensors in a fixed order, plus the hyperparameters that shaped them.
struct ModelParams {
    ModelConfig config;
    std::vector<NamedTensor> tensors;

    const Tensor& get(std::string_view name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return t.value;
        }
        throw ContractError("model has no parameter '" + std::string(name) + "'");
    }

    bool has(std::string_view name) const {
        for (const auto& t : tensors) {
            if (t.name == name) return true;
        }
        return false;
    }

    /// Deep copy; the copy shares no storage with this instance.
    ModelParams clone() const {
        ModelParams out{config, {}};
        for (const auto& t : tensors) {
            out.tensors.push_back({t.name, Tensor(t.value.shape(), {t.value.data().begin(), t.value.data().end()},
                                                  t.value.requires_grad())});
        }
        return out;
    }

    void zero_grad() {
        for (auto& t : tensors) t.value.zero_grad();
    }
};

/// Declared parameter shapes for a configuration, in storage order.
inline std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
    c.validate();
    const std::size_t L = c.seq_len, D = c.channels, H = c.hidden, k = c.frequencies, F = c.embed_width();
    std::vector<std::pair<std::string, Shape>> out{
        {"revin_gamma", {D}},
        {"revin_beta", {D}},
        {"tfe_W", {D, H}},
        {"tfe_B", {L, H}},
    };
    if (c.head == HeadKind::linear) {
        out.push_back({"linear_W", {L * H, c.linear_horizon * D}});
        out.push_back({"linear_b", {c.linear_horizon * D}});
        return out;
    }
    switch (c.embedding) {
        case EmbeddingKind::d2v:
            out.insert(out.end(), {{"d2v_wT", {1, L}},
                                   {"d2v_bT", {H}},
                                   {"d2v_WS", {k, L}},
                                   {"d2v_BS", {k, H}},
                                   {"d2v_b1", {H}},
                                   {"d2v_B2", {k, H}},
                                   {"d2v_b3", {H}},
                                   {"d2v_B4", {k, H}}});
            break;
        case EmbeddingKind::t2v:
            out.insert(out.end(), {{"t2v_omega", {F, H}}, {"t2v_phi", {F, H}}});
            break;
        case EmbeddingKind::sinusoidal:
            break;
    }
    out.insert(out.end(), {{"head_W1", {H, c.ff_hidden}},
                           {"head_b1", {c.ff_hidden}},
                           {"head_W2", {c.ff_hidden, D}},
                           {"head_b2", {D}}});
    return out;
}

/// Number of learnable scalars; depends only on the configuration.
inline std::size_t count_params(const ModelConfig& c) {
    std::size_t total = 0;
    for (const auto& [name, shape] : parameter_layout(c)) total += numel(shape);
    return total;
}

inline std::size_t count_params(const ModelParams& p) {
    std::size_t total = 0;
    for (const auto& t : p.tensors) total += t.value.size();
    return total;
}

namespace detail {

// Uniform [0, 1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t fan_in(const std::string& name, const ModelConfig& c) {
    if (name == "tfe_W") return c.channels;
    if (name == "d2v_wT") return c.seq_len;
    if (name == "head_W1") return c.hidden;
    if (name == "head_W2") return c.ff_hidden;
    if (name == "linear_W") return c.seq_len * c.hidden;
    if (name == "t2v_omega") return 1;
    return 0;
}

}  // namespace detail

/// Seeded initialisation: weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), Date2Vec
/// frequency rows U(-0.1/sqrt(L), 0.1/sqrt(L)), RevIN gamma = 1, all biases 0.
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p{config, {}};
    std::mt19937_64 rng(seed);
    for (const auto& [name, shape] : parameter_layout(config)) {
        std::vector<double> values(numel(shape), 0.0);
        double bound = 0.0;
        if (name == "d2v_WS") {
            bound = 0.1 / std::sqrt(static_cast<double>(config.seq_len));
        } else if (const std::size_t fan = detail::fan_in(name, config)) {
            bound = 1.0 / std::sqrt(static_cast<double>(fan));
        }
        if (name == "revin_gamma") {
            std::fill(values.begin(), values.end(), 1.0);
        } else if (bound > 0.0) {
            for (double& v : values) v = (2.0 * detail::unit_uniform(rng) - 1.0) * bound;
        }
        p.tensors.push_back({name, Tensor(shape, std::move(values), true)});
    }
    return p;
}

// ---------------------------------------------------------------------------
// RevIN
// ---------------------------------------------------------------------------

inline constexpr double kRevinEps = 1e-5;

struct RevinStats {
    Tensor mean;  // D
    Tensor std;   // D, sqrt(var + eps)
};

/// Per-channel instance normalisation over the L axis with a learnable affine map.
inline std::pair<Tensor, RevinStats> revin_normalize(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    if (x.rank() != 2 || x.dim(0) < 2) throw ContractError("revin_normalize expects an L×D window with L >= 2");
    const std::size_t L = x.dim(0), D = x.dim(1);
    if (gamma.shape() != Shape{D} || beta.shape() != Shape{D}) {
        throw ShapeError("revin affine parameters must have shape [" + std::to_string(D) + "]");
    }
    std::vector<double> mean(D, 0.0), var(D, 0.0);
    const auto xv = x.data();
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t d = 0; d < D; ++d) mean[d] += xv[l * D + d];
    }
    for (double& m : mean) m /= static_cast<double>(L);
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t d = 0; d < D; ++d) {
            const double c = xv[l * D + d] - mean[d];
            var[d] += c * c;
        }
    }
    std::vector<double> sd(D);
    for (std::size_t d = 0; d < D; ++d) sd[d] = std::sqrt(var[d] / static_cast<double>(L) + kRevinEps);
    RevinStats stats{Tensor({D}, std::move(mean)), Tensor({D}, std::move(sd))};
    Tensor xn = add(mul(div(sub(x, stats.mean), stats.std), gamma), beta);
    return {xn, stats};
}

inline Tensor revin_denormalize(const Tensor& yn, const RevinStats& stats, const Tensor& gamma, const Tensor& beta) {
    for (double g : gamma.data()) {
        if (std::abs(g) < 1e-8) throw NumericError("revin_denormalize: gamma is (nearly) zero in some channel");
    }
    return add(mul(div(sub(yn, beta), gamma), stats.std), stats.mean);
}

// ---------------------------------------------------------------------------
// Temporal feature extraction
// ---------------------------------------------------------------------------

/// T = xn · W + B
inline Tensor tfe_forward(const Tensor& xn, const Tensor& W, const Tensor& B) {
    if (xn.rank() != 2 || W.rank() != 2 || xn.dim(1) != W.dim(0) || B.shape() != Shape{xn.dim(0), W.dim(1)}) {
        throw ShapeError("tfe_forward: incompatible shapes " + to_string(xn.shape()) + ", " + to_string(W.shape()) +
                         ", " + to_string(B.shape()));
    }
    return add(matmul(xn, W), B);
}

// ---------------------------------------------------------------------------
// Date2Vec
// ---------------------------------------------------------------------------

enum class Side { input, prediction };

struct D2VWeights {
    Tensor wT;     // 1×L
    Tensor bT;     // H
    Tensor WS;     // k×L
    Tensor BS;     // k×H
    Tensor b_lin;  // H    (b1 or b3)
    Tensor B_sin;  // k×H  (B2 or B4)
};

inline D2VWeights d2v_weights(const ModelParams& p, Side side) {
    const bool in = side == Side::input;
    return {p.get("d2v_wT"), p.get("d2v_bT"), p.get("d2v_WS"), p.get("d2v_BS"),
            p.get(in ? "d2v_b1" : "d2v_b3"), p.get(in ? "d2v_B2" : "d2v_B4")};
}

/// Date2Vec for an arbitrary date width M. Returns (k+1)×H×P.
///
///   v_T = wT·T + bT                       (1×H)
///   Ω_S = WS·T + BS                       (k×H)
///   E   = concat(v_T⊗D + b, sin(Ω_S⊗D) + B) over the frequency axis, (k+1)×H×P×M
///   out = Σ_m E[..., m]
inline Tensor d2v_embed(const Tensor& t, const Tensor& dates, const D2VWeights& w) {
    if (t.rank() != 2 || dates.rank() != 2) throw ShapeError("d2v: expected rank-2 features and dates");
    const std::size_t L = t.dim(0), H = t.dim(1);
    if (w.wT.shape() != Shape{1, L} || w.WS.rank() != 2 || w.WS.dim(1) != L) {
        throw ShapeError("d2v: weights do not match temporal features of shape " + to_string(t.shape()));
    }
    const std::size_t k = w.WS.dim(0);
    if (w.bT.shape() != Shape{H} || w.BS.shape() != Shape{k, H} || w.b_lin.shape() != Shape{H} ||
        w.B_sin.shape() != Shape{k, H}) {
        throw ShapeError("d2v: bias shapes do not match H=" + std::to_string(H) + ", k=" + std::to_string(k));
    }
    Tensor v = add(matmul(w.wT, t), w.bT);      // 1×H
    Tensor omega = add(matmul(w.WS, t), w.BS);  // k×H
    Tensor linear = add_broadcast(outer_broadcast(v, dates), reshape(w.b_lin, {1, H}));
    Tensor periodic = add_broadcast(sin(outer_broadcast(omega, dates)), w.B_sin);
    return reduce_sum(concat({linear, periodic}, 0), 3);
}

/// Date2Vec over a 19-wide date matrix.
inline Tensor d2v_forward(const Tensor& t, const Tensor& dates, const D2VWeights& w) {
    if (dates.rank() != 2 || dates.dim(1) != kDateFeatures) {
        throw ShapeError("d2v_forward: date matrix must be P×" + std::to_string(kDateFeatures) + ", got " +
                         to_string(dates.shape()));
    }
    return d2v_embed(t, dates, w);
}

inline Tensor d2v_forward(const Tensor& t, const DateMatrix& dates, const ModelParams& p, Side side) {
    return d2v_forward(t, dates.tensor(), d2v_weights(p, side));
}

// ---------------------------------------------------------------------------
// Ablation embeddings
// ---------------------------------------------------------------------------

/// Time2Vec on the abs_day clock: row 0 linear, rows 1..k sinusoidal. (k+1)×H×P.
inline Tensor t2v_embed(const Tensor& tau, const Tensor& omega, const Tensor& phi) {
    if (tau.rank() != 2 || tau.dim(1) != 1) throw ShapeError("t2v_embed: time index must be P×1");
    if (omega.rank() != 2 || omega.shape() != phi.shape() || omega.dim(0) < 2) {
        throw ShapeError("t2v_embed: omega/phi must share an F×H shape with F >= 2");
    }
    const std::size_t F = omega.dim(0);
    Tensor pre = add_broadcast(reduce_sum(outer_broadcast(omega, tau), 3), phi);  // F×H×P
    return concat({slice(pre, 0, 0, 1), sin(slice(pre, 0, 1, F))}, 0);
}

inline Tensor t2v_embed(const DateMatrix& dates, const ModelParams& p) {
    std::vector<double> tau;
    tau.reserve(dates.size());
    for (const auto& r : dates.rows) tau.push_back(r[DateFeature::abs_day]);
    return t2v_embed(Tensor({dates.size(), 1}, std::move(tau)), p.get("t2v_omega"), p.get("t2v_phi"));
}

/// Fixed Transformer position encoding with d_model = F·H, laid out F×H×P;
/// channel c = f·H + h uses sin for even c and cos for odd c.
inline Tensor sinusoidal_embed(std::size_t first_position, std::size_t P, std::size_t F, std::size_t H) {
    const double d_model = static_cast<double>(F * H);
    std::vector<double> out(F * H * P);
    for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t c = f * H + h;
            const double rate = std::pow(10000.0, -static_cast<double>(c - c % 2) / d_model);
            for (std::size_t p = 0; p < P; ++p) {
                const double angle = static_cast<double>(first_position + p) * rate;
                out[(f * H + h) * P + p] = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
            }
        }
    }
    return Tensor({F, H, P}, std::move(out));
}

// ---------------------------------------------------------------------------
// Fusion block and heads
// ---------------------------------------------------------------------------

/// Attention of prediction-side over input-side embeddings applied to T.
/// Returns Y~ᵀ (O×H): Y~[h,o] = Σ_l Σ_f dy[f,h,o]·dx[f,h,l]·T[l,h].
inline Tensor fusion_attend(const Tensor& t, const Tensor& dx_hat, const Tensor& dy_hat) {
    if (dx_hat.rank() != 3 || dy_hat.rank() != 3 || t.rank() != 2) throw ShapeError("fusion: rank mismatch");
    if (dx_hat.dim(0) != dy_hat.dim(0)) {
        throw ShapeError("fusion: frequency axes differ: " + to_string(dx_hat.shape()) + " vs " +
                         to_string(dy_hat.shape()));
    }
    const std::size_t H = t.dim(1), L = t.dim(0), O = dy_hat.dim(2);
    if (dx_hat.dim(1) != H || dy_hat.dim(1) != H || dx_hat.dim(2) != L) {
        throw ShapeError("fusion: embeddings " + to_string(dx_hat.shape()) + " / " + to_string(dy_hat.shape()) +
                         " do not match temporal features " + to_string(t.shape()));
    }
    Tensor scores = matmul_batched(permute(dy_hat, {1, 2, 0}), permute(dx_hat, {1, 0, 2}));  // H×O×L
    Tensor attended = matmul_batched(scores, reshape(transpose(t), {H, L, 1}));               // H×O×1
    return transpose(reshape(attended, {H, O}));
}

/// Two affine layers with a ReLU between, applied per time step.
inline Tensor feedforward(const Tensor& rows, const Tensor& W1, const Tensor& b1, const Tensor& W2, const Tensor& b2) {
    return add(matmul(relu(add(matmul(rows, W1), b1)), W2), b2);
}

inline Tensor fusion_forward(const Tensor& t, const Tensor& dx_hat, const Tensor& dy_hat, const ModelParams& p) {
    return feedforward(fusion_attend(t, dx_hat, dy_hat), p.get("head_W1"), p.get("head_b1"), p.get("head_W2"),
                       p.get("head_b2"));
}

/// Flatten T, one affine map, reshape to O×D. The horizon is fixed by the weights.
inline Tensor linear_head(const Tensor& t, const Tensor& W, const Tensor& b, std::size_t horizon, std::size_t channels) {
    if (W.rank() != 2 || W.dim(0) != t.size() || W.dim(1) != horizon * channels) {
        throw ShapeError("linear_head: weight " + to_string(W.shape()) + " incompatible with features " +
                         to_string(t.shape()));
    }
    return reshape(add(matmul(reshape(t, {1, t.size()}), W), b), {horizon, channels});
}

// ---------------------------------------------------------------------------
// Full forward
// ---------------------------------------------------------------------------

/// Embeddings for both sides, shape (k+1)×H×L and (k+1)×H×O.
inline std::pair<Tensor, Tensor> embed_both(const Tensor& t, const DateMatrix& dx, const DateMatrix& dy,
                                            const ModelParams& p, std::size_t gap) {
    const ModelConfig& c = p.config;
    switch (c.embedding) {
        case EmbeddingKind::d2v:
            return {d2v_forward(t, dx, p, Side::input), d2v_forward(t, dy, p, Side::prediction)};
        case EmbeddingKind::t2v:
            return {t2v_embed(dx, p), t2v_embed(dy, p)};
        case EmbeddingKind::sinusoidal:
            return {sinusoidal_embed(0, dx.size(), c.embed_width(), c.hidden),
                    sinusoidal_embed(dx.size() + gap, dy.size(), c.embed_width(), c.hidden)};
    }
    throw ContractError("unknown embedding kind");
}

/// x: L×D window, dx: its L dates, dy: the O target dates (any O >= 1).
/// `gap` only matters for the sinusoidal ablation, whose positions are indices.
inline Tensor model_forward(const Tensor& x, const DateMatrix& dx, const DateMatrix& dy, const ModelParams& p,
                            std::size_t gap = 0) {
    const ModelConfig& c = p.config;
    if (x.rank() != 2 || x.dim(0) != c.seq_len || x.dim(1) != c.channels) {
        throw ContractError("model_forward: input window " + to_string(x.shape()) + " does not match trained [" +
                            std::to_string(c.seq_len) + ", " + std::to_string(c.channels) + "]");
    }
    if (dx.size() != c.seq_len) throw ContractError("model_forward: input date matrix must have L rows");
    if (dy.size() < 1) throw ContractError("model_forward: prediction date matrix is empty");

    const Tensor& gamma = p.get("revin_gamma");
    const Tensor& beta = p.get("revin_beta");
    auto [xn, stats] = revin_normalize(x, gamma, beta);
    Tensor t = tfe_forward(xn, p.get("tfe_W"), p.get("tfe_B"));

    Tensor yn;
    if (c.head == HeadKind::linear) {
        if (dy.size() != c.linear_horizon) {
            throw ContractError("linear head was built for horizon " + std::to_string(c.linear_horizon) +
                                " and cannot predict " + std::to_string(dy.size()) + " steps");
        }
        yn = linear_head(t, p.get("linear_W"), p.get("linear_b"), c.linear_horizon, c.channels);
    } else {
        auto [dx_hat, dy_hat] = embed_both(t, dx, dy, p, gap);
        yn = fusion_forward(t, dx_hat, dy_hat, p);
    }
    return revin_denormalize(yn, stats, gamma, beta);
}

}  // namespace d2v
