#pragma once

// Dense f64 tensors with a small define-by-run reverse-mode autodiff engine.
//
// A Tensor is a cheap handle onto a node. Every differentiable op records its
// inputs and a backward rule on the result node when gradient recording is on
// and at least one input requires a gradient. `backward(loss)` linearises the
// recorded graph into a Tape (topological order) and runs the rules in reverse.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "d2v/errors.hpp"

namespace d2v {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }

    // Gradient buffer of input i, or nullptr when that input does not need one.
    double* input_grad(std::size_t i) {
        Node& in = *inputs[i];
        if (!in.requires_grad) return nullptr;
        in.ensure_grad();
        return in.grad.data();
    }
};

inline std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Disables gradient recording on this thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        for (std::size_t d : shape) {
            if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
        }
        if (numel(shape) != data.size()) {
            throw ShapeError("tensor of shape " + to_string(shape) + " needs " + std::to_string(numel(shape)) +
                             " values, got " + std::to_string(data.size()));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
        node_->id = detail::next_node_id();
    }

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        const std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) { return Tensor({}, {value}, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->data.size(); }
    std::uint64_t id() const { return node_->id; }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->inputs.empty(); }

    std::span<const double> data() const { return node_->data; }

    /// Writable view of a leaf tensor. Results of recorded ops are immutable.
    std::span<double> mutable_data() {
        if (!is_leaf()) throw ContractError("cannot mutate a tensor produced by a recorded operation");
        return node_->data;
    }

    double item() const {
        if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
        return node_->data[0];
    }

    double at(std::initializer_list<std::size_t> index) const {
        if (index.size() != rank()) throw ContractError("index rank does not match tensor rank");
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (std::size_t i : index) {
            if (i >= node_->shape[axis]) throw ContractError("index out of range");
            flat = flat * node_->shape[axis] + i;
            ++axis;
        }
        return node_->data[flat];
    }

    bool has_grad() const { return !node_->grad.empty(); }

    /// Accumulated gradient; all zeros if backward never reached this tensor.
    std::vector<double> grad() const {
        if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
        return node_->grad;
    }

    void zero_grad() { node_->grad.clear(); }

    void set_requires_grad(bool flag) {
        if (!is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
        node_->requires_grad = flag;
    }

    /// Copy of the values with no graph attached.
    Tensor detach() const { return Tensor(shape(), node_->data, false); }

    detail::Node& node() const { return *node_; }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                          std::function<void(Node&)> backward) {
    Tensor out(std::move(shape), std::move(data), false);
    if (!grad_mode()) return out;
    bool needs = false;
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
    if (!needs) return out;
    Node& n = out.node();
    n.requires_grad = true;
    for (const Tensor* t : inputs) n.inputs.push_back(t->node_ptr());
    n.backward = std::move(backward);
    return out;
}

inline Shape strides_of(const Shape& shape) {
    Shape strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

}  // namespace detail

/// Recorded operations in topological order (every node after its inputs).
class Tape {
public:
    struct Entry {
        std::uint64_t output;
        std::vector<std::uint64_t> inputs;
        std::shared_ptr<detail::Node> node;
    };

    /// Collects every gradient-carrying node reachable from `root`.
    static Tape record(const Tensor& root) {
        Tape tape;
        if (!root.requires_grad()) return tape;
        std::unordered_set<const detail::Node*> visited;
        // Iterative post-order DFS; graphs can be deep for long windows.
        std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
        stack.emplace_back(root.node_ptr(), 0);
        visited.insert(root.node_ptr().get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                auto child = node->inputs[next++];
                if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
                continue;
            }
            Entry e{node->id, {}, node};
            for (const auto& in : node->inputs) e.inputs.push_back(in->id);
            tape.entries_.push_back(std::move(e));
            stack.pop_back();
        }
        return tape;
    }

    const std::vector<Entry>& entries() const { return entries_; }

    /// Runs backward rules from the last entry to the first.
    void run_backward() const {
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            detail::Node& n = *it->node;
            if (n.backward && !n.grad.empty()) n.backward(n);
        }
    }

private:
    std::vector<Entry> entries_;
};

/// Accumulates d(loss)/d(t) into every gradient-requiring tensor on the graph.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
    if (!loss.requires_grad()) return;
    Tape tape = Tape::record(loss);
    // Intermediate gradients from an earlier pass over a shared subgraph must not leak in.
    for (const auto& e : tape.entries()) {
        if (!e.node->inputs.empty()) e.node->grad.clear();
    }
    loss.node().ensure_grad();
    loss.node().grad[0] += 1.0;
    tape.run_backward();
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& t, Shape shape) {
    if (numel(shape) != t.size()) {
        throw ShapeError("cannot reshape " + to_string(t.shape()) + " to " + to_string(shape));
    }
    return detail::make_result(std::move(shape), std::vector<double>(t.data().begin(), t.data().end()), {&t},
                               [](detail::Node& self) {
                                   if (double* g = self.input_grad(0)) {
                                       for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                                   }
                               });
}

/// numpy-style transpose: out.shape[i] == t.shape[order[i]].
inline Tensor permute(const Tensor& t, const std::vector<std::size_t>& order) {
    const std::size_t r = t.rank();
    std::vector<bool> seen(r, false);
    bool ok = order.size() == r;
    for (std::size_t i = 0; ok && i < order.size(); ++i) {
        ok = order[i] < r && !seen[order[i]];
        if (ok) seen[order[i]] = true;
    }
    if (!ok) throw ContractError("permute: order is not a permutation of the axes of " + to_string(t.shape()));

    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = t.shape()[order[i]];
    const Shape in_strides = detail::strides_of(t.shape());

    const std::size_t n = t.size();
    auto source = std::make_shared<std::vector<std::size_t>>(n);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t o = 0; o < n; ++o) {
        std::size_t flat = 0;
        for (std::size_t i = 0; i < r; ++i) flat += idx[i] * in_strides[order[i]];
        (*source)[o] = flat;
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    std::vector<double> out(n);
    const auto in = t.data();
    for (std::size_t o = 0; o < n; ++o) out[o] = in[(*source)[o]];
    return detail::make_result(std::move(out_shape), std::move(out), {&t}, [source](detail::Node& self) {
        if (double* g = self.input_grad(0)) {
            for (std::size_t o = 0; o < self.grad.size(); ++o) g[(*source)[o]] += self.grad[o];
        }
    });
}

inline Tensor transpose(const Tensor& t) {
    if (t.rank() != 2) throw ContractError("transpose expects a matrix, got " + to_string(t.shape()));
    return permute(t, {1, 0});
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) throw ContractError("concat axis out of range");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const Tensor& p : parts) {
        bool ok = p.rank() == first.size();
        for (std::size_t i = 0; ok && i < first.size(); ++i) ok = i == axis || p.shape()[i] == first[i];
        if (!ok) throw ShapeError("concat: " + to_string(p.shape()) + " does not match " + to_string(first));
        out_shape[axis] += p.shape()[axis];
    }
    const std::size_t outer = numel(Shape(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(axis)));
    const std::size_t inner = numel(Shape(first.begin() + static_cast<std::ptrdiff_t>(axis) + 1, first.end()));
    const std::size_t out_block = out_shape[axis] * inner;

    std::vector<double> out(numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t block = p.shape()[axis] * inner;
        const auto src = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                        out.begin() + static_cast<std::ptrdiff_t>(o * out_block + offset));
        }
        offsets.push_back(offset);
        offset += block;
    }

    Tensor result(std::move(out_shape), std::move(out), false);
    if (!detail::grad_mode()) return result;
    bool needs = std::any_of(parts.begin(), parts.end(), [](const Tensor& p) { return p.requires_grad(); });
    if (!needs) return result;
    detail::Node& n = result.node();
    n.requires_grad = true;
    std::vector<std::size_t> blocks;
    for (const Tensor& p : parts) {
        n.inputs.push_back(p.node_ptr());
        blocks.push_back(p.shape()[axis] * inner);
    }
    n.backward = [outer, out_block, offsets, blocks](detail::Node& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            double* g = self.input_grad(k);
            if (!g) continue;
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t j = 0; j < blocks[k]; ++j) g[o * blocks[k] + j] += self.grad[o * out_block + offsets[k] + j];
            }
        }
    };
    return result;
}

/// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= t.rank()) throw ContractError("slice axis out of range");
    if (begin >= end || end > t.shape()[axis]) throw ContractError("slice range out of bounds");
    const Shape& s = t.shape();
    const std::size_t outer = numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
    const std::size_t inner = numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
    const std::size_t in_block = s[axis] * inner;
    const std::size_t out_block = (end - begin) * inner;
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    std::vector<double> out(outer * out_block);
    const auto src = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * in_block + begin * inner), out_block,
                    out.begin() + static_cast<std::ptrdiff_t>(o * out_block));
    }
    const std::size_t start = begin * inner;
    return detail::make_result(std::move(out_shape), std::move(out), {&t},
                               [outer, in_block, out_block, start](detail::Node& self) {
                                   if (double* g = self.input_grad(0)) {
                                       for (std::size_t o = 0; o < outer; ++o) {
                                           for (std::size_t j = 0; j < out_block; ++j) {
                                               g[o * in_block + start + j] += self.grad[o * out_block + j];
                                           }
                                       }
                                   }
                               });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace detail {

enum class BinaryKind { add, sub, mul, div };

// Right-aligned broadcast of a and b; calls fn(out_index, a_index, b_index).
template <class Fn>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
    const std::size_t r = out.size();
    Shape sa(r, 0), sb(r, 0);
    const Shape a_str = strides_of(a), b_str = strides_of(b);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t ia = i + a.size(), ib = i + b.size();
        if (ia >= r && a[ia - r] != 1) sa[i] = a_str[ia - r];
        if (ib >= r && b[ib - r] != 1) sb[i] = b_str[ib - r];
    }
    const std::size_t n = numel(out);
    std::vector<std::size_t> idx(r, 0);
    std::size_t ai = 0, bi = 0;
    for (std::size_t o = 0; o < n; ++o) {
        fn(o, ai, bi);
        for (std::size_t i = r; i-- > 0;) {
            ai += sa[i];
            bi += sb[i];
            if (++idx[i] < out[i]) break;
            ai -= sa[i] * out[i];
            bi -= sb[i] * out[i];
            idx[i] = 0;
        }
    }
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i + a.size() >= r ? a[i + a.size() - r] : 1;
        const std::size_t db = i + b.size() >= r ? b[i + b.size() - r] : 1;
        if (da != db && da != 1 && db != 1) {
            throw ShapeError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                             " are not broadcastable");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

inline Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    std::vector<double> out(numel(out_shape));
    const auto av = a.data(), bv = b.data();
    for_each_broadcast(out_shape, a.shape(), b.shape(), [&](std::size_t o, std::size_t ai, std::size_t bi) {
        switch (kind) {
            case BinaryKind::add: out[o] = av[ai] + bv[bi]; break;
            case BinaryKind::sub: out[o] = av[ai] - bv[bi]; break;
            case BinaryKind::mul: out[o] = av[ai] * bv[bi]; break;
            case BinaryKind::div: out[o] = av[ai] / bv[bi]; break;
        }
    });
    Shape sa = a.shape(), sb = b.shape();
    return make_result(out_shape, std::move(out), {&a, &b}, [kind, sa, sb, out_shape](Node& self) {
        double* ga = self.input_grad(0);
        double* gb = self.input_grad(1);
        const std::vector<double>& av = self.inputs[0]->data;
        const std::vector<double>& bv = self.inputs[1]->data;
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ai, std::size_t bi) {
            const double g = self.grad[o];
            switch (kind) {
                case BinaryKind::add:
                    if (ga) ga[ai] += g;
                    if (gb) gb[bi] += g;
                    break;
                case BinaryKind::sub:
                    if (ga) ga[ai] += g;
                    if (gb) gb[bi] -= g;
                    break;
                case BinaryKind::mul:
                    if (ga) ga[ai] += g * bv[bi];
                    if (gb) gb[bi] += g * av[ai];
                    break;
                case BinaryKind::div:
                    if (ga) ga[ai] += g / bv[bi];
                    if (gb) gb[bi] -= g * av[ai] / (bv[bi] * bv[bi]);
                    break;
            }
        });
    });
}

template <class F, class DF>
Tensor unary(const Tensor& t, F f, DF df) {
    std::vector<double> out(t.size());
    const auto in = t.data();
    std::transform(in.begin(), in.end(), out.begin(), f);
    return make_result(t.shape(), std::move(out), {&t}, [df](Node& self) {
        if (double* g = self.input_grad(0)) {
            const std::vector<double>& x = self.inputs[0]->data;
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * df(x[i]);
        }
    });
}

}  // namespace detail

/// Elementwise ops broadcast numpy-style (trailing axes aligned).
inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinaryKind::add, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinaryKind::sub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinaryKind::mul, "mul"); }
inline Tensor div(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinaryKind::div, "div"); }

/// Adds a bias whose shape is a leading prefix of `a`'s shape, replicating it over
/// the remaining trailing axes (an F×H bias over an F×H×P×M tensor).
inline Tensor add_broadcast(const Tensor& a, const Tensor& bias) {
    const Shape& s = a.shape();
    const Shape& b = bias.shape();
    if (b.size() > s.size() || !std::equal(b.begin(), b.end(), s.begin())) {
        throw ShapeError("add_broadcast: bias " + to_string(b) + " is not a leading prefix of " + to_string(s));
    }
    Shape padded = b;
    padded.resize(s.size(), 1);
    return add(a, reshape(bias, padded));
}

inline Tensor sin(const Tensor& t) {
    return detail::unary(t, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

inline Tensor square(const Tensor& t) {
    return detail::unary(t, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

inline Tensor relu(const Tensor& t) {
    return detail::unary(t, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor scale(const Tensor& t, double c) {
    return detail::unary(t, [c](double x) { return c * x; }, [c](double) { return c; });
}

// ---------------------------------------------------------------------------
// Contractions and reductions
// ---------------------------------------------------------------------------

/// out[i,j,l] = sum_k a[i,j,k] * b[i,k,l]
inline Tensor matmul_batched(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw ShapeError("matmul_batched: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
    }
    const std::size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    std::vector<double> out(B * M * N, 0.0);
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < B; ++i) {
        const double* A = av.data() + i * M * K;
        const double* Bm = bv.data() + i * K * N;
        double* C = out.data() + i * M * N;
        for (std::size_t j = 0; j < M; ++j) {
            for (std::size_t k = 0; k < K; ++k) {
                const double x = A[j * K + k];
                for (std::size_t l = 0; l < N; ++l) C[j * N + l] += x * Bm[k * N + l];
            }
        }
    }
    return detail::make_result({B, M, N}, std::move(out), {&a, &b}, [B, M, K, N](detail::Node& self) {
        double* ga = self.input_grad(0);
        double* gb = self.input_grad(1);
        const std::vector<double>& av = self.inputs[0]->data;
        const std::vector<double>& bv = self.inputs[1]->data;
        for (std::size_t i = 0; i < B; ++i) {
            const double* G = self.grad.data() + i * M * N;
            const double* A = av.data() + i * M * K;
            const double* Bm = bv.data() + i * K * N;
            for (std::size_t j = 0; j < M; ++j) {
                for (std::size_t k = 0; k < K; ++k) {
                    double acc = 0.0;
                    for (std::size_t l = 0; l < N; ++l) {
                        acc += G[j * N + l] * Bm[k * N + l];
                        if (gb) gb[i * K * N + k * N + l] += A[j * K + k] * G[j * N + l];
                    }
                    if (ga) ga[i * M * K + j * K + k] += acc;
                }
            }
        }
    });
}

/// Plain matrix product of two rank-2 tensors.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: expected matrices, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
    }
    Tensor out = matmul_batched(reshape(a, {1, a.dim(0), a.dim(1)}), reshape(b, {1, b.dim(0), b.dim(1)}));
    return reshape(out, {a.dim(0), b.dim(1)});
}

/// out[f,h,p,m] = v[f,h] * d[p,m]: a Kronecker product kept on separate axes.
inline Tensor outer_broadcast(const Tensor& v, const Tensor& d) {
    if (v.rank() != 2 || d.rank() != 2) {
        throw ContractError("outer_broadcast: expected two rank-2 tensors, got " + to_string(v.shape()) + " and " +
                            to_string(d.shape()));
    }
    const std::size_t F = v.dim(0), H = v.dim(1), P = d.dim(0), M = d.dim(1);
    const std::size_t inner = P * M;
    std::vector<double> out(F * H * inner);
    const auto vv = v.data(), dv = d.data();
    for (std::size_t a = 0; a < F * H; ++a) {
        for (std::size_t j = 0; j < inner; ++j) out[a * inner + j] = vv[a] * dv[j];
    }
    return detail::make_result({F, H, P, M}, std::move(out), {&v, &d}, [F, H, inner](detail::Node& self) {
        double* gv = self.input_grad(0);
        double* gd = self.input_grad(1);
        const std::vector<double>& vv = self.inputs[0]->data;
        const std::vector<double>& dv = self.inputs[1]->data;
        for (std::size_t a = 0; a < F * H; ++a) {
            const double* G = self.grad.data() + a * inner;
            double acc = 0.0;
            for (std::size_t j = 0; j < inner; ++j) {
                acc += G[j] * dv[j];
                if (gd) gd[j] += G[j] * vv[a];
            }
            if (gv) gv[a] += acc;
        }
    });
}

inline Tensor reduce_sum(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) {
        throw ContractError("reduce_sum: axis " + std::to_string(axis) + " out of range for " + to_string(t.shape()));
    }
    const Shape& s = t.shape();
    const std::size_t outer = numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
    const std::size_t n = s[axis];
    const std::size_t inner = numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
    Shape out_shape = s;
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<double> out(outer * inner, 0.0);
    const auto in = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* row = in.data() + (o * n + j) * inner;
            double* dst = out.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
        }
    }
    return detail::make_result(std::move(out_shape), std::move(out), {&t}, [outer, n, inner](detail::Node& self) {
        if (double* g = self.input_grad(0)) {
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t j = 0; j < n; ++j) {
                    for (std::size_t i = 0; i < inner; ++i) g[(o * n + j) * inner + i] += self.grad[o * inner + i];
                }
            }
        }
    });
}

inline Tensor sum_all(const Tensor& t) {
    const auto in = t.data();
    const double total = std::accumulate(in.begin(), in.end(), 0.0);
    return detail::make_result({}, {total}, {&t}, [](detail::Node& self) {
        if (double* g = self.input_grad(0)) {
            const double s = self.grad[0];
            for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) g[i] += s;
        }
    });
}

inline Tensor mean_all(const Tensor& t) { return scale(sum_all(t), 1.0 / static_cast<double>(t.size())); }

// ---------------------------------------------------------------------------
// Binary serialization: u64 rank, u64 dims..., f64 values; all little-endian.
// ---------------------------------------------------------------------------

namespace io {

template <class T>
void write_le(std::ostream& os, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(bytes), 8);
}

template <class T>
T read_le(std::istream& is) {
    static_assert(sizeof(T) == 8);
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw ValidationError("unexpected end of tensor stream");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

inline void write_values(std::ostream& os, std::span<const double> values) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double v : values) write_le(os, v);
    }
}

inline std::vector<double> read_values(std::istream& is, std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = read_le<double>(is);
    return out;
}

}  // namespace io

inline void write_tensor(std::ostream& os, const Tensor& t) {
    io::write_le<std::uint64_t>(os, t.rank());
    for (std::size_t d : t.shape()) io::write_le<std::uint64_t>(os, d);
    io::write_values(os, t.data());
}

inline Tensor read_tensor(std::istream& is) {
    const auto rank = io::read_le<std::uint64_t>(is);
    if (rank > 16) throw ValidationError("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = io::read_le<std::uint64_t>(is);
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), io::read_values(is, n));
}

}  // namespace d2v
