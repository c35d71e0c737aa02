#include <gtest/gtest.h>

#include <sstream>

#include "d2v/tensor.hpp"
#include "test_support.hpp"

using namespace d2v;
using d2v::testing::gradcheck;
using d2v::testing::max_abs_diff;
using d2v::testing::random_tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Weighted sum with a fixed random weight so every output element gets a distinct upstream gradient.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    return sum_all(mul(t, random_tensor(t.shape(), rng, -1.0, 1.0)));
}

}  // namespace

TEST(Tensor, ConstructionChecksShape) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    EXPECT_THROW(Tensor({2, 0}, {}), ShapeError);
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.at({1, 2}), 6.0);
    EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, MatmulBatchedExamples) {
    Tensor a({1, 1, 2}, {1, 2});
    Tensor b({1, 2, 1}, {3, 4});
    EXPECT_EQ(matmul_batched(a, b).item(), 11.0);

    std::mt19937_64 rng(1);
    Tensor eye({2, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor m = random_tensor({2, 3, 4}, rng);
    EXPECT_EQ(vals(matmul_batched(eye, m)), vals(m));
}

TEST(Tensor, MatmulBatchedMatchesLoopOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 4, 5}, rng);
        Tensor c = matmul_batched(a, b);
        EXPECT_EQ(c.shape(), (Shape{2, 3, 5}));
        EXPECT_LT(max_abs_diff(c.data(), d2v::testing::oracle_matmul_batched(a, b)), 1e-10);
    }
}

TEST(Tensor, MatmulBatchedShapeErrorNamesBothShapes) {
    Tensor a = Tensor::zeros({2, 3, 4}), b = Tensor::zeros({2, 5, 1});
    try {
        matmul_batched(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2, 3, 4]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[2, 5, 1]"), std::string::npos) << msg;
    }
    EXPECT_THROW(matmul_batched(Tensor::zeros({2, 3, 4}), Tensor::zeros({3, 4, 1})), ShapeError);
}

TEST(Tensor, OuterBroadcastExamples) {
    EXPECT_EQ(outer_broadcast(Tensor({1, 1}, {2}), Tensor({1, 1}, {3})).item(), 6.0);

    std::mt19937_64 rng(3);
    Tensor d = random_tensor({4, 5}, rng);
    Tensor out = outer_broadcast(Tensor::full({2, 3}, 1.0), d);
    for (std::size_t fh = 0; fh < 6; ++fh) {
        EXPECT_TRUE(std::equal(d.data().begin(), d.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(fh * 20)));
    }
    Tensor v = random_tensor({2, 3}, rng);
    EXPECT_LT(max_abs_diff(outer_broadcast(v, d).data(), d2v::testing::oracle_outer(v, d)), 1e-10);
    EXPECT_THROW(outer_broadcast(Tensor::zeros({2}), d), ContractError);
    EXPECT_THROW(outer_broadcast(v, Tensor::zeros({1, 4, 5})), ContractError);
}

TEST(Tensor, ElementwiseExamples) {
    EXPECT_EQ(d2v::sin(Tensor::scalar(0.0)).item(), 0.0);

    std::mt19937_64 rng(4);
    Tensor bias = random_tensor({2, 3}, rng);
    Tensor out = add_broadcast(Tensor::zeros({2, 3, 4}), bias);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(out.at({i, j, k}), bias.at({i, j}));

    Tensor a({2, 2}, {1, -2, 3, -4});
    EXPECT_EQ(vals(square(a)), (std::vector<double>{1, 4, 9, 16}));
    EXPECT_EQ(vals(relu(a)), (std::vector<double>{1, 0, 3, 0}));
    EXPECT_EQ(vals(sub(a, a)), (std::vector<double>{0, 0, 0, 0}));
    EXPECT_EQ(vals(mul(a, Tensor({2}, {10, 100}))), (std::vector<double>{10, -200, 30, -400}));
    EXPECT_EQ(vals(add(a, Tensor({2, 1}, {1, 2}))), (std::vector<double>{2, -1, 5, -2}));
}

TEST(Tensor, ElementwiseShapeErrors) {
    EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), ShapeError);
    EXPECT_THROW(mul(Tensor::zeros({3}), Tensor::zeros({2})), ShapeError);
    EXPECT_THROW(add_broadcast(Tensor::zeros({2, 3, 4}), Tensor::zeros({3, 4})), ShapeError);
}

TEST(Tensor, SinGradientIsCos) {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({50}, rng, -10, 10, true);
    backward(sum_all(d2v::sin(x)));
    const auto g = x.grad();
    for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(g[i], std::cos(x.data()[i]), 1e-10);
}

TEST(Tensor, ReduceSumExamples) {
    EXPECT_EQ(vals(reduce_sum(Tensor({2, 2}, {1, 2, 3, 4}), 1)), (std::vector<double>{3, 7}));
    EXPECT_EQ(vals(reduce_sum(Tensor::zeros({3, 2}), 0)), (std::vector<double>{0, 0}));
    EXPECT_THROW(reduce_sum(Tensor::zeros({3, 2}), 2), ContractError);
}

TEST(Tensor, ReduceSumMatchesLoopOracle) {
    std::mt19937_64 rng(6);
    Tensor t = random_tensor({3, 4, 5}, rng);
    const std::size_t dims[3] = {3, 4, 5};
    for (std::size_t axis = 0; axis < 3; ++axis) {
        Tensor r = reduce_sum(t, axis);
        std::vector<double> expect;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                for (std::size_t k = 0; k < 5; ++k) {
                    const std::size_t idx[3] = {i, j, k};
                    if (idx[axis] != 0) continue;
                    double s = 0;
                    for (std::size_t q = 0; q < dims[axis]; ++q) {
                        std::size_t w[3] = {i, j, k};
                        w[axis] = q;
                        s += t.at({w[0], w[1], w[2]});
                    }
                    expect.push_back(s);
                }
        EXPECT_LT(max_abs_diff(r.data(), expect), 1e-10) << "axis " << axis;
    }
}

TEST(Tensor, PermuteExamples) {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor t = permute(a, {1, 0});
    EXPECT_EQ(t.shape(), (Shape{3, 2}));
    EXPECT_EQ(vals(t), (std::vector<double>{1, 4, 2, 5, 3, 6}));
    EXPECT_EQ(vals(permute(a, {0, 1})), vals(a));
    EXPECT_THROW(permute(a, {0, 0}), ContractError);
    EXPECT_THROW(permute(a, {0}), ContractError);
}

TEST(Tensor, PermuteFollowsIndexRule) {
    std::mt19937_64 rng(7);
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor p = permute(a, {2, 0, 1});
    ASSERT_EQ(p.shape(), (Shape{4, 2, 3}));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(p.at({i, j, k}), a.at({j, k, i}));
}

TEST(Tensor, PermuteRoundTripIsIdentity) {
    std::mt19937_64 rng(8);
    Tensor a = random_tensor({2, 3, 4}, rng);
    const std::vector<std::vector<std::size_t>> orders{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (const auto& o : orders) {
        std::vector<std::size_t> inv(3);
        for (std::size_t i = 0; i < 3; ++i) inv[o[i]] = i;
        Tensor back = permute(permute(a, o), inv);
        EXPECT_EQ(back.shape(), a.shape());
        EXPECT_EQ(vals(back), vals(a));
    }
}

TEST(Tensor, ConcatAndSlice) {
    Tensor a({1, 2}, {1, 2}), b({2, 2}, {3, 4, 5, 6});
    Tensor c = concat({a, b}, 0);
    EXPECT_EQ(c.shape(), (Shape{3, 2}));
    EXPECT_EQ(vals(c), (std::vector<double>{1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(vals(slice(c, 0, 1, 3)), vals(b));
    EXPECT_EQ(vals(slice(c, 1, 1, 2)), (std::vector<double>{2, 4, 6}));
    EXPECT_THROW(concat({a, Tensor::zeros({1, 3})}, 0), ShapeError);
}

TEST(Tensor, BackwardExamples) {
    std::mt19937_64 rng(9);
    Tensor w = random_tensor({3, 4}, rng, -10, 10, true);
    backward(sum_all(w));
    for (double g : w.grad()) EXPECT_EQ(g, 1.0);

    w.zero_grad();
    backward(scale(sum_all(square(w)), 0.5));
    EXPECT_LT(max_abs_diff(w.grad(), w.data()), 1e-12);

    EXPECT_THROW(backward(w), ContractError);
}

TEST(Tensor, MultiConsumerGradientsAccumulate) {
    Tensor x({3}, {1.0, -2.0, 0.5}, true);
    // loss = Σ x·x + Σ 3x  → dL/dx = 2x + 3
    Tensor loss = add(sum_all(mul(x, x)), sum_all(scale(x, 3.0)));
    backward(loss);
    const auto g = x.grad();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[i], 2.0 * x.data()[i] + 3.0);

    // A shared intermediate feeding two branches.
    Tensor y({2}, {0.3, 0.7}, true);
    Tensor s = d2v::sin(y);
    backward(add(sum_all(mul(s, s)), sum_all(s)));
    for (std::size_t i = 0; i < 2; ++i) {
        const double v = y.data()[i];
        EXPECT_NEAR(y.grad()[i], (2.0 * std::sin(v) + 1.0) * std::cos(v), 1e-14);
    }
}

TEST(Tensor, BackwardTwiceGivesSameGradientsAfterReset) {
    std::mt19937_64 rng(10);
    Tensor w = random_tensor({4}, rng, -1, 1, true);
    auto loss = [&] { return sum_all(d2v::sin(mul(w, w))); };
    backward(loss());
    const auto first = w.grad();
    w.zero_grad();
    backward(loss());
    EXPECT_EQ(first, w.grad());
}

TEST(Tensor, NoGradGuardRecordsNothing) {
    Tensor w({2}, {1, 2}, true);
    Tensor out;
    {
        NoGradGuard g;
        out = mul(w, w);
    }
    EXPECT_FALSE(out.requires_grad());
    EXPECT_TRUE(out.is_leaf());
}

// Gradient checks for each differentiable op on random inputs.

struct OpCase {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Tensor(const std::vector<Tensor>&)> op;
    double lo = -2.0, hi = 2.0;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
    const OpCase& c = GetParam();
    std::mt19937_64 rng(11);
    std::vector<NamedTensor> params;
    for (std::size_t i = 0; i < c.shapes.size(); ++i) {
        params.push_back({"in" + std::to_string(i), random_tensor(c.shapes[i], rng, c.lo, c.hi, true)});
    }
    auto loss = [&] {
        std::vector<Tensor> in;
        for (auto& p : params) in.push_back(p.value);
        return weighted_sum(c.op(in));
    };
    const auto r = gradcheck(loss, params);
    EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " worst at " << r.worst;
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"matmul_batched", {{2, 3, 4}, {2, 4, 5}}, [](auto& in) { return matmul_batched(in[0], in[1]); }},
        OpCase{"matmul", {{3, 4}, {4, 2}}, [](auto& in) { return matmul(in[0], in[1]); }},
        OpCase{"outer_broadcast", {{2, 3}, {4, 5}}, [](auto& in) { return outer_broadcast(in[0], in[1]); }},
        OpCase{"reduce_sum0", {{3, 4, 5}}, [](auto& in) { return reduce_sum(in[0], 0); }},
        OpCase{"reduce_sum2", {{3, 4, 5}}, [](auto& in) { return reduce_sum(in[0], 2); }},
        OpCase{"permute", {{2, 3, 4}}, [](auto& in) { return permute(in[0], {2, 0, 1}); }},
        OpCase{"reshape", {{2, 6}}, [](auto& in) { return reshape(in[0], {3, 4}); }},
        OpCase{"concat", {{2, 3}, {1, 3}}, [](auto& in) { return concat({in[0], in[1]}, 0); }},
        OpCase{"slice", {{4, 3}}, [](auto& in) { return slice(in[0], 0, 1, 3); }},
        OpCase{"sin", {{3, 4}}, [](auto& in) { return d2v::sin(in[0]); }, -10.0, 10.0},
        OpCase{"square", {{3, 4}}, [](auto& in) { return square(in[0]); }},
        OpCase{"relu", {{3, 4}}, [](auto& in) { return relu(in[0]); }},
        OpCase{"scale", {{3}}, [](auto& in) { return scale(in[0], -2.5); }},
        OpCase{"add_bcast", {{2, 3}, {3}}, [](auto& in) { return add(in[0], in[1]); }},
        OpCase{"sub_bcast", {{2, 1}, {1, 3}}, [](auto& in) { return sub(in[0], in[1]); }},
        OpCase{"mul_bcast", {{2, 3}, {2, 1}}, [](auto& in) { return mul(in[0], in[1]); }},
        OpCase{"div", {{2, 3}, {3}}, [](auto& in) { return div(in[0], add(square(in[1]), Tensor::scalar(0.5))); }},
        OpCase{"add_broadcast", {{2, 3, 4, 5}, {2, 3}}, [](auto& in) { return add_broadcast(in[0], in[1]); }},
        OpCase{"mean_all", {{3, 3}}, [](auto& in) { return mean_all(in[0]); }}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

TEST(Tensor, SerializationRoundTrip) {
    std::mt19937_64 rng(12);
    Tensor a = random_tensor({2, 3, 4}, rng);
    std::stringstream ss;
    write_tensor(ss, a);
    const std::string bytes = ss.str();
    ASSERT_EQ(bytes.size(), 8u * (1 + 3 + 24));
    EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 3u);  // little-endian rank
    Tensor b = read_tensor(ss);
    EXPECT_EQ(b.shape(), a.shape());
    EXPECT_EQ(vals(b), vals(a));
}
