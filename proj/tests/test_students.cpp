#include <gtest/gtest.h>

#include <random>

#include "distilts/grad_check.hpp"
#include "distilts/students.hpp"
#include "test_util.hpp"

using namespace distilts;
using distilts::testing::random_normal;

namespace {

StudentModel make(StudentKind kind, std::size_t l, std::size_t t, std::mt19937_64& rng, std::size_t d = 8,
                  std::size_t ff = 12, std::size_t kernel = 5) {
    StudentConfig c;
    c.kind = kind;
    c.lookback = l;
    c.horizon = t;
    c.model_dim = d;
    c.ff_dim = ff;
    c.trend_kernel = kernel;
    return StudentModel::create(c, rng);
}

void zero_all(StudentModel& m) {
    for (Array* p : m.parameters()) p->fill(0.0);
}

Array permute_channels(const Array& x, const std::vector<std::size_t>& order) {
    Array out(x.shape());
    for (std::size_t b = 0; b < x.dim(0); ++b)
        for (std::size_t i = 0; i < x.dim(1); ++i)
            for (std::size_t c = 0; c < order.size(); ++c) out.at(b, i, c) = x.at(b, i, order[c]);
    return out;
}

}  // namespace

TEST(LinearStudent, ZeroWeightsGiveZeroForecast) {
    std::mt19937_64 rng(1);
    StudentModel m = make(StudentKind::linear, 12, 6, rng);
    zero_all(m);
    Array y = m.predict(random_normal({3, 12, 2}, rng));
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LinearStudent, UnitKernelMakesTrendTheInput) {
    std::mt19937_64 rng(2);
    Array x = random_normal({2, 10, 3}, rng);
    const Decomposition parts = decompose(x, 1);
    EXPECT_EQ(parts.trend, x);
    for (double v : parts.seasonal.data()) EXPECT_EQ(v, 0.0);

    StudentModel m = make(StudentKind::linear, 10, 4, rng, 8, 12, 1);
    Array y = m.predict(x);
    const LinearStudent& lin = *m.as_linear();
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < 4; ++t)
            for (std::size_t c = 0; c < 3; ++c) {
                double s = lin.bias[t];
                for (std::size_t i = 0; i < 10; ++i) s += x.at(b, i, c) * lin.w_trend.at(i, t);
                EXPECT_NEAR(y.at(b, t, c), s, 1e-12);
            }
}

TEST(LinearStudent, DecompositionIsAPartition) {
    std::mt19937_64 rng(3);
    for (std::size_t k : {1u, 3u, 7u, 25u}) {
        Array x = random_normal({3, 30, 2}, rng, 4.0);
        const Decomposition parts = decompose(x, k);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(parts.trend[i] + parts.seasonal[i], x[i], 1e-12);
    }
    EXPECT_THROW(decompose(Array(Shape{1, 5, 1}), 4), ContractError);
}

TEST(LinearStudent, TrendIsEdgeReplicatedMovingAverage) {
    Array x(Shape{1, 4, 1}, std::vector<double>{1, 2, 3, 10});
    const Decomposition parts = decompose(x, 3);
    EXPECT_NEAR(parts.trend[0], 4.0 / 3.0, 1e-15);
    EXPECT_NEAR(parts.trend[1], 2.0, 1e-15);
    EXPECT_NEAR(parts.trend[3], 23.0 / 3.0, 1e-15);
}

TEST(LinearStudent, HiddenIsTheLookbackPerChannel) {
    std::mt19937_64 rng(4);
    StudentModel m = make(StudentKind::linear, 8, 3, rng);
    Array x = random_normal({2, 8, 3}, rng);
    ParamBinder p;
    StudentOutput out = m.forward(x, p);
    ASSERT_EQ(out.hidden.shape(), (Shape{2, 3, 8}));
    EXPECT_EQ(out.hidden.value().at(1, 2, 5), x.at(1, 5, 2));
    EXPECT_EQ(m.hidden_dim(), 8u);
}

TEST(LinearStudent, LookbackMismatch) {
    std::mt19937_64 rng(5);
    StudentModel m = make(StudentKind::linear, 8, 3, rng);
    EXPECT_THROW(m.predict(Array(Shape{2, 7, 3})), DimensionError);
}

TEST(ParameterCount, LinearClosedForm) {
    std::mt19937_64 rng(6);
    StudentModel m = make(StudentKind::linear, 96, 96, rng, 8, 12, 25);
    EXPECT_EQ(m.parameter_count(), 18528u);
    EXPECT_EQ(parameter_count(m), 2u * 96 * 96 + 96);
}

TEST(ParameterCount, VariateClosedForm) {
    std::mt19937_64 rng(7);
    const std::size_t l = 10, t = 4, d = 6, ff = 9;
    StudentModel m = make(StudentKind::variate, l, t, rng, d, ff);
    const std::size_t expected = (l * d + d) + 2 * d + 4 * d * d + 2 * d + (d * ff + ff) + (ff * d + d) + (d * t + t);
    EXPECT_EQ(m.parameter_count(), expected);
}

TEST(ParameterCount, ZeroModelDimIsInvalid) {
    std::mt19937_64 rng(8);
    EXPECT_THROW(make(StudentKind::variate, 10, 4, rng, 0), ContractError);
}

TEST(ParameterCount, UnchangedByForward) {
    std::mt19937_64 rng(9);
    for (StudentKind kind : {StudentKind::linear, StudentKind::variate}) {
        StudentModel m = make(kind, 10, 4, rng);
        const std::size_t before = m.parameter_count();
        m.predict(random_normal({3, 10, 2}, rng));
        EXPECT_EQ(m.parameter_count(), before);
    }
}

TEST(Students, ZeroWeightsGiveBiasIndependentOfInput) {
    std::mt19937_64 rng(10);
    for (StudentKind kind : {StudentKind::linear, StudentKind::variate}) {
        StudentModel m = make(kind, 10, 4, rng);
        zero_all(m);
        Array& bias = kind == StudentKind::linear ? m.as_linear()->bias : m.as_variate()->head_b;
        for (std::size_t t = 0; t < 4; ++t) bias[t] = 0.5 * static_cast<double>(t) - 1.0;
        Array y1 = m.predict(random_normal({2, 10, 3}, rng)), y2 = m.predict(random_normal({2, 10, 3}, rng));
        EXPECT_EQ(y1, y2);
        for (std::size_t t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(y1.at(1, t, 2), bias[t]);
    }
}

TEST(VariateStudent, OneTokenPerChannel) {
    std::mt19937_64 rng(11);
    StudentModel m = make(StudentKind::variate, 10, 4, rng, 6);
    ParamBinder p;
    StudentOutput out = m.forward(random_normal({2, 10, 5}, rng), p);
    EXPECT_EQ(out.forecast.shape(), (Shape{2, 4, 5}));
    EXPECT_EQ(out.hidden.shape(), (Shape{2, 5, 6}));
}

TEST(VariateStudent, SingleChannelAttentionPassesValuePath) {
    // With one token the attention weights are exactly 1, so the block reduces
    // to token + (norm(token) W_v) W_o followed by the feed-forward layer.
    std::mt19937_64 rng(12);
    StudentModel m = make(StudentKind::variate, 8, 3, rng, 4, 5);
    const VariateStudent& v = *m.as_variate();
    Array x = random_normal({1, 8, 1}, rng);
    ParamBinder p;
    Array hidden = m.forward(x, p).hidden.value();

    auto bind = [](const Array& a) { return constant(a); };
    Var tok = add_bias(matmul(constant(x.reshaped({1, 8})), bind(v.embed_w)), bind(v.embed_b));
    Var n1 = layer_norm(tok, bind(v.norm1_gain), bind(v.norm1_shift), 1e-5);
    tok = add(tok, matmul(matmul(n1, bind(v.w_value)), bind(v.w_output)));
    Var n2 = layer_norm(tok, bind(v.norm2_gain), bind(v.norm2_shift), 1e-5);
    tok = add(tok, add_bias(matmul(gelu(add_bias(matmul(n2, bind(v.ffn_w1)), bind(v.ffn_b1))), bind(v.ffn_w2)),
                            bind(v.ffn_b2)));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(hidden[i], tok.value()[i], 1e-12);
}

TEST(VariateStudent, ChannelPermutationEquivariance) {
    std::mt19937_64 rng(13);
    StudentModel m = make(StudentKind::variate, 10, 4, rng, 6);
    Array x = random_normal({3, 10, 5}, rng);
    const std::vector<std::size_t> order{2, 4, 0, 1, 3};
    ParamBinder p1, p2;
    StudentOutput a = m.forward(x, p1);
    StudentOutput b = m.forward(permute_channels(x, order), p2);
    Array ya = a.forecast.value(), yb = b.forecast.value();
    Array ha = a.hidden.value(), hb = b.hidden.value();
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t c = 0; c < 5; ++c) {
            for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(yb.at(s, t, c), ya.at(s, t, order[c]), 1e-12);
            for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(hb.at(s, c, k), ha.at(s, order[c], k), 1e-12);
        }
}

TEST(Students, GradientsMatchCentralDifferences) {
    std::mt19937_64 rng(14);
    for (StudentKind kind : {StudentKind::linear, StudentKind::variate}) {
        for (int trial = 0; trial < 5; ++trial) {
            StudentModel m = make(kind, 7, 3, rng, 4, 5, 3);
            Array x = random_normal({2, 7, 3}, rng), y = random_normal({2, 3, 3}, rng);
            Array hw = random_normal({2, 3, m.hidden_dim()}, rng);
            auto r = grad_check(
                [&](ParamBinder& p) {
                    StudentOutput o = m.forward(x, p);
                    return add(mean(square(sub(o.forecast, constant(y)))), mean(mul(o.hidden, constant(hw))));
                },
                m.parameters());
            EXPECT_TRUE(r.passed) << to_string(kind) << " err " << r.max_rel_error;
        }
    }
}

TEST(Students, KindNames) {
    EXPECT_EQ(parse_student_kind("linear"), StudentKind::linear);
    EXPECT_EQ(parse_student_kind("variate"), StudentKind::variate);
    EXPECT_THROW(parse_student_kind("mlp"), ConfigError);
    const auto paper = StudentConfig::paper_scale(StudentKind::variate, 96, 96);
    EXPECT_EQ(paper.model_dim, 512u);
    EXPECT_EQ(paper.ff_dim, 2048u);
}
