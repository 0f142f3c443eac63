#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "distilts/grad_check.hpp"
#include "distilts/losses.hpp"
#include "distilts/signal.hpp"
#include "test_util.hpp"

using namespace distilts;
using distilts::testing::random_normal;

namespace {

Array forecast(std::initializer_list<double> steps) {
    // B = C = 1.
    return Array(Shape{1, steps.size(), 1}, std::vector<double>(steps));
}

Array permute_batch(const Array& a, const std::vector<std::size_t>& order) {
    Array out(a.shape());
    const std::size_t row = a.size() / a.dim(0);
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t k = 0; k < row; ++k) out[i * row + k] = a[order[i] * row + k];
    return out;
}

}  // namespace

TEST(HorizonWeights, UniformWhenTauIsZero) {
    const auto w = horizon_weights(0.0, 4);
    for (double v : w.weights()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(HorizonWeights, LnThreeOverTwoSteps) {
    const auto w = horizon_weights(std::log(3.0), 2);
    EXPECT_NEAR(w[0], 0.5, 1e-15);
    EXPECT_NEAR(w[1], 1.5, 1e-15);
}

TEST(HorizonWeights, EndpointRatioAtDeskHorizon) {
    const auto w = horizon_weights(2.0, 96);
    const double m = std::accumulate(w.weights().begin(), w.weights().end(), 0.0) / 96.0;
    EXPECT_NEAR(m, 1.0, 1e-12);
    EXPECT_NEAR(w[95] / w[0], std::exp(2.0), 1e-9);
}

TEST(HorizonWeights, SingleStepIsOne) {
    const auto w = horizon_weights(5.0, 1);
    ASSERT_EQ(w.horizon(), 1u);
    EXPECT_DOUBLE_EQ(w[0], 1.0);
}

TEST(HorizonWeights, ContractErrors) {
    EXPECT_THROW(horizon_weights(1.0, 0), ContractError);
    EXPECT_THROW(horizon_weights(-0.1, 4), ContractError);
}

TEST(HorizonWeights, SumIsHorizonAndMonotoneOverGrid) {
    for (double tau : {0.0, 0.1, 1.0, 3.0, 7.5, 20.0}) {
        for (std::size_t t : {1u, 2u, 3u, 17u, 96u, 512u, 1024u}) {
            const auto w = horizon_weights(tau, t);
            const double s = std::accumulate(w.weights().begin(), w.weights().end(), 0.0);
            EXPECT_NEAR(s, static_cast<double>(t), 1e-12 * static_cast<double>(t)) << tau << " " << t;
            for (std::size_t i = 0; i < t; ++i) {
                EXPECT_GT(w[i], 0.0);
                if (tau > 0.0 && i + 1 < t) {
                    EXPECT_GT(w[i + 1], w[i]);
                }
            }
        }
    }
}

TEST(HorizonWeights, NormalizationIsCanonical) {
    std::mt19937_64 rng(1);
    Array yh = random_normal({3, 6, 2}, rng), yt = random_normal({3, 6, 2}, rng);
    const auto w = horizon_weights(1.3, 6);
    for (double c : {1e-3, 0.5, 7.0, 1e4}) {
        std::vector<double> raw = w.weights();
        for (double& v : raw) v *= c;
        const auto rescaled = HorizonWeights::normalized(raw);
        EXPECT_NEAR(kd_loss(constant(yh), yt, rescaled).item(), kd_loss(constant(yh), yt, w).item(), 1e-12);
    }
}

TEST(SupervisedLoss, Examples) {
    EXPECT_EQ(supervised_loss(constant(forecast({0.3, -1})), forecast({0.3, -1})).item(), 0.0);
    EXPECT_DOUBLE_EQ(supervised_loss(constant(forecast({1, 2})), forecast({0, 0})).item(), 2.5);
    const auto w = HorizonWeights::normalized({0.5, 1.5});
    EXPECT_DOUBLE_EQ(supervised_loss(constant(forecast({1, 2})), forecast({0, 0}), &w).item(), 3.25);
}

TEST(SupervisedLoss, ShapeMismatch) {
    EXPECT_THROW(supervised_loss(constant(Array(Shape{1, 2, 1})), Array(Shape{1, 3, 1})), DimensionError);
    const auto w = horizon_weights(1.0, 3);
    EXPECT_THROW(supervised_loss(constant(Array(Shape{1, 2, 1})), Array(Shape{1, 2, 1}), &w), DimensionError);
}

TEST(KdLoss, Examples) {
    const auto w = HorizonWeights::normalized({0.5, 1.5});
    EXPECT_EQ(kd_loss(constant(forecast({4, 5})), forecast({4, 5}), w).item(), 0.0);
    EXPECT_DOUBLE_EQ(kd_loss(constant(forecast({1, 1})), forecast({0, 0}), w).item(), 1.0);
}

TEST(KdLoss, UniformWeightsReduceToPlainMse) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        Array yh = random_normal({2, 5, 3}, rng), yt = random_normal({2, 5, 3}, rng);
        EXPECT_NEAR(kd_loss(constant(yh), yt, horizon_weights(0.0, 5)).item(),
                    supervised_loss(constant(yh), yt).item(), 1e-12);
    }
}

TEST(TkdLoss, Examples) {
    std::mt19937_64 rng(3);
    Array yh = random_normal({2, 7, 3}, rng), y = random_normal({2, 7, 3}, rng), yt = random_normal({2, 7, 3}, rng);
    EXPECT_NEAR(tkd_loss(constant(yh), y, yt, TrendProjector{5}, 0.0).item(), supervised_loss(constant(yh), y).item(),
                1e-15);
    EXPECT_NEAR(tkd_loss(constant(yh), yh, yh, TrendProjector{5}, 0.7).item(), 0.0, 1e-15);
    const double plain = supervised_loss(constant(yh), yt).item();
    EXPECT_NEAR(trend_distill_term(constant(yh), yt, TrendProjector{1}).item(), plain, 1e-12);
}

TEST(TkdLoss, ProjectionIsCenteredMovingAverageWithEdgeReplication) {
    Array y = forecast({1, 2, 3, 4, 10});
    Array p = trend_projection(constant(y), TrendProjector{3}).value();
    // Edges repeat the first and last values.
    EXPECT_NEAR(p[0], (1 + 1 + 2) / 3.0, 1e-15);
    EXPECT_NEAR(p[2], (2 + 3 + 4) / 3.0, 1e-15);
    EXPECT_NEAR(p[4], (4 + 10 + 10) / 3.0, 1e-15);
    EXPECT_THROW(trend_projection(constant(y), TrendProjector{4}), ContractError);
    EXPECT_THROW(trend_projection(constant(y), TrendProjector{7}), ContractError);
}

TEST(FdkdLoss, Examples) {
    std::mt19937_64 rng(4);
    Array yh = random_normal({2, 8, 3}, rng), y = random_normal({2, 8, 3}, rng), yt = random_normal({2, 8, 3}, rng);
    EXPECT_NEAR(fdkd_loss(constant(yh), yh, yh, 0.5, 1.0, 1.0).item(), 0.0, 1e-12);
    EXPECT_NEAR(fdkd_loss(constant(yh), y, yt, 0.5, 0.0, 0.0).item(), supervised_loss(constant(yh), y).item(), 1e-15);
}

TEST(FdkdLoss, ConstantShiftTouchesOnlyDcBin) {
    std::mt19937_64 rng(5);
    Array ys = random_normal({2, 9, 2}, rng);
    Array yt = ys;
    for (double& v : yt.data()) v += 3.0;
    EXPECT_NEAR(mean(square(sub(first_difference(constant(ys)), first_difference(constant(yt))))).item(), 0.0, 1e-24);
    Array as = amplitude_spectrum(constant(ys)).value(), at = amplitude_spectrum(constant(yt)).value();
    const std::size_t bins = as.dim(2);
    EXPECT_EQ(bins, 9u / 2 + 1);
    bool dc_differs = false;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 2; ++c) {
            dc_differs = dc_differs || std::abs(as.at(b, c, 0) - at.at(b, c, 0)) > 1e-9;
            for (std::size_t k = 1; k < bins; ++k) EXPECT_NEAR(as.at(b, c, k), at.at(b, c, k), 1e-12);
        }
    EXPECT_TRUE(dc_differs);
}

TEST(FdkdLoss, AmplitudeMatchesDirectDft) {
    std::mt19937_64 rng(6);
    const std::size_t t = 10;
    Array y = random_normal({1, t, 1}, rng);
    Array amp = amplitude_spectrum(constant(y)).value();
    for (std::size_t k = 0; k <= t / 2; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t n = 0; n < t; ++n) {
            const double ang = -2.0 * M_PI * static_cast<double>(k * n) / static_cast<double>(t);
            re += y[n] * std::cos(ang);
            im += y[n] * std::sin(ang);
        }
        EXPECT_NEAR(amp[k], std::hypot(re, im), 1e-12) << "bin " << k;
    }
}

TEST(FdkdLoss, DifferenceTermNeedsTwoSteps) {
    Array y(Shape{1, 1, 1}, 1.0);
    EXPECT_THROW(fdkd_loss(constant(y), y, y, 0.5, 1.0, 1.0), ContractError);
    EXPECT_NO_THROW(fdkd_loss(constant(y), y, y, 0.5, 1.0, 0.0));
}

TEST(Losses, PermutationInvariantOverBatch) {
    std::mt19937_64 rng(7);
    Array yh = random_normal({5, 6, 2}, rng), y = random_normal({5, 6, 2}, rng), yt = random_normal({5, 6, 2}, rng);
    const std::vector<std::size_t> order{3, 0, 4, 1, 2};
    Array yh_p = permute_batch(yh, order), y_p = permute_batch(y, order), yt_p = permute_batch(yt, order);
    const auto w = horizon_weights(2.0, 6);
    EXPECT_NEAR(supervised_loss(constant(yh), y, &w).item(), supervised_loss(constant(yh_p), y_p, &w).item(), 1e-12);
    EXPECT_NEAR(kd_loss(constant(yh), yt, w).item(), kd_loss(constant(yh_p), yt_p, w).item(), 1e-12);
    EXPECT_NEAR(tkd_loss(constant(yh), y, yt, {5}, 0.5).item(), tkd_loss(constant(yh_p), y_p, yt_p, {5}, 0.5).item(),
                1e-12);
    EXPECT_NEAR(fdkd_loss(constant(yh), y, yt, 0.5, 1, 1).item(),
                fdkd_loss(constant(yh_p), y_p, yt_p, 0.5, 1, 1).item(), 1e-12);
}

TEST(Losses, GradientsMatchCentralDifferences) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        Array yh = random_normal({2, 4, 3}, rng), y = random_normal({2, 4, 3}, rng), yt = random_normal({2, 4, 3}, rng);
        const auto w = horizon_weights(2.0, 4);
        const std::vector<std::pair<const char*, LossGraph>> graphs = {
            {"supervised", [&](ParamBinder& p) { return supervised_loss(p.bind(yh), y); }},
            {"supervised_weighted", [&](ParamBinder& p) { return supervised_loss(p.bind(yh), y, &w); }},
            {"kd", [&](ParamBinder& p) { return kd_loss(p.bind(yh), yt, w); }},
            {"t_kd", [&](ParamBinder& p) { return tkd_loss(p.bind(yh), y, yt, TrendProjector{3}, 0.5); }},
            {"fd_kd", [&](ParamBinder& p) { return fdkd_loss(p.bind(yh), y, yt, 0.5, 1.0, 1.0); }},
        };
        for (const auto& [name, g] : graphs) {
            auto r = grad_check(g, {&yh});
            EXPECT_TRUE(r.passed) << name << " err " << r.max_rel_error;
        }
    }
}

TEST(TotalLoss, ComposesWithBreakdown) {
    std::mt19937_64 rng(9);
    Array yh = random_normal({2, 4, 1}, rng), y = random_normal({2, 4, 1}, rng), yt = random_normal({2, 4, 1}, rng);
    const auto w = horizon_weights(1.0, 4);
    LossComponents parts;
    parts.supervised = supervised_loss(constant(yh), y);
    parts.kd = kd_loss(constant(yh), yt, w);
    parts.fta = constant(Array::scalar(2.0));
    LossWeights lw;
    lw.lambda_kd = 0.5;
    lw.lambda_fta = 0.25;
    const TotalLoss t = total_loss(parts, lw, Objective::weighted_kd);
    const double expected = parts.supervised.item() + 0.5 * parts.kd->item() + 0.25 * 2.0;
    EXPECT_NEAR(t.value.item(), expected, 1e-15);
    EXPECT_NEAR(t.breakdown.total, expected, 1e-15);
    EXPECT_NEAR(t.breakdown.kd.contribution(), 0.5 * parts.kd->item(), 1e-15);
    EXPECT_TRUE(t.breakdown.fta.active);
    EXPECT_FALSE(t.breakdown.variant.active);
}

TEST(TotalLoss, MissingComponentIsConfigError) {
    Array y(Shape{1, 2, 1}, 1.0);
    LossComponents parts;
    EXPECT_THROW(total_loss(parts, LossWeights{}, Objective::weighted_kd), ConfigError);
    parts.supervised = supervised_loss(constant(y), y);
    EXPECT_THROW(total_loss(parts, LossWeights{}, Objective::weighted_kd), ConfigError);  // kd missing
    LossWeights none;
    none.lambda_kd = 0.0;
    none.lambda_fta = 0.0;
    const TotalLoss t = total_loss(parts, none, Objective::weighted_kd);
    EXPECT_FALSE(t.breakdown.kd.active);
    EXPECT_EQ(t.breakdown.kd.contribution(), 0.0);
    EXPECT_THROW(total_loss(parts, LossWeights{}, Objective::variant), ConfigError);
}

TEST(TotalLoss, VariantModeMatchesVariantObjectives) {
    std::mt19937_64 rng(10);
    Array yh = random_normal({2, 6, 2}, rng), y = random_normal({2, 6, 2}, rng), yt = random_normal({2, 6, 2}, rng);
    LossWeights lw;
    LossComponents parts;
    parts.supervised = supervised_loss(constant(yh), y);
    parts.variant_term = spectral_distill_term(constant(yh), yt, lw.beta, lw.gamma);
    EXPECT_NEAR(total_loss(parts, lw, Objective::variant).value.item(),
                fdkd_loss(constant(yh), y, yt, lw.alpha, lw.beta, lw.gamma).item(), 1e-14);
    parts.variant_term = trend_distill_term(constant(yh), yt, TrendProjector{5});
    EXPECT_NEAR(total_loss(parts, lw, Objective::variant).value.item(),
                tkd_loss(constant(yh), y, yt, TrendProjector{5}, lw.alpha).item(), 1e-14);
}

TEST(LossWeights, NegativeCoefficientRejected) {
    LossWeights lw;
    lw.gamma = -1.0;
    EXPECT_THROW(lw.validate(), ConfigError);
}
