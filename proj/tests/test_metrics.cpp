#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "distilts/metrics.hpp"
#include "test_util.hpp"

using namespace distilts;
using distilts::testing::random_normal;

TEST(Metrics, HandExamples) {
    Array y_hat(Shape{1, 2, 1}, std::vector<double>{1.0, 3.0});
    Array y(Shape{1, 2, 1}, std::vector<double>{0.0, 0.0});
    EXPECT_DOUBLE_EQ(mse(y_hat, y), 5.0);
    EXPECT_DOUBLE_EQ(mae(y_hat, y), 2.0);
    EXPECT_EQ(per_step_mse(y_hat, y), (std::vector<double>{1.0, 9.0}));
    EXPECT_EQ(per_step_mae(y_hat, y), (std::vector<double>{1.0, 3.0}));
    EXPECT_EQ(mse(y, y), 0.0);
}

TEST(Metrics, ShapeMismatch) {
    EXPECT_THROW(mse(Array(Shape{1, 2, 1}), Array(Shape{1, 2, 2})), DimensionError);
    EXPECT_THROW(mae(Array(Shape{2, 1}), Array(Shape{2, 1})), DimensionError);
}

TEST(Metrics, PerStepAveragesBackToTotal) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t b = 1 + rng() % 5, t = 1 + rng() % 9, c = 1 + rng() % 4;
        Array a = random_normal({b, t, c}, rng), y = random_normal({b, t, c}, rng);
        const auto ps = per_step_mse(a, y);
        const auto pa = per_step_mae(a, y);
        EXPECT_NEAR(std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(t), mse(a, y), 1e-12);
        EXPECT_NEAR(std::accumulate(pa.begin(), pa.end(), 0.0) / static_cast<double>(t), mae(a, y), 1e-12);
    }
}

TEST(Metrics, LastQuarter) {
    MetricReport r;
    r.mse_per_step = {1, 2, 3, 4, 5, 6, 7, 8};
    EXPECT_DOUBLE_EQ(r.last_quarter_mse(), 7.5);
    r.mse_per_step = {1, 2, 9};
    EXPECT_DOUBLE_EQ(r.last_quarter_mse(), 9.0);
    EXPECT_DOUBLE_EQ(r.mse_over_steps(0, 2), 1.5);
}

TEST(Metrics, ReportMatchesParts) {
    std::mt19937_64 rng(2);
    Array a = random_normal({3, 4, 2}, rng), y = random_normal({3, 4, 2}, rng);
    const MetricReport r = evaluate_metrics(a, y, false);
    EXPECT_EQ(r.mse, mse(a, y));
    EXPECT_EQ(r.mae, mae(a, y));
    EXPECT_EQ(r.mse_per_step.size(), 4u);
    EXPECT_FALSE(r.denormalized);
}
