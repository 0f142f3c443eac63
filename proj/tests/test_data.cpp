#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "distilts/data.hpp"
#include "test_util.hpp"

using namespace distilts;
using distilts::testing::random_normal;

namespace {

SeriesDataset series_of_length(std::size_t n, std::size_t c = 1, SplitConfig split = {}) {
    SeriesDataset ds;
    ds.name = "toy";
    ds.values = Array(Shape{n, c});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < c; ++k) ds.values.at(t, k) = static_cast<double>(t * 10 + k);
    for (std::size_t t = 0; t < n; ++t) ds.timestamps.push_back(std::to_string(t));
    apply_split(ds, split);
    return ds;
}

SeriesDataset whole_series_train(std::size_t n) {
    SplitConfig s;
    s.train = 1.0;
    s.val = 0.0;
    s.test = 0.0;
    return series_of_length(n, 1, s);
}

// Lookback rows [N x L] of channel c, with a trailing intercept column.
Eigen::MatrixXd design(const WindowSet& w, std::size_t c, bool intercept) {
    Eigen::MatrixXd x(w.count(), w.lookback + (intercept ? 1 : 0));
    for (std::size_t i = 0; i < w.count(); ++i) {
        for (std::size_t s = 0; s < w.lookback; ++s) x(i, s) = w.inputs.at(i, s, c);
        if (intercept) x(i, w.lookback) = 1.0;
    }
    return x;
}

Eigen::MatrixXd responses(const WindowSet& w, std::size_t c) {
    Eigen::MatrixXd y(w.count(), w.horizon);
    for (std::size_t i = 0; i < w.count(); ++i)
        for (std::size_t t = 0; t < w.horizon; ++t) y(i, t) = w.targets.at(i, t, c);
    return y;
}

// Per-step test MSE of a ridge regression fitted per channel on the train
// windows (lambda = 0 gives ordinary least squares).
std::vector<double> ridge_per_step_mse(const SeriesDataset& ds, std::size_t l, std::size_t t, double lambda) {
    const WindowSet train = make_windows(ds, l, t, 1, Split::train);
    const WindowSet test = make_windows(ds, l, t, 1, Split::test);
    std::vector<double> per_step(t, 0.0);
    for (std::size_t c = 0; c < ds.channels(); ++c) {
        const Eigen::MatrixXd x = design(train, c, true), y = responses(train, c);
        Eigen::MatrixXd gram = x.transpose() * x;
        gram.diagonal().array() += lambda;
        const Eigen::MatrixXd coef = gram.ldlt().solve(x.transpose() * y);
        const Eigen::MatrixXd resid = design(test, c, true) * coef - responses(test, c);
        for (std::size_t s = 0; s < t; ++s) per_step[s] += resid.col(s).squaredNorm() / static_cast<double>(test.count());
    }
    for (double& v : per_step) v /= static_cast<double>(ds.channels());
    return per_step;
}

}  // namespace

TEST(Csv, ToyFile) {
    std::istringstream in("date,a,b\n2020-01-01,1,2\n2020-01-02,3,4.5\n2020-01-03,-1,1e-3\n");
    SeriesDataset ds = parse_csv(in, "toy");
    EXPECT_EQ(ds.values.shape(), (Shape{3, 2}));
    EXPECT_EQ(ds.values.at(1, 1), 4.5);
    EXPECT_EQ(ds.values.at(2, 1), 1e-3);
    EXPECT_EQ(ds.channel_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.timestamps[2], "2020-01-03");
}

TEST(Csv, TextCellNamesTheLine) {
    std::istringstream in("date,a\n0,1\n1,oops\n2,3\n");
    try {
        parse_csv(in, "bad");
        FAIL() << "expected a parse error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
        EXPECT_EQ(e.diagnostic_class(), "data/parse");
    }
}

TEST(Csv, EmptyAndRaggedFiles) {
    std::istringstream empty("");
    EXPECT_THROW(parse_csv(empty, "empty"), DataError);
    std::istringstream header_only("date,a\n");
    EXPECT_THROW(parse_csv(header_only, "header"), DataError);
    std::istringstream ragged("date,a,b\n0,1,2\n1,3\n");
    EXPECT_THROW(parse_csv(ragged, "ragged"), DataError);
}

TEST(Csv, WriteReadRoundTrip) {
    std::mt19937_64 rng(1);
    SeriesDataset ds = series_of_length(20, 3);
    ds.values = random_normal({20, 3}, rng);
    const auto path = std::filesystem::temp_directory_path() / "distilts_csv_roundtrip.csv";
    write_csv(ds, path);
    SeriesDataset back = load_csv(path);
    EXPECT_EQ(back.values, ds.values);
    std::filesystem::remove(path);
    EXPECT_THROW(load_csv(path), IoError);
}

TEST(Split, RatioBoundaries) {
    SeriesDataset ds = series_of_length(100);
    EXPECT_EQ(ds.train.begin, 0u);
    EXPECT_EQ(ds.train.end, 70u);
    EXPECT_EQ(ds.val.end, 80u);
    EXPECT_EQ(ds.test.end, 100u);
}

TEST(Split, EttPresets) {
    SplitConfig hourly;
    hourly.preset = SplitPreset::ett_hourly;
    SeriesDataset h = series_of_length(17420, 1, hourly);
    EXPECT_EQ(h.train.end, 12u * 30 * 24);
    EXPECT_EQ(h.val.end, 16u * 30 * 24);
    EXPECT_EQ(h.test.end, 20u * 30 * 24);
    SplitConfig minute;
    minute.preset = SplitPreset::ett_minute;
    SeriesDataset m = series_of_length(69680, 1, minute);
    EXPECT_EQ(m.train.end, 12u * 30 * 24 * 4);
    EXPECT_EQ(m.test.end, 20u * 30 * 24 * 4);
    EXPECT_THROW(series_of_length(1000, 1, hourly), ConfigError);
}

TEST(Windows, CountExamples) {
    EXPECT_EQ(window_count(10, 3, 2, 1), 6u);
    EXPECT_EQ(window_count(5, 3, 2, 1), 1u);
    EXPECT_EQ(window_count(10, 3, 2, 10), 1u);
    const WindowSet w = make_windows(whole_series_train(10), 3, 2, 1, Split::train);
    EXPECT_EQ(w.count(), 6u);
    EXPECT_EQ(w.inputs.shape(), (Shape{6, 3, 1}));
    EXPECT_EQ(w.targets.shape(), (Shape{6, 2, 1}));
}

TEST(Windows, CountMatchesBruteForce) {
    for (std::size_t len = 1; len <= 200; len += 7)
        for (std::size_t l = 1; l <= 12; l += 3)
            for (std::size_t t = 1; t <= 9; t += 2)
                for (std::size_t stride = 1; stride <= 13; stride += 4) {
                    std::size_t brute = 0;
                    for (std::size_t s = 0; s + l + t <= len; s += stride) ++brute;
                    EXPECT_EQ(window_count(len, l, t, stride), brute) << len << " " << l << " " << t << " " << stride;
                }
}

TEST(Windows, ContiguousAndInsideTheSplit) {
    for (std::size_t n : {40u, 57u, 100u}) {
        SeriesDataset ds = series_of_length(n, 2);
        for (Split s : {Split::train, Split::val, Split::test}) {
            const SplitRange& r = ds.range(s);
            if (r.length() < 5) continue;
            for (std::size_t stride : {1u, 2u, 3u}) {
                const WindowSet w = make_windows(ds, 3, 2, stride, s);
                for (std::size_t i = 0; i < w.count(); ++i) {
                    const std::size_t start = w.starts[i];
                    EXPECT_EQ(start, r.begin + i * stride);
                    EXPECT_GE(start, r.begin);
                    EXPECT_LE(start + 5, r.end);
                    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(w.inputs.at(i, k, 1), ds.values.at(start + k, 1));
                    for (std::size_t k = 0; k < 2; ++k) {
                        EXPECT_EQ(w.targets.at(i, k, 0), ds.values.at(start + 3 + k, 0));
                    }
                }
            }
        }
    }
}

TEST(Windows, SplitTooShort) {
    SeriesDataset ds = series_of_length(100);
    EXPECT_THROW(make_windows(ds, 8, 5, 1, Split::val), ContractError);
    EXPECT_THROW(make_windows(ds, 0, 5, 1, Split::train), ContractError);
    EXPECT_THROW(make_windows(ds, 3, 5, 0, Split::train), ContractError);
}

TEST(Normalize, ConstantChannelGoesToZero) {
    SeriesDataset ds = whole_series_train(12);
    ds.values.fill(4.0);
    const NormalizedWindows n = normalize(make_windows(ds, 4, 2, 1, Split::train), NormMode::per_window);
    for (double v : n.windows.inputs.data()) EXPECT_EQ(v, 0.0);
    for (double v : n.stats.std.data()) EXPECT_EQ(v, kStdFloor);
}

TEST(Normalize, PerWindowMomentsAndRoundTrip) {
    std::mt19937_64 rng(2);
    SeriesDataset ds = whole_series_train(60);
    ds.values = random_normal({60, 3}, rng, 3.0);
    for (double& v : ds.values.data()) v += 10.0;
    ds = [&] {
        SeriesDataset d = whole_series_train(60);
        d.values = Array(Shape{60, 3});
        std::copy(ds.values.data().begin(), ds.values.data().end(), d.values.data().begin());
        return d;
    }();
    const WindowSet w = make_windows(ds, 12, 5, 1, Split::train);
    const NormalizedWindows n = normalize(w, NormMode::per_window);
    for (std::size_t i = 0; i < w.count(); ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            double m = 0.0, v = 0.0;
            for (std::size_t s = 0; s < 12; ++s) m += n.windows.inputs.at(i, s, c);
            m /= 12.0;
            for (std::size_t s = 0; s < 12; ++s) v += std::pow(n.windows.inputs.at(i, s, c) - m, 2);
            EXPECT_NEAR(m, 0.0, 1e-10);
            EXPECT_NEAR(std::sqrt(v / 12.0), 1.0, 1e-6);
        }
    const Array back = denormalize(n.windows.targets, n.stats);
    for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back[i], w.targets[i], 1e-9);
    const Array back_in = denormalize(n.windows.inputs, n.stats);
    for (std::size_t i = 0; i < back_in.size(); ++i) EXPECT_NEAR(back_in[i], w.inputs[i], 1e-9);
}

TEST(Normalize, PerSplitUsesTrainingStatistics) {
    std::mt19937_64 rng(3);
    SeriesDataset ds = series_of_length(100, 2);
    ds.values = random_normal({100, 2}, rng, 2.0);
    const ChannelStats st = train_split_stats(ds);
    double m0 = 0.0;
    for (std::size_t t = 0; t < 70; ++t) m0 += ds.values.at(t, 0);
    EXPECT_NEAR(st.mean[0], m0 / 70.0, 1e-12);
    const WindowSet test = make_windows(ds, 5, 3, 1, Split::test);
    const NormalizedWindows n = normalize(test, NormMode::per_split, &st);
    EXPECT_NEAR(n.windows.inputs.at(2, 1, 1), (test.inputs.at(2, 1, 1) - st.mean[1]) / st.std[1], 1e-12);
    const Array back = denormalize(n.windows.targets, n.stats);
    for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back[i], test.targets[i], 1e-9);
    EXPECT_THROW(normalize(test, NormMode::per_split), ContractError);
}

TEST(Seesaw, Deterministic) {
    SeesawConfig c;
    c.length = 500;
    c.lookback = 24;
    c.horizon = 24;
    c.seed = 42;
    SeriesDataset a = synth_seesaw(c), b = synth_seesaw(c);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(*a.clean, *b.clean);
    c.seed = 43;
    EXPECT_NE(synth_seesaw(c).values, a.values);
    c.horizon = 3;
    EXPECT_THROW(synth_seesaw(c), ContractError);
}

TEST(Seesaw, NoiselessLimitIsLinearlyPredictable) {
    SeesawConfig c;
    c.length = 1200;
    c.lookback = 24;
    c.horizon = 24;
    c.channels = 2;
    c.hard_snr = std::numeric_limits<double>::infinity();
    SeriesDataset ds = synth_seesaw(c);
    EXPECT_EQ(ds.values, *ds.clean);
    for (double v : ridge_per_step_mse(ds, 24, 24, 0.0)) EXPECT_LT(v, 1e-8);
}

TEST(Seesaw, BestLinearPredictorErrorGrowsWithHorizon) {
    SeesawConfig c;
    c.length = 4000;
    c.lookback = 48;
    c.horizon = 48;
    c.channels = 3;
    c.seed = 5;
    SeriesDataset ds = synth_seesaw(c);
    const std::vector<double> mse = ridge_per_step_mse(ds, 48, 48, 1.0);
    const std::size_t q = 48 / 4;
    double first = 0.0, last = 0.0;
    for (std::size_t t = 0; t < q; ++t) {
        first += mse[t];
        last += mse[48 - q + t];
    }
    EXPECT_LT(first, last) << first / q << " vs " << last / q;
}

TEST(Dataset, ValidateRejectsOverlappingSplits) {
    SeriesDataset ds = series_of_length(50);
    ds.val = {30, 40};
    EXPECT_THROW(ds.validate(), DataError);
}
