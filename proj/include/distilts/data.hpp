#pragma once

// Series ingestion, chronological splits, sliding windows and z-scoring.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "distilts/array.hpp"
#include "distilts/error.hpp"

namespace distilts {

enum class Split { train, val, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("data", "unknown split '" + s + "'");
}

struct SplitRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    std::size_t length() const { return end - begin; }
    bool operator==(const SplitRange&) const = default;
};

struct SeriesDataset {
    std::string name;
    std::vector<std::string> channel_names;
    std::vector<std::string> timestamps;
    Array values;                // [time x C]
    std::optional<Array> clean;  // noise-free signal, known only for synthetic data
    SplitRange train, val, test;

    std::size_t length() const { return values.rank() == 2 ? values.dim(0) : 0; }
    std::size_t channels() const { return values.rank() == 2 ? values.dim(1) : 0; }

    const SplitRange& range(Split s) const {
        switch (s) {
            case Split::train: return train;
            case Split::val: return val;
            case Split::test: return test;
        }
        return train;
    }

    void validate() const {
        if (values.rank() != 2) throw DataError("dataset values must be [time x channels]");
        if (!values.all_finite()) throw DataError("dataset values must be finite");
        if (clean && clean->shape() != values.shape()) throw DataError("clean signal shape differs from values");
        if (!(train.begin <= train.end && train.end <= val.begin && val.begin <= val.end && val.end <= test.begin &&
              test.begin <= test.end && test.end <= length())) {
            throw DataError("split ranges must be ordered, disjoint and within the series");
        }
    }
};

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

enum class SplitPreset { ratio, ett_hourly, ett_minute };

struct SplitConfig {
    SplitPreset preset = SplitPreset::ratio;
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

inline SplitPreset parse_split_preset(const std::string& s) {
    if (s == "ratio") return SplitPreset::ratio;
    if (s == "ett_hourly" || s == "etth") return SplitPreset::ett_hourly;
    if (s == "ett_minute" || s == "ettm") return SplitPreset::ett_minute;
    throw ConfigError("data", "unknown split preset '" + s + "'");
}

// Ratio splits round each share to the nearest row; the ETT presets use the
// 12/4/4-month convention (30-day months) at hourly or 15-minute resolution.
inline void apply_split(SeriesDataset& ds, const SplitConfig& cfg) {
    const std::size_t n = ds.length();
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    if (cfg.preset == SplitPreset::ratio) {
        for (double r : {cfg.train, cfg.val, cfg.test}) {
            if (!(r >= 0.0)) throw ConfigError("data", "split ratios must be >= 0");
        }
        if (cfg.train + cfg.val + cfg.test > 1.0 + 1e-9) throw ConfigError("data", "split ratios sum above 1");
        const auto share = [n](double r) { return static_cast<std::size_t>(std::llround(static_cast<double>(n) * r)); };
        n_train = share(cfg.train);
        n_val = share(cfg.val);
        n_test = std::min(share(cfg.test), n - std::min(n, n_train + n_val));
        if (std::fabs(cfg.train + cfg.val + cfg.test - 1.0) < 1e-9) n_test = n - std::min(n, n_train + n_val);
    } else {
        const std::size_t per_hour = cfg.preset == SplitPreset::ett_minute ? 4 : 1;
        const std::size_t month = 30 * 24 * per_hour;
        n_train = 12 * month;
        n_val = 4 * month;
        n_test = 4 * month;
        if (n_train + n_val + n_test > n) {
            throw ConfigError("data", "series of " + std::to_string(n) + " rows is too short for the ETT split preset");
        }
    }
    if (n_train + n_val + n_test > n) throw ConfigError("data", "split exceeds series length");
    ds.train = {0, n_train};
    ds.val = {n_train, n_train + n_val};
    ds.test = {n_train + n_val, n_train + n_val + n_test};
    ds.validate();
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

inline std::optional<double> parse_number(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

struct CsvOptions {
    bool header = true;
    SplitConfig split;
};

// First column is a timestamp (kept as text), the rest are numeric channels.
inline SeriesDataset parse_csv(std::istream& in, const std::string& name, const CsvOptions& opts = {}) {
    SeriesDataset ds;
    ds.name = name;
    std::vector<double> flat;
    std::size_t channels = 0;
    std::size_t line_no = 0;
    std::string line;
    bool header_pending = opts.header;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_commas(line);
        if (cells.size() < 2) {
            throw DataError("line " + std::to_string(line_no) + ": expected a timestamp and at least one channel");
        }
        if (header_pending) {
            header_pending = false;
            for (std::size_t i = 1; i < cells.size(); ++i) ds.channel_names.emplace_back(cells[i]);
            channels = cells.size() - 1;
            continue;
        }
        if (channels == 0) channels = cells.size() - 1;
        if (cells.size() - 1 != channels) {
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(channels) +
                            " channels, found " + std::to_string(cells.size() - 1));
        }
        for (std::size_t i = 1; i < cells.size(); ++i) {
            auto v = detail::parse_number(cells[i]);
            if (!v) {
                throw DataError("line " + std::to_string(line_no) + ": non-numeric value '" + std::string(cells[i]) +
                                "' in column " + std::to_string(i));
            }
            flat.push_back(*v);
        }
        ds.timestamps.emplace_back(cells[0]);
    }
    if (ds.timestamps.empty()) throw DataError("no data rows in '" + name + "'");
    if (ds.channel_names.empty()) {
        for (std::size_t c = 0; c < channels; ++c) ds.channel_names.push_back("ch" + std::to_string(c));
    }
    ds.values = Array(Shape{ds.timestamps.size(), channels}, std::move(flat));
    apply_split(ds, opts.split);
    return ds;
}

inline SeriesDataset load_csv(const std::filesystem::path& path, const CsvOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("data", "cannot open '" + path.string() + "'");
    return parse_csv(in, path.stem().string(), opts);
}

// Writes values (or another [time x C] array with the same layout) as CSV
// with full round-trip precision.
inline void write_csv(const SeriesDataset& ds, const std::filesystem::path& path, const Array* values = nullptr) {
    const Array& v = values ? *values : ds.values;
    std::ofstream out(path);
    if (!out) throw IoError("data", "cannot write '" + path.string() + "'");
    out << "date";
    for (std::size_t c = 0; c < v.dim(1); ++c) {
        out << ',' << (c < ds.channel_names.size() ? ds.channel_names[c] : "ch" + std::to_string(c));
    }
    out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t t = 0; t < v.dim(0); ++t) {
        out << (t < ds.timestamps.size() ? ds.timestamps[t] : std::to_string(t));
        for (std::size_t c = 0; c < v.dim(1); ++c) out << ',' << v.at(t, c);
        out << '\n';
    }
    if (!out) throw IoError("data", "failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

struct WindowSet {
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t stride = 1;
    Split split = Split::train;
    std::vector<std::size_t> starts;     // series index of each window's first input step
    Array inputs;                        // [N x L x C]
    Array targets;                       // [N x T x C]
    std::optional<Array> clean_targets;  // [N x T x C], when the dataset carries a clean signal

    std::size_t count() const { return starts.size(); }
    std::size_t channels() const { return inputs.rank() == 3 ? inputs.dim(2) : 0; }
};

inline std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon, std::size_t stride) {
    if (stride == 0 || lookback + horizon > length) return 0;
    return (length - lookback - horizon) / stride + 1;
}

// Window i reads inputs [s + i*stride, s + i*stride + L) and targets from the
// following T steps; no window leaves the split.
inline WindowSet make_windows(const SeriesDataset& ds, std::size_t lookback, std::size_t horizon, std::size_t stride,
                              Split split) {
    if (lookback == 0 || horizon == 0) throw ContractError("data", "lookback and horizon must be positive");
    if (stride == 0) throw ContractError("data", "stride must be positive");
    const SplitRange& r = ds.range(split);
    if (lookback + horizon > r.length()) {
        throw ContractError("data", to_string(split) + " split has " + std::to_string(r.length()) +
                                        " rows, fewer than L + T = " + std::to_string(lookback + horizon));
    }
    const std::size_t n = window_count(r.length(), lookback, horizon, stride);
    const std::size_t c = ds.channels();
    WindowSet w;
    w.lookback = lookback;
    w.horizon = horizon;
    w.stride = stride;
    w.split = split;
    w.inputs = Array(Shape{n, lookback, c});
    w.targets = Array(Shape{n, horizon, c});
    if (ds.clean) w.clean_targets = Array(Shape{n, horizon, c});
    auto src = ds.values.data();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = r.begin + i * stride;
        w.starts.push_back(s);
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(s * c), lookback * c,
                    w.inputs.data().begin() + static_cast<std::ptrdiff_t>(i * lookback * c));
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((s + lookback) * c), horizon * c,
                    w.targets.data().begin() + static_cast<std::ptrdiff_t>(i * horizon * c));
        if (ds.clean) {
            std::copy_n(ds.clean->data().begin() + static_cast<std::ptrdiff_t>((s + lookback) * c), horizon * c,
                        w.clean_targets->data().begin() + static_cast<std::ptrdiff_t>(i * horizon * c));
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

enum class NormMode { per_window, per_split };

inline NormMode parse_norm_mode(const std::string& s) {
    if (s == "per_window") return NormMode::per_window;
    if (s == "per_split") return NormMode::per_split;
    throw ConfigError("data", "unknown normalization mode '" + s + "'");
}

inline std::string to_string(NormMode m) { return m == NormMode::per_window ? "per_window" : "per_split"; }

inline constexpr double kStdFloor = 1e-8;

// Per (window, channel) location and scale; per-split stats are repeated
// for every window.
struct NormStats {
    NormMode mode = NormMode::per_window;
    Array mean;  // [N x C]
    Array std;   // [N x C]
};

struct NormalizedWindows {
    WindowSet windows;  // z-scored inputs and targets
    NormStats stats;
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std;
};

// Training-split statistics per channel (population std, floored).
inline ChannelStats train_split_stats(const SeriesDataset& ds) {
    const std::size_t c = ds.channels();
    ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    const std::size_t n = ds.train.length();
    if (n == 0) throw ContractError("data", "training split is empty");
    for (std::size_t ch = 0; ch < c; ++ch) {
        double m = 0.0;
        for (std::size_t t = ds.train.begin; t < ds.train.end; ++t) m += ds.values.at(t, ch);
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t t = ds.train.begin; t < ds.train.end; ++t) v += (ds.values.at(t, ch) - m) * (ds.values.at(t, ch) - m);
        s.mean[ch] = m;
        s.std[ch] = std::max(std::sqrt(v / static_cast<double>(n)), kStdFloor);
    }
    return s;
}

// (x - mean) / std with the stats of each window, for [N x S x C] arrays.
inline Array apply_norm(const Array& a, const NormStats& stats) {
    Array out(a.shape());
    const std::size_t n = a.dim(0), steps = a.dim(1), c = a.dim(2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t ch = 0; ch < c; ++ch)
                out.at(i, t, ch) = (a.at(i, t, ch) - stats.mean.at(i, ch)) / stats.std.at(i, ch);
    return out;
}

inline Array denormalize(const Array& a, const NormStats& stats) {
    Array out(a.shape());
    const std::size_t n = a.dim(0), steps = a.dim(1), c = a.dim(2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t ch = 0; ch < c; ++ch)
                out.at(i, t, ch) = a.at(i, t, ch) * stats.std.at(i, ch) + stats.mean.at(i, ch);
    return out;
}

// per_window: each input window is z-scored per channel with its own stats;
// per_split: every window uses the training-split stats passed in.
inline NormalizedWindows normalize(const WindowSet& w, NormMode mode, const ChannelStats* split_stats = nullptr) {
    if (w.count() == 0) throw ContractError("data", "cannot normalize an empty window set");
    const std::size_t n = w.count(), l = w.lookback, c = w.channels();
    NormStats stats{mode, Array(Shape{n, c}), Array(Shape{n, c})};
    if (mode == NormMode::per_window) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double m = 0.0;
                for (std::size_t t = 0; t < l; ++t) m += w.inputs.at(i, t, ch);
                m /= static_cast<double>(l);
                double v = 0.0;
                for (std::size_t t = 0; t < l; ++t) v += (w.inputs.at(i, t, ch) - m) * (w.inputs.at(i, t, ch) - m);
                stats.mean.at(i, ch) = m;
                stats.std.at(i, ch) = std::max(std::sqrt(v / static_cast<double>(l)), kStdFloor);
            }
    } else {
        if (!split_stats || split_stats->mean.size() != c) {
            throw ContractError("data", "per_split normalization needs training-split channel stats");
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
                stats.mean.at(i, ch) = split_stats->mean[ch];
                stats.std.at(i, ch) = split_stats->std[ch];
            }
    }
    NormalizedWindows out{w, stats};
    out.windows.inputs = apply_norm(w.inputs, stats);
    out.windows.targets = apply_norm(w.targets, stats);
    if (w.clean_targets) out.windows.clean_targets = apply_norm(*w.clean_targets, stats);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic seesaw task
// ---------------------------------------------------------------------------

// Per channel c, with sigma = 1 / hard_snr:
//
//   clean(t) = easy_amp * sin(2 pi t / P_s + a_c) + sin(2 pi t / P_l + b_c) + g(t)
//   g(t)     = rho * g(t-1) + sigma * sqrt(1 - rho^2) * eta(t)
//   value(t) = clean(t) + sigma * eps(t)
//
// with eta, eps ~ N(0, 1), P_s = max(4, L/4) and P_l = 2 (L + T). Given the
// exact state at the forecast origin, the step-k error variance is
// sigma^2 (1 - rho^(2k)) + sigma^2, which grows with k; with hard_snr = inf
// the series is a sum of sinusoids and exactly linearly predictable.
struct SeesawConfig {
    std::size_t channels = 4;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t length = 3000;
    double easy_amp = 1.0;
    double hard_snr = 2.0;
    double rho = 0.95;
    std::uint64_t seed = 0;
    SplitConfig split;
};

inline SeriesDataset synth_seesaw(const SeesawConfig& cfg) {
    if (cfg.horizon < 4) throw ContractError("data", "seesaw task needs T >= 4");
    if (cfg.channels == 0 || cfg.length == 0) throw ContractError("data", "seesaw task needs channels and length");
    if (!(cfg.hard_snr > 0.0)) throw ContractError("data", "hard_snr must be positive");
    if (!(cfg.rho >= 0.0 && cfg.rho < 1.0)) throw ContractError("data", "rho must be in [0, 1)");
    const double sigma = std::isinf(cfg.hard_snr) ? 0.0 : 1.0 / cfg.hard_snr;
    const double p_short = std::max(4.0, static_cast<double>(cfg.lookback) / 4.0);
    const double p_long = 2.0 * static_cast<double>(cfg.lookback + cfg.horizon);
    const double two_pi = 2.0 * std::numbers::pi;

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> phase(0.0, two_pi);
    std::normal_distribution<double> normal(0.0, 1.0);

    SeriesDataset ds;
    ds.name = "seesaw";
    const std::size_t n = cfg.length, c = cfg.channels;
    ds.values = Array(Shape{n, c});
    ds.clean = Array(Shape{n, c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        ds.channel_names.push_back("ch" + std::to_string(ch));
        const double a = phase(rng);
        const double b = phase(rng);
        double g = sigma * normal(rng);
        for (std::size_t t = 0; t < n; ++t) {
            if (t > 0) g = cfg.rho * g + sigma * std::sqrt(1.0 - cfg.rho * cfg.rho) * normal(rng);
            const double tt = static_cast<double>(t);
            const double clean =
                cfg.easy_amp * std::sin(two_pi * tt / p_short + a) + std::sin(two_pi * tt / p_long + b) + g;
            ds.clean->at(t, ch) = clean;
            ds.values.at(t, ch) = clean + sigma * normal(rng);
        }
    }
    for (std::size_t t = 0; t < n; ++t) ds.timestamps.push_back(std::to_string(t));
    apply_split(ds, cfg.split);
    return ds;
}

}  // namespace distilts
