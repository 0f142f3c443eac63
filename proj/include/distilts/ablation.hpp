#pragma once

// Runs a set of objective variants over several seeds and tabulates
// mean +- std of the test metrics.

#include <cmath>
#include <cstdint>
#include <future>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "distilts/trainer.hpp"

namespace distilts {

// The config a variant actually trains with, plus the checks that the
// derivation did what the variant name promises.
inline TrainConfig derive_variant_config(const TrainConfig& base, KdVariant v, std::uint64_t seed) {
    TrainConfig cfg = base;
    cfg.variant = v;
    cfg.seed = seed;
    cfg = resolve_variant(cfg);
    auto require = [&](bool ok, const char* what) {
        if (!ok) throw ContractError("trainer", to_string(v) + " derivation violated: " + what);
    };
    switch (v) {
        case KdVariant::only_hw:
            require(cfg.loss.lambda_fta == 0.0, "lambda_fta must be 0");
            require(cfg.tau == base.tau, "tau must be kept");
            break;
        case KdVariant::only_fta:
            require(cfg.tau == 0.0, "tau must be 0");
            require(cfg.loss.lambda_fta == base.loss.lambda_fta, "lambda_fta must be kept");
            break;
        case KdVariant::baseline:
            require(cfg.loss.lambda_kd == 0.0 && cfg.loss.lambda_fta == 0.0, "distillation coefficients must be 0");
            break;
        default: break;
    }
    return cfg;
}

struct AblationCell {
    std::size_t horizon = 0;
    KdVariant variant = KdVariant::baseline;
    std::uint64_t seed = 0;
    RunRecord record;
};

struct SummaryStat {
    double mean = 0.0;
    double std = 0.0;  // sample std, 0 for a single value
};

inline SummaryStat summarize(const std::vector<double>& xs) {
    SummaryStat s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double v = 0.0;
        for (double x : xs) v += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(v / static_cast<double>(xs.size() - 1));
    }
    return s;
}

struct AblationRow {
    std::size_t horizon = 0;
    KdVariant variant = KdVariant::baseline;
    std::size_t runs = 0;
    SummaryStat mse, mae, last_quarter_mse;
};

struct AblationTable {
    std::vector<AblationCell> cells;
    std::vector<AblationRow> rows;

    const AblationRow* find(std::size_t horizon, KdVariant v) const {
        for (const auto& r : rows)
            if (r.horizon == horizon && r.variant == v) return &r;
        return nullptr;
    }

    // Test MSE of one (horizon, variant, seed) run.
    std::optional<double> cell_mse(std::size_t horizon, KdVariant v, std::uint64_t seed) const {
        for (const auto& c : cells)
            if (c.horizon == horizon && c.variant == v && c.seed == seed) return c.record.test.mse;
        return std::nullopt;
    }

    std::string to_csv() const {
        std::ostringstream out;
        out << std::setprecision(17);
        out << "horizon,variant,runs,mse_mean,mse_std,mae_mean,mae_std,last_quarter_mse_mean,last_quarter_mse_std\n";
        for (const auto& r : rows) {
            out << r.horizon << ',' << to_string(r.variant) << ',' << r.runs << ',' << r.mse.mean << ',' << r.mse.std
                << ',' << r.mae.mean << ',' << r.mae.std << ',' << r.last_quarter_mse.mean << ','
                << r.last_quarter_mse.std << '\n';
        }
        return out.str();
    }

    std::string cells_csv() const {
        std::ostringstream out;
        out << std::setprecision(17);
        out << "horizon,variant,seed,mse,mae,last_quarter_mse,best_epoch,epochs_run\n";
        for (const auto& c : cells) {
            out << c.horizon << ',' << to_string(c.variant) << ',' << c.seed << ',' << c.record.test.mse << ','
                << c.record.test.mae << ',' << c.record.test.last_quarter_mse() << ',' << c.record.best_epoch << ','
                << c.record.epochs.size() << '\n';
        }
        return out.str();
    }

    std::string to_text() const {
        std::ostringstream out;
        out << std::left << std::setw(9) << "horizon" << std::setw(11) << "variant" << std::setw(6) << "runs"
            << std::setw(22) << "MSE" << std::setw(22) << "MAE" << "last-quarter MSE\n";
        auto pm = [](const SummaryStat& s) {
            std::ostringstream o;
            o << std::fixed << std::setprecision(4) << s.mean << " +- " << s.std;
            return o.str();
        };
        for (const auto& r : rows) {
            out << std::left << std::setw(9) << r.horizon << std::setw(11) << to_string(r.variant) << std::setw(6)
                << r.runs << std::setw(22) << pm(r.mse) << std::setw(22) << pm(r.mae) << pm(r.last_quarter_mse)
                << '\n';
        }
        return out.str();
    }
};

struct AblationInput {
    const ExperimentData* data = nullptr;
    const TeacherTrace* trace = nullptr;
};

// Runs every (input, variant, seed) combination. With jobs > 1, runs execute
// concurrently in groups; each owns its own model and RNG streams, and the
// results are collected in a fixed order, so the table does not depend on
// `jobs`.
inline AblationTable run_ablation(const TrainConfig& base, const std::vector<AblationInput>& inputs,
                                  const std::vector<KdVariant>& variants, const std::vector<std::uint64_t>& seeds,
                                  std::size_t jobs = 1) {
    if (seeds.empty()) throw ContractError("trainer", "ablation needs at least one seed");
    if (variants.empty()) throw ContractError("trainer", "ablation needs at least one variant");

    struct Task {
        const AblationInput* input;
        KdVariant variant;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const auto& in : inputs)
        for (KdVariant v : variants)
            for (std::uint64_t s : seeds) tasks.push_back({&in, v, s});

    AblationTable table;
    table.cells.resize(tasks.size());
    auto run_one = [&](std::size_t i) {
        const Task& t = tasks[i];
        const TrainConfig cfg = derive_variant_config(base, t.variant, t.seed);
        AblationCell cell;
        cell.horizon = t.input->data->config.horizon;
        cell.variant = t.variant;
        cell.seed = t.seed;
        cell.record = train(cfg, *t.input->data, t.input->trace).record;
        return cell;
    };
    jobs = std::max<std::size_t>(1, jobs);
    for (std::size_t begin = 0; begin < tasks.size(); begin += jobs) {
        const std::size_t end = std::min(tasks.size(), begin + jobs);
        if (jobs == 1) {
            table.cells[begin] = run_one(begin);
            continue;
        }
        std::vector<std::future<AblationCell>> pending;
        for (std::size_t i = begin; i < end; ++i) pending.push_back(std::async(std::launch::async, run_one, i));
        for (std::size_t i = begin; i < end; ++i) table.cells[i] = pending[i - begin].get();
    }

    for (const auto& in : inputs)
        for (KdVariant v : variants) {
            AblationRow row;
            row.horizon = in.data->config.horizon;
            row.variant = v;
            std::vector<double> m, a, q;
            for (const auto& c : table.cells) {
                if (c.horizon != row.horizon || c.variant != v) continue;
                m.push_back(c.record.test.mse);
                a.push_back(c.record.test.mae);
                q.push_back(c.record.test.last_quarter_mse());
            }
            row.runs = m.size();
            row.mse = summarize(m);
            row.mae = summarize(a);
            row.last_quarter_mse = summarize(q);
            table.rows.push_back(row);
        }
    return table;
}

}  // namespace distilts
