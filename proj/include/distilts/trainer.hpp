#pragma once

// Distillation training loop, run records and checkpoints.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "distilts/data.hpp"
#include "distilts/fta.hpp"
#include "distilts/losses.hpp"
#include "distilts/metrics.hpp"
#include "distilts/optim.hpp"
#include "distilts/students.hpp"
#include "distilts/teacher.hpp"

namespace distilts {

enum class KdVariant { distilts, t_kd, fd_kd, baseline, only_hw, only_fta };

inline std::string to_string(KdVariant v) {
    switch (v) {
        case KdVariant::distilts: return "distilts";
        case KdVariant::t_kd: return "t_kd";
        case KdVariant::fd_kd: return "fd_kd";
        case KdVariant::baseline: return "baseline";
        case KdVariant::only_hw: return "only_hw";
        case KdVariant::only_fta: return "only_fta";
    }
    return "?";
}

inline KdVariant parse_kd_variant(const std::string& s) {
    for (auto v : {KdVariant::distilts, KdVariant::t_kd, KdVariant::fd_kd, KdVariant::baseline, KdVariant::only_hw,
                   KdVariant::only_fta}) {
        if (to_string(v) == s) return v;
    }
    throw ConfigError("trainer", "unknown kd_variant '" + s + "'");
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::gelu: return "gelu";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "gelu") return Activation::gelu;
    throw ConfigError("trainer", "unknown activation '" + s + "'");
}

struct TrainConfig {
    StudentConfig student;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    AdamOptions adam;
    std::size_t patience = 3;
    double tau = 2.0;
    LossWeights loss;
    KdVariant variant = KdVariant::distilts;
    TrendProjector trend;
    Activation fta_phi = Activation::gelu;
    std::size_t fta_latent = 0;  // 0: same as the student embedding size
    double clip_norm = 5.0;      // <= 0 disables clipping
    bool report_normalized = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ConfigError("trainer", "epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("trainer", "batch_size must be >= 1");
        if (!(adam.learning_rate > 0.0)) throw ConfigError("trainer", "learning rate must be positive");
        if (!(tau >= 0.0)) throw ConfigError("trainer", "tau must be >= 0");
        loss.validate();
    }
};

// Applies the settings each variant implies: only_hw drops alignment
// (lambda_fta = 0), only_fta drops horizon weighting (tau = 0), baseline
// drops both distillation terms.
inline TrainConfig resolve_variant(TrainConfig cfg) {
    switch (cfg.variant) {
        case KdVariant::only_hw: cfg.loss.lambda_fta = 0.0; break;
        case KdVariant::only_fta: cfg.tau = 0.0; break;
        case KdVariant::baseline:
            cfg.loss.lambda_kd = 0.0;
            cfg.loss.lambda_fta = 0.0;
            break;
        default: break;
    }
    return cfg;
}

inline nlohmann::ordered_json config_to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["variant"] = to_string(c.variant);
    j["seed"] = c.seed;
    j["student"] = {{"kind", to_string(c.student.kind)},   {"lookback", c.student.lookback},
                    {"horizon", c.student.horizon},        {"trend_kernel", c.student.trend_kernel},
                    {"model_dim", c.student.model_dim},    {"ff_dim", c.student.ff_dim}};
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["optimizer"] = {{"learning_rate", c.adam.learning_rate},
                      {"beta1", c.adam.beta1},
                      {"beta2", c.adam.beta2},
                      {"eps", c.adam.eps}};
    j["patience"] = c.patience;
    j["tau"] = c.tau;
    j["loss"] = {{"lambda_kd", c.loss.lambda_kd}, {"lambda_fta", c.loss.lambda_fta},
                 {"alpha", c.loss.alpha},         {"beta", c.loss.beta},
                 {"gamma", c.loss.gamma},         {"weight_supervised", c.loss.weight_supervised}};
    j["trend_projection_kernel"] = c.trend.kernel;
    j["fta_phi"] = to_string(c.fta_phi);
    j["fta_latent"] = c.fta_latent;
    j["clip_norm"] = c.clip_norm;
    j["report_normalized"] = c.report_normalized;
    return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    try {
        TrainConfig c;
        c.variant = parse_kd_variant(j.at("variant").get<std::string>());
        c.seed = j.at("seed").get<std::uint64_t>();
        const auto& s = j.at("student");
        c.student.kind = parse_student_kind(s.at("kind").get<std::string>());
        c.student.lookback = s.at("lookback").get<std::size_t>();
        c.student.horizon = s.at("horizon").get<std::size_t>();
        c.student.trend_kernel = s.at("trend_kernel").get<std::size_t>();
        c.student.model_dim = s.at("model_dim").get<std::size_t>();
        c.student.ff_dim = s.at("ff_dim").get<std::size_t>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        const auto& o = j.at("optimizer");
        c.adam = {o.at("learning_rate").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                  o.at("eps").get<double>()};
        c.patience = j.at("patience").get<std::size_t>();
        c.tau = j.at("tau").get<double>();
        const auto& l = j.at("loss");
        c.loss.lambda_kd = l.at("lambda_kd").get<double>();
        c.loss.lambda_fta = l.at("lambda_fta").get<double>();
        c.loss.alpha = l.at("alpha").get<double>();
        c.loss.beta = l.at("beta").get<double>();
        c.loss.gamma = l.at("gamma").get<double>();
        c.loss.weight_supervised = l.at("weight_supervised").get<bool>();
        c.trend.kernel = j.at("trend_projection_kernel").get<std::size_t>();
        c.fta_phi = parse_activation(j.at("fta_phi").get<std::string>());
        c.fta_latent = j.at("fta_latent").get<std::size_t>();
        c.clip_norm = j.at("clip_norm").get<double>();
        c.report_normalized = j.at("report_normalized").get<bool>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("trainer", std::string("malformed training config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Data bundle
// ---------------------------------------------------------------------------

struct DataConfig {
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t train_stride = 1;
    std::size_t eval_stride = 1;
    NormMode norm = NormMode::per_window;
};

struct PreparedSplit {
    NormalizedWindows norm;
    Array raw_targets;  // [N x T x C], series units
};

struct ExperimentData {
    DataConfig config;
    PreparedSplit train, val, test;
    WindowSet train_raw;  // unnormalized training windows (teacher traces are produced over these)
};

inline ExperimentData prepare_data(const SeriesDataset& ds, const DataConfig& cfg) {
    ExperimentData d;
    d.config = cfg;
    std::optional<ChannelStats> split_stats;
    if (cfg.norm == NormMode::per_split) split_stats = train_split_stats(ds);
    auto build = [&](Split s, std::size_t stride, WindowSet* raw_out) {
        WindowSet w = make_windows(ds, cfg.lookback, cfg.horizon, stride, s);
        PreparedSplit p{normalize(w, cfg.norm, split_stats ? &*split_stats : nullptr), w.targets};
        if (raw_out) *raw_out = std::move(w);
        return p;
    };
    d.train = build(Split::train, cfg.train_stride, &d.train_raw);
    d.val = build(Split::val, cfg.eval_stride, nullptr);
    d.test = build(Split::test, cfg.eval_stride, nullptr);
    return d;
}

// ---------------------------------------------------------------------------
// Run record
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    LossBreakdown breakdown;  // batch means
    double val_mse = 0.0;
};

struct RunRecord {
    std::string variant;
    nlohmann::ordered_json config;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
    MetricReport test;
    std::size_t parameter_count = 0;
    std::size_t fta_parameter_count = 0;
    double wall_seconds = 0.0;
};

inline nlohmann::ordered_json breakdown_to_json(const LossBreakdown& b) {
    auto term = [](const LossTerm& t) {
        return nlohmann::ordered_json{
            {"value", t.value}, {"coefficient", t.coefficient}, {"active", t.active}, {"contribution", t.contribution()}};
    };
    return {{"supervised", term(b.supervised)},
            {"kd", term(b.kd)},
            {"fta", term(b.fta)},
            {"variant", term(b.variant)},
            {"total", b.total}};
}

inline nlohmann::ordered_json metrics_to_json(const MetricReport& m) {
    return {{"mse", m.mse},
            {"mae", m.mae},
            {"denormalized", m.denormalized},
            {"mse_per_step", m.mse_per_step},
            {"mae_per_step", m.mae_per_step}};
}

// Timing is kept out unless asked for, so records of identical runs compare
// equal byte for byte.
inline nlohmann::ordered_json record_to_json(const RunRecord& r, bool include_timing = false) {
    nlohmann::ordered_json j;
    j["variant"] = r.variant;
    j["config"] = r.config;
    j["parameter_count"] = r.parameter_count;
    j["fta_parameter_count"] = r.fta_parameter_count;
    j["best_epoch"] = r.best_epoch;
    j["best_val_mse"] = r.best_val_mse;
    auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_mse", e.val_mse},
                          {"breakdown", breakdown_to_json(e.breakdown)}});
    }
    j["test"] = metrics_to_json(r.test);
    if (include_timing) j["wall_seconds"] = r.wall_seconds;
    return j;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
    StudentModel student;
    std::optional<FtaModule> fta;
    RunRecord record;
};

namespace detail {

// Rows `idx` of the leading axis.
inline Array gather_rows(const Array& a, std::span<const std::size_t> idx) {
    Shape shape = a.shape();
    const std::size_t row = a.size() / shape[0];
    shape[0] = idx.size();
    Array out(shape);
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * row), row,
                    dst.begin() + static_cast<std::ptrdiff_t>(i * row));
    }
    return out;
}

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

inline void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
    auto add_term = [](LossTerm& a, const LossTerm& t) {
        a.value += t.value;
        a.coefficient = t.coefficient;
        a.active = a.active || t.active;
    };
    add_term(acc.supervised, b.supervised);
    add_term(acc.kd, b.kd);
    add_term(acc.fta, b.fta);
    add_term(acc.variant, b.variant);
    acc.total += b.total;
}

inline void scale_breakdown(LossBreakdown& b, double f) {
    b.supervised.value *= f;
    b.kd.value *= f;
    b.fta.value *= f;
    b.variant.value *= f;
    b.total *= f;
}

}  // namespace detail

// Forecasts for every window, in chunks, without gradient tracking.
inline Array predict_windows(const StudentModel& m, const Array& inputs, std::size_t chunk = 256) {
    const std::size_t n = inputs.dim(0);
    Array out(Shape{n, m.horizon(), inputs.dim(2)});
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        idx.resize(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Array pred = m.predict(detail::gather_rows(inputs, idx));
        std::copy(pred.data().begin(), pred.data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(begin * m.horizon() * inputs.dim(2)));
    }
    return out;
}

// Test-split metrics, de-normalized unless the config asks otherwise.
inline MetricReport evaluate_split(const StudentModel& m, const PreparedSplit& split, bool normalized) {
    const Array pred = predict_windows(m, split.norm.windows.inputs);
    if (normalized) return evaluate_metrics(pred, split.norm.windows.targets, false);
    return evaluate_metrics(denormalize(pred, split.norm.stats), split.raw_targets, true);
}

inline bool uses_teacher(KdVariant v) { return v != KdVariant::baseline; }

inline TrainResult train(const TrainConfig& config_in, const ExperimentData& data, const TeacherTrace* trace) {
    const auto started = std::chrono::steady_clock::now();
    TrainConfig cfg = resolve_variant(config_in);
    cfg.student.lookback = data.config.lookback;
    cfg.student.horizon = data.config.horizon;
    cfg.validate();

    const auto& train_w = data.train.norm.windows;
    const std::size_t n_train = train_w.count();
    const std::size_t steps = data.config.horizon;
    if (n_train == 0) throw ContractError("trainer", "no training windows");

    const bool objective_needs_teacher = uses_teacher(cfg.variant);
    if (objective_needs_teacher && !trace) {
        throw ContractError("trainer", "kd_variant '" + to_string(cfg.variant) + "' requires a teacher trace");
    }
    std::optional<Array> teacher_pred;
    std::optional<Array> teacher_hidden;
    if (trace) {
        check_trace_alignment(trace->manifest, data.train_raw);
        teacher_pred = apply_norm(trace->predictions_array(), data.train.norm.stats);
        if (trace->has_hidden()) teacher_hidden = trace->hidden_array();
    }

    const bool weighted_objective = cfg.variant == KdVariant::distilts || cfg.variant == KdVariant::only_hw ||
                                    cfg.variant == KdVariant::only_fta || cfg.variant == KdVariant::baseline;
    const bool use_fta = weighted_objective && cfg.loss.lambda_fta > 0.0;
    if (use_fta && !teacher_hidden) {
        throw ConfigError("trainer", "alignment loss enabled (lambda_fta > 0) but the trace has no hidden states");
    }
    if (cfg.variant == KdVariant::t_kd) cfg.trend.validate(steps);

    auto init_rng = detail::stream_rng(cfg.seed, 1);
    auto fta_rng = detail::stream_rng(cfg.seed, 2);
    auto shuffle_rng = detail::stream_rng(cfg.seed, 3);

    TrainResult result;
    result.student = StudentModel::create(cfg.student, init_rng);
    if (use_fta) {
        const std::size_t d_s = result.student.hidden_dim();
        result.fta = FtaModule::init(d_s, cfg.fta_latent ? cfg.fta_latent : d_s, steps, trace->manifest.hidden_dim,
                                     cfg.fta_phi, fta_rng);
    }

    std::vector<Array*> params = result.student.parameters();
    if (result.fta) {
        for (Array* p : result.fta->parameters()) params.push_back(p);
    }
    AdamState opt_state = AdamState::for_params(params);
    const HorizonWeights weights = horizon_weights(cfg.tau, steps);
    const Objective objective = weighted_objective ? Objective::weighted_kd : Objective::variant;

    RunRecord& rec = result.record;
    rec.variant = to_string(cfg.variant);
    rec.config = config_to_json(cfg);
    rec.parameter_count = result.student.parameter_count();
    rec.fta_parameter_count = result.fta ? result.fta->parameter_count() : 0;

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    StudentModel best_student = result.student;
    std::optional<FtaModule> best_fta = result.fta;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::vector<Array> grads(params.size());

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochRecord er;
        er.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n_train; begin += cfg.batch_size) {
            const std::size_t end = std::min(n_train, begin + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const Array x = detail::gather_rows(train_w.inputs, idx);
            const Array y = detail::gather_rows(train_w.targets, idx);

            ParamBinder binder;
            TotalLoss total;
            try {
                StudentOutput out = result.student.forward(x, binder);
                LossComponents parts;
                parts.supervised = supervised_loss(out.forecast, y, cfg.loss.weight_supervised ? &weights : nullptr);
                if (objective_needs_teacher) {
                    const Array y_teacher = detail::gather_rows(*teacher_pred, idx);
                    switch (cfg.variant) {
                        case KdVariant::t_kd:
                            parts.variant_term = trend_distill_term(out.forecast, y_teacher, cfg.trend);
                            break;
                        case KdVariant::fd_kd:
                            parts.variant_term =
                                spectral_distill_term(out.forecast, y_teacher, cfg.loss.beta, cfg.loss.gamma);
                            break;
                        default:
                            if (cfg.loss.lambda_kd > 0.0) parts.kd = kd_loss(out.forecast, y_teacher, weights);
                            if (use_fta) {
                                const Array h_teacher = detail::gather_rows(*teacher_hidden, idx);
                                parts.fta = fta_loss(fta_forward(*result.fta, out.hidden, binder), h_teacher);
                            }
                            break;
                    }
                }
                total = total_loss(parts, cfg.loss, objective);
                backward(total.value);
            } catch (const NumericError& e) {
                throw DivergenceError("non-finite value at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batches) + ": " + e.what());
            }
            if (!std::isfinite(total.breakdown.total)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
            }
            for (std::size_t i = 0; i < params.size(); ++i) {
                grads[i] = binder.is_bound(*params[i]) ? binder.grad(*params[i]) : Array(params[i]->shape(), 0.0);
            }
            if (cfg.clip_norm > 0.0) clip_global_norm(grads, cfg.clip_norm);
            adaptive_update(params, grads, opt_state, cfg.adam);
            detail::accumulate(er.breakdown, total.breakdown);
            ++batches;
        }
        detail::scale_breakdown(er.breakdown, 1.0 / static_cast<double>(batches));
        er.train_loss = er.breakdown.total;

        const Array val_pred = predict_windows(result.student, data.val.norm.windows.inputs);
        er.val_mse = mse(val_pred, data.val.norm.windows.targets);
        if (!std::isfinite(er.val_mse)) throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
        rec.epochs.push_back(er);

        if (er.val_mse < best_val) {
            best_val = er.val_mse;
            rec.best_epoch = epoch;
            best_student = result.student;
            best_fta = result.fta;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    result.student = std::move(best_student);
    result.fta = std::move(best_fta);
    rec.best_val_mse = best_val;
    rec.test = evaluate_split(result.student, data.test, cfg.report_normalized);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Layout (little-endian):
//   "DTSCKPT\0"  u32 version  u64 json_len  json(config + kinds)
//   u32 tensor_count, then per tensor:
//   u32 name_len  name  u32 rank  u64 dims[rank]  f64 data[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'D', 'T', 'S', 'C', 'K', 'P', 'T', '\0'};

struct Checkpoint {
    TrainConfig config;
    StudentModel student;
    std::optional<FtaModule> fta;
};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto bits = std::bit_cast<U>(v);
    for (std::size_t b = 0; b < sizeof(T); ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

template <typename T>
T get_le(std::istream& in) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
        const int c = in.get();
        if (c == EOF) throw CheckpointError("checkpoint is truncated");
        bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * b);
    }
    return std::bit_cast<T>(bits);
}

inline std::vector<std::pair<std::string, Array*>> fta_named(FtaModule& f) {
    return {{"fta.w_s", &f.w_s}, {"fta.e", &f.e}, {"fta.w_out", &f.w_out}};
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config, const StudentModel& student,
                            const std::optional<FtaModule>& fta) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("trainer", "cannot write checkpoint '" + path.string() + "'");
    nlohmann::ordered_json meta;
    meta["config"] = config_to_json(config);
    meta["student_kind"] = to_string(student.kind());
    meta["student_lookback"] = student.lookback();
    meta["student_horizon"] = student.horizon();
    if (const auto* lin = student.as_linear()) meta["trend_kernel"] = lin->trend_kernel;
    meta["has_fta"] = fta.has_value();
    if (fta) meta["fta_phi"] = to_string(fta->phi);
    const std::string text = meta.dump();

    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));

    std::vector<std::pair<std::string, const Array*>> tensors;
    for (const auto& np : student.named_parameters()) tensors.push_back(np);
    FtaModule fta_copy;
    if (fta) {
        fta_copy = *fta;
        for (auto& [name, p] : detail::fta_named(fta_copy)) tensors.emplace_back(name, p);
    }
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, p] : tensors) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->rank()));
        for (std::size_t d : p->shape()) detail::put_le<std::uint64_t>(out, d);
        for (double v : p->data()) detail::put_le<double>(out, v);
    }
    if (!out) throw IoError("trainer", "failed writing checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("trainer", "cannot open checkpoint '" + path.string() + "'");
    char magic[8] = {};
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + 8, kCheckpointMagic)) throw CheckpointError("not a checkpoint file");
    const auto version = detail::get_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const auto json_len = detail::get_le<std::uint64_t>(in);
    if (json_len > (1u << 24)) throw CheckpointError("checkpoint header is implausibly large");
    std::string text(json_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(json_len));
    if (!in) throw CheckpointError("checkpoint is truncated");

    Checkpoint ck;
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(text);
        ck.config = config_from_json(meta.at("config"));
        StudentConfig sc = ck.config.student;
        sc.kind = parse_student_kind(meta.at("student_kind").get<std::string>());
        sc.lookback = meta.at("student_lookback").get<std::size_t>();
        sc.horizon = meta.at("student_horizon").get<std::size_t>();
        if (meta.contains("trend_kernel")) sc.trend_kernel = meta.at("trend_kernel").get<std::size_t>();
        std::mt19937_64 rng(0);
        ck.student = StudentModel::create(sc, rng);
        if (meta.at("has_fta").get<bool>()) {
            ck.fta = FtaModule{};
            ck.fta->phi = parse_activation(meta.at("fta_phi").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }

    auto targets = ck.student.named_parameters();
    if (ck.fta) {
        for (auto& np : detail::fta_named(*ck.fta)) targets.push_back(np);
    }
    const auto count = detail::get_le<std::uint32_t>(in);
    if (count != targets.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                              std::to_string(targets.size()));
    }
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = detail::get_le<std::uint32_t>(in);
        if (name_len > 4096) throw CheckpointError("tensor name is implausibly long");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rank = detail::get_le<std::uint32_t>(in);
        if (rank > 8) throw CheckpointError("tensor rank is implausibly large");
        Shape shape(rank);
        for (auto& d : shape) d = detail::get_le<std::uint64_t>(in);
        auto it = std::find_if(targets.begin(), targets.end(), [&](const auto& np) { return np.first == name; });
        if (it == targets.end()) throw CheckpointError("unexpected tensor '" + name + "'");
        const bool is_fta = name.rfind("fta.", 0) == 0;
        if (!is_fta && it->second->shape() != shape) {
            throw CheckpointError("tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                                  shape_str(it->second->shape()));
        }
        if (shape_size(shape) > (std::size_t{1} << 32)) throw CheckpointError("tensor is implausibly large");
        Array a(shape);
        for (double& v : a.data()) v = detail::get_le<double>(in);
        *it->second = std::move(a);
    }
    if (ck.fta) ck.fta->validate();
    return ck;
}

}  // namespace distilts
