#pragma once

// INI run configuration with typed sections and `section.key=value`
// overrides. Every key is registered once, so parsing, overriding and the
// resolved-config dump stay in step.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "distilts/ablation.hpp"
#include "distilts/data.hpp"
#include "distilts/teacher.hpp"
#include "distilts/trainer.hpp"

namespace distilts {

struct ProjectConfig {
    // [data]
    std::string csv;        // empty: generate the seesaw task
    std::string clean_csv;  // optional noise-free companion of csv
    bool csv_header = true;
    DataConfig data;
    SplitConfig split;
    // [synthetic]
    SeesawConfig seesaw;
    // [teacher]
    std::string trace;  // empty: synthesize an oracle trace in memory when one is needed
    OracleConfig oracle;
    // [model] [train] [loss]
    std::string model_preset = "desk";
    TrainConfig train;
    std::string run_name;  // empty: <variant>_seed<seed>
    // [ablate]
    std::vector<KdVariant> variants = {KdVariant::distilts, KdVariant::only_hw, KdVariant::only_fta,
                                       KdVariant::baseline};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::vector<std::size_t> horizons;  // empty: data.horizon only
    std::size_t jobs = 1;
    // [output]
    std::string output_dir = "out";

    bool lookback_set = false;
    bool horizon_set = false;

    std::string resolved_run_name() const {
        return run_name.empty() ? to_string(train.variant) + "_seed" + std::to_string(train.seed) : run_name;
    }
};

namespace detail {

inline std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trimmed(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto s = trimmed(v);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        throw ConfigError("evalcli", "key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
    const auto s = trimmed(v);
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    double out = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty() || !std::isfinite(out)) {
        throw ConfigError("evalcli", "key '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

inline bool parse_flag(const std::string& key, const std::string& v) {
    const auto s = trimmed(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("evalcli", "key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::string format_real(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

struct KeySpec {
    std::function<void(ProjectConfig&, const std::string&)> set;
    std::function<std::string(const ProjectConfig&)> get;
};

inline const std::map<std::string, KeySpec>& key_registry() {
    static const std::map<std::string, KeySpec> reg = [] {
        std::map<std::string, KeySpec> r;
        auto size_key = [&r](const std::string& k, auto field) {
            r[k] = {[k, field](ProjectConfig& c, const std::string& v) { field(c) = parse_uint(k, v); },
                    [field](const ProjectConfig& c) {
                        return std::to_string(field(c));
                    }};
        };
        auto real_key = [&r](const std::string& k, auto field) {
            r[k] = {[k, field](ProjectConfig& c, const std::string& v) { field(c) = parse_real(k, v); },
                    [field](const ProjectConfig& c) { return format_real(field(c)); }};
        };
        auto flag_key = [&r](const std::string& k, auto field) {
            r[k] = {[k, field](ProjectConfig& c, const std::string& v) { field(c) = parse_flag(k, v); },
                    [field](const ProjectConfig& c) {
                        return std::string(field(c) ? "true" : "false");
                    }};
        };
        auto text_key = [&r](const std::string& k, auto field) {
            r[k] = {[field](ProjectConfig& c, const std::string& v) { field(c) = trimmed(v); },
                    [field](const ProjectConfig& c) { return field(c); }};
        };
        auto enum_key = [&r](const std::string& k, auto set, auto get) { r[k] = {set, get}; };

        // [data]
        text_key("data.csv", [](auto& c) -> auto& { return c.csv; });
        text_key("data.clean_csv", [](auto& c) -> auto& { return c.clean_csv; });
        flag_key("data.header", [](auto& c) -> auto& { return c.csv_header; });
        r["data.lookback"] = {[](ProjectConfig& c, const std::string& v) {
                                  c.data.lookback = parse_uint("data.lookback", v);
                                  c.lookback_set = true;
                              },
                              [](const ProjectConfig& c) { return std::to_string(c.data.lookback); }};
        r["data.horizon"] = {[](ProjectConfig& c, const std::string& v) {
                                 c.data.horizon = parse_uint("data.horizon", v);
                                 c.horizon_set = true;
                             },
                             [](const ProjectConfig& c) { return std::to_string(c.data.horizon); }};
        size_key("data.train_stride", [](auto& c) -> auto& { return c.data.train_stride; });
        size_key("data.eval_stride", [](auto& c) -> auto& { return c.data.eval_stride; });
        enum_key(
            "data.normalization",
            [](ProjectConfig& c, const std::string& v) { c.data.norm = parse_norm_mode(trimmed(v)); },
            [](const ProjectConfig& c) { return to_string(c.data.norm); });
        enum_key(
            "data.split",
            [](ProjectConfig& c, const std::string& v) { c.split.preset = parse_split_preset(trimmed(v)); },
            [](const ProjectConfig& c) {
                switch (c.split.preset) {
                    case SplitPreset::ratio: return std::string("ratio");
                    case SplitPreset::ett_hourly: return std::string("ett_hourly");
                    case SplitPreset::ett_minute: return std::string("ett_minute");
                }
                return std::string("ratio");
            });
        real_key("data.train_ratio", [](auto& c) -> auto& { return c.split.train; });
        real_key("data.val_ratio", [](auto& c) -> auto& { return c.split.val; });
        real_key("data.test_ratio", [](auto& c) -> auto& { return c.split.test; });

        // [synthetic]
        size_key("synthetic.channels", [](auto& c) -> auto& { return c.seesaw.channels; });
        size_key("synthetic.length", [](auto& c) -> auto& { return c.seesaw.length; });
        real_key("synthetic.easy_amp", [](auto& c) -> auto& { return c.seesaw.easy_amp; });
        real_key("synthetic.hard_snr", [](auto& c) -> auto& { return c.seesaw.hard_snr; });
        real_key("synthetic.rho", [](auto& c) -> auto& { return c.seesaw.rho; });
        size_key("synthetic.seed", [](auto& c) -> auto& { return c.seesaw.seed; });

        // [teacher]
        text_key("teacher.trace", [](auto& c) -> auto& { return c.trace; });
        real_key("teacher.noise_sigma", [](auto& c) -> auto& { return c.oracle.noise_sigma; });
        size_key("teacher.hidden_dim", [](auto& c) -> auto& { return c.oracle.hidden_dim; });
        size_key("teacher.seed", [](auto& c) -> auto& { return c.oracle.seed; });
        text_key("teacher.name", [](auto& c) -> auto& { return c.oracle.name; });

        // [model]
        enum_key(
            "model.kind",
            [](ProjectConfig& c, const std::string& v) { c.train.student.kind = parse_student_kind(trimmed(v)); },
            [](const ProjectConfig& c) { return to_string(c.train.student.kind); });
        enum_key(
            "model.preset",
            [](ProjectConfig& c, const std::string& v) {
                const auto s = trimmed(v);
                if (s != "desk" && s != "paper") throw ConfigError("evalcli", "model.preset must be desk or paper");
                c.model_preset = s;
            },
            [](const ProjectConfig& c) { return c.model_preset; });
        size_key("model.trend_kernel", [](auto& c) -> auto& { return c.train.student.trend_kernel; });
        size_key("model.model_dim", [](auto& c) -> auto& { return c.train.student.model_dim; });
        size_key("model.ff_dim", [](auto& c) -> auto& { return c.train.student.ff_dim; });

        // [train]
        enum_key(
            "train.variant",
            [](ProjectConfig& c, const std::string& v) { c.train.variant = parse_kd_variant(trimmed(v)); },
            [](const ProjectConfig& c) { return to_string(c.train.variant); });
        size_key("train.epochs", [](auto& c) -> auto& { return c.train.epochs; });
        size_key("train.batch_size", [](auto& c) -> auto& { return c.train.batch_size; });
        size_key("train.patience", [](auto& c) -> auto& { return c.train.patience; });
        size_key("train.seed", [](auto& c) -> auto& { return c.train.seed; });
        real_key("train.learning_rate", [](auto& c) -> auto& { return c.train.adam.learning_rate; });
        real_key("train.beta1", [](auto& c) -> auto& { return c.train.adam.beta1; });
        real_key("train.beta2", [](auto& c) -> auto& { return c.train.adam.beta2; });
        real_key("train.eps", [](auto& c) -> auto& { return c.train.adam.eps; });
        real_key("train.clip_norm", [](auto& c) -> auto& { return c.train.clip_norm; });
        flag_key("train.report_normalized", [](auto& c) -> auto& { return c.train.report_normalized; });
        text_key("train.run_name", [](auto& c) -> auto& { return c.run_name; });

        // [loss]
        real_key("loss.tau", [](auto& c) -> auto& { return c.train.tau; });
        real_key("loss.lambda_kd", [](auto& c) -> auto& { return c.train.loss.lambda_kd; });
        real_key("loss.lambda_fta", [](auto& c) -> auto& { return c.train.loss.lambda_fta; });
        real_key("loss.alpha", [](auto& c) -> auto& { return c.train.loss.alpha; });
        real_key("loss.beta", [](auto& c) -> auto& { return c.train.loss.beta; });
        real_key("loss.gamma", [](auto& c) -> auto& { return c.train.loss.gamma; });
        flag_key("loss.weight_supervised", [](auto& c) -> auto& { return c.train.loss.weight_supervised; });
        size_key("loss.trend_kernel", [](auto& c) -> auto& { return c.train.trend.kernel; });
        enum_key(
            "loss.fta_phi",
            [](ProjectConfig& c, const std::string& v) { c.train.fta_phi = parse_activation(trimmed(v)); },
            [](const ProjectConfig& c) { return to_string(c.train.fta_phi); });
        size_key("loss.fta_latent", [](auto& c) -> auto& { return c.train.fta_latent; });

        // [ablate]
        enum_key(
            "ablate.variants",
            [](ProjectConfig& c, const std::string& v) {
                c.variants.clear();
                for (const auto& s : split_list(v)) c.variants.push_back(parse_kd_variant(s));
            },
            [](const ProjectConfig& c) {
                std::string s;
                for (auto v : c.variants) s += (s.empty() ? "" : ",") + to_string(v);
                return s;
            });
        enum_key(
            "ablate.seeds",
            [](ProjectConfig& c, const std::string& v) {
                c.seeds.clear();
                for (const auto& s : split_list(v)) c.seeds.push_back(parse_uint("ablate.seeds", s));
            },
            [](const ProjectConfig& c) {
                std::string s;
                for (auto v : c.seeds) s += (s.empty() ? "" : ",") + std::to_string(v);
                return s;
            });
        enum_key(
            "ablate.horizons",
            [](ProjectConfig& c, const std::string& v) {
                c.horizons.clear();
                for (const auto& s : split_list(v)) c.horizons.push_back(parse_uint("ablate.horizons", s));
            },
            [](const ProjectConfig& c) {
                std::string s;
                for (auto v : c.horizons) s += (s.empty() ? "" : ",") + std::to_string(v);
                return s;
            });
        size_key("ablate.jobs", [](auto& c) -> auto& { return c.jobs; });

        // [output]
        text_key("output.dir", [](auto& c) -> auto& { return c.output_dir; });
        return r;
    }();
    return reg;
}

}  // namespace detail

// Applies one `section.key=value` assignment.
inline void apply_setting(ProjectConfig& cfg, const std::string& key, const std::string& value) {
    const auto& reg = detail::key_registry();
    auto it = reg.find(key);
    if (it == reg.end()) throw ConfigError("evalcli", "unknown config key '" + key + "'");
    it->second.set(cfg, value);
}

inline void apply_override(ProjectConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("evalcli", "override '" + assignment + "' is not of the form section.key=value");
    }
    apply_setting(cfg, detail::trimmed(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

// Final consistency pass: lookback and horizon are mandatory, presets are
// expanded and the synthetic task follows the data extents.
inline void finalize_config(ProjectConfig& cfg) {
    if (!cfg.lookback_set) throw ConfigError("evalcli", "data.lookback must be set explicitly");
    if (!cfg.horizon_set) throw ConfigError("evalcli", "data.horizon must be set explicitly");
    if (cfg.model_preset == "paper") {
        const auto paper = StudentConfig::paper_scale(cfg.train.student.kind, cfg.data.lookback, cfg.data.horizon);
        cfg.train.student.model_dim = paper.model_dim;
        cfg.train.student.ff_dim = paper.ff_dim;
    }
    cfg.train.student.lookback = cfg.data.lookback;
    cfg.train.student.horizon = cfg.data.horizon;
    cfg.seesaw.lookback = cfg.data.lookback;
    cfg.seesaw.horizon = cfg.data.horizon;
    cfg.seesaw.split = cfg.split;
    cfg.train.validate();
    if (cfg.seeds.empty()) throw ConfigError("evalcli", "ablate.seeds must list at least one seed");
}

inline ProjectConfig parse_config(std::istream& in, const std::vector<std::string>& overrides = {}) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("evalcli", std::string("malformed config: ") + e.what());
    }
    ProjectConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ConfigError("evalcli", "key '" + section + "' must sit inside a [section]");
        }
        for (const auto& [key, value] : body) apply_setting(cfg, section + "." + key, value.data());
    }
    for (const auto& o : overrides) apply_override(cfg, o);
    finalize_config(cfg);
    return cfg;
}

inline ProjectConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("evalcli", "cannot read config '" + path.string() + "'");
    return parse_config(in, overrides);
}

// Every registered key with its resolved value, grouped by section.
inline nlohmann::ordered_json config_dump(const ProjectConfig& cfg) {
    nlohmann::ordered_json j;
    for (const auto& [key, spec] : detail::key_registry()) {
        const auto dot = key.find('.');
        j[key.substr(0, dot)][key.substr(dot + 1)] = spec.get(cfg);
    }
    return j;
}

// ---------------------------------------------------------------------------
// Dataset and teacher resolution
// ---------------------------------------------------------------------------

// The configured series: a CSV file (plus optional clean companion), or the
// seesaw task generated for the given horizon.
inline SeriesDataset resolve_dataset(const ProjectConfig& cfg, std::size_t horizon) {
    if (!cfg.csv.empty()) {
        CsvOptions opts;
        opts.header = cfg.csv_header;
        opts.split = cfg.split;
        SeriesDataset ds = load_csv(cfg.csv, opts);
        if (!cfg.clean_csv.empty()) {
            SeriesDataset clean = load_csv(cfg.clean_csv, opts);
            if (clean.values.shape() != ds.values.shape()) {
                throw DataError("clean companion '" + cfg.clean_csv + "' does not match '" + cfg.csv + "'");
            }
            ds.clean = clean.values;
        }
        return ds;
    }
    SeesawConfig s = cfg.seesaw;
    s.horizon = horizon;
    return synth_seesaw(s);
}

inline SeriesDataset resolve_dataset(const ProjectConfig& cfg) { return resolve_dataset(cfg, cfg.data.horizon); }

inline DataConfig data_config_for(const ProjectConfig& cfg, std::size_t horizon) {
    DataConfig d = cfg.data;
    d.horizon = horizon;
    return d;
}

}  // namespace distilts
