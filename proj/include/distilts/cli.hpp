#pragma once

// Command-line surface. Output layout under the configured directory:
//   data/         generated series (gen-synth)
//   traces/<n>/   teacher traces (gen-trace)
//   checkpoints/  trained students (train)
//   reports/      run records, evaluations, ablation tables

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "distilts/ablation.hpp"
#include "distilts/config.hpp"
#include "distilts/gradient_suite.hpp"
#include "distilts/teacher.hpp"
#include "distilts/trainer.hpp"

namespace distilts {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

namespace cli_detail {

namespace fs = std::filesystem;

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("evalcli", "cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("evalcli", "failed writing '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config_path, "INI config file")->required();
        app->add_option("-s,--set", overrides, "override, section.key=value (repeatable)");
        app->add_option("-o,--out", out_dir, "output directory (overrides output.dir)");
    }

    ProjectConfig load() const {
        ProjectConfig cfg = load_config(config_path, overrides);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        return cfg;
    }
};

inline fs::path default_trace_dir(const ProjectConfig& cfg) { return fs::path(cfg.output_dir) / "traces" / "oracle"; }

inline fs::path checkpoint_path(const ProjectConfig& cfg) {
    return fs::path(cfg.output_dir) / "checkpoints" / (cfg.resolved_run_name() + ".ckpt");
}

// The trace a run trains against: the configured directory, or an oracle
// trace synthesized over the training windows when none is configured.
inline std::optional<TeacherTrace> resolve_trace(const ProjectConfig& cfg, const ExperimentData& data,
                                                 bool required, std::ostream& log) {
    if (!cfg.trace.empty()) {
        std::vector<std::string> warnings;
        TeacherTrace t = read_trace(cfg.trace, &warnings);
        for (const auto& w : warnings) log << "warning: " << w << '\n';
        return t;
    }
    if (!required) return std::nullopt;
    log << "note: teacher.trace not set, using an in-memory oracle trace (sigma=" << cfg.oracle.noise_sigma << ")\n";
    return synthetic_oracle(data.train_raw, cfg.oracle);
}

inline int cmd_gen_synth(const Common& common, std::ostream& out) {
    ProjectConfig cfg = common.load();
    if (!cfg.csv.empty()) throw ConfigError("evalcli", "gen-synth generates data; unset data.csv");
    SeriesDataset ds = resolve_dataset(cfg);
    const fs::path dir = fs::path(cfg.output_dir) / "data";
    fs::create_directories(dir);
    write_csv(ds, dir / "seesaw.csv");
    write_csv(ds, dir / "seesaw_clean.csv", &*ds.clean);
    out << "wrote " << (dir / "seesaw.csv").string() << " (" << ds.length() << " rows, " << ds.channels()
        << " channels) and its clean companion\n";
    return kExitOk;
}

inline int cmd_gen_trace(const Common& common, const std::string& trace_out, std::ostream& out) {
    ProjectConfig cfg = common.load();
    SeriesDataset ds = resolve_dataset(cfg);
    WindowSet w = make_windows(ds, cfg.data.lookback, cfg.data.horizon, cfg.data.train_stride, Split::train);
    TeacherTrace t = synthetic_oracle(w, cfg.oracle);
    const fs::path dir = trace_out.empty() ? default_trace_dir(cfg) : fs::path(trace_out);
    const TraceManifest written = write_trace(t, dir);
    out << "wrote trace " << dir.string() << " (" << t.manifest.window_count << " windows, predictions crc "
        << written.predictions.crc32 << ")\n";
    return kExitOk;
}

inline int cmd_train(const Common& common, std::ostream& out) {
    ProjectConfig cfg = common.load();
    SeriesDataset ds = resolve_dataset(cfg);
    ExperimentData data = prepare_data(ds, cfg.data);
    auto trace = resolve_trace(cfg, data, uses_teacher(cfg.train.variant), out);
    TrainResult r = train(cfg.train, data, trace ? &*trace : nullptr);

    const fs::path reports = fs::path(cfg.output_dir) / "reports";
    const std::string name = cfg.resolved_run_name();
    nlohmann::ordered_json rec = record_to_json(r.record);
    rec["resolved_config"] = config_dump(cfg);
    write_json(reports / (name + ".run_record.json"), rec);
    write_json(reports / (name + ".timing.json"), {{"wall_seconds", r.record.wall_seconds}});
    save_checkpoint(checkpoint_path(cfg), resolve_variant(cfg.train), r.student, r.fta);
    out << "trained " << name << ": " << r.record.epochs.size() << " epochs, best epoch " << r.record.best_epoch
        << ", test mse " << r.record.test.mse << ", mae " << r.record.test.mae << '\n';
    return kExitOk;
}

inline int cmd_eval(const Common& common, const std::string& ckpt_arg, std::ostream& out) {
    ProjectConfig cfg = common.load();
    const fs::path ckpt = ckpt_arg.empty() ? checkpoint_path(cfg) : fs::path(ckpt_arg);
    Checkpoint ck = load_checkpoint(ckpt);
    if (ck.student.lookback() != cfg.data.lookback || ck.student.horizon() != cfg.data.horizon) {
        throw ContractError("evalcli", "checkpoint extents (L=" + std::to_string(ck.student.lookback()) +
                                           ", T=" + std::to_string(ck.student.horizon()) +
                                           ") differ from the config");
    }
    SeriesDataset ds = resolve_dataset(cfg);
    ExperimentData data = prepare_data(ds, cfg.data);
    const MetricReport m = evaluate_split(ck.student, data.test, cfg.train.report_normalized);

    nlohmann::ordered_json j;
    j["checkpoint"] = ckpt.filename().string();
    j["parameter_count"] = ck.student.parameter_count();
    j["test"] = metrics_to_json(m);
    const fs::path reports = fs::path(cfg.output_dir) / "reports";
    const std::string stem = ckpt.stem().string();
    write_json(reports / (stem + ".eval.json"), j);
    std::ostringstream csv;
    csv << std::setprecision(17) << "step,mse,mae\n";
    for (std::size_t t = 0; t < m.mse_per_step.size(); ++t) {
        csv << t << ',' << m.mse_per_step[t] << ',' << m.mae_per_step[t] << '\n';
    }
    write_text(reports / (stem + ".per_step.csv"), csv.str());
    out << "test mse " << m.mse << ", mae " << m.mae << (m.denormalized ? " (series units)" : " (normalized)")
        << '\n';
    return kExitOk;
}

inline int cmd_ablate(const Common& common, std::ostream& out) {
    ProjectConfig cfg = common.load();
    std::vector<std::size_t> horizons = cfg.horizons.empty() ? std::vector<std::size_t>{cfg.data.horizon} : cfg.horizons;
    if (!cfg.trace.empty() && horizons.size() > 1) {
        throw ConfigError("evalcli", "a fixed teacher.trace covers one horizon; list a single horizon");
    }
    bool needs_teacher = false;
    for (auto v : cfg.variants) needs_teacher = needs_teacher || uses_teacher(v);

    std::vector<ExperimentData> datas;
    std::vector<std::optional<TeacherTrace>> traces;
    datas.reserve(horizons.size());
    traces.reserve(horizons.size());
    for (std::size_t h : horizons) {
        SeriesDataset ds = resolve_dataset(cfg, h);
        datas.push_back(prepare_data(ds, data_config_for(cfg, h)));
        traces.push_back(resolve_trace(cfg, datas.back(), needs_teacher, out));
    }
    std::vector<AblationInput> inputs;
    for (std::size_t i = 0; i < datas.size(); ++i) {
        inputs.push_back({&datas[i], traces[i] ? &*traces[i] : nullptr});
    }
    const AblationTable table = run_ablation(cfg.train, inputs, cfg.variants, cfg.seeds, cfg.jobs);

    const fs::path reports = fs::path(cfg.output_dir) / "reports";
    write_text(reports / "ablation.csv", table.to_csv());
    write_text(reports / "ablation_runs.csv", table.cells_csv());
    write_text(reports / "ablation.txt", table.to_text());
    write_json(reports / "ablation_config.json", config_dump(cfg));
    out << table.to_text();
    return kExitOk;
}

inline int cmd_grad_check(std::size_t instances, std::uint64_t seed, std::ostream& out) {
    GradSuiteOptions opt;
    opt.instances = instances;
    opt.seed = seed;
    bool all = true;
    for (const auto& e : run_gradient_suite(opt)) {
        out << std::left << std::setw(22) << e.name << " max rel err " << std::scientific << std::setprecision(3)
            << e.max_rel_error << std::defaultfloat << "  " << (e.passed ? "ok" : "FAIL") << '\n';
        all = all && e.passed;
    }
    return all ? kExitOk : kExitFailure;
}

inline int cmd_trace_validate(const std::string& dir, std::ostream& out, std::ostream& err) {
    const TraceValidation v = validate_trace(dir);
    for (const auto& w : v.warnings) out << "warning: " << w << '\n';
    if (!v.ok) {
        err << "error [" << v.error_class << "]: " << v.message << '\n';
        return kExitFailure;
    }
    out << "ok " << dir << (v.warnings.empty() ? "" : " (with warnings)") << '\n';
    return kExitOk;
}

}  // namespace cli_detail

// Entry point shared by the executable and the tests. Diagnostics go to
// `err` as a single line "error [module/kind]: message".
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using namespace cli_detail;
    CLI::App app{"distilts: distillation engine for time-series forecasting"};
    app.require_subcommand(1);

    Common c_synth, c_trace, c_train, c_eval, c_ablate;
    auto* synth = app.add_subcommand("gen-synth", "generate the seesaw task as CSV");
    c_synth.attach(synth);
    auto* gtrace = app.add_subcommand("gen-trace", "write a synthetic oracle teacher trace");
    c_trace.attach(gtrace);
    std::string trace_out;
    gtrace->add_option("--trace-out", trace_out, "trace directory (default <out>/traces/oracle)");
    auto* trn = app.add_subcommand("train", "train one student");
    c_train.attach(trn);
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    c_eval.attach(ev);
    std::string ckpt;
    ev->add_option("--checkpoint", ckpt, "checkpoint file (default from the run name)");
    auto* abl = app.add_subcommand("ablate", "run the variant/seed ablation harness");
    c_ablate.attach(abl);
    auto* gc = app.add_subcommand("grad-check", "run the finite-difference gradient suite");
    std::size_t instances = 5;
    std::uint64_t gc_seed = 7;
    gc->add_option("--instances", instances, "random instances per check")->check(CLI::PositiveNumber);
    gc->add_option("--seed", gc_seed, "seed for the random instances");
    auto* tv = app.add_subcommand("trace-validate", "validate a teacher trace directory");
    std::string trace_dir;
    tv->add_option("dir", trace_dir, "trace directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error [evalcli/usage]: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_gen_synth(c_synth, out);
        if (*gtrace) return cmd_gen_trace(c_trace, trace_out, out);
        if (*trn) return cmd_train(c_train, out);
        if (*ev) return cmd_eval(c_eval, ckpt, out);
        if (*abl) return cmd_ablate(c_ablate, out);
        if (*gc) return cmd_grad_check(instances, gc_seed, out);
        if (*tv) return cmd_trace_validate(trace_dir, out, err);
    } catch (const ConfigError& e) {
        err << "error [" << e.diagnostic_class() << "]: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error [" << e.diagnostic_class() << "]: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error [evalcli/internal]: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace distilts
