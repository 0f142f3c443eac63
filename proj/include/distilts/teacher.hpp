#pragma once

// Teacher traces: recorded teacher forecasts and point-wise hidden states over
// a fixed, ordered set of dataset windows.
//
// On disk a trace is a directory:
//
//   manifest.json     UTF-8 JSON, see TraceManifest
//   predictions.f32   little-endian float32, row-major [window][t][c]
//   hidden.f32        little-endian float32, row-major [window][c][t][h]
//                     (absent when hidden_dim == 0)
//
// Each blob entry in the manifest records its byte length and CRC-32
// (IEEE 802.3 polynomial, as zlib.crc32) as 8 lowercase hex digits.

#include <algorithm>
#include <bit>
#include <boost/crc.hpp>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "distilts/array.hpp"
#include "distilts/data.hpp"
#include "distilts/error.hpp"

namespace distilts {

inline constexpr int kTraceSchemaVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kPredictionsFile = "predictions.f32";
inline constexpr const char* kHiddenFile = "hidden.f32";

struct BlobInfo {
    std::string file;
    std::uint64_t bytes = 0;
    std::string crc32;  // 8 lowercase hex digits
};

struct TraceManifest {
    int schema_version = kTraceSchemaVersion;
    std::string teacher_name;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t channels = 0;
    std::size_t hidden_dim = 0;  // 0: no hidden blob
    std::string hidden_layer_tag = "last";
    std::size_t window_count = 0;
    std::string normalization_note;
    // Window alignment with the dataset split the trace was produced from.
    std::string split = "train";
    std::size_t stride = 1;
    std::size_t first_start = 0;
    BlobInfo predictions;
    std::optional<BlobInfo> hidden;
};

struct TeacherTrace {
    TraceManifest manifest;
    std::vector<float> predictions;  // [N x T x C]
    std::vector<float> hidden;       // [N x C x T x d_T]

    Array predictions_array() const {
        const auto& m = manifest;
        return Array(Shape{m.window_count, m.horizon, m.channels},
                     std::vector<double>(predictions.begin(), predictions.end()));
    }

    Array hidden_array() const {
        const auto& m = manifest;
        return Array(Shape{m.window_count, m.channels, m.horizon, m.hidden_dim},
                     std::vector<double>(hidden.begin(), hidden.end()));
    }

    bool has_hidden() const { return manifest.hidden_dim > 0; }
};

inline std::string crc32_hex(const void* data, std::size_t bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(data, bytes);
    std::ostringstream os;
    os << std::hex << std::setw(8) << std::setfill('0') << crc.checksum();
    return os.str();
}

namespace detail {

inline std::vector<char> encode_f32_le(const std::vector<float>& values) {
    std::vector<char> out(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) out[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xffu);
    }
    return out;
}

inline std::vector<float> decode_f32_le(const std::vector<char>& bytes) {
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + static_cast<std::size_t>(b)]))
                    << (8 * b);
        }
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

inline std::vector<char> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw TraceMissingBlobError("cannot open '" + p.string() + "'");
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("teacher", "cannot write '" + p.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("teacher", "failed writing '" + p.string() + "'");
}

inline nlohmann::ordered_json blob_to_json(const BlobInfo& b, const char* layout) {
    return {{"file", b.file}, {"bytes", b.bytes}, {"crc32", b.crc32}, {"layout", layout}};
}

}  // namespace detail

inline nlohmann::ordered_json manifest_to_json(const TraceManifest& m) {
    nlohmann::ordered_json j;
    j["schema_version"] = m.schema_version;
    j["teacher_name"] = m.teacher_name;
    j["lookback"] = m.lookback;
    j["horizon"] = m.horizon;
    j["channels"] = m.channels;
    j["hidden_dim"] = m.hidden_dim;
    j["hidden_layer_tag"] = m.hidden_layer_tag;
    j["window_count"] = m.window_count;
    j["normalization_note"] = m.normalization_note;
    j["split"] = m.split;
    j["stride"] = m.stride;
    j["first_start"] = m.first_start;
    j["blobs"]["predictions"] = detail::blob_to_json(m.predictions, "window,t,c");
    if (m.hidden) j["blobs"]["hidden"] = detail::blob_to_json(*m.hidden, "window,c,t,h");
    return j;
}

// Parses a manifest; unknown keys are reported through `warnings`.
inline TraceManifest manifest_from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr) {
    static const std::vector<std::string> known = {
        "schema_version", "teacher_name", "lookback",           "horizon", "channels", "hidden_dim",
        "hidden_layer_tag", "window_count", "normalization_note", "split",   "stride",   "first_start",
        "blobs"};
    try {
        if (!j.is_object()) throw TraceValidationError("manifest is not a JSON object");
        TraceManifest m;
        m.schema_version = j.at("schema_version").get<int>();
        if (m.schema_version != kTraceSchemaVersion) {
            throw TraceValidationError("unsupported trace schema_version " + std::to_string(m.schema_version));
        }
        m.teacher_name = j.at("teacher_name").get<std::string>();
        m.lookback = j.at("lookback").get<std::size_t>();
        m.horizon = j.at("horizon").get<std::size_t>();
        m.channels = j.at("channels").get<std::size_t>();
        m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        m.hidden_layer_tag = j.value("hidden_layer_tag", std::string{});
        m.window_count = j.at("window_count").get<std::size_t>();
        m.normalization_note = j.value("normalization_note", std::string{});
        m.split = j.value("split", std::string{"train"});
        m.stride = j.value("stride", std::size_t{1});
        m.first_start = j.value("first_start", std::size_t{0});
        const auto& blobs = j.at("blobs");
        auto read_blob = [](const nlohmann::json& b) {
            return BlobInfo{b.at("file").get<std::string>(), b.at("bytes").get<std::uint64_t>(),
                            b.at("crc32").get<std::string>()};
        };
        m.predictions = read_blob(blobs.at("predictions"));
        if (blobs.contains("hidden")) m.hidden = read_blob(blobs.at("hidden"));
        if (warnings) {
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
                    warnings->push_back("unknown manifest key '" + it.key() + "'");
                }
            }
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw TraceValidationError(std::string("malformed manifest: ") + e.what());
    }
}

// Structural checks that do not need the blob bytes.
inline void validate_manifest(const TraceManifest& m) {
    if (m.lookback == 0 || m.horizon == 0 || m.channels == 0 || m.window_count == 0) {
        throw TraceValidationError("trace extents (lookback, horizon, channels, window_count) must all be >= 1");
    }
    if (m.stride == 0) throw TraceValidationError("trace stride must be >= 1");
    if ((m.hidden_dim > 0) != m.hidden.has_value()) {
        throw TraceValidationError("hidden blob must be present exactly when hidden_dim > 0");
    }
}

inline void validate_trace_payload(const TeacherTrace& t) {
    validate_manifest(t.manifest);
    const auto& m = t.manifest;
    const std::size_t pred_n = m.window_count * m.horizon * m.channels;
    if (t.predictions.size() != pred_n) {
        throw TraceExtentError("predictions hold " + std::to_string(t.predictions.size()) + " values, manifest implies " +
                               std::to_string(pred_n));
    }
    const std::size_t hid_n = m.window_count * m.channels * m.horizon * m.hidden_dim;
    if (t.hidden.size() != hid_n) {
        throw TraceExtentError("hidden states hold " + std::to_string(t.hidden.size()) + " values, manifest implies " +
                               std::to_string(hid_n));
    }
    for (float v : t.predictions) {
        if (!std::isfinite(v)) throw TraceValidationError("teacher predictions contain non-finite values");
    }
    for (float v : t.hidden) {
        if (!std::isfinite(v)) throw TraceValidationError("teacher hidden states contain non-finite values");
    }
}

// Validates, then writes blobs and manifest. Blob sizes and checksums in the
// manifest are recomputed from the payload.
// Returns the manifest as written, with blob sizes and checksums filled in.
inline TraceManifest write_trace(const TeacherTrace& trace, const std::filesystem::path& dir) {
    TeacherTrace t = trace;
    t.manifest.predictions = {kPredictionsFile, 0, ""};
    if (t.manifest.hidden_dim > 0) {
        t.manifest.hidden = BlobInfo{kHiddenFile, 0, ""};
    } else {
        t.manifest.hidden.reset();
    }
    validate_trace_payload(t);

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("teacher", "cannot create '" + dir.string() + "': " + ec.message());

    const auto pred_bytes = detail::encode_f32_le(t.predictions);
    t.manifest.predictions.bytes = pred_bytes.size();
    t.manifest.predictions.crc32 = crc32_hex(pred_bytes.data(), pred_bytes.size());
    detail::write_file(dir / kPredictionsFile, pred_bytes);
    if (t.manifest.hidden) {
        const auto hid_bytes = detail::encode_f32_le(t.hidden);
        t.manifest.hidden->bytes = hid_bytes.size();
        t.manifest.hidden->crc32 = crc32_hex(hid_bytes.data(), hid_bytes.size());
        detail::write_file(dir / kHiddenFile, hid_bytes);
    } else {
        std::filesystem::remove(dir / kHiddenFile, ec);
    }
    const std::string text = manifest_to_json(t.manifest).dump(2) + "\n";
    detail::write_file(dir / kManifestFile, std::vector<char>(text.begin(), text.end()));
    return t.manifest;
}

namespace detail {

// Order of checks: file present, byte length equals the recorded length
// (truncation is an integrity failure), recorded length agrees with the
// extents, checksum.
inline std::vector<float> load_blob(const std::filesystem::path& dir, const BlobInfo& info, std::size_t expected_values,
                                    const char* what) {
    const auto path = dir / info.file;
    if (info.file.empty() || !std::filesystem::exists(path)) {
        throw TraceMissingBlobError(std::string(what) + " blob '" + info.file + "' is missing");
    }
    const auto bytes = read_file(path);
    if (bytes.size() != info.bytes) {
        throw TraceIntegrityError(std::string(what) + " blob is " + std::to_string(bytes.size()) +
                                  " bytes, manifest records " + std::to_string(info.bytes));
    }
    if (info.bytes != expected_values * 4) {
        throw TraceExtentError(std::string(what) + " blob holds " + std::to_string(info.bytes / 4) +
                               " values but manifest extents imply " + std::to_string(expected_values));
    }
    if (crc32_hex(bytes.data(), bytes.size()) != info.crc32) {
        throw TraceIntegrityError(std::string(what) + " blob checksum mismatch");
    }
    return decode_f32_le(bytes);
}

}  // namespace detail

inline TeacherTrace read_trace(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr) {
    const auto manifest_path = dir / kManifestFile;
    if (!std::filesystem::exists(manifest_path)) {
        throw TraceMissingBlobError("no " + std::string(kManifestFile) + " in '" + dir.string() + "'");
    }
    const auto text = detail::read_file(manifest_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
        throw TraceValidationError(std::string("manifest is not valid JSON: ") + e.what());
    }
    TeacherTrace t;
    t.manifest = manifest_from_json(j, warnings);
    validate_manifest(t.manifest);
    const auto& m = t.manifest;
    t.predictions = detail::load_blob(dir, m.predictions, m.window_count * m.horizon * m.channels, "predictions");
    if (m.hidden) {
        t.hidden = detail::load_blob(dir, *m.hidden, m.window_count * m.channels * m.horizon * m.hidden_dim, "hidden");
    }
    validate_trace_payload(t);
    return t;
}

struct TraceValidation {
    bool ok = false;
    std::string error_class;  // e.g. "teacher/integrity"
    std::string message;
    std::vector<std::string> warnings;
};

// Non-throwing validation used by the trace-validate command.
inline TraceValidation validate_trace(const std::filesystem::path& dir) {
    TraceValidation v;
    try {
        TeacherTrace t = read_trace(dir, &v.warnings);
        if (t.manifest.teacher_name.empty()) v.warnings.push_back("teacher_name is empty");
        if (t.manifest.normalization_note.empty()) v.warnings.push_back("normalization_note is empty");
        if (t.has_hidden() && t.manifest.hidden_layer_tag.empty()) v.warnings.push_back("hidden_layer_tag is empty");
        v.ok = true;
    } catch (const Error& e) {
        v.error_class = e.diagnostic_class();
        v.message = e.what();
    }
    return v;
}

// Checks that a trace was produced over exactly these windows.
inline void check_trace_alignment(const TraceManifest& m, const WindowSet& w) {
    auto fail = [](const std::string& what) { throw ContractError("teacher", "trace/window mismatch: " + what); };
    if (m.lookback != w.lookback) fail("lookback " + std::to_string(m.lookback) + " vs " + std::to_string(w.lookback));
    if (m.horizon != w.horizon) fail("horizon " + std::to_string(m.horizon) + " vs " + std::to_string(w.horizon));
    if (m.channels != w.channels()) fail("channels " + std::to_string(m.channels) + " vs " + std::to_string(w.channels()));
    if (m.window_count != w.count()) {
        fail("window_count " + std::to_string(m.window_count) + " vs " + std::to_string(w.count()));
    }
    if (m.split != to_string(w.split)) fail("split " + m.split + " vs " + to_string(w.split));
    if (m.stride != w.stride) fail("stride " + std::to_string(m.stride) + " vs " + std::to_string(w.stride));
    if (!w.starts.empty() && m.first_start != w.starts.front()) {
        fail("first window starts at " + std::to_string(m.first_start) + " vs " + std::to_string(w.starts.front()));
    }
}

struct OracleConfig {
    double noise_sigma = 0.05;
    std::size_t hidden_dim = 16;
    std::uint64_t seed = 0;
    std::string name = "synthetic-oracle";
};

// Desk-scale stand-in teacher over raw (unnormalized) windows. Predictions
// are the true future (the clean signal when the dataset has one) plus
// N(0, sigma^2) noise, in series units. Hidden state (c, t) is a fixed random
// linear map of [z_true(t), z_last, t / (T - 1)], where z-values are the
// true future value and the last lookback value z-scored with the window's
// input stats.
inline TeacherTrace synthetic_oracle(const WindowSet& w, const OracleConfig& cfg) {
    if (!(cfg.noise_sigma >= 0.0)) throw ContractError("teacher", "oracle noise sigma must be >= 0");
    if (w.count() == 0) throw ContractError("teacher", "oracle needs at least one window");
    const std::size_t n = w.count(), l = w.lookback, steps = w.horizon, c = w.channels(), h = cfg.hidden_dim;
    const Array& truth = w.clean_targets ? *w.clean_targets : w.targets;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr std::size_t kFeatures = 3;
    std::vector<double> mix(h * kFeatures);
    for (double& v : mix) v = normal(rng) / std::sqrt(static_cast<double>(kFeatures));

    TeacherTrace t;
    auto& m = t.manifest;
    m.teacher_name = cfg.name;
    m.lookback = l;
    m.horizon = steps;
    m.channels = c;
    m.hidden_dim = h;
    m.hidden_layer_tag = "last";
    m.window_count = n;
    m.normalization_note = "predictions in series units; hidden states from window-z-scored context; sigma=" +
                           std::to_string(cfg.noise_sigma);
    m.split = to_string(w.split);
    m.stride = w.stride;
    m.first_start = w.starts.front();
    m.predictions = {kPredictionsFile, 0, ""};
    if (h > 0) m.hidden = BlobInfo{kHiddenFile, 0, ""};

    t.predictions.resize(n * steps * c);
    for (std::size_t i = 0; i < t.predictions.size(); ++i) {
        t.predictions[i] = static_cast<float>(truth[i] + cfg.noise_sigma * normal(rng));
    }

    t.hidden.resize(n * c * steps * h);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double mu = 0.0;
            for (std::size_t s = 0; s < l; ++s) mu += w.inputs.at(i, s, ch);
            mu /= static_cast<double>(l);
            double var = 0.0;
            for (std::size_t s = 0; s < l; ++s) var += (w.inputs.at(i, s, ch) - mu) * (w.inputs.at(i, s, ch) - mu);
            const double sd = std::max(std::sqrt(var / static_cast<double>(l)), kStdFloor);
            const double z_last = (w.inputs.at(i, l - 1, ch) - mu) / sd;
            for (std::size_t s = 0; s < steps; ++s) {
                const double feats[kFeatures] = {(truth.at(i, s, ch) - mu) / sd, z_last,
                                                 steps > 1 ? static_cast<double>(s) / static_cast<double>(steps - 1) : 0.0};
                for (std::size_t k = 0; k < h; ++k) {
                    double acc = 0.0;
                    for (std::size_t f = 0; f < kFeatures; ++f) acc += mix[k * kFeatures + f] * feats[f];
                    t.hidden[((i * c + ch) * steps + s) * h + k] = static_cast<float>(acc);
                }
            }
        }
    return t;
}

}  // namespace distilts
