// cli.hpp - run-configuration ingestion, result persistence and the named
// reproduction recipes. The command wrappers here do all file I/O so the
// binary in tools/ stays a thin argument parser.
//
// Formats: CSV curves (leading '#' comment with kind/config_hash/seed, then
// a header row, independent variable first), JSON reports, and row-major
// plain-text matrices with a one-line '#' header. Every file embeds the
// config hash and seed; outputs are pure functions of the resolved config,
// so reruns are byte-identical.
//
// Exit codes: 0 success, 2 config error, 3 optimizer did not converge
// (artifacts are still written), 4 I/O error.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsfm/analysis.hpp"
#include "mtsfm/core.hpp"
#include "mtsfm/gbf.hpp"
#include "mtsfm/optimizer.hpp"
#include "mtsfm/synthesis.hpp"

namespace mtsfm::cli {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& path, const std::string& what_arg)
        : std::runtime_error("config error at " + path + ": " + what_arg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

enum class ExitCode : int { Ok = 0, Config = 2, NonConverged = 3, Io = 4 };

enum class RunMode { Synth, Analyze, OptimizeFamily };

struct RandomSource {
    std::size_t harmonics = 16;
    double target_tbp = 100.0;
    InitWeighting weighting = InitWeighting::OneOverK;
    std::uint64_t seed_offset = 0;
};

struct WaveformSource {
    double duration_T = 1.0;
    Symmetry symmetry = Symmetry::Even;
    double a0 = 0.0;
    TaperSpec taper;
    std::vector<double> indices;          // explicit, or
    std::optional<RandomSource> random;   // seeded draw
};

struct FamilyConfig {
    std::size_t members = 2;
    std::size_t harmonics = 64;
    double duration_T = 1.0;
    double target_tbp = 100.0;
    double delta = 0.2;
    Symmetry symmetry = Symmetry::Even;
    TaperSpec taper = TaperSpec::tukey(0.05);
    InitWeighting init_weighting = InitWeighting::OneOverK;
    std::string weights_label = "equal";  // equal | ccf-heavy | acf-heavy | custom
    std::vector<double> weights_isr;      // custom only
    std::vector<double> weights_ccf;
    OptimizerSettings settings;
};

struct ExportConfig {
    double db_floor = -100.0;
    std::size_t af_delay_stride = 8;
    double doppler_span_over_t = 20.0;
    double doppler_step_over_t = 0.25;
    std::size_t spectrum_pad = 8;
    std::size_t spectrogram_window = 128;
    std::size_t spectrogram_hop = 32;
    bool export_acf = false;  // synth mode extras
    bool export_af = false;
};

struct RunConfig {
    RunMode mode = RunMode::Synth;
    std::uint64_t seed = 0;
    double oversample = 16.0;
    std::string output_dir = "out";
    int threads = 1;  // accepted for interface compatibility; results never depend on it
    WaveformSource waveform;
    std::optional<WaveformSource> waveform2;
    bool compare_closed_form = false;
    FamilyConfig family;
    ExportConfig exports;
};

// ---------------------------------------------------------------------------
// config parsing (strict: unknown keys are rejected with their JSON path)
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) { ok = true; break; }
        if (!ok) throw ConfigError(path + "/" + it.key(), "unknown key");
    }
}

inline double get_number(const json& j, const std::string& path, const char* key,
                         std::optional<double> fallback = std::nullopt) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        throw ConfigError(path + "/" + key, "missing required number");
    }
    if (!j[key].is_number()) throw ConfigError(path + "/" + key, "expected a number");
    return j[key].get<double>();
}

inline std::uint64_t get_uint(const json& j, const std::string& path, const char* key,
                              std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_unsigned() && !j[key].is_number_integer())
        throw ConfigError(path + "/" + key, "expected an unsigned integer");
    if (j[key].is_number_integer() && j[key].get<std::int64_t>() < 0)
        throw ConfigError(path + "/" + key, "expected an unsigned integer");
    return j[key].get<std::uint64_t>();
}

inline std::string get_string(const json& j, const std::string& path, const char* key,
                              std::optional<std::string> fallback = std::nullopt) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        throw ConfigError(path + "/" + key, "missing required string");
    }
    if (!j[key].is_string()) throw ConfigError(path + "/" + key, "expected a string");
    return j[key].get<std::string>();
}

inline bool get_bool(const json& j, const std::string& path, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_boolean()) throw ConfigError(path + "/" + key, "expected a boolean");
    return j[key].get<bool>();
}

inline Symmetry parse_symmetry(const std::string& s, const std::string& path) {
    if (s == "even") return Symmetry::Even;
    if (s == "odd") return Symmetry::Odd;
    throw ConfigError(path, "symmetry must be \"even\" or \"odd\"");
}

inline InitWeighting parse_weighting(const std::string& s, const std::string& path) {
    if (s == "one_over_k") return InitWeighting::OneOverK;
    if (s == "flat") return InitWeighting::Flat;
    throw ConfigError(path, "weighting must be \"one_over_k\" or \"flat\"");
}

inline TaperSpec parse_taper(const json& j, const std::string& path) {
    check_keys(j, path, {"kind", "tukey_alpha"});
    const std::string kind = get_string(j, path, "kind");
    if (kind == "rectangular") return TaperSpec::rectangular();
    if (kind == "tukey") {
        TaperSpec t = TaperSpec::tukey(get_number(j, path, "tukey_alpha"));
        try {
            t.validate();
        } catch (const std::exception& e) {
            throw ConfigError(path + "/tukey_alpha", e.what());
        }
        return t;
    }
    throw ConfigError(path + "/kind", "taper kind must be \"rectangular\" or \"tukey\"");
}

inline WaveformSource parse_waveform(const json& j, const std::string& path) {
    check_keys(j, path, {"duration", "symmetry", "a0", "taper", "indices", "random"});
    WaveformSource w;
    w.duration_T = get_number(j, path, "duration");
    if (!(w.duration_T > 0.0)) throw ConfigError(path + "/duration", "must be > 0");
    w.symmetry = parse_symmetry(get_string(j, path, "symmetry", "even"), path + "/symmetry");
    w.a0 = get_number(j, path, "a0", 0.0);
    if (j.contains("taper")) w.taper = parse_taper(j["taper"], path + "/taper");
    const bool has_indices = j.contains("indices");
    const bool has_random = j.contains("random");
    if (has_indices == has_random)
        throw ConfigError(path, "exactly one of \"indices\" or \"random\" is required");
    if (has_indices) {
        if (!j["indices"].is_array() || j["indices"].empty())
            throw ConfigError(path + "/indices", "expected a non-empty array of numbers");
        for (const auto& v : j["indices"]) {
            if (!v.is_number()) throw ConfigError(path + "/indices", "expected numbers");
            w.indices.push_back(v.get<double>());
        }
    } else {
        const json& r = j["random"];
        const std::string rp = path + "/random";
        check_keys(r, rp, {"harmonics", "target_tbp", "weighting", "seed_offset"});
        RandomSource rs;
        rs.harmonics = static_cast<std::size_t>(get_uint(r, rp, "harmonics", 0));
        if (rs.harmonics == 0) throw ConfigError(rp + "/harmonics", "must be >= 1");
        rs.target_tbp = get_number(r, rp, "target_tbp");
        if (!(rs.target_tbp > 0.0)) throw ConfigError(rp + "/target_tbp", "must be > 0");
        rs.weighting = parse_weighting(get_string(r, rp, "weighting", "one_over_k"),
                                       rp + "/weighting");
        rs.seed_offset = get_uint(r, rp, "seed_offset", 0);
        w.random = rs;
    }
    return w;
}

inline FamilyConfig parse_family(const json& j, const std::string& path) {
    check_keys(j, path,
               {"members", "harmonics", "duration", "target_tbp", "delta", "symmetry", "taper",
                "weights", "init_weighting", "optimizer"});
    FamilyConfig f;
    f.members = static_cast<std::size_t>(get_uint(j, path, "members", 2));
    if (f.members < 2) throw ConfigError(path + "/members", "need P >= 2");
    f.harmonics = static_cast<std::size_t>(get_uint(j, path, "harmonics", 64));
    if (f.harmonics < 1) throw ConfigError(path + "/harmonics", "need K >= 1");
    f.duration_T = get_number(j, path, "duration", 1.0);
    if (!(f.duration_T > 0.0)) throw ConfigError(path + "/duration", "must be > 0");
    f.target_tbp = get_number(j, path, "target_tbp", 100.0);
    f.delta = get_number(j, path, "delta", 0.2);
    if (!(f.delta > 0.0 && f.delta <= 1.0))
        throw ConfigError(path + "/delta", "must lie in (0, 1]");
    f.symmetry = parse_symmetry(get_string(j, path, "symmetry", "even"), path + "/symmetry");
    if (j.contains("taper")) f.taper = parse_taper(j["taper"], path + "/taper");
    f.init_weighting = parse_weighting(get_string(j, path, "init_weighting", "one_over_k"),
                                       path + "/init_weighting");
    if (j.contains("weights")) {
        if (j["weights"].is_string()) {
            f.weights_label = j["weights"].get<std::string>();
            if (f.weights_label != "equal" && f.weights_label != "ccf-heavy" &&
                f.weights_label != "acf-heavy")
                throw ConfigError(path + "/weights",
                                  "preset must be equal, ccf-heavy or acf-heavy");
        } else if (j["weights"].is_object()) {
            const std::string wp = path + "/weights";
            check_keys(j["weights"], wp, {"isr", "ccf"});
            f.weights_label = "custom";
            for (const char* key : {"isr", "ccf"}) {
                if (!j["weights"].contains(key) || !j["weights"][key].is_array())
                    throw ConfigError(wp + "/" + key, "expected an array of numbers");
                for (const auto& v : j["weights"][key]) {
                    if (!v.is_number()) throw ConfigError(wp + "/" + key, "expected numbers");
                    (key[0] == 'i' ? f.weights_isr : f.weights_ccf).push_back(v.get<double>());
                }
            }
        } else {
            throw ConfigError(path + "/weights", "expected a preset name or {isr, ccf} arrays");
        }
    }
    if (j.contains("optimizer")) {
        const json& o = j["optimizer"];
        const std::string op = path + "/optimizer";
        check_keys(o, op,
                   {"max_iterations", "f_rel_tol", "stall_window", "fd_step",
                    "constraint_tol_rel", "restarts"});
        f.settings.max_iterations =
            static_cast<int>(get_uint(o, op, "max_iterations",
                                      static_cast<std::uint64_t>(f.settings.max_iterations)));
        f.settings.f_rel_tol = get_number(o, op, "f_rel_tol", f.settings.f_rel_tol);
        f.settings.stall_window = static_cast<int>(
            get_uint(o, op, "stall_window", static_cast<std::uint64_t>(f.settings.stall_window)));
        f.settings.fd_step = get_number(o, op, "fd_step", f.settings.fd_step);
        f.settings.constraint_tol_rel =
            get_number(o, op, "constraint_tol_rel", f.settings.constraint_tol_rel);
        f.settings.restarts = static_cast<int>(
            get_uint(o, op, "restarts", static_cast<std::uint64_t>(f.settings.restarts)));
    }
    return f;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
    detail::check_keys(j, "", {"mode", "seed", "oversample", "output_dir", "waveform",
                               "waveform2", "compare_closed_form", "family", "export"});
    RunConfig c;
    const std::string mode = detail::get_string(j, "", "mode");
    if (mode == "synth") c.mode = RunMode::Synth;
    else if (mode == "analyze") c.mode = RunMode::Analyze;
    else if (mode == "optimize_family") c.mode = RunMode::OptimizeFamily;
    else throw ConfigError("/mode", "must be synth, analyze or optimize_family");

    c.seed = detail::get_uint(j, "", "seed", 0);
    c.oversample = detail::get_number(j, "", "oversample", 16.0);
    if (!(c.oversample >= 2.0)) throw ConfigError("/oversample", "must be >= 2");
    if (j.contains("output_dir")) c.output_dir = detail::get_string(j, "", "output_dir");

    if (c.mode == RunMode::Synth || c.mode == RunMode::Analyze) {
        if (!j.contains("waveform")) throw ConfigError("/waveform", "required for this mode");
        c.waveform = detail::parse_waveform(j["waveform"], "/waveform");
        if (j.contains("waveform2")) {
            if (c.mode == RunMode::Synth)
                throw ConfigError("/waveform2", "only valid in analyze mode");
            c.waveform2 = detail::parse_waveform(j["waveform2"], "/waveform2");
        }
        c.compare_closed_form = detail::get_bool(j, "", "compare_closed_form", false);
    } else {
        if (j.contains("waveform") || j.contains("waveform2") ||
            j.contains("compare_closed_form"))
            throw ConfigError("/waveform", "not valid in optimize_family mode");
        if (!j.contains("family")) throw ConfigError("/family", "required for optimize_family");
    }
    if (j.contains("family")) {
        if (c.mode != RunMode::OptimizeFamily)
            throw ConfigError("/family", "only valid in optimize_family mode");
        c.family = detail::parse_family(j["family"], "/family");
    }
    if (j.contains("export")) {
        const json& e = j["export"];
        detail::check_keys(e, "/export",
                           {"db_floor", "af_delay_stride", "doppler_span_over_t",
                            "doppler_step_over_t", "spectrum_pad", "spectrogram_window",
                            "spectrogram_hop", "acf", "af"});
        c.exports.db_floor = detail::get_number(e, "/export", "db_floor", -100.0);
        c.exports.af_delay_stride = static_cast<std::size_t>(
            detail::get_uint(e, "/export", "af_delay_stride", 8));
        if (c.exports.af_delay_stride == 0)
            throw ConfigError("/export/af_delay_stride", "must be >= 1");
        c.exports.doppler_span_over_t =
            detail::get_number(e, "/export", "doppler_span_over_t", 20.0);
        c.exports.doppler_step_over_t =
            detail::get_number(e, "/export", "doppler_step_over_t", 0.25);
        c.exports.spectrum_pad =
            static_cast<std::size_t>(detail::get_uint(e, "/export", "spectrum_pad", 8));
        c.exports.spectrogram_window =
            static_cast<std::size_t>(detail::get_uint(e, "/export", "spectrogram_window", 128));
        c.exports.spectrogram_hop =
            static_cast<std::size_t>(detail::get_uint(e, "/export", "spectrogram_hop", 32));
        c.exports.export_acf = detail::get_bool(e, "/export", "acf", false);
        c.exports.export_af = detail::get_bool(e, "/export", "af", false);
    }
    return c;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// recipes: one-command reproduction presets
// ---------------------------------------------------------------------------

// Documented recipe seeds. The reproduction is statistical-in-kind, not
// sample-exact: the reference seeds are unknown. fig4's directional claims
// are seed-sensitive (the objective is multi-modal), so two documented
// alternates back the primary seed.
inline constexpr std::uint64_t kFig1Seed = 20;
inline constexpr std::uint64_t kFig234Seed = 7;
inline constexpr std::uint64_t kFig4AltSeeds[2] = {16, 20};

inline RunConfig recipe(const std::string& name) {
    RunConfig c;
    if (name == "fig1") {
        c.mode = RunMode::Synth;
        c.seed = kFig1Seed;
        c.waveform.duration_T = 1.0;
        c.waveform.taper = TaperSpec::tukey(0.05);
        RandomSource r;
        r.harmonics = 16;
        r.target_tbp = 100.0;
        c.waveform.random = r;
        c.exports.export_acf = true;
        c.exports.export_af = true;
        return c;
    }
    if (name == "fig2" || name == "fig3" || name == "fig4") {
        c.mode = RunMode::OptimizeFamily;
        c.seed = kFig234Seed;
        c.family.members = 2;
        c.family.harmonics = 64;
        c.family.duration_T = 1.0;
        c.family.target_tbp = 100.0;
        c.family.delta = 0.2;
        c.family.taper = TaperSpec::tukey(0.05);
        c.family.weights_label =
            (name == "fig2") ? "equal" : (name == "fig3") ? "ccf-heavy" : "acf-heavy";
        return c;
    }
    throw ConfigError("/recipe", "unknown recipe \"" + name + "\" (expected fig1..fig4)");
}

// ---------------------------------------------------------------------------
// canonical config serialization + hashing
// ---------------------------------------------------------------------------

namespace detail {

inline json taper_json(const TaperSpec& t) {
    json j;
    j["kind"] = t.is_rectangular() ? "rectangular" : "tukey";
    if (!t.is_rectangular()) j["tukey_alpha"] = t.tukey_alpha;
    return j;
}

inline json waveform_json(const WaveformSource& w) {
    json j;
    j["duration"] = w.duration_T;
    j["symmetry"] = (w.symmetry == Symmetry::Even) ? "even" : "odd";
    j["a0"] = w.a0;
    j["taper"] = taper_json(w.taper);
    if (w.random) {
        json r;
        r["harmonics"] = w.random->harmonics;
        r["target_tbp"] = w.random->target_tbp;
        r["weighting"] =
            (w.random->weighting == InitWeighting::OneOverK) ? "one_over_k" : "flat";
        r["seed_offset"] = w.random->seed_offset;
        j["random"] = r;
    } else {
        j["indices"] = w.indices;
    }
    return j;
}

// Resolved-config JSON used for hashing and provenance. Deliberately
// excludes output_dir and threads: neither may influence file contents.
inline json canonical_json(const RunConfig& c) {
    json j;
    j["mode"] = (c.mode == RunMode::Synth)   ? "synth"
                : (c.mode == RunMode::Analyze) ? "analyze"
                                               : "optimize_family";
    j["seed"] = c.seed;
    j["oversample"] = c.oversample;
    if (c.mode != RunMode::OptimizeFamily) {
        j["waveform"] = waveform_json(c.waveform);
        if (c.waveform2) j["waveform2"] = waveform_json(*c.waveform2);
        j["compare_closed_form"] = c.compare_closed_form;
    } else {
        json f;
        f["members"] = c.family.members;
        f["harmonics"] = c.family.harmonics;
        f["duration"] = c.family.duration_T;
        f["target_tbp"] = c.family.target_tbp;
        f["delta"] = c.family.delta;
        f["symmetry"] = (c.family.symmetry == Symmetry::Even) ? "even" : "odd";
        f["taper"] = taper_json(c.family.taper);
        f["init_weighting"] =
            (c.family.init_weighting == InitWeighting::OneOverK) ? "one_over_k" : "flat";
        f["weights"] = c.family.weights_label;
        if (c.family.weights_label == "custom") {
            f["weights_isr"] = c.family.weights_isr;
            f["weights_ccf"] = c.family.weights_ccf;
        }
        json o;
        o["max_iterations"] = c.family.settings.max_iterations;
        o["f_rel_tol"] = c.family.settings.f_rel_tol;
        o["stall_window"] = c.family.settings.stall_window;
        o["fd_step"] = c.family.settings.fd_step;
        o["constraint_tol_rel"] = c.family.settings.constraint_tol_rel;
        o["restarts"] = c.family.settings.restarts;
        f["optimizer"] = o;
        j["family"] = f;
    }
    json e;
    e["db_floor"] = c.exports.db_floor;
    e["af_delay_stride"] = c.exports.af_delay_stride;
    e["doppler_span_over_t"] = c.exports.doppler_span_over_t;
    e["doppler_step_over_t"] = c.exports.doppler_step_over_t;
    e["spectrum_pad"] = c.exports.spectrum_pad;
    e["spectrogram_window"] = c.exports.spectrogram_window;
    e["spectrogram_hop"] = c.exports.spectrogram_hop;
    e["acf"] = c.exports.export_acf;
    e["af"] = c.exports.export_af;
    j["export"] = e;
    return j;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string config_hash_hex(const RunConfig& c) {
    const std::uint64_t h = fnv1a64(canonical_json(c).dump());
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// file writers
// ---------------------------------------------------------------------------

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12e", v);
    return buf;
}

struct FileMeta {
    std::string kind;
    std::string config_hash;
    std::uint64_t seed = 0;
};

class CsvFile {
public:
    CsvFile(const std::filesystem::path& path, const FileMeta& meta,
            const std::vector<std::string>& columns)
        : path_(path.string()), out_(path) {
        if (!out_) throw IoError("cannot open output file: " + path_);
        out_ << "# kind=" << meta.kind << " config_hash=" << meta.config_hash
             << " seed=" << meta.seed << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }
    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out_ << (i ? "," : "") << fmt(values[i]);
        out_ << "\n";
    }
    ~CsvFile() noexcept(false) {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

inline void write_matrix(const std::filesystem::path& path, const FileMeta& meta,
                         const std::string& extra_header, std::size_t rows, std::size_t cols,
                         const std::vector<double>& data) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output file: " + path.string());
    out << "# kind=" << meta.kind << " rows=" << rows << " cols=" << cols << " "
        << extra_header << " config_hash=" << meta.config_hash << " seed=" << meta.seed
        << "\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c)
            out << (c ? " " : "") << fmt(data[r * cols + c]);
        out << "\n";
    }
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output file: " + path.string());
    out << j.dump(2) << "\n";
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// runners
// ---------------------------------------------------------------------------

namespace detail {

inline WaveformParams resolve_waveform(const WaveformSource& src, std::uint64_t run_seed) {
    WaveformParams p;
    p.duration_T = src.duration_T;
    p.symmetry = src.symmetry;
    p.a0 = src.a0;
    p.taper = src.taper;
    if (src.random) {
        WaveformParams drawn = make_random_waveform(
            src.random->harmonics, src.duration_T, src.symmetry, src.random->target_tbp,
            src.taper, run_seed + src.random->seed_offset, src.random->weighting);
        drawn.a0 = src.a0;
        return drawn;
    }
    p.indices = src.indices;
    p.validate();
    return p;
}

inline json metrics_json(const MetricsReport& m, bool has_se) {
    json j;
    j["isr"] = m.isr;
    j["isr_db"] = m.isr_db;
    j["isr_degenerate"] = m.isr_degenerate;
    j["acf_area_s"] = m.ccf_area;
    j["rms_bandwidth_sq_rad2_s2"] = m.rms_bandwidth_sq;
    j["papr"] = m.papr;
    j["papr_db"] = m.papr_db;
    if (has_se)
        j["spectral_efficiency"] = m.spectral_efficiency;
    else
        j["spectral_efficiency"] = nullptr;
    j["mainlobe_halfwidth_tau_m_s"] = m.mainlobe_halfwidth_tau_m;
    j["swept_bandwidth_hz"] = m.swept_bandwidth;
    return j;
}

// Single-waveform metrics over the waveform's own grid.
inline MetricsReport compute_metrics(const WaveformParams& p, const SampledWaveform& w,
                                     bool& has_se) {
    MetricsReport m;
    CorrelationResult acf = acf_numeric(w);
    IsrResult isr = isr_exact(acf);
    m.isr = isr.isr;
    m.isr_db = isr.isr_db;
    m.isr_degenerate = isr.degenerate;
    m.mainlobe_halfwidth_tau_m = isr.tau_m;
    m.ccf_area = ccf_area(acf);
    m.papr = papr(w);
    m.papr_db = db10(m.papr);
    m.swept_bandwidth = estimate_swept_bandwidth(p);
    if (p.a0 == 0.0) {
        m.rms_bandwidth_sq = rms_bandwidth_sq(p);
    } else {
        m.rms_bandwidth_sq = rms_bandwidth_sq_numeric(w);
    }
    has_se = m.swept_bandwidth > 0.0;
    if (has_se) m.spectral_efficiency = spectral_efficiency(w, p);
    return m;
}

inline double db_power(double power, double floor_db) {
    return db10(power, floor_db);
}

inline void export_af_surface(const std::filesystem::path& dir, const FileMeta& meta,
                              const RunConfig& cfg, const SampledWaveform& w1,
                              const SampledWaveform& w2) {
    std::vector<double> dopplers = default_doppler_grid(
        w1.grid.duration(), cfg.exports.doppler_span_over_t, cfg.exports.doppler_step_over_t);
    AmbiguitySurface af = ambiguity_numeric(w1, w2, cfg.exports.af_delay_stride, dopplers);
    std::vector<double> dbv(af.values.size());
    for (std::size_t i = 0; i < af.values.size(); ++i)
        dbv[i] = db_power(std::norm(af.values[i]), cfg.exports.db_floor);
    char extra[160];
    std::snprintf(extra, sizeof(extra), "delay0=%.9e ddelay=%.9e doppler0=%.9e ddoppler=%.9e",
                  af.delays.front(), af.delays[1] - af.delays[0], af.dopplers.front(),
                  af.dopplers[1] - af.dopplers[0]);
    FileMeta m = meta;
    m.kind = "af_surface";
    write_matrix(dir / "af_surface.txt", m, extra, af.delays.size(), af.dopplers.size(), dbv);
}

inline void export_correlation_csv(const std::filesystem::path& path, const FileMeta& meta,
                                   const RunConfig& cfg, const CorrelationResult& num,
                                   const CorrelationResult* closed) {
    std::vector<std::string> cols{"delay_s", "delay_over_t", "db"};
    if (closed) cols.push_back("db_closed_form");
    CsvFile csv(path, meta, cols);
    for (std::size_t i = 0; i < num.delays.size(); ++i) {
        std::vector<double> row{num.delays[i], num.delays[i] / num.duration_T,
                                db_power(std::norm(num.values[i]), cfg.exports.db_floor)};
        if (closed)
            row.push_back(db_power(std::norm(closed->values[i]), cfg.exports.db_floor));
        csv.row(row);
    }
}

}  // namespace detail

// Writes waveform samples, spectrogram matrix, EDS and the metrics report;
// optionally the ACF curve and AF surface (the Fig. 1 recipe turns both on).
inline void cmd_synth(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir.string());

    detail::FileMeta meta{"", detail::config_hash_hex(cfg), cfg.seed};

    WaveformParams p = detail::resolve_waveform(cfg.waveform, cfg.seed);
    SamplingGrid grid = make_grid(p, cfg.oversample);
    SampledWaveform w = synthesize(p, grid);

    {
        detail::FileMeta m = meta;
        m.kind = "waveform";
        detail::CsvFile csv(dir / "waveform.csv", m, {"time_s", "re", "im"});
        for (std::size_t n = 0; n < w.samples.size(); ++n)
            csv.row({grid.time_at(n), w.samples[n].real(), w.samples[n].imag()});
    }
    {
        mtsfm::detail::Eds eds = mtsfm::detail::eds_from_samples(w, cfg.exports.spectrum_pad);
        // natural order -> ascending frequency
        std::vector<std::size_t> order(eds.freqs.size());
        const std::size_t len = eds.freqs.size();
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < len; ++i) order[i] = (i + half + 1) % len;
        double peak = 0.0;
        for (double v : eds.power) peak = std::max(peak, v);
        detail::FileMeta m = meta;
        m.kind = "eds";
        detail::CsvFile csv(dir / "eds.csv", m, {"freq_hz", "eds", "eds_db"});
        for (std::size_t i : order)
            csv.row({eds.freqs[i], eds.power[i],
                     detail::db_power(eds.power[i] / peak, cfg.exports.db_floor)});
    }
    {
        Spectrogram sg = spectrogram(w, cfg.exports.spectrogram_window, cfg.exports.spectrogram_hop);
        double peak = 0.0;
        for (double v : sg.power) peak = std::max(peak, v);
        std::vector<double> dbv(sg.power.size());
        for (std::size_t i = 0; i < sg.power.size(); ++i)
            dbv[i] = detail::db_power(sg.power[i] / peak, cfg.exports.db_floor);
        char extra[160];
        std::snprintf(extra, sizeof(extra), "t0=%.9e dt=%.9e f0=%.9e df=%.9e", sg.times.front(),
                      sg.times.size() > 1 ? sg.times[1] - sg.times[0] : 0.0, sg.freqs.front(),
                      sg.freqs[1] - sg.freqs[0]);
        detail::FileMeta m = meta;
        m.kind = "spectrogram";
        detail::write_matrix(dir / "spectrogram.txt", m, extra, sg.times.size(),
                             sg.freqs.size(), dbv);
    }

    bool has_se = false;
    MetricsReport metrics = detail::compute_metrics(p, w, has_se);
    json mj;
    mj["kind"] = "synth_metrics";
    mj["config_hash"] = meta.config_hash;
    mj["seed"] = cfg.seed;
    mj["metrics"] = detail::metrics_json(metrics, has_se);
    mj["grid"] = {{"num_samples", grid.num_samples},
                  {"dt_s", grid.dt},
                  {"degenerate_fallback", grid.degenerate_fallback}};
    mj["indices"] = p.indices;
    detail::write_json(dir / "metrics.json", mj);

    if (cfg.exports.export_acf) {
        CorrelationResult acf = acf_numeric(w);
        detail::FileMeta m = meta;
        m.kind = "acf";
        detail::export_correlation_csv(dir / "acf.csv", m, cfg, acf, nullptr);
    }
    if (cfg.exports.export_af) detail::export_af_surface(dir, meta, cfg, w, w);
}

// ACF/CCF curves (optionally with the closed-form column and max-diff
// field), AF surface and the metrics report for one waveform or a pair.
inline void cmd_analyze(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir.string());

    detail::FileMeta meta{"", detail::config_hash_hex(cfg), cfg.seed};

    WaveformParams p1 = detail::resolve_waveform(cfg.waveform, cfg.seed);
    if (cfg.compare_closed_form && !p1.taper.is_rectangular())
        throw ConfigError("/compare_closed_form",
                          "closed-form comparison requires a rectangular taper");

    const bool pair = cfg.waveform2.has_value();
    WaveformParams p2 = pair ? detail::resolve_waveform(*cfg.waveform2, cfg.seed + 1) : p1;
    if (pair && p2.duration_T != p1.duration_T)
        throw ConfigError("/waveform2/duration", "pair must share one duration");

    const double df1 = estimate_swept_bandwidth(p1);
    const double df2 = pair ? estimate_swept_bandwidth(p2) : df1;
    SamplingGrid grid =
        make_grid_for_bandwidth(p1.duration_T, std::max(df1, df2), cfg.oversample);
    SampledWaveform w1 = synthesize(p1, grid);
    SampledWaveform w2 = pair ? synthesize(p2, grid) : w1;

    CorrelationResult corr = pair ? ccf_numeric(w1, w2) : acf_numeric(w1);
    std::optional<CorrelationResult> closed;
    double max_diff = 0.0;
    if (cfg.compare_closed_form) {
        GbfCoefficients c1 = gbf_via_fft(p1);
        GbfCoefficients c2 = pair ? gbf_via_fft(p2) : c1;
        closed = pair ? ccf_closed_form(c1, c2, p1, corr.delays)
                      : acf_closed_form(c1, p1, corr.delays);
        for (std::size_t i = 0; i < corr.values.size(); ++i)
            max_diff = std::max(max_diff, std::abs(corr.values[i] - closed->values[i]));
    }
    {
        detail::FileMeta m = meta;
        m.kind = pair ? "ccf" : "acf";
        detail::export_correlation_csv(dir / (pair ? "ccf.csv" : "acf.csv"), m, cfg, corr,
                                       closed ? &*closed : nullptr);
    }
    if (cfg.exports.export_af || !pair) detail::export_af_surface(dir, meta, cfg, w1, w2);

    json mj;
    mj["kind"] = "analyze_metrics";
    mj["config_hash"] = meta.config_hash;
    mj["seed"] = cfg.seed;
    bool has_se1 = false;
    mj["waveform1"] = detail::metrics_json(detail::compute_metrics(p1, w1, has_se1), has_se1);
    if (pair) {
        bool has_se2 = false;
        mj["waveform2"] =
            detail::metrics_json(detail::compute_metrics(p2, w2, has_se2), has_se2);
        mj["ccf_area_s"] = ccf_area(corr);
        double peak = 0.0;
        for (const cplx& v : corr.values) peak = std::max(peak, std::norm(v));
        mj["ccf_peak_db"] = db10(peak, cfg.exports.db_floor);
    }
    if (cfg.compare_closed_form) mj["closed_form_max_abs_diff"] = max_diff;
    detail::write_json(dir / "metrics.json", mj);
}

// Family optimization: initial/final coefficients, per-iteration trace CSV,
// before/after ACF/CCF curves and a summary. Returns NonConverged (3) when
// the iteration cap stopped the run; artifacts are written either way.
inline ExitCode cmd_optimize_family(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir.string());

    detail::FileMeta meta{"", detail::config_hash_hex(cfg), cfg.seed};

    const FamilyConfig& f = cfg.family;
    OptimizerSettings settings = f.settings;
    settings.oversample = cfg.oversample;

    WeightPreset preset = WeightPreset::Equal;
    if (f.weights_label == "ccf-heavy") preset = WeightPreset::CcfHeavy;
    else if (f.weights_label == "acf-heavy") preset = WeightPreset::AcfHeavy;

    FamilyDesignProblem prob;
    if (f.weights_label == "custom") {
        std::vector<WaveformParams> members(f.members);
        for (std::size_t p = 0; p < f.members; ++p)
            members[p] = make_random_waveform(f.harmonics, f.duration_T, f.symmetry,
                                              f.target_tbp, f.taper,
                                              mtsfm::detail::mix_seed(cfg.seed, p),
                                              f.init_weighting);
        try {
            prob = make_family_problem(std::move(members), f.weights_isr, f.weights_ccf,
                                       f.delta, cfg.seed, settings);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("/family/weights", e.what());
        }
    } else {
        prob = init_family(f.members, f.harmonics, f.duration_T, f.target_tbp, cfg.seed,
                           preset, f.delta, f.taper, f.symmetry, f.init_weighting, settings);
    }

    OptimizationTrace trace = optimize_family(prob);

    {
        std::vector<std::string> cols{"iteration", "objective"};
        for (std::size_t p = 0; p < prob.member_count(); ++p)
            cols.push_back("isr_norm_" + std::to_string(p + 1));
        std::size_t pair = 0;
        for (std::size_t p = 0; p < prob.member_count(); ++p)
            for (std::size_t q = p + 1; q < prob.member_count(); ++q, ++pair)
                cols.push_back("ccf_norm_" + std::to_string(p + 1) + "_" + std::to_string(q + 1));
        cols.insert(cols.end(), {"max_residual_rel", "step_norm", "fevals"});
        detail::FileMeta m = meta;
        m.kind = "trace";
        detail::CsvFile csv(dir / "trace.csv", m, cols);
        for (const IterationRecord& r : trace.iterations) {
            std::vector<double> row{static_cast<double>(r.iteration), r.objective};
            row.insert(row.end(), r.isr_norm.begin(), r.isr_norm.end());
            row.insert(row.end(), r.ccf_norm.begin(), r.ccf_norm.end());
            row.push_back(r.max_residual_rel);
            row.push_back(r.step_norm);
            row.push_back(static_cast<double>(r.fevals));
            csv.row(row);
        }
    }

    // before/after curves on the problem grid
    std::vector<SampledWaveform> w_init(prob.member_count()), w_final(prob.member_count());
    for (std::size_t p = 0; p < prob.member_count(); ++p) {
        w_init[p] = synthesize(prob.basis, trace.initial_indices[p], prob.members[p].a0);
        w_final[p] = synthesize(prob.basis, trace.final_indices[p], prob.members[p].a0);
    }
    auto export_pair_curve = [&](const std::string& name, const CorrelationResult& before,
                                 const CorrelationResult& after) {
        detail::FileMeta m = meta;
        m.kind = name;
        detail::CsvFile csv(dir / (name + ".csv"), m,
                            {"delay_s", "delay_over_t", "db_initial", "db_final"});
        for (std::size_t i = 0; i < before.delays.size(); ++i)
            csv.row({before.delays[i], before.delays[i] / before.duration_T,
                     detail::db_power(std::norm(before.values[i]), cfg.exports.db_floor),
                     detail::db_power(std::norm(after.values[i]), cfg.exports.db_floor)});
    };
    for (std::size_t p = 0; p < prob.member_count(); ++p)
        export_pair_curve("acf_member" + std::to_string(p + 1), acf_numeric(w_init[p]),
                          acf_numeric(w_final[p]));
    std::size_t pair_idx = 0;
    for (std::size_t p = 0; p < prob.member_count(); ++p)
        for (std::size_t q = p + 1; q < prob.member_count(); ++q, ++pair_idx)
            export_pair_curve("ccf_" + std::to_string(p + 1) + "_" + std::to_string(q + 1),
                              ccf_numeric(w_init[p], w_init[q]),
                              ccf_numeric(w_final[p], w_final[q]));

    {
        json mj;
        mj["kind"] = "family_members";
        mj["config_hash"] = meta.config_hash;
        mj["seed"] = cfg.seed;
        mj["duration"] = prob.members.front().duration_T;
        mj["harmonics"] = prob.members.front().indices.size();
        mj["symmetry"] = (prob.members.front().symmetry == Symmetry::Even) ? "even" : "odd";
        mj["initial_indices"] = trace.initial_indices;
        mj["final_indices"] = trace.final_indices;
        detail::write_json(dir / "members.json", mj);
    }
    {
        json s;
        s["kind"] = "optimize_summary";
        s["config_hash"] = meta.config_hash;
        s["seed"] = cfg.seed;
        s["weight_case"] = f.weights_label;
        s["weights_isr"] = prob.weights_isr;
        s["weights_ccf"] = prob.weights_ccf;
        s["delta"] = prob.delta;
        s["objective_initial"] = trace.initial_objective;
        s["objective_final"] = trace.final_objective;
        s["converged"] = trace.converged;
        s["iterations"] = trace.iterations.size() - 1;
        s["fevals"] = trace.total_fevals;
        s["restart_index"] = trace.restart_index;
        s["isr_initial"] = trace.isr_initial;
        s["isr_final"] = trace.isr_final;
        s["tau_m_initial"] = trace.tau_m_initial;
        s["tau_m_final"] = trace.tau_m_final;
        s["ccf_area_initial"] = trace.ccf_area_initial;
        s["ccf_area_final"] = trace.ccf_area_final;
        s["beta_sq_initial"] = trace.beta_sq_initial;
        s["beta_sq_final"] = trace.beta_sq_final;
        json res = json::array();
        for (const MemberResiduals& r : trace.final_residuals)
            res.push_back({{"lower", r.lower}, {"upper", r.upper}});
        s["final_residuals"] = res;
        detail::write_json(dir / "summary.json", s);
    }
    return trace.converged ? ExitCode::Ok : ExitCode::NonConverged;
}

// Dispatch helper used by the binary and the tests.
inline ExitCode run(const RunConfig& cfg) {
    switch (cfg.mode) {
        case RunMode::Synth:
            cmd_synth(cfg);
            return ExitCode::Ok;
        case RunMode::Analyze:
            cmd_analyze(cfg);
            return ExitCode::Ok;
        case RunMode::OptimizeFamily:
            return cmd_optimize_family(cfg);
    }
    return ExitCode::Config;
}

}  // namespace mtsfm::cli
