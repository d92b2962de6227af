// core.hpp - shared domain types, sampling grids, and unit conventions.
//
// Conventions used throughout the library:
//   * time axis is centered, t in [-T/2, T/2); grids store t0 = -T/2
//   * energies are discrete integrals sum(|s_n|^2) * dt, so a unit-energy
//     waveform has energy 1.0 regardless of sample count
//   * dB values are 10*log10 of power-like ratios

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtsfm {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

enum class Symmetry { Even, Odd };
enum class TaperKind { Rectangular, Tukey };

struct TaperSpec {
    TaperKind kind = TaperKind::Rectangular;
    double tukey_alpha = 0.0;  // taper fraction, used only when kind == Tukey

    static TaperSpec rectangular() { return {}; }
    static TaperSpec tukey(double alpha) { return {TaperKind::Tukey, alpha}; }

    bool is_rectangular() const { return kind == TaperKind::Rectangular; }

    void validate() const {
        if (kind == TaperKind::Tukey &&
            !(tukey_alpha >= 0.0 && tukey_alpha <= 1.0)) {
            throw std::invalid_argument(
                "TaperSpec: tukey_alpha must lie in [0, 1]");
        }
    }
};

// The designable object: duration, symmetry, carrier-offset term a0 and the
// modulation-index vector (alpha_k for Even, beta_k for Odd), plus the
// amplitude taper.
struct WaveformParams {
    double duration_T = 1.0;              // seconds, > 0
    Symmetry symmetry = Symmetry::Even;
    double a0 = 0.0;                      // Hz, constant frequency offset term
    std::vector<double> indices;          // dimensionless, size K >= 1
    TaperSpec taper;

    std::size_t harmonic_count() const { return indices.size(); }

    void validate() const {
        if (!(duration_T > 0.0) || !std::isfinite(duration_T))
            throw std::invalid_argument("WaveformParams: duration_T must be > 0");
        if (indices.empty())
            throw std::invalid_argument("WaveformParams: need at least one modulation index");
        for (double v : indices)
            if (!std::isfinite(v))
                throw std::invalid_argument("WaveformParams: indices must be finite");
        if (!std::isfinite(a0))
            throw std::invalid_argument("WaveformParams: a0 must be finite");
        taper.validate();
    }
};

// Uniform sampling of [-T/2, T/2). N * dt == T by construction (dt = T/N).
struct SamplingGrid {
    std::size_t num_samples = 0;
    double dt = 0.0;        // seconds
    double t0 = 0.0;        // seconds, = -T/2
    bool degenerate_fallback = false;  // set when built for a zero-bandwidth waveform

    double time_at(std::size_t n) const { return t0 + static_cast<double>(n) * dt; }
    double duration() const { return static_cast<double>(num_samples) * dt; }

    bool same_as(const SamplingGrid& other) const {
        return num_samples == other.num_samples && dt == other.dt && t0 == other.t0;
    }
};

struct SampledWaveform {
    SamplingGrid grid;
    std::vector<cplx> samples;  // length grid.num_samples
    double energy = 0.0;        // sum(|s|^2) * dt
};

struct GbfCoefficients {
    int min_order = 0;
    int max_order = 0;
    std::vector<cplx> values;     // values[l - min_order] = c_l
    double truncation_tail = 0.0; // 1 - sum(|c_l|^2) over retained orders
    bool a0_folded = false;       // a0 gave non-integer cycles; coefficients approximate

    cplx at(int order) const {
        if (order < min_order || order > max_order) return {0.0, 0.0};
        return values[static_cast<std::size_t>(order - min_order)];
    }
    std::size_t size() const { return values.size(); }
};

struct MetricsReport {
    double isr = 0.0;
    double isr_db = 0.0;
    bool isr_degenerate = false;          // no ACF null found; ISR = 0 by convention
    double ccf_area = 0.0;                // seconds
    double rms_bandwidth_sq = 0.0;        // rad^2/s^2
    double papr = 1.0;
    double papr_db = 0.0;
    double spectral_efficiency = 0.0;     // fraction of energy in band
    double mainlobe_halfwidth_tau_m = 0.0;// seconds
    double swept_bandwidth = 0.0;         // Hz
};

// Compensated (Kahan) summation; keeps energy/PAPR identities tight.
struct KahanSum {
    double sum = 0.0;
    double c = 0.0;
    void add(double v) {
        double y = v - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

inline double waveform_energy(const std::vector<cplx>& samples, double dt) {
    KahanSum acc;
    for (const cplx& s : samples) acc.add(std::norm(s));
    return acc.sum * dt;
}

// Scales samples so that sum(|s|^2) * dt == 1. Idempotent to roundoff.
inline void normalize_to_unit_energy(SampledWaveform& w) {
    double e = waveform_energy(w.samples, w.grid.dt);
    if (!(e > 0.0))
        throw std::domain_error("normalize_to_unit_energy: zero-energy waveform");
    double scale = 1.0 / std::sqrt(e);
    for (cplx& s : w.samples) s *= scale;
    w.energy = waveform_energy(w.samples, w.grid.dt);
}

inline std::size_t next_pow2(std::size_t n) {
    return std::bit_ceil(std::max<std::size_t>(n, 1));
}

// Grid construction from an already-known swept bandwidth. The params-based
// convenience overload lives in synthesis.hpp next to the bandwidth
// estimator it needs.
inline SamplingGrid make_grid_for_bandwidth(double duration_T, double swept_bw_hz,
                                            double oversample) {
    if (!(oversample >= 2.0))
        throw std::invalid_argument("make_grid: oversample must be >= 2");
    if (!(duration_T > 0.0))
        throw std::invalid_argument("make_grid: duration must be > 0");

    SamplingGrid g;
    std::size_t n_min;
    if (swept_bw_hz > 0.0) {
        n_min = static_cast<std::size_t>(std::ceil(oversample * swept_bw_hz * duration_T));
        n_min = std::max<std::size_t>(n_min, 256);
    } else {
        // Unmodulated waveform: no bandwidth to resolve, fixed fallback size.
        n_min = static_cast<std::size_t>(
            std::max(oversample * 64.0, 256.0));
        g.degenerate_fallback = true;
    }
    g.num_samples = next_pow2(n_min);
    g.dt = duration_T / static_cast<double>(g.num_samples);
    g.t0 = -0.5 * duration_T;
    return g;
}

inline double db10(double power_ratio, double floor_db = -300.0) {
    if (!(power_ratio > 0.0)) return floor_db;
    return std::max(10.0 * std::log10(power_ratio), floor_db);
}

}  // namespace mtsfm
