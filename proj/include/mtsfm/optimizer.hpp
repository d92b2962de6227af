// optimizer.hpp - weighted multi-objective design of a waveform family:
// minimize F = sum_p w_p ISR_p/ISR_p0 + sum_{p<q} w_pq A_pq/A_pq0 over the
// P stacked modulation-index vectors, subject to the per-member two-sided
// RMS-bandwidth band (1-delta) beta0^2 <= beta^2 <= (1+delta) beta0^2.
//
// Solver: quasi-Newton (BFGS) line search on a merit function F + quadratic
// penalty for the band, with an exact radial feasibility restoration after
// every trial step (beta^2 is a homogeneous quadratic of the indices, so
// scaling a member's index block lands exactly on the violated bound).
// Accepted iterates are therefore always feasible and the accepted-F
// sequence is non-increasing. The ISR mainlobe edge tau_m is frozen at its
// initial value per member during the run and re-detected only for final
// reporting, keeping the objective smooth.
//
// Everything is evaluated sequentially in a fixed order; results do not
// depend on any thread count.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtsfm/analysis.hpp"
#include "mtsfm/core.hpp"
#include "mtsfm/synthesis.hpp"

namespace mtsfm {

struct OptimizerSettings {
    int max_iterations = 300;
    double f_rel_tol = 1e-6;        // stop when F improves less than this ...
    int stall_window = 5;           // ... over this many iterations
    double fd_step = 1e-4;          // central-difference step per index
    double constraint_tol_rel = 1e-6;  // feasibility tolerance, x beta0^2
    int max_backtracks = 30;
    int restarts = 1;               // multi-start count
    double oversample = 16.0;
    double null_threshold_db = -15.0;
};

enum class WeightPreset { Equal, CcfHeavy, AcfHeavy };

// Raw (unnormalized) weights for the named emphasis cases: the heavy side
// gets 10x before everything is normalized to sum to 1.
inline void weight_preset(WeightPreset preset, std::size_t members,
                          std::vector<double>& weights_isr, std::vector<double>& weights_ccf) {
    const std::size_t pairs = members * (members - 1) / 2;
    double wi = 1.0, wc = 1.0;
    if (preset == WeightPreset::CcfHeavy) wc = 10.0;
    if (preset == WeightPreset::AcfHeavy) wi = 10.0;
    weights_isr.assign(members, wi);
    weights_ccf.assign(pairs, wc);
}

namespace detail {

// Re-initialization recipe retained so multi-start can redraw members.
struct FamilyInitRecipe {
    std::size_t members = 0;
    std::size_t harmonics = 0;
    double duration_T = 0.0;
    double target_tbp = 0.0;
    Symmetry symmetry = Symmetry::Even;
    TaperSpec taper;
    InitWeighting weighting = InitWeighting::OneOverK;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

struct FamilyDesignProblem {
    std::vector<WaveformParams> members;  // share T, K, symmetry, taper
    std::vector<double> weights_isr;      // P entries, normalized with weights_ccf to sum 1
    std::vector<double> weights_ccf;      // P(P-1)/2 entries, pair order (0,1),(0,2),...,(1,2),...
    double delta = 0.2;                   // in (0, 1]
    std::uint64_t seed = 0;
    OptimizerSettings settings;

    // caches filled by make_family_problem
    SamplingGrid grid;
    PhaseBasis basis;
    std::vector<double> beta0_sq;      // per member
    std::vector<double> tau_m0;        // initial first-null delays
    std::vector<double> width_lo;      // accepted null-to-null width band
    std::vector<double> width_hi;      //   [2 tau_m0 / sqrt(1+delta), 2 tau_m0 / sqrt(1-delta)]
    std::vector<double> isr0;          // objective denominators
    std::vector<double> ccf_area0;     // pair denominators
    std::optional<detail::FamilyInitRecipe> init_recipe;

    std::size_t member_count() const { return members.size(); }
    std::size_t pair_count() const { return members.size() * (members.size() - 1) / 2; }
    std::size_t dim() const { return members.size() * members.front().indices.size(); }
};

struct MemberResiduals {
    double lower = 0.0;  // (1-delta) beta0^2 - beta^2   (<= 0 feasible)
    double upper = 0.0;  // beta^2 - (1+delta) beta0^2   (<= 0 feasible)
};

struct FamilyEval {
    std::vector<double> isr;        // live-null ISR per member
    std::vector<double> ccf_area;   // raw pair areas
    std::vector<double> isr_norm;   // ISR_p / ISR_p0
    std::vector<double> ccf_norm;   // A_pq / A_pq0
    std::vector<double> null_width; // re-detected null-to-null widths (2 tau_m)
    double objective = 0.0;         // F
};

namespace detail {

inline std::vector<double> member_block(const std::vector<double>& x, std::size_t p,
                                        std::size_t k) {
    return std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(p * k),
                               x.begin() + static_cast<std::ptrdiff_t>((p + 1) * k));
}

// Correlation built from cached forward spectra; identical sample-for-sample
// to ccf_numeric (same transforms, same order of operations).
inline CorrelationResult corr_from_spectra(const std::vector<cplx>& sa,
                                           const std::vector<cplx>& sb, std::size_t n,
                                           double dt, double duration_T,
                                           CorrelationKind kind) {
    const std::size_t len = sa.size();
    std::vector<cplx> prod(len);
    for (std::size_t k = 0; k < len; ++k) prod[k] = sa[k] * std::conj(sb[k]);
    prod = ifft(std::move(prod));
    CorrelationResult r;
    r.kind = kind;
    r.duration_T = duration_T;
    r.delays.resize(2 * n + 1);
    r.values.resize(2 * n + 1);
    const int ni = static_cast<int>(n);
    for (int lag = -ni; lag <= ni; ++lag) {
        const std::size_t i = static_cast<std::size_t>(lag + ni);
        r.delays[i] = static_cast<double>(lag) * dt;
        if (lag == -ni || lag == ni) {
            r.values[i] = cplx{0.0, 0.0};
        } else {
            const std::size_t bin = static_cast<std::size_t>(((-lag) % static_cast<int>(len) +
                                                              static_cast<int>(len)) %
                                                             static_cast<int>(len));
            r.values[i] = prod[bin] * dt;
        }
    }
    return r;
}

inline std::vector<cplx> padded_spectrum(const SampledWaveform& w) {
    std::vector<cplx> buf(next_pow2(2 * w.samples.size()), cplx{0.0, 0.0});
    std::copy(w.samples.begin(), w.samples.end(), buf.begin());
    return fft(std::move(buf));
}

}  // namespace detail

// Raw metrics and the scalarized objective F for a candidate stacked index
// vector. Uses the problem's cached grid, basis, frozen nulls and
// denominators.
inline FamilyEval evaluate_family(const FamilyDesignProblem& problem,
                                  const std::vector<double>& candidate) {
    const std::size_t p_count = problem.member_count();
    const std::size_t k = problem.members.front().indices.size();
    if (candidate.size() != p_count * k)
        throw std::invalid_argument("evaluate_family: candidate size mismatch");

    FamilyEval ev;
    ev.isr.resize(p_count);
    ev.isr_norm.resize(p_count);
    ev.null_width.resize(p_count);

    std::vector<std::vector<cplx>> spectra(p_count);
    std::vector<SampledWaveform> waves(p_count);
    for (std::size_t p = 0; p < p_count; ++p) {
        waves[p] = synthesize(problem.basis, detail::member_block(candidate, p, k),
                              problem.members[p].a0);
        spectra[p] = detail::padded_spectrum(waves[p]);
    }
    const std::size_t n = problem.grid.num_samples;
    const double dt = problem.grid.dt;
    const double dur = problem.grid.duration();

    for (std::size_t p = 0; p < p_count; ++p) {
        CorrelationResult acf = detail::corr_from_spectra(spectra[p], spectra[p], n, dt, dur,
                                                          CorrelationKind::Auto);
        // Live-null ISR. A frozen mainlobe band looks smoother but is
        // exploitable: mass parked just inside the frozen edge (or a lobe
        // sharpened far inside it) improves the frozen ratio while the true
        // null walks away. Re-detecting the null couples the denominator to
        // the lobe; the optimizer's acceptance rule separately confines the
        // width itself to the TBP-preservation band, which blocks the
        // opposite exploit of growing the lobe to dilute the ratio.
        IsrResult isr = isr_exact(acf, problem.settings.null_threshold_db);
        if (isr.degenerate)
            throw std::domain_error("evaluate_family: ACF lost its first null");
        ev.isr[p] = isr.isr;
        ev.isr_norm[p] = ev.isr[p] / problem.isr0[p];
        ev.null_width[p] = 2.0 * isr.tau_m;
    }
    std::size_t pair = 0;
    ev.ccf_area.resize(problem.pair_count());
    ev.ccf_norm.resize(problem.pair_count());
    for (std::size_t p = 0; p < p_count; ++p) {
        for (std::size_t q = p + 1; q < p_count; ++q, ++pair) {
            CorrelationResult ccf = detail::corr_from_spectra(spectra[p], spectra[q], n, dt, dur,
                                                              CorrelationKind::Cross);
            ev.ccf_area[pair] = ccf_area(ccf);
            ev.ccf_norm[pair] = ev.ccf_area[pair] / problem.ccf_area0[pair];
        }
    }

    double f = 0.0;
    for (std::size_t p = 0; p < p_count; ++p) f += problem.weights_isr[p] * ev.isr_norm[p];
    for (std::size_t i = 0; i < ev.ccf_norm.size(); ++i)
        f += problem.weights_ccf[i] * ev.ccf_norm[i];
    ev.objective = f;
    return ev;
}

inline double family_objective(const FamilyDesignProblem& problem,
                               const std::vector<double>& candidate) {
    return evaluate_family(problem, candidate).objective;
}

// Two-sided RMS-bandwidth residuals per member; <= 0 means feasible.
inline std::vector<MemberResiduals> constraint_residuals(const FamilyDesignProblem& problem,
                                                         const std::vector<double>& candidate) {
    const std::size_t p_count = problem.member_count();
    const std::size_t k = problem.members.front().indices.size();
    std::vector<MemberResiduals> out(p_count);
    for (std::size_t p = 0; p < p_count; ++p) {
        WaveformParams tmp = problem.members[p];
        tmp.a0 = 0.0;
        tmp.indices = detail::member_block(candidate, p, k);
        const double beta_sq = rms_bandwidth_sq(tmp);
        out[p].lower = (1.0 - problem.delta) * problem.beta0_sq[p] - beta_sq;
        out[p].upper = beta_sq - (1.0 + problem.delta) * problem.beta0_sq[p];
    }
    return out;
}

// Builds the cached evaluation context: shared grid and trig basis, initial
// metrics, frozen nulls and the objective denominators. Throws if any
// denominator would be zero (degenerate member).
inline FamilyDesignProblem make_family_problem(std::vector<WaveformParams> members,
                                               std::vector<double> weights_isr,
                                               std::vector<double> weights_ccf, double delta,
                                               std::uint64_t seed,
                                               OptimizerSettings settings = {}) {
    if (members.size() < 2)
        throw std::invalid_argument("family: need at least two members");
    const std::size_t p_count = members.size();
    const std::size_t k = members.front().indices.size();
    for (const WaveformParams& m : members) {
        m.validate();
        if (m.indices.size() != k || m.duration_T != members.front().duration_T ||
            m.symmetry != members.front().symmetry)
            throw std::invalid_argument("family: members must share T, K and symmetry");
    }
    if (!(delta > 0.0 && delta <= 1.0))
        throw std::invalid_argument("family: delta must lie in (0, 1]");
    if (weights_isr.size() != p_count || weights_ccf.size() != p_count * (p_count - 1) / 2)
        throw std::invalid_argument("family: weight vector sizes must be P and P(P-1)/2");
    double wsum = 0.0;
    for (double w : weights_isr) {
        if (w < 0.0) throw std::invalid_argument("family: weights must be nonnegative");
        wsum += w;
    }
    for (double w : weights_ccf) {
        if (w < 0.0) throw std::invalid_argument("family: weights must be nonnegative");
        wsum += w;
    }
    if (!(wsum > 0.0)) throw std::invalid_argument("family: weights must not all be zero");

    FamilyDesignProblem prob;
    prob.members = std::move(members);
    prob.weights_isr = std::move(weights_isr);
    prob.weights_ccf = std::move(weights_ccf);
    for (double& w : prob.weights_isr) w /= wsum;
    for (double& w : prob.weights_ccf) w /= wsum;
    prob.delta = delta;
    prob.seed = seed;
    prob.settings = settings;

    // shared grid from the widest initial sweep, with margin for growth
    // inside the constraint band
    double df_max = 0.0;
    for (const WaveformParams& m : prob.members)
        df_max = std::max(df_max, estimate_swept_bandwidth(m));
    prob.grid = make_grid_for_bandwidth(prob.members.front().duration_T, 1.25 * df_max,
                                        settings.oversample);
    prob.basis = PhaseBasis::build(prob.members.front(), prob.grid);

    prob.beta0_sq.resize(p_count);
    prob.tau_m0.resize(p_count);
    prob.isr0.resize(p_count);
    prob.width_lo.resize(p_count);
    prob.width_hi.resize(p_count);
    std::vector<std::vector<cplx>> spectra(p_count);
    const std::size_t n = prob.grid.num_samples;
    const double dt = prob.grid.dt;
    const double dur = prob.grid.duration();
    for (std::size_t p = 0; p < p_count; ++p) {
        WaveformParams zero_a0 = prob.members[p];
        zero_a0.a0 = 0.0;
        prob.beta0_sq[p] = rms_bandwidth_sq(zero_a0);
        SampledWaveform w =
            synthesize(prob.basis, prob.members[p].indices, prob.members[p].a0);
        spectra[p] = detail::padded_spectrum(w);
        CorrelationResult acf = detail::corr_from_spectra(spectra[p], spectra[p], n, dt, dur,
                                                          CorrelationKind::Auto);
        IsrResult isr = isr_exact(acf, settings.null_threshold_db);
        if (isr.degenerate || !(isr.isr > 0.0))
            throw std::invalid_argument(
                "family: member " + std::to_string(p) +
                " has a degenerate initial ACF (zero ISR denominator)");
        prob.tau_m0[p] = isr.tau_m;
        prob.isr0[p] = isr.isr;
        const double width0 = 2.0 * isr.tau_m;
        prob.width_lo[p] = width0 / std::sqrt(1.0 + delta);
        prob.width_hi[p] = width0 / std::sqrt(1.0 - delta);
    }
    prob.ccf_area0.resize(prob.pair_count());
    std::size_t pair = 0;
    for (std::size_t p = 0; p < p_count; ++p) {
        for (std::size_t q = p + 1; q < p_count; ++q, ++pair) {
            CorrelationResult ccf = detail::corr_from_spectra(spectra[p], spectra[q], n, dt, dur,
                                                              CorrelationKind::Cross);
            prob.ccf_area0[pair] = ccf_area(ccf);
            if (!(prob.ccf_area0[pair] > 0.0))
                throw std::invalid_argument("family: zero initial CCF area denominator");
        }
    }
    return prob;
}

// Seeded family construction: P independent Gaussian draws, each scaled to
// the target TBP. Deterministic for a fixed seed.
inline FamilyDesignProblem init_family(std::size_t members, std::size_t harmonics,
                                       double duration_T, double target_tbp,
                                       std::uint64_t seed,
                                       WeightPreset preset = WeightPreset::Equal,
                                       double delta = 0.2,
                                       TaperSpec taper = TaperSpec::tukey(0.05),
                                       Symmetry symmetry = Symmetry::Even,
                                       InitWeighting weighting = InitWeighting::OneOverK,
                                       OptimizerSettings settings = {}) {
    if (members < 2) throw std::invalid_argument("init_family: need P >= 2");
    if (harmonics < 1) throw std::invalid_argument("init_family: need K >= 1");
    std::vector<WaveformParams> m(members);
    for (std::size_t p = 0; p < members; ++p)
        m[p] = make_random_waveform(harmonics, duration_T, symmetry, target_tbp, taper,
                                    detail::mix_seed(seed, p), weighting);
    std::vector<double> wi, wc;
    weight_preset(preset, members, wi, wc);
    FamilyDesignProblem prob =
        make_family_problem(std::move(m), std::move(wi), std::move(wc), delta, seed, settings);
    detail::FamilyInitRecipe recipe;
    recipe.members = members;
    recipe.harmonics = harmonics;
    recipe.duration_T = duration_T;
    recipe.target_tbp = target_tbp;
    recipe.symmetry = symmetry;
    recipe.taper = taper;
    recipe.weighting = weighting;
    prob.init_recipe = recipe;
    return prob;
}

struct IterationRecord {
    int iteration = 0;
    double objective = 0.0;
    std::vector<double> isr_norm;
    std::vector<double> ccf_norm;
    double max_residual_rel = 0.0;  // max residual / beta0^2 (negative when interior)
    double step_norm = 0.0;
    std::size_t fevals = 0;  // cumulative objective evaluations
    bool projected = false;  // step needed feasibility restoration
};

struct OptimizationTrace {
    std::vector<IterationRecord> iterations;  // starts with the iterate-0 row
    bool converged = false;                   // false only when the cap stopped the run
    std::size_t total_fevals = 0;
    int restart_index = 0;  // which restart produced the reported solution

    std::vector<std::vector<double>> initial_indices;
    std::vector<std::vector<double>> final_indices;
    double initial_objective = 1.0;
    double final_objective = 1.0;

    // final reporting (nulls re-detected, not the frozen ones)
    std::vector<double> isr_initial, isr_final;
    std::vector<double> tau_m_initial, tau_m_final;
    std::vector<double> ccf_area_initial, ccf_area_final;
    std::vector<double> beta_sq_initial, beta_sq_final;
    std::vector<MemberResiduals> final_residuals;
};

namespace detail {

// Exact radial restoration onto the feasible band: beta^2 is homogeneous of
// degree 2 in the block, so one scaling lands on the violated bound.
// Returns true if any member needed restoring.
inline bool project_feasible(const FamilyDesignProblem& prob, std::vector<double>& x) {
    const std::size_t k = prob.members.front().indices.size();
    bool touched = false;
    for (std::size_t p = 0; p < prob.member_count(); ++p) {
        double s = 0.0;
        const double T = prob.members[p].duration_T;
        for (std::size_t i = 0; i < k; ++i) {
            const double kk = static_cast<double>(i + 1);
            const double v = x[p * k + i];
            s += kk * kk * v * v;
        }
        const double beta_sq = 2.0 * pi * pi / (T * T) * s;
        const double lo = (1.0 - prob.delta) * prob.beta0_sq[p];
        const double hi = (1.0 + prob.delta) * prob.beta0_sq[p];
        if (!(beta_sq > 0.0)) continue;  // cannot rescale an all-zero block
        double scale = 1.0;
        if (beta_sq > hi) scale = std::sqrt(hi / beta_sq);
        else if (beta_sq < lo) scale = std::sqrt(lo / beta_sq);
        if (scale != 1.0) {
            for (std::size_t i = 0; i < k; ++i) x[p * k + i] *= scale;
            touched = true;
        }
    }
    return touched;
}

inline double max_residual_rel(const FamilyDesignProblem& prob, const std::vector<double>& x) {
    double worst = -1e300;
    std::vector<MemberResiduals> res = constraint_residuals(prob, x);
    for (std::size_t p = 0; p < res.size(); ++p) {
        worst = std::max(worst, res[p].lower / prob.beta0_sq[p]);
        worst = std::max(worst, res[p].upper / prob.beta0_sq[p]);
    }
    return worst;
}

// Removes the outward normal component of the step for members sitting on an
// active bound. beta^2 is an ellipsoid (k^2-weighted), so without this the
// radial restoration would convert the normal part of the step into an O(t)
// tangential drift with no descent guarantee.
inline void project_direction_tangent(const FamilyDesignProblem& prob,
                                      const std::vector<double>& x, std::vector<double>& d) {
    const std::size_t k = prob.members.front().indices.size();
    std::vector<MemberResiduals> res = constraint_residuals(prob, x);
    for (std::size_t p = 0; p < prob.member_count(); ++p) {
        const double active_tol = 1e-9 * prob.beta0_sq[p];
        const bool at_upper = res[p].upper > -active_tol;
        const bool at_lower = res[p].lower > -active_tol;
        if (!at_upper && !at_lower) continue;
        // constraint normal within the block: n_i ~ k_i^2 x_i
        double dn = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double kk = static_cast<double>(i + 1);
            const double n_i = kk * kk * x[p * k + i];
            dn += d[p * k + i] * n_i;
            nn += n_i * n_i;
        }
        if (!(nn > 0.0)) continue;
        if ((at_upper && dn > 0.0) || (at_lower && dn < 0.0)) {
            const double scale = dn / nn;
            for (std::size_t i = 0; i < k; ++i) {
                const double kk = static_cast<double>(i + 1);
                d[p * k + i] -= scale * kk * kk * x[p * k + i];
            }
        }
    }
}

// Merit = F + rho * sum of squared relative violations (zero inside the band).
inline double merit_value(const FamilyDesignProblem& prob, const std::vector<double>& x,
                          double rho, std::size_t& fevals) {
    ++fevals;
    const double f = family_objective(prob, x);
    double pen = 0.0;
    std::vector<MemberResiduals> res = constraint_residuals(prob, x);
    for (std::size_t p = 0; p < res.size(); ++p) {
        const double lo = std::max(0.0, res[p].lower / prob.beta0_sq[p]);
        const double hi = std::max(0.0, res[p].upper / prob.beta0_sq[p]);
        pen += lo * lo + hi * hi;
    }
    return f + rho * pen;
}

inline std::vector<double> merit_gradient(const FamilyDesignProblem& prob,
                                          std::vector<double> x, double rho, double h,
                                          std::size_t& fevals) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        x[i] = xi + h;
        const double fp = merit_value(prob, x, rho, fevals);
        x[i] = xi - h;
        const double fm = merit_value(prob, x, rho, fevals);
        x[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline OptimizationTrace optimize_single(const FamilyDesignProblem& prob) {
    const OptimizerSettings& s = prob.settings;
    const std::size_t n = prob.dim();
    const std::size_t k = prob.members.front().indices.size();

    std::vector<double> x;
    x.reserve(n);
    for (const WaveformParams& m : prob.members)
        x.insert(x.end(), m.indices.begin(), m.indices.end());

    OptimizationTrace trace;
    for (std::size_t p = 0; p < prob.member_count(); ++p)
        trace.initial_indices.push_back(prob.members[p].indices);

    std::size_t fevals = 0;
    double rho = 1.0;
    FamilyEval ev = evaluate_family(prob, x);
    ++fevals;

    IterationRecord rec0;
    rec0.iteration = 0;
    rec0.objective = ev.objective;
    rec0.isr_norm = ev.isr_norm;
    rec0.ccf_norm = ev.ccf_norm;
    rec0.max_residual_rel = max_residual_rel(prob, x);
    rec0.fevals = fevals;
    trace.iterations.push_back(rec0);
    trace.initial_objective = ev.objective;

    // dense inverse-Hessian approximation
    std::vector<double> hmat(n * n, 0.0);
    auto reset_h = [&]() {
        std::fill(hmat.begin(), hmat.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) hmat[i * n + i] = 1.0;
    };
    reset_h();

    std::vector<double> g = merit_gradient(prob, x, rho, s.fd_step, fevals);
    std::vector<double> f_history{ev.objective};
    bool converged = false;

    for (int iter = 1; iter <= s.max_iterations; ++iter) {
        // d = -H g
        std::vector<double> d(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += hmat[i * n + j] * g[j];
            d[i] = -acc;
        }
        project_direction_tangent(prob, x, d);
        double gd = 0.0;
        for (std::size_t i = 0; i < n; ++i) gd += g[i] * d[i];
        bool fell_back = false;
        auto fall_back_to_gradient = [&]() {
            reset_h();
            for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
            project_direction_tangent(prob, x, d);
            gd = 0.0;
            for (std::size_t i = 0; i < n; ++i) gd += g[i] * d[i];
            fell_back = true;
        };
        if (!(gd < 0.0)) fall_back_to_gradient();
        if (!(gd < 0.0)) {
            converged = true;  // tangentially stationary
            break;
        }

        bool accepted = false;
        bool needed_projection = false;
        std::vector<double> x_new;
        FamilyEval ev_new;
        auto line_search = [&]() {
            double t = 1.0;
            for (int back = 0; back < s.max_backtracks; ++back, t *= 0.5) {
                std::vector<double> trial(n);
                for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + t * d[i];
                const bool projected = project_feasible(prob, trial);
                if (max_residual_rel(prob, trial) > s.constraint_tol_rel) continue;
                FamilyEval cand;
                try {
                    cand = evaluate_family(prob, trial);
                } catch (const std::exception&) {
                    ++fevals;
                    continue;  // evaluation failure: reject and shrink the step
                }
                ++fevals;
                if (!std::isfinite(cand.objective)) continue;
                // TBP preservation: every accepted iterate keeps each
                // null-to-null width inside the delta-implied band
                bool width_ok = true;
                for (std::size_t p = 0; p < prob.member_count(); ++p) {
                    if (cand.null_width[p] < prob.width_lo[p] ||
                        cand.null_width[p] > prob.width_hi[p]) {
                        width_ok = false;
                        break;
                    }
                }
                if (!width_ok) continue;
                if (cand.objective <
                    ev.objective - 1e-14 * std::max(1.0, std::abs(ev.objective))) {
                    x_new = std::move(trial);
                    ev_new = std::move(cand);
                    accepted = true;
                    needed_projection = projected;
                    return;
                }
            }
        };
        line_search();
        if (!accepted && !fell_back) {
            // quasi-Newton direction exhausted; retry along the raw gradient
            fall_back_to_gradient();
            if (gd < 0.0) line_search();
        }
        if (!accepted) {
            converged = true;  // no descent step exists at the smallest scale
            break;
        }
        // projection keeps residuals at roundoff; escalate only if a real
        // violation ever survives acceptance
        if (needed_projection && max_residual_rel(prob, x_new) > s.constraint_tol_rel)
            rho = std::min(rho * 5.0, 1e8);

        std::vector<double> g_new = merit_gradient(prob, x_new, rho, s.fd_step, fevals);

        // BFGS inverse update with curvature guard
        std::vector<double> sv(n), yv(n);
        double sy = 0.0, step_norm_sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sv[i] = x_new[i] - x[i];
            yv[i] = g_new[i] - g[i];
            sy += sv[i] * yv[i];
            step_norm_sq += sv[i] * sv[i];
        }
        if (sy > 1e-12) {
            const double rho_b = 1.0 / sy;
            std::vector<double> hy(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += hmat[i * n + j] * yv[j];
                hy[i] = acc;
            }
            double yhy = 0.0;
            for (std::size_t i = 0; i < n; ++i) yhy += yv[i] * hy[i];
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    hmat[i * n + j] += (sy + yhy) * rho_b * rho_b * sv[i] * sv[j] -
                                       rho_b * (hy[i] * sv[j] + sv[i] * hy[j]);
                }
            }
        }

        x = std::move(x_new);
        ev = std::move(ev_new);
        g = std::move(g_new);

        IterationRecord rec;
        rec.iteration = iter;
        rec.objective = ev.objective;
        rec.isr_norm = ev.isr_norm;
        rec.ccf_norm = ev.ccf_norm;
        rec.max_residual_rel = max_residual_rel(prob, x);
        rec.step_norm = std::sqrt(step_norm_sq);
        rec.fevals = fevals;
        rec.projected = needed_projection;
        trace.iterations.push_back(rec);

        f_history.push_back(ev.objective);
        if (static_cast<int>(f_history.size()) > s.stall_window) {
            const double past = f_history[f_history.size() - 1 -
                                          static_cast<std::size_t>(s.stall_window)];
            if (past - ev.objective < s.f_rel_tol * std::max(std::abs(ev.objective), 1e-12)) {
                converged = true;
                break;
            }
        }
    }

    trace.converged = converged;
    trace.total_fevals = fevals;
    trace.final_objective = ev.objective;
    for (std::size_t p = 0; p < prob.member_count(); ++p)
        trace.final_indices.push_back(member_block(x, p, k));

    // final reporting with re-detected nulls
    const std::size_t ns = prob.grid.num_samples;
    const double dt = prob.grid.dt;
    const double dur = prob.grid.duration();
    std::vector<std::vector<cplx>> spectra(prob.member_count());
    for (std::size_t p = 0; p < prob.member_count(); ++p) {
        SampledWaveform w = synthesize(prob.basis, trace.final_indices[p], prob.members[p].a0);
        spectra[p] = padded_spectrum(w);
        CorrelationResult acf =
            corr_from_spectra(spectra[p], spectra[p], ns, dt, dur, CorrelationKind::Auto);
        IsrResult isr = isr_exact(acf, prob.settings.null_threshold_db);
        trace.isr_final.push_back(isr.isr);
        trace.tau_m_final.push_back(isr.tau_m);
        WaveformParams tmp = prob.members[p];
        tmp.a0 = 0.0;
        tmp.indices = trace.final_indices[p];
        trace.beta_sq_final.push_back(rms_bandwidth_sq(tmp));
        trace.isr_initial.push_back(prob.isr0[p]);
        trace.tau_m_initial.push_back(prob.tau_m0[p]);
        trace.beta_sq_initial.push_back(prob.beta0_sq[p]);
    }
    std::size_t pair = 0;
    for (std::size_t p = 0; p < prob.member_count(); ++p) {
        for (std::size_t q = p + 1; q < prob.member_count(); ++q, ++pair) {
            CorrelationResult ccf =
                corr_from_spectra(spectra[p], spectra[q], ns, dt, dur, CorrelationKind::Cross);
            trace.ccf_area_final.push_back(ccf_area(ccf));
            trace.ccf_area_initial.push_back(prob.ccf_area0[pair]);
        }
    }
    trace.final_residuals = constraint_residuals(prob, x);
    return trace;
}

}  // namespace detail

// Runs the constrained minimization; with settings.restarts > 1 the family
// is redrawn from perturbed seeds (init_family problems only) and the best
// final F is reported.
inline OptimizationTrace optimize_family(const FamilyDesignProblem& problem) {
    const int restarts = std::max(1, problem.settings.restarts);
    if (restarts == 1) return detail::optimize_single(problem);
    if (!problem.init_recipe)
        throw std::invalid_argument(
            "optimize_family: restarts > 1 requires an init_family-built problem");

    OptimizationTrace best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        FamilyDesignProblem p_r = problem;
        if (r > 0) {
            const detail::FamilyInitRecipe& rc = *problem.init_recipe;
            OptimizerSettings single = problem.settings;
            single.restarts = 1;
            std::vector<WaveformParams> m(rc.members);
            const std::uint64_t seed_r = detail::mix_seed(problem.seed, 1000 + static_cast<std::uint64_t>(r));
            for (std::size_t p = 0; p < rc.members; ++p)
                m[p] = make_random_waveform(rc.harmonics, rc.duration_T, rc.symmetry,
                                            rc.target_tbp, rc.taper, detail::mix_seed(seed_r, p),
                                            rc.weighting);
            p_r = make_family_problem(std::move(m), problem.weights_isr, problem.weights_ccf,
                                      problem.delta, seed_r, single);
        }
        OptimizationTrace t = detail::optimize_single(p_r);
        t.restart_index = r;
        if (!have || t.final_objective < best.final_objective) {
            best = std::move(t);
            have = true;
        }
    }
    return best;
}

}  // namespace mtsfm
