// White-box evaluation layer.  Unlike the optimizer, this module is allowed
// full knowledge of the spectrum: gap scans, adiabatic error, ground-state
// probability, runtime calibration and ensemble performance ratios.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cloaqc/qsim.hpp"

namespace cloaqc {

// ---------------------------------------------------------------------------
// Spectral gap

struct GapScan {
    std::vector<double> s;
    std::vector<double> delta;
    double delta_min = 0.0;
    double s_star = 0.0; // argmin
};

namespace detail {

inline double gap_at(const AdiabaticHamiltonian& h, const ScheduleFn& schedule, double s)
{
    Spectrum sp = instantaneous_spectrum(hamiltonian_at(h, schedule, s), 2);
    const double gap = sp.values[1] - sp.values[0];
    return gap < kDegeneracyTol ? 0.0 : gap;
}

} // namespace detail

inline GapScan gap_scan(const AdiabaticHamiltonian& h, const ScheduleFn& schedule, int grid_size = 201)
{
    if (grid_size < 101) throw std::invalid_argument("gap_scan: grid_size must be >= 101");
    GapScan scan;
    scan.s.resize(grid_size);
    scan.delta.resize(grid_size);
    int arg = 0;
    for (int k = 0; k < grid_size; ++k) {
        const double s = static_cast<double>(k) / (grid_size - 1);
        scan.s[k] = s;
        scan.delta[k] = detail::gap_at(h, schedule, s);
        if (scan.delta[k] < scan.delta[arg]) arg = k;
    }
    // Golden-section refinement on the coarse argmin bracket, to 1e-6 in s.
    double a = scan.s[std::max(0, arg - 1)];
    double b = scan.s[std::min(grid_size - 1, arg + 1)];
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = detail::gap_at(h, schedule, x1), f2 = detail::gap_at(h, schedule, x2);
    while (b - a > 1e-6) {
        if (f1 <= f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - phi * (b - a);
            f1 = detail::gap_at(h, schedule, x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + phi * (b - a);
            f2 = detail::gap_at(h, schedule, x2);
        }
    }
    const double refined = std::min(f1, f2);
    // Refinement never reports more than the coarse minimum.
    if (refined <= scan.delta[arg]) {
        scan.delta_min = refined;
        scan.s_star = f1 <= f2 ? x1 : x2;
    } else {
        scan.delta_min = scan.delta[arg];
        scan.s_star = scan.s[arg];
    }
    return scan;
}

// ---------------------------------------------------------------------------
// Adiabatic error and ground-state probability

inline QuantumState ground_state_of(const Operator& hp)
{
    Spectrum sp = instantaneous_spectrum(hp, 2);
    if (sp.values[1] - sp.values[0] < kDegeneracyTol)
        throw std::invalid_argument("degenerate ground manifold");
    return QuantumState{hp.n, sp.vectors.col(0)};
}

inline double adiabatic_error(const QuantumState& final, const Operator& hp)
{
    return trace_norm_distance(ground_state_of(hp), final);
}

// Exact |<Phi_0|psi(T)>|^2.
inline double ground_state_probability(const QuantumState& final, const Operator& hp)
{
    return std::norm(ground_state_of(hp).amplitudes.dot(final.amplitudes));
}

// Sampled variant for cross-checks against the measurement pipeline; valid
// for diagonal H_P with a unique ground basis state.
inline double sampled_ground_state_probability(const QuantumState& final, long ground_index,
                                               long M, std::uint64_t seed)
{
    const auto samples = sample_measurements(final, M, seed);
    long hits = 0;
    for (long z : samples)
        if (z == ground_index) ++hits;
    return static_cast<double>(hits) / static_cast<double>(M);
}

// ---------------------------------------------------------------------------
// Runtime calibration

// Smallest T on a geometric scan of [0.1/Delta_min, 50/Delta_min] where
// P(E_0) under the given schedule first crosses target_p from below, then
// bisected to |P - target_p| < tol.  P(E_0) versus T oscillates, so the FIRST
// upward crossing is taken.
inline double calibrate_runtime(const AdiabaticHamiltonian& h, const ScheduleFn& schedule,
                                const Operator& hp, const QuantumState& initial,
                                double delta_min, double target_p, double tol = 0.01,
                                double steps_per_unit = 2000.0, int max_norm_grid = 101)
{
    if (!(target_p > 0.0 && target_p < 1.0))
        throw std::invalid_argument("calibrate_runtime: target_p must be in (0,1)");
    if (delta_min <= 0.0) throw std::invalid_argument("calibrate_runtime: delta_min must be > 0");

    const double max_norm = max_schedule_norm(h, schedule, max_norm_grid);
    auto probability_at = [&](double T) {
        EvolutionConfig cfg;
        cfg.total_time = T;
        cfg.steps = default_steps(T, max_norm, steps_per_unit);
        QuantumState final = evolve(h, schedule, cfg, initial);
        return ground_state_probability(final, hp);
    };

    const double t_lo = 0.1 / delta_min, t_hi = 50.0 / delta_min;
    const double ratio = 1.25;
    double prev_t = t_lo;
    double prev_p = probability_at(t_lo);
    if (prev_p >= target_p)
        throw std::runtime_error("calibrate_runtime: target already exceeded at the scan floor");
    double lo = 0.0, hi = 0.0;
    for (double t = t_lo * ratio; t <= t_hi * ratio; t *= ratio) {
        const double p = probability_at(std::min(t, t_hi));
        if (prev_p < target_p && p >= target_p) {
            lo = prev_t;
            hi = std::min(t, t_hi);
            break;
        }
        prev_t = std::min(t, t_hi);
        prev_p = p;
        if (prev_t >= t_hi) break;
    }
    if (hi == 0.0) throw std::runtime_error("calibrate_runtime: target unreachable within scan range");

    double p_mid = 0.0, mid = 0.5 * (lo + hi);
    for (int it = 0; it < 60; ++it) {
        mid = 0.5 * (lo + hi);
        p_mid = probability_at(mid);
        if (std::abs(p_mid - target_p) < tol) return mid;
        if (p_mid < target_p) lo = mid;
        else hi = mid;
    }
    throw std::runtime_error("calibrate_runtime: bisection failed to reach tolerance");
}

// ---------------------------------------------------------------------------
// Ensemble performance

struct RealizationOutcome {
    std::uint64_t seed = 0;
    double d = 0.0;         // adiabatic error of the optimized schedule
    double delta_min = 0.0; // minimum gap of the optimized schedule
    double p_ground = 0.0;
};

struct PerformanceReport {
    double d_cloaqc = 0.0;   // median D over realizations
    double d_lin = 0.0;
    double delta_cloaqc = 0.0; // gap of the median-D realization
    double delta_lin = 0.0;
    double alpha_d = 0.0;
    double alpha_delta = 0.0;
    double p_ground_median = 0.0;
    double d_iqr_lo = 0.0, d_iqr_hi = 0.0;
    int median_realization = 0; // index of the realization that attains the median
};

inline double median_of(std::vector<double> v)
{
    if (v.empty()) throw std::invalid_argument("median_of: empty");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double quantile_of(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double pos = q * (v.size() - 1);
    const std::size_t k = static_cast<std::size_t>(pos);
    if (k + 1 >= v.size()) return v.back();
    const double w = pos - k;
    return (1.0 - w) * v[k] + w * v[k + 1];
}

// Ratios are computed from the realization attaining the median D; with an
// even count, the realization closest to the median from below.  Ties are
// broken by lowest realization seed.
inline PerformanceReport performance_report(const std::vector<RealizationOutcome>& realizations,
                                            double d_lin, double delta_lin)
{
    if (realizations.empty()) throw std::invalid_argument("performance_report: no realizations");
    std::vector<double> ds, ps;
    for (const auto& r : realizations) {
        ds.push_back(r.d);
        ps.push_back(r.p_ground);
    }
    PerformanceReport rep;
    rep.d_cloaqc = median_of(ds);
    rep.d_lin = d_lin;
    rep.delta_lin = delta_lin;
    rep.p_ground_median = median_of(ps);
    rep.d_iqr_lo = quantile_of(ds, 0.25);
    rep.d_iqr_hi = quantile_of(ds, 0.75);

    int best = -1;
    for (std::size_t i = 0; i < realizations.size(); ++i) {
        const double gap_to_median = std::abs(realizations[i].d - rep.d_cloaqc);
        if (best < 0 || gap_to_median < std::abs(realizations[best].d - rep.d_cloaqc) ||
            (gap_to_median == std::abs(realizations[best].d - rep.d_cloaqc) &&
             realizations[i].seed < realizations[best].seed))
            best = static_cast<int>(i);
    }
    rep.median_realization = best;
    rep.delta_cloaqc = realizations[best].delta_min;
    rep.alpha_d = d_lin > 0.0 ? rep.d_cloaqc / d_lin : 0.0;
    rep.alpha_delta = delta_lin > 0.0 ? rep.delta_cloaqc / delta_lin : 0.0;
    return rep;
}

inline nlohmann::json report_to_json(const PerformanceReport& rep,
                                     const std::vector<RealizationOutcome>& realizations)
{
    nlohmann::json j;
    j["D_cloaqc"] = rep.d_cloaqc;
    j["D_lin"] = rep.d_lin;
    j["Delta_cloaqc"] = rep.delta_cloaqc;
    j["Delta_lin"] = rep.delta_lin;
    j["alpha_D"] = rep.alpha_d;
    j["alpha_Delta"] = rep.alpha_delta;
    j["P_E0_median"] = rep.p_ground_median;
    j["D_iqr"] = {rep.d_iqr_lo, rep.d_iqr_hi};
    j["median_realization"] = rep.median_realization;
    j["realizations"] = nlohmann::json::array();
    for (const auto& r : realizations)
        j["realizations"].push_back({{"seed", r.seed}, {"D", r.d}, {"Delta_min", r.delta_min}, {"P_E0", r.p_ground}});
    return j;
}

inline void write_report_csv(const std::vector<RealizationOutcome>& realizations, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "realization,seed,D,Delta_min,P_E0\n";
    f.precision(17);
    for (std::size_t i = 0; i < realizations.size(); ++i)
        f << i << "," << realizations[i].seed << "," << realizations[i].d << ","
          << realizations[i].delta_min << "," << realizations[i].p_ground << "\n";
}

} // namespace cloaqc
