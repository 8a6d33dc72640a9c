// The closed-loop optimizer: sampled-energy surrogate objective,
// simultaneous-perturbation gradient estimate, gain sequences,
// penalty-augmented parameter updates and experiment accounting.
//
// Blackbox contract: the optimizer sees only a callable mapping
// (free parameters, seed) -> sampled energy estimate.  Spectral gaps,
// eigenvectors and the ground-state index are never visible from here; those
// quantities live in the analyzer.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cloaqc/qsim.hpp"
#include "cloaqc/rng.hpp"
#include "cloaqc/schedules.hpp"

namespace cloaqc {

struct SpsaConfig {
    // Gain scales; <= 0 requests the pilot-based tuning rule below.
    double alpha0 = 0.0;
    double beta0 = 0.0;
    double R = -1.0; // < 0 -> 0.1 * K
    double delta = 0.602;
    double zeta = 0.101;
    double lambda_ad = 0.005;
    long K = 1000;  // iteration budget
    long M = 100;   // samples per energy estimate
    std::uint64_t seed = 0;
    int pilot_evals = 20;
    double initial_step = 0.1; // desired magnitude of the first update

    void validate() const
    {
        if (!(delta > 0.5 && delta <= 1.0)) throw std::invalid_argument("SpsaConfig: delta must be in (0.5, 1]");
        if (!(zeta > 0.0 && zeta < 0.5)) throw std::invalid_argument("SpsaConfig: zeta must be in (0, 1/2)");
        if (K < 0) throw std::invalid_argument("SpsaConfig: K must be >= 0");
        if (M < 1) throw std::invalid_argument("SpsaConfig: M must be >= 1");
    }
};

inline std::pair<double, double> gains(const SpsaConfig& cfg, long k)
{
    if (k < 0) throw std::invalid_argument("gains: k must be >= 0");
    const double R = cfg.R < 0.0 ? 0.0 : cfg.R;
    return {cfg.alpha0 / std::pow(k + 1 + R, cfg.delta), cfg.beta0 / std::pow(k + 1, cfg.zeta)};
}

// (free parameters, seed, sample count) -> sampled estimate of E(Lambda).
using StochasticObjective = std::function<double(const Eigen::VectorXd&, std::uint64_t, long)>;

struct EnergyEstimate {
    double value = 0.0;
    long M = 0;
    std::vector<long> samples;
};

// Everything an energy evaluation needs.  `make_schedule` turns free
// parameters into control values for every Hamiltonian channel, so boundary
// conditions and channel ties hold at every function call by construction.
struct ProblemContext {
    AdiabaticHamiltonian ham;
    std::function<ScheduleFn(const Eigen::VectorXd&)> make_schedule;
    EvolutionConfig evolution;
    Eigen::VectorXd hp_diag; // diagonal of H_P over the computational basis
    QuantumState initial;
};

// Validates the diagonal-H_P precondition of the sampled-energy objective.
inline Eigen::VectorXd require_diagonal(const Operator& hp, double tol = 1e-12)
{
    const long N = hp.matrix.rows();
    for (long r = 0; r < N; ++r)
        for (long c = 0; c < N; ++c)
            if (r != c && std::abs(hp.matrix(r, c)) > tol)
                throw std::invalid_argument("energy objective requires a diagonal H_P");
    return hp.matrix.diagonal().real();
}

// Run the algorithm once, measure M bitstrings, average the H_P diagonal.
inline EnergyEstimate estimate_energy(const ProblemContext& ctx, const Eigen::VectorXd& free_params,
                                      long M, std::uint64_t seed)
{
    QuantumState final = evolve(ctx.ham, ctx.make_schedule(free_params), ctx.evolution, ctx.initial);
    EnergyEstimate est;
    est.M = M;
    est.samples = sample_measurements(final, M, seed);
    double acc = 0.0;
    for (long z : est.samples) acc += ctx.hp_diag[z];
    est.value = acc / static_cast<double>(M);
    return est;
}

inline StochasticObjective make_energy_objective(ProblemContext ctx)
{
    return [ctx = std::move(ctx)](const Eigen::VectorXd& p, std::uint64_t seed, long M) {
        return estimate_energy(ctx, p, M, seed).value;
    };
}

// Simultaneous-perturbation gradient estimate: one +-1 Bernoulli direction,
// two function calls, per-component division by Delta_i.
inline Eigen::VectorXd spsa_gradient(const StochasticObjective& f, const Eigen::VectorXd& params,
                                     double beta, long M, std::uint64_t seed,
                                     double* e_plus = nullptr, double* e_minus = nullptr)
{
    if (beta <= 0.0) throw std::invalid_argument("spsa_gradient: beta must be > 0");
    std::mt19937_64 gen(seed);
    Eigen::VectorXd delta(params.size());
    for (long i = 0; i < params.size(); ++i) delta[i] = (gen() & 1) ? 1.0 : -1.0;
    const std::uint64_t seed_plus = gen();
    const std::uint64_t seed_minus = gen();
    const double fp = f(params + beta * delta, seed_plus, M);
    const double fm = f(params - beta * delta, seed_minus, M);
    if (e_plus) *e_plus = fp;
    if (e_minus) *e_minus = fm;
    const double diff = (fp - fm) / (2.0 * beta);
    Eigen::VectorXd g(params.size());
    for (long i = 0; i < params.size(); ++i) g[i] = diff / delta[i];
    return g;
}

struct TrajectoryRow {
    long k = 0;
    double alpha_k = 0.0;
    double beta_k = 0.0;
    double e_plus = 0.0;
    double e_minus = 0.0;
    double e_best = 0.0;
    long experiments_total = 0;
};

struct SpsaState {
    long k = 0;
    Eigen::VectorXd params;
    long experiments_total = 0;
    std::vector<TrajectoryRow> trajectory;
    Eigen::VectorXd best_params;
    double best_e = std::numeric_limits<double>::infinity();
};

// One descent update: Lambda <- Lambda - alpha_k (g_k + lambda_ad grad J_ad).
// The penalty gradient is supplied as a callable over free coordinates so
// this module stays independent of the schedule representation.
inline void spsa_step(SpsaState& state, const SpsaConfig& cfg, const StochasticObjective& f,
                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& penalty_gradient)
{
    auto [alpha_k, beta_k] = gains(cfg, state.k);
    const std::uint64_t step_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(state.k) + 1);
    double e_plus = 0.0, e_minus = 0.0;
    Eigen::VectorXd g = spsa_gradient(f, state.params, beta_k, cfg.M, step_seed, &e_plus, &e_minus);
    state.experiments_total += 2 * cfg.M;

    // Best-so-far over the evaluated (perturbed) points.
    std::mt19937_64 gen(step_seed);
    Eigen::VectorXd delta(state.params.size());
    for (long i = 0; i < state.params.size(); ++i) delta[i] = (gen() & 1) ? 1.0 : -1.0;
    if (e_plus < state.best_e) {
        state.best_e = e_plus;
        state.best_params = state.params + beta_k * delta;
    }
    if (e_minus < state.best_e) {
        state.best_e = e_minus;
        state.best_params = state.params - beta_k * delta;
    }

    Eigen::VectorXd update = g;
    if (cfg.lambda_ad != 0.0) update += cfg.lambda_ad * penalty_gradient(state.params);
    state.params -= alpha_k * update;

    state.trajectory.push_back({state.k, alpha_k, beta_k, e_plus, e_minus,
                                std::min(state.best_e, std::min(e_plus, e_minus)),
                                state.experiments_total});
    ++state.k;
}

// Pilot-based gain selection (Spall's practical rule): beta0 from the noise
// standard deviation of the objective at the initial point, R = 0.1 K, and
// alpha0 sized so the first step has magnitude ~ cfg.initial_step given a
// pilot gradient estimate.
inline SpsaConfig auto_tune(SpsaConfig cfg, const StochasticObjective& f, const Eigen::VectorXd& params)
{
    cfg.validate();
    if (cfg.R < 0.0) cfg.R = 0.1 * static_cast<double>(cfg.K);
    std::uint64_t tune_master = derive_seed(cfg.seed, 0xA11CE);
    if (cfg.beta0 <= 0.0) {
        std::vector<double> pilot(cfg.pilot_evals);
        double mean = 0.0;
        for (int i = 0; i < cfg.pilot_evals; ++i) {
            pilot[i] = f(params, derive_seed(tune_master, i), cfg.M);
            mean += pilot[i];
        }
        mean /= cfg.pilot_evals;
        double var = 0.0;
        for (double v : pilot) var += (v - mean) * (v - mean);
        var /= std::max(1, cfg.pilot_evals - 1);
        cfg.beta0 = std::max(std::sqrt(var), 0.05);
    }
    if (cfg.alpha0 <= 0.0) {
        const int reps = 4;
        double gmag = 0.0;
        for (int r = 0; r < reps; ++r) {
            Eigen::VectorXd g = spsa_gradient(f, params, cfg.beta0, cfg.M, derive_seed(tune_master, 100 + r));
            gmag += g.cwiseAbs().mean();
        }
        gmag /= reps;
        cfg.alpha0 = cfg.initial_step * std::pow(cfg.R + 1.0, cfg.delta) / std::max(gmag, 1e-3);
    }
    return cfg;
}

struct OptimizeResult {
    Eigen::VectorXd final_params;
    Eigen::VectorXd best_params;
    double best_e = 0.0;          // re-scored with a fresh seed and 4x M
    long experiments_total = 0;   // 2 M K plus documented tuning/re-scoring overhead
    std::vector<TrajectoryRow> trajectory;
    SpsaConfig tuned;             // gains actually used
};

// K iterations of SPSA descent.  `observer`, when set, is called with
// (k, free parameters) after each update; it is an analysis hook and feeds
// nothing back into the optimization.
inline OptimizeResult optimize(const SpsaConfig& cfg_in, const StochasticObjective& f,
                               const Eigen::VectorXd& initial_params,
                               const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& penalty_gradient,
                               const std::function<void(long, const Eigen::VectorXd&)>& observer = {})
{
    SpsaConfig cfg = cfg_in;
    cfg.validate();
    if (cfg.K > 0 && (cfg.alpha0 <= 0.0 || cfg.beta0 <= 0.0 || cfg.R < 0.0))
        cfg = auto_tune(cfg, f, initial_params);

    SpsaState state;
    state.params = initial_params;
    state.best_params = initial_params;
    for (long k = 0; k < cfg.K; ++k) {
        spsa_step(state, cfg, f, penalty_gradient);
        if (observer) observer(k, state.params);
    }

    OptimizeResult result;
    result.final_params = state.params;
    result.trajectory = std::move(state.trajectory);
    result.tuned = cfg;
    if (cfg.K == 0) {
        result.best_params = initial_params;
        result.best_e = 0.0;
        result.experiments_total = 0;
        return result;
    }
    // Stale-best protection: the raw running minimum rides on sampling noise,
    // so re-score both candidates with an independent seed and 4x samples.
    const std::uint64_t rescore_seed = derive_seed(cfg.seed, 0xBE57);
    const double e_best = f(state.best_params, derive_seed(rescore_seed, 1), 4 * cfg.M);
    const double e_final = f(state.params, derive_seed(rescore_seed, 2), 4 * cfg.M);
    state.experiments_total += 8 * cfg.M;
    if (e_final <= e_best) {
        result.best_params = state.params;
        result.best_e = e_final;
    } else {
        result.best_params = state.best_params;
        result.best_e = e_best;
    }
    result.experiments_total = state.experiments_total;
    return result;
}

// Trajectory CSV: k, alpha_k, beta_k, E_plus, E_minus, E_best, experiments_total.
inline void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "k,alpha_k,beta_k,E_plus,E_minus,E_best,experiments_total\n";
    f.precision(17);
    for (const auto& r : rows)
        f << r.k << "," << r.alpha_k << "," << r.beta_k << "," << r.e_plus << "," << r.e_minus << ","
          << r.e_best << "," << r.experiments_total << "\n";
}

} // namespace cloaqc
