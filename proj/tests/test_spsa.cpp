#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include <cloaqc/analyzer.hpp>
#include <cloaqc/problems.hpp>
#include <cloaqc/spsa.hpp>

using namespace cloaqc;
using Catch::Approx;

namespace {

Eigen::VectorXd zero_penalty(const Eigen::VectorXd& p) { return Eigen::VectorXd::Zero(p.size()); }

ProblemContext grover_context(int n, long marked, QuantumState initial)
{
    ProblemContext ctx;
    ctx.ham = grover_problem(n, marked);
    // zero channels: the evolution is the identity, so the context measures
    // exactly the supplied state
    ctx.make_schedule = [](const Eigen::VectorXd&) {
        return [](double, std::span<double> out) { out[0] = 0.0; out[1] = 0.0; };
    };
    ctx.evolution.total_time = 1.0;
    ctx.evolution.steps = 16;
    ctx.hp_diag = Eigen::VectorXd::Ones(dim_of(n));
    ctx.hp_diag[marked] = 0.0;
    ctx.initial = std::move(initial);
    return ctx;
}

} // namespace

TEST_CASE("gain sequences")
{
    SpsaConfig cfg;
    cfg.alpha0 = 0.7;
    cfg.beta0 = 0.2;
    cfg.R = 0.0;
    auto [a0, b0] = gains(cfg, 0);
    CHECK(a0 == Approx(0.7));
    CHECK(b0 == Approx(0.2));

    cfg.alpha0 = cfg.beta0 = 1.0;
    cfg.delta = 1.0;
    cfg.zeta = 1.0 / 6.0;
    auto [a7, b7] = gains(cfg, 7);
    CHECK(a7 == Approx(1.0 / 8.0));
    CHECK(b7 == Approx(std::pow(8.0, -1.0 / 6.0)));

    double prev_a = 1e18, prev_b = 1e18;
    cfg.delta = 0.602;
    cfg.zeta = 0.101;
    for (long k = 0; k < 50; ++k) {
        auto [a, b] = gains(cfg, k);
        CHECK(a < prev_a);
        CHECK(b < prev_b);
        prev_a = a;
        prev_b = b;
    }
    CHECK_THROWS_AS(gains(cfg, -1), std::invalid_argument);
}

TEST_CASE("config validation")
{
    SpsaConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.delta = 0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.delta = 0.602;
    cfg.zeta = 0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.zeta = 0.101;
    cfg.M = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("sampled energy estimate")
{
    SECTION("measuring the marked state gives exactly zero")
    {
        ProblemContext ctx = grover_context(3, 5, basis_state(3, 5));
        for (long M : {1L, 10L, 100L})
            CHECK(estimate_energy(ctx, Eigen::VectorXd::Zero(0), M, 9).value == 0.0);
    }
    SECTION("partial overlap has expectation one minus the ground probability")
    {
        QuantumState psi{2, CVector::Zero(4)};
        psi.amplitudes[1] = std::sqrt(0.6); // marked
        psi.amplitudes[2] = std::sqrt(0.4);
        ProblemContext ctx = grover_context(2, 1, psi);
        EnergyEstimate coarse = estimate_energy(ctx, Eigen::VectorXd::Zero(0), 100, 3);
        CHECK(std::abs(coarse.value - 0.4) < 0.2); // 4 sigma of the binomial
        EnergyEstimate fine = estimate_energy(ctx, Eigen::VectorXd::Zero(0), 100000, 3);
        CHECK(fine.value == Approx(0.4).margin(0.01));
        CHECK(coarse.M == 100);
        CHECK(static_cast<long>(coarse.samples.size()) == 100);
    }
    SECTION("unsatisfied single-clause basis state scores 3")
    {
        ProblemInstance inst;
        inst.n = 2;
        inst.clauses = {{0, 1, 1, 1}};
        compute_couplings(inst);
        ProblemContext ctx;
        ctx.ham = grover_problem(2, 0); // any 2-channel Hamiltonian; channels held at 0
        ctx.make_schedule = [](const Eigen::VectorXd&) {
            return [](double, std::span<double> out) { out[0] = 0.0; out[1] = 0.0; };
        };
        ctx.evolution.total_time = 1.0;
        ctx.evolution.steps = 16;
        ctx.hp_diag = problem_diagonal(inst);
        ctx.initial = basis_state(2, 3); // both variables false violates (x1 or x2)
        CHECK(estimate_energy(ctx, Eigen::VectorXd::Zero(0), 25, 4).value == Approx(3.0));
    }
    SECTION("non-diagonal H_P is rejected")
    {
        CHECK_THROWS_AS(require_diagonal(initial_hamiltonian(2)), std::invalid_argument);
        Eigen::VectorXd d = require_diagonal(grover_problem(2, 1).primitives[1].op);
        CHECK(d[1] == Approx(0.0).margin(1e-15));
        CHECK(d[0] == Approx(1.0));
    }
}

TEST_CASE("simultaneous-perturbation gradient")
{
    SECTION("quadratic in one dimension: estimator equals the exact slope")
    {
        StochasticObjective f = [](const Eigen::VectorXd& p, std::uint64_t, long) {
            return p[0] * p[0];
        };
        Eigen::VectorXd at(1);
        at << 1.0;
        // (1.21 - 0.81) / 0.2 = 2 regardless of the Bernoulli sign
        for (std::uint64_t seed : {0ULL, 1ULL, 2ULL, 3ULL})
            CHECK(spsa_gradient(f, at, 0.1, 1, seed)[0] == Approx(2.0).margin(1e-12));
    }
    SECTION("linear objective in one dimension is curvature-free")
    {
        StochasticObjective f = [](const Eigen::VectorXd& p, std::uint64_t, long) {
            return -3.5 * p[0] + 2.0;
        };
        Eigen::VectorXd at(1);
        at << 0.7;
        for (double beta : {0.01, 0.3, 2.0})
            CHECK(spsa_gradient(f, at, beta, 1, 11)[0] == Approx(-3.5).margin(1e-10));
    }
    SECTION("cubic bias scales as beta squared")
    {
        StochasticObjective f = [](const Eigen::VectorXd& p, std::uint64_t, long) {
            return p[0] * p[0] * p[0];
        };
        Eigen::VectorXd at(1);
        at << 1.0;
        // g = f' + f''' beta^2 / 6 = 3 + beta^2 for f = x^3
        std::vector<double> betas{0.05, 0.1, 0.2, 0.4};
        std::vector<double> biases;
        for (double beta : betas) biases.push_back(spsa_gradient(f, at, beta, 1, 5)[0] - 3.0);
        for (std::size_t i = 1; i < betas.size(); ++i) {
            const double slope = std::log(biases[i] / biases[i - 1]) / std::log(betas[i] / betas[i - 1]);
            CHECK(slope == Approx(2.0).margin(0.01));
        }
    }
    SECTION("expectation over many draws approaches the true gradient")
    {
        // cross-term contamination in dimension 2 averages out
        StochasticObjective f = [](const Eigen::VectorXd& p, std::uint64_t, long) {
            return p[0] * p[0] + 3.0 * p[1] * p[1] + 0.5 * p[0] * p[1];
        };
        Eigen::VectorXd at(2);
        at << 1.0, -0.5;
        Eigen::VectorXd expect(2);
        expect << 2.0 * at[0] + 0.5 * at[1], 6.0 * at[1] + 0.5 * at[0];
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) mean += spsa_gradient(f, at, 0.05, 1, 50000 + i);
        mean /= draws;
        CHECK((mean - expect).cwiseAbs().maxCoeff() < 0.1);
    }
    CHECK_THROWS_AS(
        spsa_gradient([](const Eigen::VectorXd&, std::uint64_t, long) { return 0.0; },
                      Eigen::VectorXd::Zero(1), 0.0, 1, 0),
        std::invalid_argument);
}

TEST_CASE("descent step")
{
    SpsaConfig cfg;
    cfg.alpha0 = 0.1;
    cfg.beta0 = 0.1;
    cfg.R = 0.0;
    cfg.delta = 0.602;
    cfg.zeta = 0.101;
    cfg.M = 10;
    cfg.seed = 3;

    SECTION("flat objective with no penalty leaves the parameters fixed")
    {
        StochasticObjective f = [](const Eigen::VectorXd&, std::uint64_t, long) { return 1.0; };
        SpsaState state;
        state.params = Eigen::VectorXd::Constant(3, 0.4);
        cfg.lambda_ad = 0.0;
        spsa_step(state, cfg, f, zero_penalty);
        CHECK((state.params - Eigen::VectorXd::Constant(3, 0.4)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(state.k == 1);
        CHECK(state.experiments_total == 2 * cfg.M);
    }
    SECTION("quadratic objective: one step moves 1 toward 0.8")
    {
        StochasticObjective f = [](const Eigen::VectorXd& p, std::uint64_t, long) {
            return p[0] * p[0];
        };
        SpsaState state;
        state.params = Eigen::VectorXd::Ones(1);
        cfg.lambda_ad = 0.0;
        spsa_step(state, cfg, f, zero_penalty);
        // alpha_0 = 0.1, g = 2 + O(beta^2) correction-free for a quadratic
        CHECK(state.params[0] == Approx(0.8).margin(1e-12));
    }
    SECTION("flat objective with penalty follows the penalty direction")
    {
        StochasticObjective f = [](const Eigen::VectorXd&, std::uint64_t, long) { return 0.0; };
        cfg.lambda_ad = 0.5;
        Eigen::VectorXd pg(2);
        pg << 1.0, -2.0;
        SpsaState state;
        state.params = Eigen::VectorXd::Zero(2);
        spsa_step(state, cfg, f, [&pg](const Eigen::VectorXd&) { return pg; });
        CHECK(state.params[0] == Approx(-0.1 * 0.5 * 1.0).margin(1e-15));
        CHECK(state.params[1] == Approx(-0.1 * 0.5 * -2.0).margin(1e-15));
    }
}

TEST_CASE("optimizer loop")
{
    auto noisy_quadratic = [](const Eigen::VectorXd& p, std::uint64_t seed, long) {
        std::mt19937_64 gen(seed);
        return p.squaredNorm() + 0.1 * normal01(gen);
    };

    SECTION("K=0 returns the initial point unchanged with zero experiments")
    {
        SpsaConfig cfg;
        cfg.K = 0;
        OptimizeResult res = optimize(cfg, noisy_quadratic, Eigen::VectorXd::Ones(4), zero_penalty);
        CHECK((res.final_params - Eigen::VectorXd::Ones(4)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((res.best_params - Eigen::VectorXd::Ones(4)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(res.experiments_total == 0);
        CHECK(res.trajectory.empty());
    }
    SECTION("experiment accounting with explicit gains is 2MK plus the re-score")
    {
        SpsaConfig cfg;
        cfg.K = 50;
        cfg.M = 7;
        cfg.alpha0 = 0.05;
        cfg.beta0 = 0.1;
        cfg.R = 5.0;
        cfg.lambda_ad = 0.0;
        cfg.seed = 12;
        OptimizeResult res = optimize(cfg, noisy_quadratic, Eigen::VectorXd::Ones(3), zero_penalty);
        CHECK(res.experiments_total == 2 * cfg.M * cfg.K + 8 * cfg.M);
        REQUIRE(static_cast<long>(res.trajectory.size()) == cfg.K);
        for (long k = 0; k < cfg.K; ++k) {
            CHECK(res.trajectory[k].k == k);
            CHECK(res.trajectory[k].experiments_total == 2 * cfg.M * (k + 1));
        }
    }
    SECTION("identical configuration reproduces the trajectory bit for bit")
    {
        SpsaConfig cfg;
        cfg.K = 40;
        cfg.M = 5;
        cfg.seed = 77;
        cfg.lambda_ad = 0.0;
        OptimizeResult a = optimize(cfg, noisy_quadratic, Eigen::VectorXd::Ones(3), zero_penalty);
        OptimizeResult b = optimize(cfg, noisy_quadratic, Eigen::VectorXd::Ones(3), zero_penalty);
        CHECK((a.final_params - b.final_params).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.best_e == b.best_e);
        REQUIRE(a.trajectory.size() == b.trajectory.size());
        for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
            CHECK(a.trajectory[i].e_plus == b.trajectory[i].e_plus);
            CHECK(a.trajectory[i].e_minus == b.trajectory[i].e_minus);
        }
    }
    SECTION("noisy quadratic benchmark converges with a power-law tail")
    {
        const long K = 1500;
        const int seeds = 25;
        std::vector<long> checkpoints{10, 30, 100, 300, 1000, K - 1};
        std::map<long, std::vector<double>> f_at;

        for (int s = 0; s < seeds; ++s) {
            SpsaConfig cfg;
            cfg.K = K;
            cfg.M = 1;
            cfg.seed = 900 + s;
            cfg.lambda_ad = 0.0;
            std::map<long, double> snap;
            auto observer = [&](long k, const Eigen::VectorXd& p) { snap[k] = p.squaredNorm(); };
            optimize(cfg, noisy_quadratic, Eigen::VectorXd::Ones(4), zero_penalty, observer);
            for (long k : checkpoints) f_at[k].push_back(snap.at(k));
        }

        std::vector<double> medians;
        for (long k : checkpoints) medians.push_back(median_of(f_at[k]));
        // monotone decrease across decade checkpoints
        for (std::size_t i = 1; i < medians.size(); ++i) CHECK(medians[i] <= medians[i - 1] * 1.05);
        CHECK(medians.back() < 0.05 * medians.front());

        // least-squares log-log slope over the checkpoints
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(checkpoints.size());
        for (std::size_t i = 0; i < checkpoints.size(); ++i) {
            const double x = std::log(static_cast<double>(checkpoints[i]));
            const double y = std::log(medians[i]);
            sx += x; sy += y; sxx += x * x; sxy += x * y;
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        CHECK(slope < -0.5);
    }
}
