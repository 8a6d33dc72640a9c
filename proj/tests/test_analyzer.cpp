#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <cloaqc/analyzer.hpp>
#include <cloaqc/problems.hpp>

using namespace cloaqc;
using Catch::Approx;

namespace {

ScheduleFn linear_one_ic()
{
    return [](double s, std::span<double> out) {
        out[0] = 1.0 - s;
        out[1] = s;
    };
}

} // namespace

TEST_CASE("gap scan")
{
    SECTION("Grover minimum gaps follow 1/sqrt(N)")
    {
        GapScan scan4 = gap_scan(grover_problem(4, 11), linear_one_ic());
        CHECK(scan4.delta_min == Approx(0.25).margin(1e-9));
        CHECK(scan4.s_star == Approx(0.5).margin(1e-4));

        GapScan scan8 = gap_scan(grover_problem(8, 0), linear_one_ic());
        CHECK(scan8.delta_min == Approx(1.0 / 16.0).margin(1e-9));
    }
    SECTION("endpoint gap is 1 for the projector Hamiltonian")
    {
        GapScan scan = gap_scan(grover_problem(3, 2), linear_one_ic());
        CHECK(scan.delta.front() == Approx(1.0).margin(1e-12));
        CHECK(scan.delta.back() == Approx(1.0).margin(1e-12));
    }
    SECTION("refinement never exceeds the coarse minimum")
    {
        for (long m : {0L, 5L, 13L}) {
            GapScan scan = gap_scan(grover_problem(4, m), linear_one_ic(), 101);
            double coarse = scan.delta[0];
            for (double d : scan.delta) coarse = std::min(coarse, d);
            CHECK(scan.delta_min <= coarse + 1e-15);
        }
    }
    SECTION("degenerate crossings are reported as zero, not errors")
    {
        // two independent projector complements that never couple qubit spaces:
        // channel sum with x1 = x2 makes the spectrum doubly degenerate at 0
        AdiabaticHamiltonian h;
        h.primitives.push_back(make_diagonal_primitive(1, Eigen::Vector2d{0.0, 0.0}));
        h.primitives.push_back(make_diagonal_primitive(1, Eigen::Vector2d{0.0, 1.0}));
        h.channels = {"a", "b"};
        ScheduleFn pinch = [](double s, std::span<double> out) {
            out[0] = 0.0;
            out[1] = 1.0 - s; // gap closes linearly, hits 0 at s=1
        };
        GapScan scan = gap_scan(h, pinch);
        CHECK(scan.delta_min == 0.0);
    }
    CHECK_THROWS_AS(gap_scan(grover_problem(2, 0), linear_one_ic(), 50), std::invalid_argument);
}

TEST_CASE("adiabatic error and ground-state probability")
{
    AdiabaticHamiltonian grover = grover_problem(2, 1);
    const Operator& hp = grover.primitives[1].op;

    CHECK(adiabatic_error(basis_state(2, 1), hp) == Approx(0.0).margin(1e-12));
    CHECK(adiabatic_error(basis_state(2, 3), hp) == Approx(1.0).margin(1e-12));

    SECTION("partial overlap")
    {
        QuantumState psi{2, CVector::Zero(4)};
        psi.amplitudes[1] = std::sqrt(0.4);
        psi.amplitudes[0] = std::sqrt(0.6);
        CHECK(adiabatic_error(psi, hp) == Approx(std::sqrt(0.6)).margin(1e-12));
        CHECK(ground_state_probability(psi, hp) == Approx(0.4).margin(1e-12));
    }
    SECTION("sudden limit: uniform state has P = 1/N")
    {
        CHECK(ground_state_probability(uniform_superposition(2), hp) == Approx(0.25).margin(1e-12));
    }
    SECTION("P + D^2 = 1 on random states")
    {
        std::mt19937_64 gen(3);
        for (int rep = 0; rep < 20; ++rep) {
            CVector v(4);
            for (int i = 0; i < 4; ++i) v[i] = Complex(normal01(gen), normal01(gen));
            v.normalize();
            QuantumState psi{2, v};
            const double d = adiabatic_error(psi, hp);
            const double p = ground_state_probability(psi, hp);
            CHECK(p + d * d == Approx(1.0).margin(1e-10));
        }
    }
    SECTION("sampled probability converges to the exact value")
    {
        QuantumState psi{2, CVector::Zero(4)};
        psi.amplitudes[1] = std::sqrt(0.4);
        psi.amplitudes[2] = std::sqrt(0.6);
        const double exact = 0.4;
        CHECK(sampled_ground_state_probability(psi, 1, 100, 5) == Approx(exact).margin(0.2));
        CHECK(sampled_ground_state_probability(psi, 1, 100000, 5) == Approx(exact).margin(0.01));
    }
    SECTION("degenerate ground manifold is rejected")
    {
        Operator degenerate{1, CMatrix::Zero(2, 2)};
        CHECK_THROWS_AS(adiabatic_error(uniform_superposition(1), degenerate), std::invalid_argument);
    }
}

TEST_CASE("runtime calibration")
{
    AdiabaticHamiltonian h = grover_problem(3, 4);
    const Operator& hp = h.primitives[1].op;
    QuantumState initial = uniform_superposition(3);
    const double delta_min = gap_scan(h, linear_one_ic()).delta_min;

    SECTION("self-consistency at target 0.4")
    {
        const double T = calibrate_runtime(h, linear_one_ic(), hp, initial, delta_min, 0.4, 0.01, 300.0);
        EvolutionConfig cfg;
        cfg.total_time = T;
        cfg.steps = default_steps(T, 1.0, 300.0);
        QuantumState final = evolve(h, linear_one_ic(), cfg, initial);
        CHECK(ground_state_probability(final, hp) == Approx(0.4).margin(0.011));
    }
    SECTION("targets below the sudden-limit floor are unreachable")
    {
        // P(T -> 0) = 1/N = 1/8; the scan floor already exceeds a 0.01 target
        CHECK_THROWS_AS(
            calibrate_runtime(h, linear_one_ic(), hp, initial, delta_min, 0.01, 0.005, 300.0),
            std::runtime_error);
    }
    SECTION("argument validation")
    {
        CHECK_THROWS_AS(calibrate_runtime(h, linear_one_ic(), hp, initial, delta_min, 1.5),
                        std::invalid_argument);
        CHECK_THROWS_AS(calibrate_runtime(h, linear_one_ic(), hp, initial, 0.0, 0.4),
                        std::invalid_argument);
    }
}

TEST_CASE("ensemble statistics")
{
    SECTION("median and quantiles")
    {
        CHECK(median_of({3.0, 1.0, 2.0}) == 2.0);
        CHECK(median_of({4.0, 1.0, 3.0, 2.0}) == Approx(2.5));
        CHECK(quantile_of({1, 2, 3, 4, 5}, 0.25) == Approx(2.0));
        CHECK(quantile_of({1, 2, 3, 4, 5}, 0.75) == Approx(4.0));
        CHECK_THROWS_AS(median_of(std::vector<double>{}), std::invalid_argument);
    }
    SECTION("identical realizations give unit ratios")
    {
        std::vector<RealizationOutcome> outcomes(5);
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            outcomes[i].seed = i;
            outcomes[i].d = 0.3;
            outcomes[i].delta_min = 0.25;
            outcomes[i].p_ground = 1.0 - 0.09;
        }
        PerformanceReport rep = performance_report(outcomes, 0.3, 0.25);
        CHECK(rep.alpha_d == Approx(1.0));
        CHECK(rep.alpha_delta == Approx(1.0));
        CHECK(rep.median_realization == 0); // tie broken by lowest seed
    }
    SECTION("ratios come from the median-D realization")
    {
        std::vector<RealizationOutcome> outcomes(3);
        outcomes[0] = {10, 0.10, 0.5, 0.99};
        outcomes[1] = {11, 0.20, 0.7, 0.96};
        outcomes[2] = {12, 0.40, 0.9, 0.84};
        PerformanceReport rep = performance_report(outcomes, 0.4, 0.35);
        CHECK(rep.d_cloaqc == Approx(0.20));
        CHECK(rep.median_realization == 1);
        CHECK(rep.delta_cloaqc == Approx(0.7));
        CHECK(rep.alpha_d == Approx(0.5));
        CHECK(rep.alpha_delta == Approx(2.0));
        CHECK(rep.d_iqr_lo <= rep.d_cloaqc);
        CHECK(rep.d_iqr_hi >= rep.d_cloaqc);
    }
    SECTION("report serialization carries every field")
    {
        std::vector<RealizationOutcome> outcomes(2);
        outcomes[0] = {1, 0.1, 0.5, 0.99};
        outcomes[1] = {2, 0.2, 0.6, 0.96};
        PerformanceReport rep = performance_report(outcomes, 0.5, 0.4);
        nlohmann::json j = report_to_json(rep, outcomes);
        CHECK(j.at("alpha_D").get<double>() == Approx(rep.alpha_d));
        CHECK(j.at("realizations").size() == 2);

        const std::string path = std::filesystem::temp_directory_path() / "report_rt.csv";
        write_report_csv(outcomes, path);
        std::ifstream f(path);
        std::string header;
        std::getline(f, header);
        CHECK(header == "realization,seed,D,Delta_min,P_E0");
        int rows = 0;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 2);
        std::remove(path.c_str());
    }
}
