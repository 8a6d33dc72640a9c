// Problem builders: the Grover search Hamiltonian, MAX 2-SAT instance
// generation with unique-satisfying-assignment (USA) filtering and Ising
// compilation, intermediate Hamiltonians, and the unitary control-error
// model.
//
// Boolean-to-spin convention: x_j = true corresponds to sigma^z_j eigenvalue
// +1, i.e. bit j of the basis index equal to 0 under the MSB-first ordering.
// A satisfied clause lowers the energy, so the satisfying assignment of a USA
// instance is the nondegenerate ground state of the compiled H_P.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cloaqc/qsim.hpp"
#include "cloaqc/rng.hpp"

namespace cloaqc {

// ---------------------------------------------------------------------------
// MAX 2-SAT instances

struct Clause {
    int j1 = 0;
    int sign1 = 1; // +1 unnegated, -1 negated
    int j2 = 1;
    int sign2 = 1;

    bool operator==(const Clause&) const = default;
};

struct ProblemInstance {
    int n = 0;
    std::vector<Clause> clauses;
    Eigen::VectorXd h;   // h_j = -sum_m v^m_j
    Eigen::MatrixXd J;   // J_ij = sum_m v^m_i v^m_j, symmetric, zero diagonal
    bool usa = false;
    std::optional<long> ground_index;
    std::uint64_t seed = 0;

    int clause_count() const { return static_cast<int>(clauses.size()); }
};

inline bool variable_true(long basis_index, int j, int n)
{
    return bit_of(basis_index, j, n) == 0;
}

inline bool clause_satisfied(const Clause& c, long basis_index, int n)
{
    const bool a = variable_true(basis_index, c.j1, n) == (c.sign1 > 0);
    const bool b = variable_true(basis_index, c.j2, n) == (c.sign2 > 0);
    return a || b;
}

inline bool assignment_satisfies(const ProblemInstance& inst, long basis_index)
{
    for (const auto& c : inst.clauses)
        if (!clause_satisfied(c, basis_index, inst.n)) return false;
    return true;
}

inline long count_satisfying_assignments(int n, const std::vector<Clause>& clauses)
{
    long count = 0;
    for (long z = 0; z < dim_of(n); ++z) {
        bool ok = true;
        for (const auto& c : clauses)
            if (!clause_satisfied(c, z, n)) { ok = false; break; }
        if (ok) ++count;
    }
    return count;
}

inline void compute_couplings(ProblemInstance& inst)
{
    inst.h = Eigen::VectorXd::Zero(inst.n);
    inst.J = Eigen::MatrixXd::Zero(inst.n, inst.n);
    for (const auto& c : inst.clauses) {
        inst.h[c.j1] -= c.sign1;
        inst.h[c.j2] -= c.sign2;
        inst.J(c.j1, c.j2) += c.sign1 * c.sign2;
        inst.J(c.j2, c.j1) += c.sign1 * c.sign2;
    }
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> compile_2sat_diagonals(const ProblemInstance& inst)
{
    const long N = dim_of(inst.n);
    Eigen::VectorXd d1 = Eigen::VectorXd::Zero(N);
    Eigen::VectorXd d2 = Eigen::VectorXd::Zero(N);
    for (long z = 0; z < N; ++z)
        for (int j = 0; j < inst.n; ++j) {
            const double zj = bit_of(z, j, inst.n) ? -1.0 : 1.0;
            d1[z] += inst.h[j] * zj;
            for (int i = 0; i < j; ++i)
                d2[z] += inst.J(i, j) * (bit_of(z, i, inst.n) ? -1.0 : 1.0) * zj;
        }
    return {d1, d2};
}

// 1-local and 2-local parts of the problem Hamiltonian, both diagonal in the
// computational basis; H_P = H_P1 + H_P2.
inline std::pair<Operator, Operator> compile_2sat(const ProblemInstance& inst)
{
    auto [d1, d2] = compile_2sat_diagonals(inst);
    return {Operator{inst.n, CMatrix(d1.cast<Complex>().asDiagonal())},
            Operator{inst.n, CMatrix(d2.cast<Complex>().asDiagonal())}};
}

// Diagonal of the full H_P in the computational basis.
inline Eigen::VectorXd problem_diagonal(const ProblemInstance& inst)
{
    auto [d1, d2] = compile_2sat_diagonals(inst);
    return d1 + d2;
}

// Rejection sampling after Farhi et al.: add uniformly random distinct
// 2-variable clauses one at a time, counting satisfying assignments by brute
// force after each addition.  Accept the first instance whose count is
// exactly 1; restart when the formula becomes unsatisfiable.
inline ProblemInstance generate_usa_instance(int n, std::uint64_t seed, int max_restarts = 10000)
{
    if (n < 2 || n > 20) throw std::invalid_argument("generate_usa_instance: n must be in [2,20]");
    std::mt19937_64 gen(seed);
    const long max_clauses = 4L * n * (n - 1) / 2;

    for (int restart = 0; restart < max_restarts; ++restart) {
        std::vector<Clause> clauses;
        while (static_cast<long>(clauses.size()) < max_clauses) {
            Clause c;
            c.j1 = static_cast<int>(gen() % n);
            do { c.j2 = static_cast<int>(gen() % n); } while (c.j2 == c.j1);
            if (c.j1 > c.j2) std::swap(c.j1, c.j2);
            c.sign1 = (gen() & 1) ? 1 : -1;
            c.sign2 = (gen() & 1) ? 1 : -1;
            if (std::find(clauses.begin(), clauses.end(), c) != clauses.end()) continue;
            clauses.push_back(c);
            const long count = count_satisfying_assignments(n, clauses);
            if (count == 0) break; // unsatisfiable overshoot -> restart
            if (count == 1) {
                ProblemInstance inst;
                inst.n = n;
                inst.clauses = std::move(clauses);
                inst.usa = true;
                inst.seed = seed;
                compute_couplings(inst);
                for (long z = 0; z < dim_of(n); ++z)
                    if (assignment_satisfies(inst, z)) { inst.ground_index = z; break; }
                return inst;
            }
        }
    }
    throw std::runtime_error("generate_usa_instance: retry budget exhausted");
}

// ---------------------------------------------------------------------------
// Driver and intermediate Hamiltonians

// -sum_j sigma^x_j, so |+>^n is the nondegenerate ground state at energy -n.
inline Primitive initial_hamiltonian_primitive(int n)
{
    std::vector<PauliTerm> terms;
    for (int j = 0; j < n; ++j) terms.push_back(make_pauli_term(n, {{j, PauliAxis::x}}, -1.0));
    return make_pauli_sum_primitive(n, std::move(terms));
}

inline Operator initial_hamiltonian(int n)
{
    return initial_hamiltonian_primitive(n).op;
}

enum class IntermediateKind { xx, y, xz };

// xx: sum over unordered pairs of sigma^x_i sigma^x_j (unit coefficient per
// pair); y: sum_j sigma^y_j; xz: sum_{i<j} sigma^x_i sigma^z_j + sigma^z_i sigma^x_j.
inline Primitive intermediate_hamiltonian_primitive(IntermediateKind kind, int n)
{
    std::vector<PauliTerm> terms;
    switch (kind) {
    case IntermediateKind::xx:
        if (n < 2) throw std::invalid_argument("intermediate_hamiltonian: xx needs n >= 2");
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                terms.push_back(make_pauli_term(n, {{i, PauliAxis::x}, {j, PauliAxis::x}}));
        break;
    case IntermediateKind::y:
        for (int j = 0; j < n; ++j) terms.push_back(make_pauli_term(n, {{j, PauliAxis::y}}));
        break;
    case IntermediateKind::xz:
        if (n < 2) throw std::invalid_argument("intermediate_hamiltonian: xz needs n >= 2");
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                terms.push_back(make_pauli_term(n, {{i, PauliAxis::x}, {j, PauliAxis::z}}));
                terms.push_back(make_pauli_term(n, {{i, PauliAxis::z}, {j, PauliAxis::x}}));
            }
        break;
    }
    return make_pauli_sum_primitive(n, std::move(terms));
}

inline Operator intermediate_hamiltonian(IntermediateKind kind, int n)
{
    return intermediate_hamiltonian_primitive(kind, n).op;
}

// ---------------------------------------------------------------------------
// Grover search

// Two channels: x1 * (I - |+><+|) + x2 * (I - |m><m|).
inline AdiabaticHamiltonian grover_problem(int n, long marked)
{
    if (marked < 0 || marked >= dim_of(n)) throw std::invalid_argument("grover_problem: marked index out of range");
    AdiabaticHamiltonian h;
    h.primitives.push_back(make_projector_complement_primitive(n, uniform_superposition(n).amplitudes));
    h.primitives.push_back(make_projector_complement_primitive(n, basis_state(n, marked).amplitudes));
    h.channels = {"x1", "x2"};
    return h;
}

// Two-level effective gap of the Grover problem under the one-IC linear
// schedule: Delta(s) = sqrt((1-2s)^2 + 4 s (1-s) / N).
inline double grover_linear_gap(int n, double s)
{
    const double N = static_cast<double>(dim_of(n));
    return std::sqrt((1.0 - 2.0 * s) * (1.0 - 2.0 * s) + 4.0 * s * (1.0 - s) / N);
}

// ---------------------------------------------------------------------------
// Unitary control error H_E(s) = Gamma(s) sum_i m_i . sigma_i

enum class NoiseRamp { linear, sine, fast_sine };

struct NoiseModel {
    int n = 0;
    Eigen::MatrixXd directions; // n x 3 unit vectors
    NoiseRamp ramp = NoiseRamp::sine;
    double C = 0.0;
    std::uint64_t seed = 0;

    double gamma(double s) const
    {
        constexpr double pi = 3.14159265358979323846;
        switch (ramp) {
        case NoiseRamp::linear: return C * s;
        case NoiseRamp::sine: return C * std::sin(pi * s);
        case NoiseRamp::fast_sine: return 0.5 * std::sin(C * pi * s);
        }
        return 0.0;
    }
};

// Directions are drawn once per model: i.i.d. standard-normal components,
// normalized to unit length.
inline NoiseModel make_noise_model(int n, NoiseRamp ramp, double C, std::uint64_t seed)
{
    NoiseModel model;
    model.n = n;
    model.ramp = ramp;
    model.C = C;
    model.seed = seed;
    model.directions.resize(n, 3);
    std::mt19937_64 gen(seed);
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d v;
        do {
            for (int a = 0; a < 3; ++a) v[a] = normal01(gen);
        } while (v.norm() == 0.0);
        model.directions.row(i) = v.normalized().transpose();
    }
    return model;
}

// sum_i m_i . sigma_i without the ramp factor; pair with gamma(s) as the
// channel value when appending to an AdiabaticHamiltonian.
inline Primitive noise_base_primitive(const NoiseModel& model)
{
    std::vector<PauliTerm> terms;
    for (int i = 0; i < model.n; ++i) {
        terms.push_back(make_pauli_term(model.n, {{i, PauliAxis::x}}, model.directions(i, 0)));
        terms.push_back(make_pauli_term(model.n, {{i, PauliAxis::y}}, model.directions(i, 1)));
        terms.push_back(make_pauli_term(model.n, {{i, PauliAxis::z}}, model.directions(i, 2)));
    }
    return make_pauli_sum_primitive(model.n, std::move(terms));
}

inline Operator noise_hamiltonian_at(const NoiseModel& model, double s)
{
    Primitive base = noise_base_primitive(model);
    Operator out = std::move(base.op);
    out.matrix *= model.gamma(s);
    return out;
}

// ---------------------------------------------------------------------------
// Instance JSON round trip

inline nlohmann::json instance_to_json(const ProblemInstance& inst)
{
    nlohmann::json j;
    j["n"] = inst.n;
    j["clauses"] = nlohmann::json::array();
    for (const auto& c : inst.clauses) j["clauses"].push_back({c.j1, c.sign1, c.j2, c.sign2});
    j["h"] = std::vector<double>(inst.h.data(), inst.h.data() + inst.h.size());
    std::vector<std::vector<double>> jm(inst.n, std::vector<double>(inst.n));
    for (int a = 0; a < inst.n; ++a)
        for (int b = 0; b < inst.n; ++b) jm[a][b] = inst.J(a, b);
    j["J"] = jm;
    j["usa"] = inst.usa;
    if (inst.ground_index) j["ground_index"] = *inst.ground_index;
    else j["ground_index"] = nullptr;
    j["seed"] = inst.seed;
    return j;
}

inline ProblemInstance instance_from_json(const nlohmann::json& j)
{
    ProblemInstance inst;
    inst.n = j.at("n").get<int>();
    for (const auto& row : j.at("clauses"))
        inst.clauses.push_back({row.at(0).get<int>(), row.at(1).get<int>(), row.at(2).get<int>(), row.at(3).get<int>()});
    auto hv = j.at("h").get<std::vector<double>>();
    inst.h = Eigen::Map<Eigen::VectorXd>(hv.data(), static_cast<long>(hv.size()));
    inst.J.resize(inst.n, inst.n);
    for (int a = 0; a < inst.n; ++a)
        for (int b = 0; b < inst.n; ++b) inst.J(a, b) = j.at("J").at(a).at(b).get<double>();
    inst.usa = j.at("usa").get<bool>();
    if (!j.at("ground_index").is_null()) inst.ground_index = j.at("ground_index").get<long>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    return inst;
}

inline void write_instance(const ProblemInstance& inst, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << instance_to_json(inst).dump(2) << "\n";
}

inline ProblemInstance read_instance(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    f >> j;
    return instance_from_json(j);
}

} // namespace cloaqc
