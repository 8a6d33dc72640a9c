// Dense state-vector simulator for small spin systems: operator assembly,
// time evolution under time-dependent Hamiltonians, instantaneous
// eigenanalysis, measurement sampling and pure-state distance.
//
// Basis-ordering convention used everywhere in this project: qubit 0 maps to
// the MOST significant bit of the computational-basis index.  For basis index
// z and qubit q, bit(z, q) = (z >> (n-1-q)) & 1, and sigma^z on qubit q has
// eigenvalue +1 when that bit is 0.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "cloaqc/rng.hpp"

namespace cloaqc {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline int bit_of(long z, int qubit, int n) { return static_cast<int>((z >> (n - 1 - qubit)) & 1L); }

inline long dim_of(int n) { return 1L << n; }

// ---------------------------------------------------------------------------
// Domain types

struct QuantumState {
    int n = 0;
    CVector amplitudes;

    double norm() const { return amplitudes.norm(); }
};

inline QuantumState basis_state(int n, long index)
{
    if (index < 0 || index >= dim_of(n)) throw std::invalid_argument("basis_state: index out of range");
    QuantumState s{n, CVector::Zero(dim_of(n))};
    s.amplitudes[index] = 1.0;
    return s;
}

inline QuantumState uniform_superposition(int n)
{
    const long N = dim_of(n);
    QuantumState s{n, CVector::Constant(N, Complex(1.0 / std::sqrt(static_cast<double>(N)), 0.0))};
    return s;
}

struct Operator {
    int n = 0;
    CMatrix matrix;

    double hermiticity_residual() const
    {
        return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff();
    }
    // Spectral norm of a Hermitian operator.
    double norm() const
    {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(matrix, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
};

// out += coeff * H * psi.  The fast path for structured operators (diagonal,
// Pauli sums, rank-1 projector complements); the evolution inner loop never
// touches the dense matrix.
using Applier = std::function<void(const CVector&, CVector&, double)>;

struct Primitive {
    Operator op;
    Applier apply;
};

struct AdiabaticHamiltonian {
    std::vector<Primitive> primitives;
    std::vector<std::string> channels; // one identifier per primitive

    int qubits() const { return primitives.empty() ? 0 : primitives.front().op.n; }
    std::size_t size() const { return primitives.size(); }

    void validate() const
    {
        if (primitives.size() != channels.size())
            throw std::invalid_argument("AdiabaticHamiltonian: channels and primitives must have equal length");
        for (const auto& p : primitives)
            if (p.op.n != qubits())
                throw std::invalid_argument("AdiabaticHamiltonian: all primitives must share the same qubit count");
    }
};

// Control values as a function of normalized time, written into `out`
// (length = channel count).  Kept as a callback so polynomial schedules,
// tabulated schedules and noise ramps share one evolution path.
using ScheduleFn = std::function<void(double, std::span<double>)>;

enum class EvolveMethod { rk4, exact_propagator };

struct EvolutionConfig {
    double total_time = 1.0;
    int steps = 512;
    EvolveMethod method = EvolveMethod::rk4;
    // When set, evolve() re-runs at half the step count and rejects the
    // result if the final-state overlap shifts by more than 1e-6.
    bool convergence_check = false;

    void validate() const
    {
        if (total_time <= 0.0) throw std::invalid_argument("EvolutionConfig: total_time must be > 0");
        if (steps < 16) throw std::invalid_argument("EvolutionConfig: steps must be >= 16");
    }
};

// ---------------------------------------------------------------------------
// Pauli terms

enum class PauliAxis { x, y, z };

struct PauliFactor {
    int qubit;
    PauliAxis axis;
};

// One Pauli string with a real coefficient.  Precomputed masks give an O(N)
// apply: column z maps to row z ^ flip_mask with phase
// base * (-1)^popcount(z & sign_mask).
struct PauliTerm {
    double coeff = 1.0;
    long flip_mask = 0; // x and y factors
    long sign_mask = 0; // y and z factors
    Complex base{1.0, 0.0}; // coeff * i^{#y}
};

inline PauliTerm make_pauli_term(int n, const std::vector<PauliFactor>& factors, double coeff = 1.0)
{
    PauliTerm t;
    t.coeff = coeff;
    int n_y = 0;
    long seen = 0;
    for (const auto& f : factors) {
        if (f.qubit < 0 || f.qubit >= n) throw std::invalid_argument("pauli term: qubit index out of range");
        const long bit = 1L << (n - 1 - f.qubit);
        if (seen & bit) throw std::invalid_argument("pauli term: duplicate qubit index");
        seen |= bit;
        switch (f.axis) {
        case PauliAxis::x: t.flip_mask |= bit; break;
        case PauliAxis::y: t.flip_mask |= bit; t.sign_mask |= bit; ++n_y; break;
        case PauliAxis::z: t.sign_mask |= bit; break;
        }
    }
    static const Complex ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    t.base = coeff * ipow[n_y % 4];
    return t;
}

inline void apply_pauli_term(const PauliTerm& t, const CVector& psi, CVector& out, double scale)
{
    const long N = psi.size();
    const Complex b = t.base * scale;
    for (long z = 0; z < N; ++z) {
        const Complex amp = psi[z];
        const int parity = __builtin_parityl(z & t.sign_mask);
        out[z ^ t.flip_mask] += (parity ? -b : b) * amp;
    }
}

inline CMatrix pauli_sum_matrix(int n, const std::vector<PauliTerm>& terms)
{
    const long N = dim_of(n);
    CMatrix m = CMatrix::Zero(N, N);
    for (const auto& t : terms)
        for (long z = 0; z < N; ++z) {
            const int parity = __builtin_parityl(z & t.sign_mask);
            m(z ^ t.flip_mask, z) += parity ? -t.base : t.base;
        }
    return m;
}

// Tensor product of the listed Pauli factors with identity on unlisted
// qubits, under the MSB-first qubit ordering.
inline Operator assemble_pauli_term(int n, const std::vector<PauliFactor>& factors)
{
    PauliTerm t = make_pauli_term(n, factors);
    return Operator{n, pauli_sum_matrix(n, {t})};
}

// ---------------------------------------------------------------------------
// Primitive constructors

inline Primitive make_dense_primitive(Operator op)
{
    CMatrix m = op.matrix;
    Applier apply = [m](const CVector& psi, CVector& out, double c) {
        out.noalias() += c * (m * psi);
    };
    return Primitive{std::move(op), std::move(apply)};
}

inline Primitive make_pauli_sum_primitive(int n, std::vector<PauliTerm> terms)
{
    Operator op{n, pauli_sum_matrix(n, terms)};
    Applier apply = [terms](const CVector& psi, CVector& out, double c) {
        for (const auto& t : terms) apply_pauli_term(t, psi, out, c);
    };
    return Primitive{std::move(op), std::move(apply)};
}

inline Primitive make_diagonal_primitive(int n, Eigen::VectorXd diag)
{
    const long N = dim_of(n);
    if (diag.size() != N) throw std::invalid_argument("diagonal primitive: wrong length");
    Operator op{n, CMatrix(diag.cast<Complex>().asDiagonal())};
    Applier apply = [diag](const CVector& psi, CVector& out, double c) {
        out.array() += c * diag.array() * psi.array();
    };
    return Primitive{std::move(op), std::move(apply)};
}

// I - |u><u| for a normalized |u>.
inline Primitive make_projector_complement_primitive(int n, CVector u)
{
    const long N = dim_of(n);
    if (u.size() != N) throw std::invalid_argument("projector complement: wrong length");
    Operator op{n, CMatrix::Identity(N, N) - u * u.adjoint()};
    Applier apply = [u](const CVector& psi, CVector& out, double c) {
        const Complex overlap = u.dot(psi);
        out.noalias() += c * psi;
        out.noalias() -= (c * overlap) * u;
    };
    return Primitive{std::move(op), std::move(apply)};
}

// ---------------------------------------------------------------------------
// Assembly and spectra

inline Operator hamiltonian_at(const AdiabaticHamiltonian& h, const ScheduleFn& schedule, double s)
{
    h.validate();
    std::vector<double> x(h.size());
    schedule(s, x);
    const long N = dim_of(h.qubits());
    CMatrix m = CMatrix::Zero(N, N);
    for (std::size_t l = 0; l < h.size(); ++l) m += x[l] * h.primitives[l].op.matrix;
    return Operator{h.qubits(), std::move(m)};
}

struct Spectrum {
    Eigen::VectorXd values;  // ascending
    CMatrix vectors;         // columns, orthonormal
};

inline Spectrum instantaneous_spectrum(const Operator& op, int k)
{
    Eigen::SelfAdjointEigenSolver<CMatrix> es(op.matrix);
    if (es.info() != Eigen::Success) throw std::runtime_error("instantaneous_spectrum: eigensolver failed");
    k = std::min<long>(k, es.eigenvalues().size());
    Spectrum sp;
    sp.values = es.eigenvalues().head(k);
    sp.vectors = es.eigenvectors().leftCols(k);
    return sp;
}

// Eigenvalues within this of each other are reported as degenerate.
inline constexpr double kDegeneracyTol = 1e-10;

// ---------------------------------------------------------------------------
// Time evolution: i dpsi/ds = T H_ad(s) psi on s in [0,1]

namespace detail {

inline QuantumState evolve_rk4(const AdiabaticHamiltonian& h, const ScheduleFn& schedule,
                               double T, int steps, const QuantumState& initial)
{
    const long N = initial.amplitudes.size();
    const std::size_t L = h.size();
    const double dt = 1.0 / steps;
    std::vector<double> x(L);

    CVector y = initial.amplitudes;
    CVector k1(N), k2(N), k3(N), k4(N), tmp(N), hx(N);

    auto rhs = [&](double s, const CVector& psi, CVector& out) {
        schedule(s, x);
        hx.setZero();
        for (std::size_t l = 0; l < L; ++l)
            if (x[l] != 0.0) h.primitives[l].apply(psi, hx, x[l]);
        out = Complex(0.0, -T) * hx;
    };

    for (int step = 0; step < steps; ++step) {
        const double s = step * dt;
        rhs(s, y, k1);
        tmp = y + (0.5 * dt) * k1;
        rhs(s + 0.5 * dt, tmp, k2);
        tmp = y + (0.5 * dt) * k2;
        rhs(s + 0.5 * dt, tmp, k3);
        tmp = y + dt * k3;
        rhs(s + dt, tmp, k4);
        y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return QuantumState{initial.n, std::move(y)};
}

// Per-step matrix exponential of the midpoint Hamiltonian; the oracle mode
// bounding the rk4 discretization error.
inline QuantumState evolve_exact(const AdiabaticHamiltonian& h, const ScheduleFn& schedule,
                                 double T, int steps, const QuantumState& initial)
{
    const long N = initial.amplitudes.size();
    const std::size_t L = h.size();
    const double dt = 1.0 / steps;
    std::vector<double> x(L);
    CVector y = initial.amplitudes;
    CMatrix m(N, N);

    for (int step = 0; step < steps; ++step) {
        const double s_mid = (step + 0.5) * dt;
        schedule(s_mid, x);
        m.setZero();
        for (std::size_t l = 0; l < L; ++l) m += x[l] * h.primitives[l].op.matrix;
        Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
        CVector phases = (Complex(0.0, -T * dt) * es.eigenvalues().cast<Complex>().array()).exp();
        y = es.eigenvectors() * (phases.array() * (es.eigenvectors().adjoint() * y).array()).matrix();
    }
    return QuantumState{initial.n, std::move(y)};
}

} // namespace detail

inline QuantumState evolve(const AdiabaticHamiltonian& h, const ScheduleFn& schedule,
                           const EvolutionConfig& cfg, const QuantumState& initial)
{
    h.validate();
    cfg.validate();
    if (initial.amplitudes.size() != dim_of(h.qubits()))
        throw std::invalid_argument("evolve: state dimension does not match Hamiltonian");

    auto run = [&](int steps) {
        return cfg.method == EvolveMethod::rk4
                   ? detail::evolve_rk4(h, schedule, cfg.total_time, steps, initial)
                   : detail::evolve_exact(h, schedule, cfg.total_time, steps, initial);
    };
    QuantumState full = run(cfg.steps);
    if (cfg.convergence_check) {
        QuantumState half = run(std::max(16, cfg.steps / 2));
        const double shift = std::abs(std::abs(half.amplitudes.dot(full.amplitudes)) - 1.0);
        if (shift > 1e-6)
            throw std::runtime_error("evolve: step count too small (halving steps changes overlap by " +
                                     std::to_string(shift) + ")");
    }
    return full;
}

// Step-count rule: steps_per_unit steps per unit of T * max_s ||H_ad(s)||,
// never fewer than 512.
inline int default_steps(double T, double max_norm, double steps_per_unit = 2000.0)
{
    const double raw = steps_per_unit * T * max_norm;
    return std::max(512, static_cast<int>(std::ceil(raw)));
}

// Upper bound on max_s ||H_ad(s)|| along a schedule from the triangle
// inequality over cached primitive norms.
inline double max_schedule_norm(const AdiabaticHamiltonian& h, const ScheduleFn& schedule, int grid = 101)
{
    std::vector<double> norms(h.size());
    for (std::size_t l = 0; l < h.size(); ++l) norms[l] = h.primitives[l].op.norm();
    std::vector<double> x(h.size());
    double best = 0.0;
    for (int i = 0; i <= grid; ++i) {
        schedule(static_cast<double>(i) / grid, x);
        double total = 0.0;
        for (std::size_t l = 0; l < h.size(); ++l) total += std::abs(x[l]) * norms[l];
        best = std::max(best, total);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Measurement and distance

inline std::vector<long> sample_measurements(const QuantumState& state, long M, std::uint64_t seed)
{
    if (M < 1) throw std::invalid_argument("sample_measurements: M must be >= 1");
    const long N = state.amplitudes.size();
    std::vector<double> cdf(N);
    double acc = 0.0;
    for (long z = 0; z < N; ++z) {
        acc += std::norm(state.amplitudes[z]);
        cdf[z] = acc;
    }
    // acc is 1 up to integrator tolerance; normalize the tail exactly.
    cdf[N - 1] = acc;

    std::mt19937_64 gen(seed);
    std::vector<long> samples(M);
    for (long i = 0; i < M; ++i) {
        const double u = uniform01(gen) * acc;
        samples[i] = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    }
    return samples;
}

// Pure-state trace-norm distance sqrt(1 - |<a|b>|^2).
inline double trace_norm_distance(const QuantumState& a, const QuantumState& b)
{
    if (a.amplitudes.size() != b.amplitudes.size())
        throw std::invalid_argument("trace_norm_distance: dimension mismatch");
    const double overlap2 = std::norm(a.amplitudes.dot(b.amplitudes));
    return std::sqrt(std::max(0.0, 1.0 - overlap2));
}

} // namespace cloaqc
