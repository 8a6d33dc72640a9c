// Function-space control parametrization in the monomial basis
// phi_j(s) = s^{j-1}, boundary-constraint elimination, reference schedules
// (linear ramp, local-adiabatic reparametrization) and the adiabaticity
// penalty J_ad = sum_i int_0^1 |x_i'(s)| ds with its analytic gradient.
#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cloaqc/qsim.hpp"

namespace cloaqc {

struct BoundaryConstraint {
    int channel = 0;
    double s = 0.0; // exactly 0 or 1
    double value = 0.0;
};

// Per-channel slot convention for constraint elimination: the s=0 constraint
// pins alpha_{i,1} (the constant term) and the s=1 constraint is absorbed by
// alpha_{i,2}, so the interior coefficients remain the free parameters.
struct ControlSchedule {
    int channels = 0;
    int basis_size = 0; // d+1
    Eigen::MatrixXd weights; // channels x basis_size
    std::vector<BoundaryConstraint> constraints;

    void validate() const
    {
        if (weights.rows() != channels || weights.cols() != basis_size)
            throw std::invalid_argument("ControlSchedule: weight matrix shape mismatch");
        for (const auto& c : constraints) {
            if (c.channel < 0 || c.channel >= channels)
                throw std::invalid_argument("ControlSchedule: constraint channel out of range");
            if (c.s != 0.0 && c.s != 1.0)
                throw std::invalid_argument("ControlSchedule: constraint endpoint must be 0 or 1");
        }
    }

    double eval_channel(int i, double s) const
    {
        // Horner
        double v = 0.0;
        for (int j = basis_size - 1; j >= 0; --j) v = v * s + weights(i, j);
        return v;
    }

    double eval_channel_derivative(int i, double s) const
    {
        double v = 0.0;
        for (int j = basis_size - 1; j >= 1; --j) v = v * s + j * weights(i, j);
        return v;
    }

    Eigen::VectorXd eval(double s) const
    {
        Eigen::VectorXd out(channels);
        for (int i = 0; i < channels; ++i) out[i] = eval_channel(i, s);
        return out;
    }

    void eval_into(double s, std::span<double> out) const
    {
        for (int i = 0; i < channels; ++i) out[i] = eval_channel(i, s);
    }

    ScheduleFn to_fn() const
    {
        ControlSchedule copy = *this;
        return [copy](double s, std::span<double> out) { copy.eval_into(s, out); };
    }
};

namespace detail {

struct ChannelSlots {
    std::optional<double> v0; // s=0 constraint value
    std::optional<double> v1; // s=1 constraint value
    std::vector<int> free_slots;
};

inline std::vector<ChannelSlots> channel_slots(const ControlSchedule& tmpl)
{
    tmpl.validate();
    std::vector<ChannelSlots> slots(tmpl.channels);
    for (const auto& c : tmpl.constraints) {
        auto& ch = slots[c.channel];
        auto& target = (c.s == 0.0) ? ch.v0 : ch.v1;
        if (target && *target != c.value)
            throw std::invalid_argument("project_constraints: inconsistent duplicate constraint");
        target = c.value;
    }
    for (int i = 0; i < tmpl.channels; ++i) {
        auto& ch = slots[i];
        int used = (ch.v0 ? 1 : 0) + (ch.v1 ? 1 : 0);
        if (used > tmpl.basis_size)
            throw std::invalid_argument("project_constraints: over-determined channel");
        for (int j = 0; j < tmpl.basis_size; ++j) {
            if (ch.v0 && j == 0) continue;
            if (ch.v1 && j == 1) continue;
            ch.free_slots.push_back(j);
        }
    }
    return slots;
}

} // namespace detail

inline int free_parameter_count(const ControlSchedule& tmpl)
{
    int count = 0;
    for (const auto& ch : detail::channel_slots(tmpl)) count += static_cast<int>(ch.free_slots.size());
    return count;
}

// Fill the free (interior) coefficients from `free_params` and eliminate the
// endpoint constraints exactly: alpha_{i,1} = x_i(0) and alpha_{i,2} absorbs
// x_i(1) = sum_j alpha_{ij}.
inline ControlSchedule project_constraints(const Eigen::VectorXd& free_params, const ControlSchedule& tmpl)
{
    auto slots = detail::channel_slots(tmpl);
    int expected = 0;
    for (const auto& ch : slots) expected += static_cast<int>(ch.free_slots.size());
    if (free_params.size() != expected)
        throw std::invalid_argument("project_constraints: expected " + std::to_string(expected) +
                                    " free parameters, got " + std::to_string(free_params.size()));

    ControlSchedule out = tmpl;
    out.weights.setZero();
    int p = 0;
    for (int i = 0; i < tmpl.channels; ++i) {
        const auto& ch = slots[i];
        for (int j : ch.free_slots) out.weights(i, j) = free_params[p++];
        if (ch.v0) out.weights(i, 0) = *ch.v0;
        if (ch.v1) {
            double rest = 0.0;
            for (int j = 0; j < tmpl.basis_size; ++j)
                if (j != 1) rest += out.weights(i, j);
            out.weights(i, 1) = *ch.v1 - rest;
        }
    }
    return out;
}

// Chain rule through project_constraints: pull a gradient over the full
// coefficient matrix back to free-parameter coordinates.  When a channel has
// an s=1 constraint, alpha_{i,2} = v1 - sum of the other coefficients, so
// each free slot picks up -dJ/dalpha_{i,2}.
inline Eigen::VectorXd gradient_to_free(const Eigen::MatrixXd& grad_full, const ControlSchedule& tmpl)
{
    auto slots = detail::channel_slots(tmpl);
    Eigen::VectorXd g(free_parameter_count(tmpl));
    int p = 0;
    for (int i = 0; i < tmpl.channels; ++i) {
        const auto& ch = slots[i];
        for (int j : ch.free_slots) {
            double v = grad_full(i, j);
            if (ch.v1) v -= grad_full(i, 1);
            g[p++] = v;
        }
    }
    return g;
}

// Straight line through the stated endpoint values per channel; the template
// carries the matching boundary constraints.
inline ControlSchedule linear_schedule(const std::vector<std::pair<double, double>>& endpoints, int basis_size = 5)
{
    const int L = static_cast<int>(endpoints.size());
    if (basis_size < 2) throw std::invalid_argument("linear_schedule: basis_size must be >= 2");
    ControlSchedule sch;
    sch.channels = L;
    sch.basis_size = basis_size;
    sch.weights = Eigen::MatrixXd::Zero(L, basis_size);
    for (int i = 0; i < L; ++i) {
        sch.weights(i, 0) = endpoints[i].first;
        sch.weights(i, 1) = endpoints[i].second - endpoints[i].first;
        sch.constraints.push_back({i, 0.0, endpoints[i].first});
        sch.constraints.push_back({i, 1.0, endpoints[i].second});
    }
    return sch;
}

// ---------------------------------------------------------------------------
// Adiabaticity penalty

namespace detail {

// Roots of the channel derivative inside (0,1), bracketed on a uniform grid
// and refined by bisection; the |x'| integral is then exact piecewise:
// int_a^b |x'| ds = |x(b) - x(a)| when x' keeps its sign on [a,b].
inline std::vector<double> derivative_sign_changes(const ControlSchedule& sch, int i, int grid)
{
    std::vector<double> roots;
    double prev = sch.eval_channel_derivative(i, 0.0);
    for (int k = 1; k <= grid; ++k) {
        const double s = static_cast<double>(k) / grid;
        const double cur = sch.eval_channel_derivative(i, s);
        if (cur == 0.0 && s < 1.0) {
            // zero exactly on a grid node; record it so no bracket straddles it
            roots.push_back(s);
        } else if ((prev < 0.0 && cur > 0.0) || (prev > 0.0 && cur < 0.0)) {
            double a = static_cast<double>(k - 1) / grid, b = s;
            double fa = prev;
            for (int it = 0; it < 60; ++it) {
                const double m = 0.5 * (a + b);
                const double fm = sch.eval_channel_derivative(i, m);
                if ((fa < 0.0) == (fm < 0.0)) { a = m; fa = fm; } else { b = m; }
            }
            roots.push_back(0.5 * (a + b));
        }
        prev = cur;
    }
    return roots;
}

} // namespace detail

// Weighted form: channel i contributes weight[i] * int |x_i'|.  Channel ties
// (x_tied = x_src or 1 - x_src) leave |x'| unchanged, so a tied channel adds
// one unit of weight to its source channel.
inline double j_ad_weighted(const ControlSchedule& sch, const Eigen::VectorXd& weight, int quad_points = 256)
{
    if (quad_points < 64) throw std::invalid_argument("j_ad: quad_points must be >= 64");
    double total = 0.0;
    for (int i = 0; i < sch.channels; ++i) {
        if (weight[i] == 0.0) continue;
        std::vector<double> cuts{0.0};
        for (double r : detail::derivative_sign_changes(sch, i, quad_points)) cuts.push_back(r);
        cuts.push_back(1.0);
        double channel = 0.0;
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
            channel += std::abs(sch.eval_channel(i, cuts[k + 1]) - sch.eval_channel(i, cuts[k]));
        total += weight[i] * channel;
    }
    return total;
}

inline double j_ad(const ControlSchedule& sch, int quad_points = 256)
{
    if (quad_points < 64) throw std::invalid_argument("j_ad: quad_points must be >= 64");
    double total = 0.0;
    for (int i = 0; i < sch.channels; ++i) {
        std::vector<double> cuts{0.0};
        for (double r : detail::derivative_sign_changes(sch, i, quad_points)) cuts.push_back(r);
        cuts.push_back(1.0);
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
            total += std::abs(sch.eval_channel(i, cuts[k + 1]) - sch.eval_channel(i, cuts[k]));
    }
    return total;
}

// dJ/dalpha_{ij} = int_0^1 sign(x_i'(s)) phi_j'(s) ds, mapped to free
// coordinates.  Subgradient 0 is taken on channels with x' identically 0.
inline Eigen::VectorXd grad_j_ad_weighted(const ControlSchedule& sch, const Eigen::VectorXd& weight,
                                          int quad_points = 256)
{
    Eigen::MatrixXd grad_full = Eigen::MatrixXd::Zero(sch.channels, sch.basis_size);
    for (int i = 0; i < sch.channels; ++i) {
        if (weight[i] == 0.0) continue;
        bool flat = true;
        for (int j = 1; j < sch.basis_size; ++j)
            if (std::abs(sch.weights(i, j)) > 1e-14) flat = false;
        if (flat) continue;

        std::vector<double> cuts{0.0};
        for (double r : detail::derivative_sign_changes(sch, i, quad_points)) cuts.push_back(r);
        cuts.push_back(1.0);
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            const double a = cuts[k], b = cuts[k + 1];
            const double sgn = sch.eval_channel_derivative(i, 0.5 * (a + b)) >= 0.0 ? 1.0 : -1.0;
            // column j holds s^j, so int_a^b phi' = b^j - a^j
            for (int j = 1; j < sch.basis_size; ++j)
                grad_full(i, j) += weight[i] * sgn * (std::pow(b, j) - std::pow(a, j));
        }
    }
    return gradient_to_free(grad_full, sch);
}

inline Eigen::VectorXd grad_j_ad(const ControlSchedule& sch, int quad_points = 256)
{
    return grad_j_ad_weighted(sch, Eigen::VectorXd::Ones(sch.channels), quad_points);
}

// ---------------------------------------------------------------------------
// Tabulated schedules

struct TabulatedSchedule {
    std::vector<double> s;       // strictly increasing, s.front()=0, s.back()=1
    Eigen::MatrixXd values;      // rows x L

    void validate() const
    {
        if (s.size() < 2 || static_cast<long>(s.size()) != values.rows())
            throw std::invalid_argument("TabulatedSchedule: grid/value shape mismatch");
        if (s.front() != 0.0 || s.back() != 1.0)
            throw std::invalid_argument("TabulatedSchedule: grid must span [0,1]");
        for (std::size_t k = 1; k < s.size(); ++k)
            if (s[k] <= s[k - 1]) throw std::invalid_argument("TabulatedSchedule: grid must be strictly increasing");
    }

    Eigen::VectorXd eval(double t) const
    {
        if (t <= 0.0) return values.row(0);
        if (t >= 1.0) return values.row(values.rows() - 1);
        const auto it = std::upper_bound(s.begin(), s.end(), t);
        const long k = it - s.begin();
        const double w = (t - s[k - 1]) / (s[k] - s[k - 1]);
        return (1.0 - w) * values.row(k - 1) + w * values.row(k);
    }

    ScheduleFn to_fn() const
    {
        TabulatedSchedule copy = *this;
        return [copy](double t, std::span<double> out) {
            Eigen::VectorXd v = copy.eval(t);
            for (long i = 0; i < v.size(); ++i) out[i] = v[i];
        };
    }
};

// CSV with header "s,x1,...,xL".
inline void write_schedule_csv(const TabulatedSchedule& sch, const std::string& path)
{
    sch.validate();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "s";
    for (long i = 0; i < sch.values.cols(); ++i) f << ",x" << (i + 1);
    f << "\n";
    f.precision(17);
    for (std::size_t k = 0; k < sch.s.size(); ++k) {
        f << sch.s[k];
        for (long i = 0; i < sch.values.cols(); ++i) f << "," << sch.values(k, i);
        f << "\n";
    }
}

inline TabulatedSchedule read_schedule_csv(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty schedule file " + path);
    long cols = std::count(line.begin(), line.end(), ',');
    std::vector<double> grid;
    std::vector<double> flat;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<long>(row.size()) != cols + 1)
            throw std::runtime_error("ragged row in schedule file " + path);
        grid.push_back(row[0]);
        for (long i = 0; i < cols; ++i) flat.push_back(row[i + 1]);
    }
    TabulatedSchedule out;
    out.s = grid;
    out.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), static_cast<long>(grid.size()), cols);
    out.validate();
    return out;
}

// Sample a polynomial schedule onto a uniform grid for export.
inline TabulatedSchedule tabulate(const ControlSchedule& sch, int grid_size = 101)
{
    TabulatedSchedule out;
    out.s.resize(grid_size);
    out.values.resize(grid_size, sch.channels);
    for (int k = 0; k < grid_size; ++k) {
        const double s = static_cast<double>(k) / (grid_size - 1);
        out.s[k] = s;
        out.values.row(k) = sch.eval(s).transpose();
    }
    out.s.front() = 0.0;
    out.s.back() = 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Local-adiabatic reparametrization (Roland-Cerf-style)

// s(tau) obtained by integrating dtau/ds proportional to 1/Delta^2(s) with
// trapezoid quadrature on the supplied gap table and inverting by monotone
// interpolation.  `total` is the unnormalized integral of 1/Delta^2.
struct Reparametrization {
    std::vector<double> tau; // uniform in [0,1]
    std::vector<double> s;   // s(tau), strictly increasing, endpoints exact
    double total = 0.0;
};

inline Reparametrization local_adiabatic_schedule(const std::vector<double>& s_grid,
                                                  const std::vector<double>& gap,
                                                  int grid_size = 1001)
{
    if (s_grid.size() != gap.size() || s_grid.size() < 2)
        throw std::invalid_argument("local_adiabatic_schedule: bad gap table");
    for (double g : gap)
        if (g <= 0.0) throw std::invalid_argument("local_adiabatic_schedule: non-positive gap sample");

    const std::size_t K = s_grid.size();
    std::vector<double> cum(K, 0.0);
    for (std::size_t k = 1; k < K; ++k) {
        const double fa = 1.0 / (gap[k - 1] * gap[k - 1]);
        const double fb = 1.0 / (gap[k] * gap[k]);
        cum[k] = cum[k - 1] + 0.5 * (fa + fb) * (s_grid[k] - s_grid[k - 1]);
    }
    const double total = cum.back();

    Reparametrization rep;
    rep.total = total;
    rep.tau.resize(grid_size);
    rep.s.resize(grid_size);
    std::size_t j = 1;
    for (int k = 0; k < grid_size; ++k) {
        const double tau = static_cast<double>(k) / (grid_size - 1);
        rep.tau[k] = tau;
        const double target = tau * total;
        while (j + 1 < K && cum[j] < target) ++j;
        const double w = (target - cum[j - 1]) / (cum[j] - cum[j - 1]);
        rep.s[k] = s_grid[j - 1] + w * (s_grid[j] - s_grid[j - 1]);
    }
    rep.s.front() = s_grid.front();
    rep.s.back() = s_grid.back();
    return rep;
}

// Compose a reparametrization with the linear one-IC path: x1 = 1 - s(tau),
// x2 = s(tau).
inline TabulatedSchedule one_ic_schedule_from_reparam(const Reparametrization& rep)
{
    TabulatedSchedule out;
    out.s = rep.tau;
    out.values.resize(static_cast<long>(rep.tau.size()), 2);
    for (std::size_t k = 0; k < rep.tau.size(); ++k) {
        out.values(static_cast<long>(k), 0) = 1.0 - rep.s[k];
        out.values(static_cast<long>(k), 1) = rep.s[k];
    }
    return out;
}

} // namespace cloaqc
