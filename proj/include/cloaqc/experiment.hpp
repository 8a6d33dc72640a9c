// Experiment harness: control-scenario layouts with channel tying,
// TOML-configured experiments, ensemble orchestration with derived seeds,
// and persistence of instances, trajectories, schedules and reports.
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cloaqc/analyzer.hpp"
#include "cloaqc/problems.hpp"
#include "cloaqc/qsim.hpp"
#include "cloaqc/rng.hpp"
#include "cloaqc/schedules.hpp"
#include "cloaqc/spsa.hpp"
#include "cloaqc/toml_lite.hpp"

namespace cloaqc {

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Control layouts: how full Hamiltonian channels derive from the independent
// controls that SPSA actually optimizes.

struct ChannelTie {
    enum class Kind { direct, one_minus, zero };
    Kind kind = Kind::direct;
    int src = 0; // index into the independent-control template
};

struct ControlLayout {
    std::vector<std::string> channel_names; // full channels, one per primitive
    std::vector<ChannelTie> ties;
    ControlSchedule ic_template; // independent channels with their constraints
    Eigen::VectorXd ic_weight;   // J_ad weight per IC (1 + tied copies)

    int full_channels() const { return static_cast<int>(ties.size()); }

    void fill(const Eigen::VectorXd& ic_values, std::span<double> out) const
    {
        for (std::size_t i = 0; i < ties.size(); ++i) {
            switch (ties[i].kind) {
            case ChannelTie::Kind::direct: out[i] = ic_values[ties[i].src]; break;
            case ChannelTie::Kind::one_minus: out[i] = 1.0 - ic_values[ties[i].src]; break;
            case ChannelTie::Kind::zero: out[i] = 0.0; break;
            }
        }
    }

    // Free parameters -> schedule over the full channel set.
    ScheduleFn schedule_fn(const Eigen::VectorXd& free_params) const
    {
        ControlSchedule ic = project_constraints(free_params, ic_template);
        ControlLayout layout = *this;
        return [layout, ic](double s, std::span<double> out) {
            layout.fill(ic.eval(s), out);
        };
    }

    TabulatedSchedule tabulate_full(const Eigen::VectorXd& free_params, int grid_size = 101) const
    {
        ControlSchedule ic = project_constraints(free_params, ic_template);
        TabulatedSchedule out;
        out.s.resize(grid_size);
        out.values.resize(grid_size, full_channels());
        std::vector<double> x(full_channels());
        for (int k = 0; k < grid_size; ++k) {
            const double s = static_cast<double>(k) / (grid_size - 1);
            out.s[k] = s;
            fill(ic.eval(s), x);
            for (int i = 0; i < full_channels(); ++i) out.values(k, i) = x[i];
        }
        out.s.front() = 0.0;
        out.s.back() = 1.0;
        return out;
    }
};

namespace detail {

inline ControlSchedule ic_template_from(const std::vector<std::pair<double, double>>& endpoints, int basis_size)
{
    ControlSchedule tmpl = linear_schedule(endpoints, basis_size);
    tmpl.weights.setZero(); // template carries only shape and constraints
    return tmpl;
}

inline Eigen::VectorXd tie_weights(const std::vector<ChannelTie>& ties, int ic_count)
{
    Eigen::VectorXd w = Eigen::VectorXd::Zero(ic_count);
    for (const auto& t : ties)
        if (t.kind != ChannelTie::Kind::zero) w[t.src] += 1.0;
    return w;
}

} // namespace detail

// Grover: channels (x1, x2); one IC ties x2 = 1 - x1.
inline ControlLayout grover_layout(int independent_controls, int basis_size = 5)
{
    ControlLayout layout;
    layout.channel_names = {"x1", "x2"};
    if (independent_controls == 1) {
        layout.ties = {{ChannelTie::Kind::direct, 0}, {ChannelTie::Kind::one_minus, 0}};
        layout.ic_template = detail::ic_template_from({{1.0, 0.0}}, basis_size);
    } else if (independent_controls == 2) {
        layout.ties = {{ChannelTie::Kind::direct, 0}, {ChannelTie::Kind::direct, 1}};
        layout.ic_template = detail::ic_template_from({{1.0, 0.0}, {0.0, 1.0}}, basis_size);
    } else {
        throw ConfigError("grover supports 1 or 2 independent controls");
    }
    layout.ic_weight = detail::tie_weights(layout.ties, layout.ic_template.channels);
    return layout;
}

// MAX 2-SAT channels (x1, x2, x3, x4) over (H_0, H_I, H_P1, H_P2) with the
// boundary conditions x1(0)=x3(1)=x4(1)=1, x1(1)=x3(0)=x4(0)=0 and
// x2(0)=x2(1)=0.  Scenarios:
//   1: one IC,    x3 = x4 = 1 - x1, x2 = 0
//   2: two ICs,   x2 = 0, x4 = x3
//   3: three ICs, x4 = x3
//   4: four ICs
inline ControlLayout max2sat_layout(int scenario, int basis_size = 5)
{
    using K = ChannelTie::Kind;
    ControlLayout layout;
    layout.channel_names = {"x1", "x2", "x3", "x4"};
    switch (scenario) {
    case 1:
        layout.ties = {{K::direct, 0}, {K::zero, 0}, {K::one_minus, 0}, {K::one_minus, 0}};
        layout.ic_template = detail::ic_template_from({{1.0, 0.0}}, basis_size);
        break;
    case 2:
        layout.ties = {{K::direct, 0}, {K::zero, 0}, {K::direct, 1}, {K::direct, 1}};
        layout.ic_template = detail::ic_template_from({{1.0, 0.0}, {0.0, 1.0}}, basis_size);
        break;
    case 3:
        layout.ties = {{K::direct, 0}, {K::direct, 1}, {K::direct, 2}, {K::direct, 2}};
        layout.ic_template = detail::ic_template_from({{1.0, 0.0}, {0.0, 0.0}, {0.0, 1.0}}, basis_size);
        break;
    case 4:
        layout.ties = {{K::direct, 0}, {K::direct, 1}, {K::direct, 2}, {K::direct, 3}};
        layout.ic_template =
            detail::ic_template_from({{1.0, 0.0}, {0.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}}, basis_size);
        break;
    default:
        throw ConfigError("max2sat scenario must be 1..4");
    }
    layout.ic_weight = detail::tie_weights(layout.ties, layout.ic_template.channels);
    return layout;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct NoiseSpec {
    bool enabled = false;
    NoiseRamp ramp = NoiseRamp::sine;
    double C = 0.0;
    std::uint64_t seed = 7;
};

struct ExperimentConfig {
    // problem
    std::string problem = "grover"; // grover | max2sat
    int n = 4;
    long marked = -1; // grover; -1 -> drawn from the master seed
    int controls = 1; // grover IC count, or max2sat scenario 1..4
    std::string instance_file;
    std::uint64_t instance_seed = 11;
    IntermediateKind hi_kind = IntermediateKind::xx;
    // schedule
    int basis_size = 5;
    // runtime
    double T = 0.0; // <= 0 -> calibrate
    double target_p = 0.4;
    double calibrate_tol = 0.01;
    // optimizer
    SpsaConfig spsa;
    // noise
    NoiseSpec noise;
    // run
    int realizations = 25;
    std::uint64_t master_seed = 1;
    std::string out_dir;
    int jobs = 1;
    long d_record_every = 10;
    // step-count rules (steps per unit of T * max ||H||):
    //  - objective: inner-loop evolves feeding the sampled energy estimate,
    //    whose resolution is limited by M anyway
    //  - analysis: every reported quantity (D, P(E_0), oracle checks)
    double objective_steps_per_unit = 8.0;
    double analysis_steps_per_unit = 2000.0;
    double calibration_steps_per_unit = 200.0;
};

inline IntermediateKind parse_hi_kind(const std::string& s)
{
    if (s == "xx") return IntermediateKind::xx;
    if (s == "y") return IntermediateKind::y;
    if (s == "xz") return IntermediateKind::xz;
    throw ConfigError("unknown intermediate Hamiltonian kind '" + s + "' (expected xx|y|xz)");
}

inline NoiseRamp parse_noise_ramp(const std::string& s)
{
    if (s == "linear") return NoiseRamp::linear;
    if (s == "sine") return NoiseRamp::sine;
    if (s == "fast_sine") return NoiseRamp::fast_sine;
    throw ConfigError("unknown noise ramp '" + s + "' (expected linear|sine|fast_sine)");
}

inline ExperimentConfig parse_experiment_config(const toml::Table& t)
{
    ExperimentConfig cfg;
    cfg.problem = t.get_string("problem.type", cfg.problem);
    if (cfg.problem != "grover" && cfg.problem != "max2sat")
        throw ConfigError("problem.type must be grover or max2sat");
    cfg.n = static_cast<int>(t.get_int("problem.n", cfg.n));
    if (cfg.n < 1 || cfg.n > 12) throw ConfigError("problem.n must be in [1,12]");
    cfg.marked = t.get_int("problem.marked", cfg.marked);
    cfg.controls = static_cast<int>(t.get_int("problem.controls", cfg.controls));
    cfg.instance_file = t.get_string("problem.instance_file", "");
    cfg.instance_seed = static_cast<std::uint64_t>(t.get_int("problem.instance_seed", cfg.instance_seed));
    cfg.hi_kind = parse_hi_kind(t.get_string("problem.hi_kind", "xx"));

    cfg.basis_size = static_cast<int>(t.get_int("schedule.basis_size", cfg.basis_size));
    if (cfg.basis_size < 3) throw ConfigError("schedule.basis_size must be >= 3");

    cfg.T = t.get_number("runtime.T", cfg.T);
    cfg.target_p = t.get_number("runtime.target_p", cfg.target_p);
    cfg.calibrate_tol = t.get_number("runtime.tolerance", cfg.calibrate_tol);

    cfg.spsa.K = t.get_int("spsa.K", cfg.spsa.K);
    cfg.spsa.M = t.get_int("spsa.M", cfg.spsa.M);
    cfg.spsa.alpha0 = t.get_number("spsa.alpha0", cfg.spsa.alpha0);
    cfg.spsa.beta0 = t.get_number("spsa.beta0", cfg.spsa.beta0);
    cfg.spsa.R = t.get_number("spsa.R", cfg.spsa.R);
    cfg.spsa.delta = t.get_number("spsa.delta", cfg.spsa.delta);
    cfg.spsa.zeta = t.get_number("spsa.zeta", cfg.spsa.zeta);
    cfg.spsa.lambda_ad = t.get_number("spsa.lambda_ad", cfg.spsa.lambda_ad);
    try {
        cfg.spsa.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("spsa: ") + e.what());
    }

    cfg.noise.enabled = t.get_bool("noise.enabled", false);
    cfg.noise.ramp = parse_noise_ramp(t.get_string("noise.ramp", "sine"));
    cfg.noise.C = t.get_number("noise.C", 0.0);
    cfg.noise.seed = static_cast<std::uint64_t>(t.get_int("noise.seed", 7));

    cfg.realizations = static_cast<int>(t.get_int("run.realizations", cfg.realizations));
    if (cfg.realizations < 1) throw ConfigError("run.realizations must be >= 1");
    cfg.master_seed = static_cast<std::uint64_t>(t.get_int("run.seed", cfg.master_seed));
    cfg.out_dir = t.get_string("run.out", "");
    cfg.jobs = static_cast<int>(t.get_int("run.jobs", cfg.jobs));
    cfg.d_record_every = t.get_int("run.d_record_every", cfg.d_record_every);
    cfg.objective_steps_per_unit = t.get_number("run.objective_steps_per_unit", cfg.objective_steps_per_unit);
    cfg.analysis_steps_per_unit = t.get_number("run.analysis_steps_per_unit", cfg.analysis_steps_per_unit);
    cfg.calibration_steps_per_unit =
        t.get_number("run.calibration_steps_per_unit", cfg.calibration_steps_per_unit);
    return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c)
{
    nlohmann::json j;
    j["problem"] = {{"type", c.problem}, {"n", c.n}, {"marked", c.marked}, {"controls", c.controls},
                    {"instance_file", c.instance_file}, {"instance_seed", c.instance_seed},
                    {"hi_kind", static_cast<int>(c.hi_kind)}};
    j["schedule"] = {{"basis_size", c.basis_size}};
    j["runtime"] = {{"T", c.T}, {"target_p", c.target_p}, {"tolerance", c.calibrate_tol}};
    j["spsa"] = {{"K", c.spsa.K}, {"M", c.spsa.M}, {"alpha0", c.spsa.alpha0}, {"beta0", c.spsa.beta0},
                 {"R", c.spsa.R}, {"delta", c.spsa.delta}, {"zeta", c.spsa.zeta},
                 {"lambda_ad", c.spsa.lambda_ad}};
    j["noise"] = {{"enabled", c.noise.enabled}, {"ramp", static_cast<int>(c.noise.ramp)},
                  {"C", c.noise.C}, {"seed", c.noise.seed}};
    j["run"] = {{"realizations", c.realizations}, {"seed", c.master_seed},
                {"d_record_every", c.d_record_every},
                {"objective_steps_per_unit", c.objective_steps_per_unit},
                {"analysis_steps_per_unit", c.analysis_steps_per_unit},
                {"calibration_steps_per_unit", c.calibration_steps_per_unit}};
    return j;
}

inline std::uint64_t config_hash(const ExperimentConfig& c)
{
    const std::string s = config_to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Experiment setup

struct ExperimentSetup {
    ExperimentConfig cfg;
    AdiabaticHamiltonian ham; // full channels; noise channel appended when enabled
    ControlLayout layout;
    Operator hp;
    Eigen::VectorXd hp_diag;
    QuantumState ground; // nondegenerate ground state of H_P
    QuantumState initial;
    std::optional<ProblemInstance> instance;
    std::optional<NoiseModel> noise;
    std::vector<double> primitive_norms;
    double T = 0.0;
    double delta_lin = 0.0; // minimum gap under the linear initialization schedule
    double d_lin = 0.0;     // adiabatic error of the linear schedule at T
    double p_lin = 0.0;

    // Wrap a full-channel schedule with the noise ramp on the appended channel.
    ScheduleFn with_noise(ScheduleFn base) const
    {
        if (!noise) return base;
        NoiseModel model = *noise;
        const int L = layout.full_channels();
        return [base = std::move(base), model, L](double s, std::span<double> out) {
            base(s, out.subspan(0, L));
            out[L] = model.gamma(s);
        };
    }

    ScheduleFn evolution_schedule(const Eigen::VectorXd& free_params) const
    {
        return with_noise(layout.schedule_fn(free_params));
    }

    double norm_bound(const ScheduleFn& schedule, int grid = 33) const
    {
        std::vector<double> x(ham.size());
        double best = 0.0;
        for (int i = 0; i <= grid; ++i) {
            schedule(static_cast<double>(i) / grid, x);
            double total = 0.0;
            for (std::size_t l = 0; l < ham.size(); ++l) total += std::abs(x[l]) * primitive_norms[l];
            best = std::max(best, total);
        }
        return best;
    }

    EvolutionConfig evolution_config(const ScheduleFn& schedule, double steps_per_unit) const
    {
        EvolutionConfig evo;
        evo.total_time = T;
        evo.steps = default_steps(T, norm_bound(schedule), steps_per_unit);
        return evo;
    }

    QuantumState evolve_schedule(const ScheduleFn& schedule, double steps_per_unit) const
    {
        return evolve(ham, schedule, evolution_config(schedule, steps_per_unit), initial);
    }

    // The noiseless Hamiltonian restricted to the layout channels, for gap
    // scans (the analyzer characterizes the ideal spectrum).
    AdiabaticHamiltonian ideal_ham() const
    {
        if (!noise) return ham;
        AdiabaticHamiltonian h = ham;
        h.primitives.pop_back();
        h.channels.pop_back();
        return h;
    }
};

inline ExperimentSetup build_setup(const ExperimentConfig& cfg, bool calibrate = true)
{
    ExperimentSetup st;
    st.cfg = cfg;
    if (cfg.problem == "grover") {
        long marked = cfg.marked;
        if (marked < 0) {
            std::uint64_t s = derive_seed(cfg.master_seed, 0x6e0);
            marked = static_cast<long>(s % dim_of(cfg.n));
        }
        st.ham = grover_problem(cfg.n, marked);
        st.layout = grover_layout(cfg.controls, cfg.basis_size);
        st.hp = st.ham.primitives[1].op;
        st.hp_diag = Eigen::VectorXd::Ones(dim_of(cfg.n));
        st.hp_diag[marked] = 0.0;
        st.ground = basis_state(cfg.n, marked);
    } else {
        ProblemInstance inst = cfg.instance_file.empty()
                                   ? generate_usa_instance(cfg.n, cfg.instance_seed)
                                   : read_instance(cfg.instance_file);
        if (inst.n != cfg.n) throw ConfigError("instance qubit count does not match problem.n");
        auto [d1, d2] = compile_2sat_diagonals(inst);
        st.ham.primitives.push_back(initial_hamiltonian_primitive(cfg.n));
        st.ham.primitives.push_back(intermediate_hamiltonian_primitive(cfg.hi_kind, cfg.n));
        st.ham.primitives.push_back(make_diagonal_primitive(cfg.n, d1));
        st.ham.primitives.push_back(make_diagonal_primitive(cfg.n, d2));
        st.ham.channels = {"x1", "x2", "x3", "x4"};
        st.layout = max2sat_layout(cfg.controls, cfg.basis_size);
        st.hp_diag = d1 + d2;
        st.hp = Operator{cfg.n, CMatrix(st.hp_diag.cast<Complex>().asDiagonal())};
        st.ground = ground_state_of(st.hp);
        st.instance = std::move(inst);
    }
    st.initial = uniform_superposition(cfg.n);

    if (cfg.noise.enabled) {
        st.noise = make_noise_model(cfg.n, cfg.noise.ramp, cfg.noise.C, cfg.noise.seed);
        st.ham.primitives.push_back(noise_base_primitive(*st.noise));
        st.ham.channels.push_back("gamma");
    }
    st.primitive_norms.resize(st.ham.size());
    for (std::size_t l = 0; l < st.ham.size(); ++l)
        st.primitive_norms[l] = st.ham.primitives[l].op.norm();

    const Eigen::VectorXd zero_free = Eigen::VectorXd::Zero(free_parameter_count(st.layout.ic_template));
    const ScheduleFn linear_ideal = st.layout.schedule_fn(zero_free);
    st.delta_lin = gap_scan(st.ideal_ham(), linear_ideal).delta_min;

    if (cfg.T > 0.0) {
        st.T = cfg.T;
    } else if (calibrate) {
        // Calibration is performed on the ideal (noiseless) dynamics; the
        // error model perturbs an already-chosen runtime.
        st.T = calibrate_runtime(st.ideal_ham(), linear_ideal, st.hp, st.initial, st.delta_lin,
                                 cfg.target_p, cfg.calibrate_tol, cfg.calibration_steps_per_unit);
    } else {
        throw ConfigError("runtime.T not set and calibration disabled");
    }

    const ScheduleFn linear_full = st.with_noise(linear_ideal);
    QuantumState lin_final = st.evolve_schedule(linear_full, cfg.analysis_steps_per_unit);
    st.d_lin = trace_norm_distance(st.ground, lin_final);
    st.p_lin = std::norm(st.ground.amplitudes.dot(lin_final.amplitudes));
    return st;
}

// ---------------------------------------------------------------------------
// Realizations and runs

struct RealizationResult {
    std::uint64_t seed = 0;
    OptimizeResult opt;
    RealizationOutcome outcome;
    std::vector<std::pair<long, double>> d_trace; // (k, D at iterate)
    TabulatedSchedule best_schedule;              // full channels on a 101-grid
};

struct RunRecord {
    ExperimentConfig cfg;
    std::uint64_t hash = 0;
    double T = 0.0;
    double d_lin = 0.0, delta_lin = 0.0, p_lin = 0.0;
    std::vector<RealizationResult> realizations;
    PerformanceReport report;
    double wall_seconds = 0.0;
};

inline StochasticObjective make_setup_objective(const ExperimentSetup& st)
{
    // The objective closes over end-of-run measurement data only.
    const ExperimentSetup* setup = &st;
    return [setup](const Eigen::VectorXd& free, std::uint64_t seed, long M) {
        ScheduleFn sched = setup->evolution_schedule(free);
        QuantumState final =
            setup->evolve_schedule(sched, setup->cfg.objective_steps_per_unit);
        const auto samples = sample_measurements(final, M, seed);
        double acc = 0.0;
        for (long z : samples) acc += setup->hp_diag[z];
        return acc / static_cast<double>(M);
    };
}

inline RealizationResult run_realization(const ExperimentSetup& st, int index)
{
    RealizationResult res;
    res.seed = derive_seed(st.cfg.master_seed, static_cast<std::uint64_t>(index));

    SpsaConfig spsa_cfg = st.cfg.spsa;
    spsa_cfg.seed = res.seed;

    StochasticObjective objective = make_setup_objective(st);
    const Eigen::VectorXd initial_free =
        Eigen::VectorXd::Zero(free_parameter_count(st.layout.ic_template));

    auto penalty_gradient = [&st](const Eigen::VectorXd& free) {
        ControlSchedule ic = project_constraints(free, st.layout.ic_template);
        return grad_j_ad_weighted(ic, st.layout.ic_weight);
    };

    auto observer = [&st, &res](long k, const Eigen::VectorXd& free) {
        if (st.cfg.d_record_every <= 0) return;
        if (k % st.cfg.d_record_every != 0 && k != st.cfg.spsa.K - 1) return;
        QuantumState final = st.evolve_schedule(st.evolution_schedule(free),
                                                st.cfg.objective_steps_per_unit);
        res.d_trace.emplace_back(k, trace_norm_distance(st.ground, final));
    };

    res.opt = optimize(spsa_cfg, objective, initial_free, penalty_gradient, observer);

    // Analysis-grade evaluation of the reported schedule.
    ScheduleFn best = st.evolution_schedule(res.opt.best_params);
    QuantumState final = st.evolve_schedule(best, st.cfg.analysis_steps_per_unit);
    res.outcome.seed = res.seed;
    res.outcome.d = trace_norm_distance(st.ground, final);
    res.outcome.p_ground = std::norm(st.ground.amplitudes.dot(final.amplitudes));
    res.outcome.delta_min =
        gap_scan(st.ideal_ham(), st.layout.schedule_fn(res.opt.best_params)).delta_min;
    res.best_schedule = st.layout.tabulate_full(res.opt.best_params);
    return res;
}

inline RunRecord run_experiment(const ExperimentSetup& st)
{
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord record;
    record.cfg = st.cfg;
    record.hash = config_hash(st.cfg);
    record.T = st.T;
    record.d_lin = st.d_lin;
    record.delta_lin = st.delta_lin;
    record.p_lin = st.p_lin;
    record.realizations.resize(st.cfg.realizations);

    const int jobs = std::max(1, st.cfg.jobs);
    if (jobs == 1) {
        for (int i = 0; i < st.cfg.realizations; ++i)
            record.realizations[i] = run_realization(st, i);
    } else {
        // Results land at their realization index, so the merge order is
        // deterministic regardless of completion order.
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < st.cfg.realizations; i = next.fetch_add(1))
                    record.realizations[i] = run_realization(st, i);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<RealizationOutcome> outcomes;
    for (const auto& r : record.realizations) outcomes.push_back(r.outcome);
    record.report = performance_report(outcomes, st.d_lin, st.delta_lin);
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return record;
}

inline RunRecord run_experiment(const ExperimentConfig& cfg)
{
    return run_experiment(build_setup(cfg));
}

// ---------------------------------------------------------------------------
// Persistence

inline void write_run_record(const RunRecord& record, const std::string& dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json j;
    j["config"] = config_to_json(record.cfg);
    j["config_hash"] = record.hash;
    j["T"] = record.T;
    j["baseline"] = {{"D_lin", record.d_lin}, {"Delta_lin", record.delta_lin}, {"P_lin", record.p_lin}};
    j["seeds"] = nlohmann::json::array();
    for (const auto& r : record.realizations) j["seeds"].push_back(r.seed);
    std::vector<RealizationOutcome> outcomes;
    for (const auto& r : record.realizations) outcomes.push_back(r.outcome);
    j["report"] = report_to_json(record.report, outcomes);
    j["wall_seconds"] = record.wall_seconds;
    std::ofstream rec(dir + "/record.json");
    rec << j.dump(2) << "\n";

    write_report_csv(outcomes, dir + "/report.csv");
    for (std::size_t i = 0; i < record.realizations.size(); ++i) {
        const auto& r = record.realizations[i];
        write_trajectory_csv(r.opt.trajectory, dir + "/trajectory_" + std::to_string(i) + ".csv");
        write_schedule_csv(r.best_schedule, dir + "/schedule_" + std::to_string(i) + ".csv");
        std::ofstream dt(dir + "/dtrace_" + std::to_string(i) + ".csv");
        dt << "k,D\n";
        dt.precision(17);
        for (const auto& [k, d] : r.d_trace) dt << k << "," << d << "\n";
    }
}

// ---------------------------------------------------------------------------
// Comparison against baselines (linear or tabulated reference paths)

struct ComparisonRow {
    long k = 0;
    double median_rel = 0.0; // median over realizations of (D_cloaqc - D_ref)/D_ref
    double q25 = 0.0, q75 = 0.0;
};

inline std::vector<ComparisonRow> compare_against(const RunRecord& record, double d_ref)
{
    if (d_ref <= 0.0) throw std::invalid_argument("compare_against: reference D must be > 0");
    std::vector<ComparisonRow> rows;
    if (record.realizations.empty()) return rows;
    const auto& ks = record.realizations.front().d_trace;
    for (std::size_t t = 0; t < ks.size(); ++t) {
        std::vector<double> rel;
        for (const auto& r : record.realizations)
            if (t < r.d_trace.size()) rel.push_back((r.d_trace[t].second - d_ref) / d_ref);
        if (rel.empty()) continue;
        rows.push_back({ks[t].first, median_of(rel), quantile_of(rel, 0.25), quantile_of(rel, 0.75)});
    }
    return rows;
}

// Adiabatic error of an arbitrary full-channel schedule at the setup's T.
inline double schedule_adiabatic_error(const ExperimentSetup& st, const ScheduleFn& schedule)
{
    QuantumState final = st.evolve_schedule(st.with_noise(schedule), st.cfg.analysis_steps_per_unit);
    return trace_norm_distance(st.ground, final);
}

inline void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "k,median_rel_diff,q25,q75\n";
    f.precision(17);
    for (const auto& r : rows) f << r.k << "," << r.median_rel << "," << r.q25 << "," << r.q75 << "\n";
}

} // namespace cloaqc
