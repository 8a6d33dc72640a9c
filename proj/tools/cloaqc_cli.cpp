// Batch front end.  Every subcommand reads a TOML config, applies the CLI
// overrides (--jobs, --seed, --out) and runs without interaction.
//
// Exit codes: 0 success, 1 config error, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <cloaqc/experiment.hpp>

namespace fs = std::filesystem;
using namespace cloaqc;

namespace {

struct CommonArgs {
    std::string config_path;
    int jobs = 0;           // 0 -> keep config value
    long long seed = -1;    // <0 -> keep config value
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true)
{
    auto* c = cmd->add_option("--config", args.config_path, "TOML experiment config");
    if (config_required) c->required()->check(CLI::ExistingFile);
    cmd->add_option("--jobs", args.jobs, "worker count for realization-level parallelism");
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--out", args.out_dir, "output directory");
}

ExperimentConfig load_config(const CommonArgs& args)
{
    ExperimentConfig cfg = parse_experiment_config(toml::parse_file(args.config_path));
    if (args.jobs > 0) cfg.jobs = args.jobs;
    if (args.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(args.seed);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    return cfg;
}

void require_out(const ExperimentConfig& cfg)
{
    if (cfg.out_dir.empty())
        throw ConfigError("an output directory is required (--out or run.out)");
}

std::vector<double> sweep_values(const toml::Table& t, const std::string& key)
{
    if (!t.contains(key)) return {};
    std::vector<double> out;
    for (const auto& v : t.at(key).as_array()) out.push_back(v.as_number());
    return out;
}

void print_report(const RunRecord& record)
{
    std::cout << "T = " << record.T << "\n"
              << "D_lin = " << record.d_lin << "  Delta_lin = " << record.delta_lin
              << "  P_lin = " << record.p_lin << "\n"
              << "median D = " << record.report.d_cloaqc << "  IQR = ["
              << record.report.d_iqr_lo << ", " << record.report.d_iqr_hi << "]\n"
              << "median P(E0) = " << record.report.p_ground_median << "\n"
              << "alpha_D = " << record.report.alpha_d
              << "  alpha_Delta = " << record.report.alpha_delta << "\n"
              << "wall = " << record.wall_seconds << " s\n";
}

int cmd_generate_instances(const CommonArgs& args, int count)
{
    ExperimentConfig cfg = load_config(args);
    require_out(cfg);
    fs::create_directories(cfg.out_dir);
    for (int i = 0; i < count; ++i) {
        const std::uint64_t seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
        ProblemInstance inst = generate_usa_instance(cfg.n, seed);
        write_instance(inst, cfg.out_dir + "/instance_" + std::to_string(i) + ".json");
    }
    std::cout << "wrote " << count << " instances to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_calibrate(const CommonArgs& args)
{
    ExperimentConfig cfg = load_config(args);
    cfg.T = 0.0; // force a fresh calibration even when the config pins T
    ExperimentSetup st = build_setup(cfg);
    nlohmann::json j{{"T", st.T},
                     {"Delta_lin", st.delta_lin},
                     {"D_lin", st.d_lin},
                     {"P_lin", st.p_lin},
                     {"target_p", cfg.target_p}};
    std::cout << j.dump(2) << "\n";
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        std::ofstream f(cfg.out_dir + "/calibration.json");
        f << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_optimize(const CommonArgs& args)
{
    ExperimentConfig cfg = load_config(args);
    require_out(cfg);
    RunRecord record = run_experiment(cfg);
    write_run_record(record, cfg.out_dir);
    print_report(record);
    return 0;
}

int cmd_compare(const CommonArgs& args)
{
    ExperimentConfig cfg = load_config(args);
    require_out(cfg);
    RunRecord record = run_experiment(cfg);
    write_run_record(record, cfg.out_dir);
    write_comparison_csv(compare_against(record, record.d_lin), cfg.out_dir + "/comparison.csv");
    print_report(record);
    return 0;
}

int cmd_noise_sweep(const CommonArgs& args)
{
    ExperimentConfig base = load_config(args);
    require_out(base);
    std::vector<double> cs = sweep_values(toml::parse_file(args.config_path), "sweep.C");
    if (cs.empty()) cs = {0.0, 0.05, 0.1, 0.2};

    fs::create_directories(base.out_dir);
    std::ofstream summary(base.out_dir + "/noise_sweep.csv");
    summary << "C,T,D_lin,D_median,D_q25,D_q75,P_median,alpha_D\n";
    summary.precision(17);
    for (std::size_t i = 0; i < cs.size(); ++i) {
        ExperimentConfig cfg = base;
        cfg.noise.enabled = true;
        cfg.noise.C = cs[i];
        RunRecord record = run_experiment(cfg);
        write_run_record(record, base.out_dir + "/C_" + std::to_string(i));
        summary << cs[i] << "," << record.T << "," << record.d_lin << ","
                << record.report.d_cloaqc << "," << record.report.d_iqr_lo << ","
                << record.report.d_iqr_hi << "," << record.report.p_ground_median << ","
                << record.report.alpha_d << "\n";
        std::cout << "C = " << cs[i] << ": median D = " << record.report.d_cloaqc
                  << " (linear " << record.d_lin << ")\n";
    }
    return 0;
}

int cmd_runtime_sweep(const CommonArgs& args)
{
    ExperimentConfig base = load_config(args);
    require_out(base);
    std::vector<double> ts = sweep_values(toml::parse_file(args.config_path), "sweep.T");
    std::vector<double> targets;
    if (ts.empty()) {
        targets = sweep_values(toml::parse_file(args.config_path), "sweep.target_p");
        if (targets.empty()) targets = {0.38, 0.5};
    }

    fs::create_directories(base.out_dir);
    std::ofstream summary(base.out_dir + "/runtime_sweep.csv");
    summary << "T,P_lin,D_lin,D_median,P_median,alpha_D\n";
    summary.precision(17);
    const std::size_t points = ts.empty() ? targets.size() : ts.size();
    for (std::size_t i = 0; i < points; ++i) {
        ExperimentConfig cfg = base;
        if (!ts.empty()) {
            cfg.T = ts[i];
        } else {
            cfg.T = 0.0;
            cfg.target_p = targets[i];
        }
        RunRecord record = run_experiment(cfg);
        write_run_record(record, base.out_dir + "/T_" + std::to_string(i));
        summary << record.T << "," << record.p_lin << "," << record.d_lin << ","
                << record.report.d_cloaqc << "," << record.report.p_ground_median << ","
                << record.report.alpha_d << "\n";
        std::cout << "T = " << record.T << ": linear P = " << record.p_lin
                  << ", optimized median P = " << record.report.p_ground_median << "\n";
    }
    return 0;
}

int cmd_report(const std::string& dir)
{
    std::ifstream f(dir + "/record.json");
    if (!f) throw ConfigError("no record.json in " + dir);
    nlohmann::json j;
    f >> j;
    std::cout << j.at("report").dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Closed-loop optimized adiabatic control experiments"};
    app.require_subcommand(1);

    CommonArgs args;
    int instance_count = 20;
    std::string report_dir;

    auto* gen = app.add_subcommand("generate-instances", "write a problem-instance ensemble");
    add_common(gen, args);
    gen->add_option("--count", instance_count, "instances to generate");

    add_common(app.add_subcommand("calibrate", "calibrate the runtime for the target P(E0)"), args);
    add_common(app.add_subcommand("optimize", "run the optimization ensemble"), args);
    add_common(app.add_subcommand("compare", "ensemble run plus per-iteration baseline comparison"), args);
    add_common(app.add_subcommand("noise-sweep", "optimize across control-error amplitudes"), args);
    add_common(app.add_subcommand("runtime-sweep", "optimize across runtimes"), args);

    auto* rep = app.add_subcommand("report", "print the report of a finished run");
    rep->add_option("--out", report_dir, "run directory holding record.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand("generate-instances")) return cmd_generate_instances(args, instance_count);
        if (app.got_subcommand("calibrate")) return cmd_calibrate(args);
        if (app.got_subcommand("optimize")) return cmd_optimize(args);
        if (app.got_subcommand("compare")) return cmd_compare(args);
        if (app.got_subcommand("noise-sweep")) return cmd_noise_sweep(args);
        if (app.got_subcommand("runtime-sweep")) return cmd_runtime_sweep(args);
        if (app.got_subcommand("report")) return cmd_report(report_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const toml::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
