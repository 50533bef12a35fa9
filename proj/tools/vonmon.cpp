// vonmon: on-state resistance harmonic model, simulator and estimator.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
// convergence failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vonmon/commands.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_numerical = 2;

struct GlobalFlags {
    std::string config;
    std::string out = "out";
    std::string fidelity;
    std::string orders;
    std::string mode;
    std::string device;
    std::optional<double> delta_r_on;
    std::optional<int> n_cycles;
    std::optional<int> settle_cycles;
    std::optional<int> n_over;
};

vonmon::CommandContext resolve(const GlobalFlags& g) {
    vonmon::CommandContext ctx;
    if (!g.config.empty()) {
        ctx.scenario = vonmon::load_scenario(g.config);
        ctx.config_path = g.config;
    }
    if (!g.fidelity.empty()) ctx.scenario.sim.fidelity = vonmon::parse_fidelity(g.fidelity);
    if (!g.orders.empty()) ctx.orders = vonmon::parse_orders(g.orders);
    if (!g.mode.empty()) ctx.mode = vonmon::parse_prediction_mode(g.mode);
    if (!g.device.empty()) ctx.scenario.degraded_device = vonmon::parse_device_id(g.device);
    if (g.delta_r_on) {
        if (!(*g.delta_r_on >= 0.0)) throw vonmon::ConfigError("--delta-r-on must be >= 0");
        ctx.scenario.delta_r_on = *g.delta_r_on;
    }
    if (g.n_cycles) ctx.scenario.sim.n_cycles = *g.n_cycles;
    if (g.settle_cycles) ctx.scenario.sim.settle_cycles = *g.settle_cycles;
    if (g.n_over) ctx.scenario.sim.n_over = *g.n_over;
    if (ctx.scenario.sim.n_cycles < 1 || ctx.scenario.sim.settle_cycles < 0 ||
        ctx.scenario.sim.n_over < 1) {
        throw vonmon::ConfigError("need n_cycles >= 1, settle_cycles >= 0, n_over >= 1");
    }
    ctx.out_dir = g.out;
    ctx.scenario.out_dir = g.out;
    return ctx;
}

void print_table(const vonmon::CsvTable& t) { vonmon::write_csv(std::cout, t); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"On-state resistance harmonic model, simulator and estimator"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalFlags g;
    app.add_option("--config", g.config, "JSON scenario file")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--fidelity", g.fidelity, "Plant model")
        ->check(CLI::IsMember({"averaged", "switched"}));
    app.add_option("--orders", g.orders, "Harmonic orders k0..k1");
    app.add_option("--mode", g.mode, "Prediction mode")
        ->check(CLI::IsMember({"ideal", "loop-corrected"}));
    app.add_option("--device", g.device, "Degraded device (S1..S6, D1..D6)");
    app.add_option("--delta-r-on", g.delta_r_on, "Resistance increase of the degraded device, ohm");
    app.add_option("--n-cycles", g.n_cycles, "Analysed fundamental cycles");
    app.add_option("--settle-cycles", g.settle_cycles, "Settling cycles before analysis");
    app.add_option("--n-over", g.n_over, "Switched-mode micro-steps per carrier period");

    vonmon::BodeOptions bode;
    auto* c_bode = app.add_subcommand("bode", "Closed-loop response of the on-state error path");
    c_bode->add_option("--f-min", bode.f_min, "Lowest frequency, Hz")->capture_default_str();
    c_bode->add_option("--f-max", bode.f_max, "Highest frequency, Hz")->capture_default_str();
    c_bode->add_option("--points", bode.points, "Log grid points")->capture_default_str();

    auto* c_predict = app.add_subcommand("predict", "Analytic reference-voltage harmonics");
    auto* c_simulate = app.add_subcommand("simulate", "Paired healthy/degraded simulation");

    std::vector<double> deltas;
    auto* c_sweep = app.add_subcommand("sweep", "Resistance sweep against the model");
    c_sweep->add_option("--deltas", deltas, "Resistance increments, ohm")->delimiter(',');

    vonmon::SensitivityOptions sens;
    auto* c_sens = app.add_subcommand("sensitivity", "Harmonics per ohm of resistance increase");
    c_sens->add_option("--i-a", sens.i_a, "Phase current amplitude, A")->capture_default_str();
    c_sens->add_option("--m-d", sens.m_d, "Modulation index")->capture_default_str();

    std::string est_in;
    auto* c_est = app.add_subcommand("estimate", "Estimate the resistance increase from spectra");
    c_est->add_option("--in", est_in, "Directory holding delta_*.csv spectra")->required();

    vonmon::ReportOptions rep;
    std::string rep_in;
    auto* c_rep = app.add_subcommand("report", "End-of-life status");
    c_rep->add_option("--delta-r-on", rep.delta_r_on, "Resistance increase, ohm");
    c_rep->add_option("--in", rep_in, "Directory holding estimate.txt");
    c_rep->add_option("--threshold", rep.threshold, "End-of-life increase as a fraction of R_on0")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_usage;
    }

    try {
        const vonmon::CommandContext ctx = resolve(g);
        if (c_bode->parsed()) {
            print_table(vonmon::cmd_bode(ctx, bode));
        } else if (c_predict->parsed()) {
            print_table(vonmon::cmd_predict(ctx));
        } else if (c_simulate->parsed()) {
            print_table(vonmon::cmd_simulate(ctx).comparison);
        } else if (c_sweep->parsed()) {
            print_table(vonmon::cmd_sweep(ctx, {deltas}).summary);
        } else if (c_sens->parsed()) {
            print_table(vonmon::cmd_sensitivity(ctx, sens));
        } else if (c_est->parsed()) {
            print_table(vonmon::estimate_csv(vonmon::cmd_estimate(ctx, est_in)));
        } else if (c_rep->parsed()) {
            if (!rep_in.empty()) rep.input = rep_in;
            if (g.delta_r_on && !rep.delta_r_on) rep.delta_r_on = g.delta_r_on;
            if (!g.device.empty()) rep.device = ctx.scenario.degraded_device;
            (void)vonmon::cmd_report(ctx, rep);
            print_table(vonmon::read_csv(ctx.out_dir / "report.csv"));
        }
    } catch (const vonmon::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_usage;
    } catch (const vonmon::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return exit_usage;
    } catch (const vonmon::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const vonmon::EstimationError& e) {
        std::cerr << "estimation error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numerical;
    }
    return exit_ok;
}
