#pragma once

// Command implementations behind the vonmon executable. Each command writes
// its CSV outputs and a manifest.txt (resolved configuration as key=value
// lines) into the output directory and returns the tables it wrote so that
// tests can inspect them without reparsing.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vonmon/analytic.hpp"
#include "vonmon/config.hpp"
#include "vonmon/estimate.hpp"
#include "vonmon/io.hpp"
#include "vonmon/simulation.hpp"

namespace vonmon {

struct CommandContext {
    Scenario scenario;
    std::optional<std::vector<int>> orders;  // --orders, when given
    std::optional<PredictionMode> mode;      // --mode, when given
    std::string config_path;                 // empty when defaults are used
    std::filesystem::path out_dir = "out";
};

/// Orders analysed by simulate, predict and sweep when --orders is absent.
inline constexpr int default_k_max = 5;

[[nodiscard]] inline std::vector<int> parse_orders(std::string_view s) {
    auto to_int = [&](std::string_view t) {
        int v = 0;
        const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size() || v < 0) {
            throw ConfigError("orders must look like 'k0..k1' with 0 <= k0 <= k1, got '" +
                              std::string(s) + "'");
        }
        return v;
    };
    const auto dots = s.find("..");
    if (dots == std::string_view::npos) {
        const int k = to_int(s);
        return {k};
    }
    const int k0 = to_int(s.substr(0, dots));
    const int k1 = to_int(s.substr(dots + 2));
    if (k0 > k1) throw ConfigError("orders range '" + std::string(s) + "' is empty");
    return order_range(k0, k1);
}

[[nodiscard]] inline std::string format_orders(const std::vector<int>& orders) {
    std::string out;
    for (std::size_t i = 0; i < orders.size(); ++i) out += (i ? " " : "") + std::to_string(orders[i]);
    return out;
}

namespace detail {

inline std::vector<int> orders_or_default(const CommandContext& ctx, int k_max = default_k_max) {
    return ctx.orders ? *ctx.orders : order_range(0, k_max);
}

inline int max_order(const std::vector<int>& orders) {
    return orders.empty() ? 0 : *std::max_element(orders.begin(), orders.end());
}

/// Relative error, undefined (NaN) where the prediction is numerically zero.
inline double rel_error(double sim, double pred) {
    return std::abs(pred) < 1e-12 ? std::numeric_limits<double>::quiet_NaN() : std::abs(sim - pred) / pred;
}

inline double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace detail

// =============================================================================
// Manifest
// =============================================================================

class Manifest {
public:
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    void set(const std::string& key, double value) { entries_[key] = format_double(value); }
    void set(const std::string& key, int value) { entries_[key] = std::to_string(value); }
    void set(const std::string& key, bool value) { entries_[key] = value ? "1" : "0"; }
    void output(const std::string& file) { outputs_.push_back(file); }

    [[nodiscard]] const std::map<std::string, std::string>& entries() const { return entries_; }

    void write(const std::filesystem::path& dir, const std::string& command,
               const CommandContext& ctx) const {
        std::ofstream out(dir / "manifest.txt");
        if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
        out << "command=" << command << '\n';
        out << "config=" << (ctx.config_path.empty() ? "<defaults>" : ctx.config_path) << '\n';
        out << "digest=" << hex_digest(config_digest(ctx.scenario.params, ctx.scenario.health))
            << '\n';
        out << "orders=" << (ctx.orders ? format_orders(*ctx.orders) : "<command default>") << '\n';
        out << "mode=" << (ctx.mode ? std::string(to_string(*ctx.mode)) : "<command default>")
            << '\n';
        out << flatten_key_values(to_json(ctx.scenario));
        for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
        std::string files;
        for (const auto& f : outputs_) files += (files.empty() ? "" : ",") + f;
        out << "outputs=" << files << '\n';
    }

private:
    std::map<std::string, std::string> entries_;
    std::vector<std::string> outputs_;
};

inline void prepare_out_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create output directory '" + dir.string() + "'");
    }
}

// =============================================================================
// bode
// =============================================================================

struct BodeOptions {
    double f_min = 0.0;
    double f_max = 2000.0;
    int points = 200;
    std::vector<int> orders{0, 6, 12, 18, 24};
};

/// Log-spaced grid from f_min (or f_max / 1000 when f_min is 0, preceded by
/// an exact 0 Hz row) to f_max, then one row per requested harmonic order.
/// Grid rows carry order -1.
[[nodiscard]] inline CsvTable bode_table(const SystemParams& p, const BodeOptions& opt) {
    if (!(opt.f_min >= 0.0) || !(opt.f_max > opt.f_min)) {
        throw ConfigError("bode needs 0 <= f_min < f_max");
    }
    if (opt.points < 2) throw ConfigError("bode needs at least 2 grid points");
    CsvTable t;
    t.columns = {"f_hz", "gain", "phase_deg", "order"};
    auto row = [&](double f, int order) {
        const LoopResponse r = loop_response(p, f);
        t.add_row({format_double(f), format_double(r.gain), format_double(detail::deg(r.phase)),
                   std::to_string(order)});
    };
    double lo = opt.f_min;
    if (lo == 0.0) {
        row(0.0, -1);
        lo = opt.f_max * 1e-3;
    }
    const double ratio = std::log(opt.f_max / lo);
    for (int n = 0; n < opt.points; ++n) {
        row(lo * std::exp(ratio * n / (opt.points - 1)), -1);
    }
    for (int k : opt.orders) row(k * p.f_g, k);
    return t;
}

inline CsvTable cmd_bode(const CommandContext& ctx, const BodeOptions& opt) {
    prepare_out_dir(ctx.out_dir);
    BodeOptions o = opt;
    if (ctx.orders) o.orders = *ctx.orders;
    const CsvTable t = bode_table(ctx.scenario.params, o);
    write_csv(ctx.out_dir / "bode.csv", t);
    Manifest m;
    m.set("bode.f_min", o.f_min);
    m.set("bode.f_max", o.f_max);
    m.set("bode.points", o.points);
    m.output("bode.csv");
    m.write(ctx.out_dir, "bode", ctx);
    return t;
}

// =============================================================================
// predict
// =============================================================================

[[nodiscard]] inline RefHarmonics scenario_prediction(const Scenario& s, int k_max,
                                                      PredictionMode mode) {
    return predicted_ref_harmonics(s.delta_r_on, operating_point(s.params), s.params, k_max, mode,
                                   s.degraded_device);
}

[[nodiscard]] inline CsvTable predict_table(const Scenario& s, const std::vector<int>& orders,
                                            PredictionMode mode) {
    const RefHarmonics h = scenario_prediction(s, detail::max_order(orders), mode);
    CsvTable t;
    t.columns = {"order", "dv_d", "dv_q", "dv_a", "dv_b", "dv_c"};
    for (int k : orders) {
        t.add_row({std::to_string(k), format_double(h.d.magnitude(k)),
                   format_double(h.q.magnitude(k)), format_double(h.a.magnitude(k)),
                   format_double(h.b.magnitude(k)), format_double(h.c.magnitude(k))});
    }
    return t;
}

inline CsvTable cmd_predict(const CommandContext& ctx) {
    prepare_out_dir(ctx.out_dir);
    const auto orders = detail::orders_or_default(ctx);
    const PredictionMode mode = ctx.mode.value_or(PredictionMode::loop_corrected);
    const CsvTable t = predict_table(ctx.scenario, orders, mode);
    write_csv(ctx.out_dir / "predict.csv", t);
    Manifest m;
    m.set("predict.mode", std::string(to_string(mode)));
    const OperatingPoint op = operating_point(ctx.scenario.params);
    m.set("operating_point.i_a_amp", op.i_a_amp);
    m.set("operating_point.m_d", op.m_d);
    m.output("predict.csv");
    m.write(ctx.out_dir, "predict", ctx);
    return t;
}

// =============================================================================
// simulate
// =============================================================================

/// Channels whose spectra simulate exports.
inline constexpr std::array<Channel, 8> exported_channels{
    Channel::i_a,     Channel::i_b,     Channel::i_c,     Channel::v_d_ref,
    Channel::v_q_ref, Channel::v_a_ref, Channel::v_b_ref, Channel::v_c_ref};

struct SpectrumSet {
    std::map<Channel, Spectrum> healthy;
    std::map<Channel, Spectrum> degraded;
    std::map<Channel, Spectrum> delta;
};

[[nodiscard]] inline std::map<Channel, Spectrum> trace_spectra(const SimTrace& tr,
                                                               const std::vector<int>& orders) {
    std::map<Channel, Spectrum> out;
    for (Channel c : exported_channels) {
        out[c] = sync_dft(tr, c, orders, tr.meta.n_cycles, tr.meta.settle_cycles);
    }
    return out;
}

[[nodiscard]] inline std::map<Channel, Spectrum> delta_spectra(
    const std::map<Channel, Spectrum>& healthy, const std::map<Channel, Spectrum>& degraded) {
    std::map<Channel, Spectrum> out;
    for (const auto& [c, s] : healthy) out[c] = delta_spectrum(s, degraded.at(c));
    return out;
}

struct SimulateResult {
    PairedRun run;
    SpectrumSet spectra;
    CsvTable comparison;  // d/q delta vs prediction per order
};

/// Simulated vs predicted d/q delta magnitudes per order.
[[nodiscard]] inline CsvTable comparison_table(const Scenario& s,
                                               const std::map<Channel, Spectrum>& delta,
                                               const std::vector<int>& orders,
                                               PredictionMode mode) {
    const RefHarmonics pred = scenario_prediction(s, detail::max_order(orders), mode);
    CsvTable t;
    t.columns = {"order", "pred_d", "sim_d", "rel_err_d", "pred_q", "sim_q", "rel_err_q"};
    for (int k : orders) {
        const double pd = pred.d.magnitude(k);
        const double sd = delta.at(Channel::v_d_ref).magnitude(k);
        const double pq = pred.q.magnitude(k);
        const double sq = delta.at(Channel::v_q_ref).magnitude(k);
        t.add_row({std::to_string(k), format_double(pd), format_double(sd),
                   format_double(detail::rel_error(sd, pd)), format_double(pq), format_double(sq),
                   format_double(detail::rel_error(sq, pq))});
    }
    return t;
}

inline SimulateResult cmd_simulate(const CommandContext& ctx) {
    prepare_out_dir(ctx.out_dir);
    const Scenario& s = ctx.scenario;
    const auto orders = detail::orders_or_default(ctx);
    const PredictionMode mode = ctx.mode.value_or(PredictionMode::loop_corrected);

    SimulateResult res;
    res.run = simulate_paired(s.params, s.health, s.degraded_device, s.delta_r_on, s.sim);
    require_settled(res.run.healthy);
    require_settled(res.run.degraded);
    res.spectra.healthy = trace_spectra(res.run.healthy, orders);
    res.spectra.degraded = trace_spectra(res.run.degraded, orders);
    res.spectra.delta = delta_spectra(res.spectra.healthy, res.spectra.degraded);
    res.comparison = comparison_table(s, res.spectra.delta, orders, mode);

    Manifest m;
    write_trace_csv(ctx.out_dir / "trace_healthy.csv", res.run.healthy);
    write_trace_csv(ctx.out_dir / "trace_degraded.csv", res.run.degraded);
    m.output("trace_healthy.csv");
    m.output("trace_degraded.csv");
    const std::pair<const char*, const std::map<Channel, Spectrum>*> sets[] = {
        {"healthy", &res.spectra.healthy},
        {"degraded", &res.spectra.degraded},
        {"delta", &res.spectra.delta}};
    for (const auto& [kind, set] : sets) {
        for (const auto& [c, spec] : *set) {
            const std::string file = std::string(kind) + "_" + std::string(to_string(c)) + ".csv";
            write_spectrum_csv(ctx.out_dir / file, spec, kind);
            m.output(file);
        }
    }
    write_csv(ctx.out_dir / "comparison.csv", res.comparison);
    m.output("comparison.csv");

    const bool saturated = res.run.healthy.meta.saturated || res.run.degraded.meta.saturated;
    if (saturated) std::cerr << "warning: current controller saturated during the run\n";
    m.set("simulate.mode", std::string(to_string(mode)));
    m.set("simulate.saturated", saturated);
    m.set("simulate.settle_rms_delta_healthy", res.run.healthy.meta.settle_rms_delta);
    m.set("simulate.settle_rms_delta_degraded", res.run.degraded.meta.settle_rms_delta);
    m.set("simulate.settle_cycles_used_healthy", res.run.healthy.meta.settle_cycles);
    m.set("simulate.settle_cycles_used_degraded", res.run.degraded.meta.settle_cycles);
    m.write(ctx.out_dir, "simulate", ctx);
    return res;
}

// =============================================================================
// sweep
// =============================================================================

struct SweepOptions {
    std::vector<double> deltas;  // empty: 0 .. 1 mOhm in 0.1 mOhm steps
};

[[nodiscard]] inline std::vector<double> default_sweep_deltas() {
    std::vector<double> out;
    for (int n = 0; n <= 10; ++n) out.push_back(n * 1e-4);
    return out;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares y = slope x + intercept.
[[nodiscard]] inline LinearFit linear_fit(const std::vector<double>& x,
                                          const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    if (x.size() != y.size() || x.size() < 2) {
        throw NumericalError("linear fit needs at least two points");
    }
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw NumericalError("linear fit needs distinct x values");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

struct SweepResult {
    CsvTable rows;
    CsvTable summary;
};

inline SweepResult cmd_sweep(const CommandContext& ctx, const SweepOptions& opt = {}) {
    prepare_out_dir(ctx.out_dir);
    const Scenario& s = ctx.scenario;
    const auto orders = detail::orders_or_default(ctx);
    const PredictionMode mode = ctx.mode.value_or(PredictionMode::loop_corrected);
    const std::vector<double> deltas = opt.deltas.empty() ? default_sweep_deltas() : opt.deltas;
    for (double d : deltas) {
        if (!(d >= 0.0)) throw ConfigError("sweep resistance increments must be >= 0");
    }

    // predictions are linear in the increment: evaluate per ohm and scale
    Scenario unit = s;
    unit.delta_r_on = 1.0;
    const RefHarmonics per_ohm = scenario_prediction(unit, detail::max_order(orders), mode);

    const SimTrace healthy = simulate(s.params, s.health, s.sim);
    require_settled(healthy);
    const auto healthy_spec = trace_spectra(healthy, orders);

    // degraded points run concurrently in batches of the hardware width
    std::vector<std::map<Channel, Spectrum>> delta(deltas.size());
    const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < deltas.size(); start += width) {
        std::vector<std::future<std::map<Channel, Spectrum>>> jobs;
        for (std::size_t i = start; i < std::min(deltas.size(), start + width); ++i) {
            jobs.push_back(std::async(std::launch::async, [&, i] {
                const SimTrace tr =
                    simulate(s.params, s.health.degraded(s.degraded_device, deltas[i]), s.sim);
                require_settled(tr);
                return delta_spectra(healthy_spec, trace_spectra(tr, orders));
            }));
        }
        for (std::size_t j = 0; j < jobs.size(); ++j) delta[start + j] = jobs[j].get();
    }

    SweepResult res;
    res.rows.columns = {"delta_r_on", "order", "pred_d", "pred_q", "sim_d",
                        "sim_q",      "rel_err_d", "rel_err_q"};
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        for (int k : orders) {
            const double pd = deltas[i] * per_ohm.d.magnitude(k);
            const double pq = deltas[i] * per_ohm.q.magnitude(k);
            const double sd = delta[i].at(Channel::v_d_ref).magnitude(k);
            const double sq = delta[i].at(Channel::v_q_ref).magnitude(k);
            res.rows.add_row({format_double(deltas[i]), std::to_string(k), format_double(pd),
                              format_double(pq), format_double(sd), format_double(sq),
                              format_double(detail::rel_error(sd, pd)),
                              format_double(detail::rel_error(sq, pq))});
        }
    }

    res.summary.columns = {"order",      "avg_rel_err_d", "avg_rel_err_q", "slope_d",
                           "pred_slope_d", "slope_err_d", "r2_d",          "slope_q",
                           "pred_slope_q", "slope_err_q", "r2_q"};
    const bool fit = deltas.size() >= 2 &&
                     *std::max_element(deltas.begin(), deltas.end()) >
                         *std::min_element(deltas.begin(), deltas.end());
    for (int k : orders) {
        std::vector<double> yd, yq;
        double err_d = 0.0, err_q = 0.0;
        int n_err_d = 0, n_err_q = 0;
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            const double sd = delta[i].at(Channel::v_d_ref).magnitude(k);
            const double sq = delta[i].at(Channel::v_q_ref).magnitude(k);
            yd.push_back(sd);
            yq.push_back(sq);
            const double ed = detail::rel_error(sd, deltas[i] * per_ohm.d.magnitude(k));
            const double eq = detail::rel_error(sq, deltas[i] * per_ohm.q.magnitude(k));
            if (!std::isnan(ed)) err_d += ed, ++n_err_d;
            if (!std::isnan(eq)) err_q += eq, ++n_err_q;
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const LinearFit fd = fit ? linear_fit(deltas, yd) : LinearFit{nan, nan, nan};
        const LinearFit fq = fit ? linear_fit(deltas, yq) : LinearFit{nan, nan, nan};
        const double psd = per_ohm.d.magnitude(k);
        const double psq = per_ohm.q.magnitude(k);
        res.summary.add_row({std::to_string(k), format_double(n_err_d ? err_d / n_err_d : nan),
                             format_double(n_err_q ? err_q / n_err_q : nan),
                             format_double(fd.slope), format_double(psd),
                             format_double(detail::rel_error(fd.slope, psd)), format_double(fd.r2),
                             format_double(fq.slope), format_double(psq),
                             format_double(detail::rel_error(fq.slope, psq)),
                             format_double(fq.r2)});
    }

    write_csv(ctx.out_dir / "sweep.csv", res.rows);
    write_csv(ctx.out_dir / "sweep_summary.csv", res.summary);
    Manifest m;
    std::string list;
    for (double d : deltas) list += (list.empty() ? "" : " ") + format_double(d);
    m.set("sweep.deltas", list);
    m.set("sweep.mode", std::string(to_string(mode)));
    m.output("sweep.csv");
    m.output("sweep_summary.csv");
    m.write(ctx.out_dir, "sweep", ctx);
    return res;
}

// =============================================================================
// sensitivity
// =============================================================================

struct SensitivityOptions {
    double i_a = 1.0;     // phase current amplitude the table is evaluated at
    double m_d = 0.775;   // modulation index of the normalized table
};

[[nodiscard]] inline CsvTable sensitivity_csv(const SystemParams& p, const std::vector<int>& orders,
                                              PredictionMode mode, const SensitivityOptions& opt) {
    if (!(opt.i_a >= 0.0)) throw ConfigError("sensitivity current must be >= 0");
    if (!(opt.m_d >= 0.0 && opt.m_d <= 1.0)) throw ConfigError("modulation index must be in [0, 1]");
    const auto rows = sensitivity_table(p, normalized_operating_point(p, opt.i_a, opt.m_d), orders,
                                        mode);
    CsvTable t;
    t.columns = {"order", "d", "q"};
    for (const auto& r : rows) {
        t.add_row({std::to_string(r.order), format_double(r.d), format_double(r.q)});
    }
    return t;
}

inline CsvTable cmd_sensitivity(const CommandContext& ctx, const SensitivityOptions& opt = {}) {
    prepare_out_dir(ctx.out_dir);
    const auto orders = detail::orders_or_default(ctx, 6);
    const PredictionMode mode = ctx.mode.value_or(PredictionMode::ideal);
    const CsvTable t = sensitivity_csv(ctx.scenario.params, orders, mode, opt);
    write_csv(ctx.out_dir / "sensitivity.csv", t);
    Manifest m;
    m.set("sensitivity.i_a", opt.i_a);
    m.set("sensitivity.m_d", opt.m_d);
    m.set("sensitivity.mode", std::string(to_string(mode)));
    m.output("sensitivity.csv");
    m.write(ctx.out_dir, "sensitivity", ctx);
    return t;
}

// =============================================================================
// estimate
// =============================================================================

struct EstimateResult {
    HealthEstimate estimate;
    PhaseLocation location;
    double dc_only = 0.0;  // d-axis DC single-order estimate
    EolReport report;
};

[[nodiscard]] inline std::map<Channel, Spectrum> read_delta_spectra(
    const std::filesystem::path& dir) {
    std::map<Channel, Spectrum> out;
    for (Channel c : {Channel::v_d_ref, Channel::v_q_ref, Channel::v_a_ref, Channel::v_b_ref,
                      Channel::v_c_ref}) {
        const auto path = dir / ("delta_" + std::string(to_string(c)) + ".csv");
        Spectrum s = read_spectrum_csv(path);
        if (s.channel != c) throw IoError("'" + path.string() + "' holds the wrong channel");
        out[c] = std::move(s);
    }
    return out;
}

/// Locates the degraded phase, then fits every device of that leg and keeps
/// the one whose waveform explains the data best.
[[nodiscard]] inline EstimateResult estimate_from_spectra(
    const std::map<Channel, Spectrum>& delta, const Scenario& s,
    const std::vector<int>& orders, PredictionMode mode) {
    const OperatingPoint op = operating_point(s.params);
    EstimateResult res;
    res.location = locate_phase(delta.at(Channel::v_a_ref), delta.at(Channel::v_b_ref),
                                delta.at(Channel::v_c_ref));

    EstimateOptions eo;
    eo.orders = orders;
    eo.mode = mode;
    std::vector<DeviceId> candidates{DeviceId::S1};
    if (res.location.phase) {
        const Phase ph = *res.location.phase;
        candidates = {device_at(ph, LegPosition::top, DeviceKind::igbt),
                      device_at(ph, LegPosition::top, DeviceKind::diode),
                      device_at(ph, LegPosition::bottom, DeviceKind::igbt),
                      device_at(ph, LegPosition::bottom, DeviceKind::diode)};
    }
    bool first = true;
    for (DeviceId id : candidates) {
        eo.device = id;
        eo.r_on0 = s.health.at(id).r_on;
        HealthEstimate e =
            estimate_delta_ron(delta.at(Channel::v_d_ref), delta.at(Channel::v_q_ref), op,
                               s.params, eo);
        if (first || e.residual < res.estimate.residual) res.estimate = e;
        first = false;
    }
    res.estimate.phase_hat = res.location.phase;
    if (!res.location.phase) {
        // nothing above the noise floor: no degradation is reported
        res.estimate.delta_r_on_hat = 0.0;
        res.estimate.eol_fraction = 0.0;
    }

    EstimateOptions dc = eo;
    dc.device = res.estimate.model_device;
    dc.orders = {0};
    res.dc_only = res.location.phase
                      ? estimate_delta_ron(delta.at(Channel::v_d_ref), delta.at(Channel::v_q_ref),
                                           op, s.params, dc)
                            .delta_r_on_hat
                      : 0.0;
    res.report = eol_report(res.estimate, s.health, res.estimate.model_device);
    return res;
}

[[nodiscard]] inline std::string phase_label(const std::optional<Phase>& p) {
    return p ? std::string(1, to_char(*p)) : std::string("none");
}

[[nodiscard]] inline CsvTable estimate_csv(const EstimateResult& r) {
    CsvTable t;
    t.columns = {"delta_r_on_hat", "delta_r_on_dc_only", "phase",   "confidence", "device",
                 "eol_fraction",   "status",             "residual", "clamped",   "orders"};
    t.add_row({format_double(r.estimate.delta_r_on_hat), format_double(r.dc_only),
               phase_label(r.estimate.phase_hat), format_double(r.location.confidence),
               to_string(r.estimate.model_device), format_double(r.report.eol_fraction),
               std::string(to_string(r.report.status)), format_double(r.estimate.residual),
               r.estimate.clamped ? "1" : "0", format_orders(r.estimate.orders_used)});
    return t;
}

inline void write_key_values(const std::filesystem::path& path, const CsvTable& one_row) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    for (std::size_t k = 0; k < one_row.columns.size(); ++k) {
        out << one_row.columns[k] << '=' << one_row.rows.at(0)[k] << '\n';
    }
}

[[nodiscard]] inline std::map<std::string, std::string> read_key_values(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

inline EstimateResult cmd_estimate(const CommandContext& ctx, const std::filesystem::path& in_dir) {
    const auto delta = read_delta_spectra(in_dir);
    const std::vector<int> orders = ctx.orders ? *ctx.orders : EstimateOptions{}.orders;
    const PredictionMode mode = ctx.mode.value_or(PredictionMode::loop_corrected);
    const EstimateResult r = estimate_from_spectra(delta, ctx.scenario, orders, mode);
    prepare_out_dir(ctx.out_dir);
    const CsvTable t = estimate_csv(r);
    write_csv(ctx.out_dir / "estimate.csv", t);
    write_key_values(ctx.out_dir / "estimate.txt", t);
    Manifest m;
    m.set("estimate.input", in_dir.string());
    m.set("estimate.mode", std::string(to_string(mode)));
    m.output("estimate.csv");
    m.output("estimate.txt");
    m.write(ctx.out_dir, "estimate", ctx);
    return r;
}

// =============================================================================
// report
// =============================================================================

struct ReportOptions {
    std::optional<double> delta_r_on;            // explicit increment, ohms
    std::optional<std::filesystem::path> input;  // directory holding estimate.txt
    double threshold = 0.05;
    DeviceId device = DeviceId::S1;
};

inline EolReport cmd_report(const CommandContext& ctx, const ReportOptions& opt) {
    double dr = 0.0;
    std::optional<Phase> phase;
    DeviceId device = opt.device;
    if (opt.delta_r_on) {
        dr = *opt.delta_r_on;
    } else if (opt.input) {
        const auto kv = read_key_values(*opt.input / "estimate.txt");
        auto get = [&](const std::string& k) {
            auto it = kv.find(k);
            if (it == kv.end()) throw IoError("estimate.txt lacks '" + k + "'");
            return it->second;
        };
        dr = parse_double(get("delta_r_on_hat"));
        device = parse_device_id(get("device"));
        const std::string ph = get("phase");
        if (ph != "none") {
            if (ph.size() != 1 || ph[0] < 'A' || ph[0] > 'C') throw IoError("bad phase '" + ph + "'");
            phase = static_cast<Phase>(ph[0] - 'A');
        }
    } else {
        throw ConfigError("report needs --delta-r-on or --in");
    }
    if (!(dr >= 0.0)) throw ConfigError("delta_r_on must be >= 0");
    const EolReport r = eol_report(dr, ctx.scenario.health.at(device).r_on, opt.threshold, phase);

    prepare_out_dir(ctx.out_dir);
    CsvTable t;
    t.columns = {"delta_r_on", "r_on0", "threshold", "eol_fraction", "status", "phase", "device"};
    t.add_row({format_double(r.delta_r_on), format_double(r.r_on0), format_double(r.threshold),
               format_double(r.eol_fraction), std::string(to_string(r.status)),
               phase_label(r.phase), to_string(device)});
    write_csv(ctx.out_dir / "report.csv", t);
    write_key_values(ctx.out_dir / "report.txt", t);
    Manifest m;
    m.set("report.threshold", opt.threshold);
    m.output("report.csv");
    m.output("report.txt");
    m.write(ctx.out_dir, "report", ctx);
    return r;
}

}  // namespace vonmon
