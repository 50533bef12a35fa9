#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vonmon/commands.hpp"

using namespace vonmon;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "vonmon_test_commands" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CommandContext context(const fs::path& out) {
    CommandContext ctx;
    ctx.out_dir = out;
    return ctx;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

double row_value(const CsvTable& t, std::string_view key_col, double key, std::string_view col) {
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.number(r, key_col) == key) return t.number(r, col);
    }
    throw std::runtime_error("row not found");
}

}  // namespace

TEST_CASE("doubles survive CSV text", "[io]") {
    for (double v : {0.0, -1.5, 1.0 / 3.0, 6.02214076e23, 5e-324, 0.1 + 0.2}) {
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK(std::isnan(parse_double(format_double(std::numeric_limits<double>::quiet_NaN()))));
    CHECK_THROWS_AS(parse_double("1.0x"), IoError);
    CHECK_THROWS_AS(parse_double(""), IoError);
    CHECK(hex_digest(0xabcULL) == "0000000000000abc");
}

TEST_CASE("CSV tables are located through the header", "[io]") {
    std::istringstream in("# a=1 b=two\nx,y\n1,2\n3,4\n");
    const CsvTable t = read_csv(in);
    CHECK(t.columns == std::vector<std::string>{"x", "y"});
    CHECK(t.number(1, "y") == 4.0);
    CHECK(t.comment_fields().at("b") == "two");
    CHECK_THROWS_AS(t.column("z"), IoError);

    std::istringstream ragged("x,y\n1\n");
    CHECK_THROWS_AS(read_csv(ragged), IoError);
    std::istringstream empty("# only a comment\n");
    CHECK_THROWS_AS(read_csv(empty), IoError);

    std::ostringstream os;
    write_csv(os, t);
    std::istringstream again(os.str());
    const CsvTable back = read_csv(again);
    CHECK(back.rows == t.rows);
    CHECK(back.columns == t.columns);
}

TEST_CASE("traces and spectra round-trip through files", "[io]") {
    const fs::path dir = scratch("io");
    SimOptions o;
    o.settle_cycles = 2;
    o.n_cycles = 1;
    const SimTrace tr = simulate(SystemParams{}, default_health(), o);
    write_trace_csv(dir / "t.csv", tr);
    const SimTrace back = read_trace_csv(dir / "t.csv");
    CHECK(back.sample_period == tr.sample_period);
    CHECK(back.meta.settle_cycles == tr.meta.settle_cycles);
    for (std::size_t c = 0; c < trace_channel_count; ++c) CHECK(back.channels[c] == tr.channels[c]);
    const CsvTable raw = read_csv(dir / "t.csv");
    CHECK(raw.columns.front() == "n");
    CHECK(raw.comment_fields().count("digest") == 1);

    const Spectrum s = sync_dft(tr, Channel::v_a_ref, order_range(0, 4), 1, 2);
    write_spectrum_csv(dir / "s.csv", s, "raw");
    const Spectrum sb = read_spectrum_csv(dir / "s.csv");
    CHECK(sb.channel == Channel::v_a_ref);
    for (int k = 0; k <= 4; ++k) CHECK(std::abs(sb.at(k) - s.at(k)) <= 1e-12 * std::abs(s.at(k)) + 1e-18);
}

TEST_CASE("orders flag", "[cli]") {
    CHECK(parse_orders("0..5") == order_range(0, 5));
    CHECK(parse_orders("3") == std::vector<int>{3});
    CHECK_THROWS_AS(parse_orders("5..2"), ConfigError);
    CHECK_THROWS_AS(parse_orders("a..2"), ConfigError);
    CHECK_THROWS_AS(parse_orders("-1..2"), ConfigError);
    CHECK_THROWS_AS(parse_orders(""), ConfigError);
}

TEST_CASE("bode rows", "[cli]") {
    const fs::path dir = scratch("bode");
    const CsvTable t = cmd_bode(context(dir), BodeOptions{});
    CHECK(row_value(t, "order", 6, "gain") == Approx(0.98).margin(0.01));
    CHECK(row_value(t, "order", 6, "phase_deg") == Approx(-15.0).margin(1.0));
    CHECK(row_value(t, "order", 12, "gain") == Approx(0.93).margin(0.01));
    CHECK(row_value(t, "order", 12, "phase_deg") == Approx(-29.0).margin(1.0));
    CHECK(row_value(t, "f_hz", 0.0, "gain") == 1.0);
    CHECK(row_value(t, "f_hz", 0.0, "phase_deg") == 0.0);
    CHECK(fs::exists(dir / "bode.csv"));
    CHECK(fs::exists(dir / "manifest.txt"));
    BodeOptions bad;
    bad.f_max = 0.0;
    CHECK_THROWS_AS(cmd_bode(context(dir), bad), ConfigError);
}

TEST_CASE("predict rows", "[cli]") {
    const fs::path dir = scratch("predict");
    CommandContext ctx = context(dir);
    const CsvTable t = cmd_predict(ctx);
    REQUIRE(t.rows.size() == 6);
    CHECK(t.number(0, "dv_d") == Approx(10.72 * 0.1382e-3).epsilon(0.002));

    ctx.mode = PredictionMode::ideal;
    const CsvTable ideal = cmd_predict(ctx);
    for (std::size_t r = 0; r < ideal.rows.size(); ++r) {
        CHECK(ideal.number(r, "dv_a") == Approx(2.0 * ideal.number(r, "dv_b")).epsilon(1e-10));
    }

    ctx.scenario.delta_r_on = 0.0;
    const CsvTable zero = cmd_predict(ctx);
    for (std::size_t r = 0; r < zero.rows.size(); ++r) {
        for (const char* c : {"dv_d", "dv_q", "dv_a", "dv_b", "dv_c"}) CHECK(zero.number(r, c) == 0.0);
    }
}

TEST_CASE("sensitivity rows", "[cli]") {
    const fs::path dir = scratch("sensitivity");
    const CsvTable t = cmd_sensitivity(context(dir));
    REQUIRE(t.rows.size() == 7);
    CHECK(t.number(0, "d") == Approx(0.1382).margin(0.00005));
    CHECK(t.number(0, "q") == Approx(0.0).margin(1e-12));
    SensitivityOptions two;
    two.i_a = 2.0;
    const CsvTable t2 = cmd_sensitivity(context(dir), two);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        CHECK(t2.number(r, "d") == Approx(2.0 * t.number(r, "d")).epsilon(1e-12));
        CHECK(t2.number(r, "q") == Approx(2.0 * t.number(r, "q")).margin(1e-15));
    }
}

TEST_CASE("simulate writes paired outputs and a null delta at zero degradation", "[cli]") {
    const fs::path dir = scratch("simulate_zero");
    CommandContext ctx = context(dir);
    ctx.scenario.delta_r_on = 0.0;
    const SimulateResult r = cmd_simulate(ctx);
    for (const auto& [c, s] : r.spectra.delta) {
        for (int k : s.orders()) CHECK(s.magnitude(k) < 1e-7);
    }
    for (const char* f : {"trace_healthy.csv", "trace_degraded.csv", "healthy_v_d_ref.csv",
                          "degraded_v_a_ref.csv", "delta_v_q_ref.csv", "comparison.csv",
                          "manifest.txt"}) {
        CHECK(fs::exists(dir / f));
    }
    const auto kv = read_key_values(dir / "manifest.txt");
    CHECK(kv.at("command") == "simulate");
    CHECK(kv.at("scenario.delta_r_on") == "0.0");
    CHECK(kv.at("system.k_pc") == "40.0");
    CHECK(kv.at("simulate.saturated") == "0");

    // zero spectra give no estimate and no phase
    const EstimateResult e = cmd_estimate(context(scratch("estimate_zero")), dir);
    CHECK(e.estimate.delta_r_on_hat == 0.0);
    CHECK_FALSE(e.estimate.phase_hat.has_value());
    CHECK(e.report.status == HealthStatus::healthy);
}

TEST_CASE("simulate then estimate recovers the injected degradation", "[cli]") {
    const fs::path sim = scratch("simulate_s1");
    const SimulateResult r = cmd_simulate(context(sim));
    CHECK(r.comparison.number(0, "rel_err_d") < 0.02);
    const fs::path est = scratch("estimate_s1");
    const EstimateResult e = cmd_estimate(context(est), sim);
    CHECK(e.estimate.delta_r_on_hat == Approx(1e-3).epsilon(0.05));
    CHECK(e.dc_only == Approx(1e-3).epsilon(0.02));
    REQUIRE(e.estimate.phase_hat.has_value());
    CHECK(*e.estimate.phase_hat == Phase::a);
    CHECK(e.location.confidence > 0.9);
    CHECK(e.estimate.model_device == DeviceId::S1);

    const auto kv = read_key_values(est / "estimate.txt");
    CHECK(kv.at("phase") == "A");
    ReportOptions ro;
    ro.input = est;
    const EolReport rep = cmd_report(context(scratch("report_s1")), ro);
    CHECK(rep.eol_fraction == Approx(1e-3 / 1.125e-3).epsilon(0.05));
    CHECK(rep.status == HealthStatus::watch);
    CHECK(rep.phase == Phase::a);
}

TEST_CASE("degradation in phase B is localized", "[cli]") {
    const fs::path sim = scratch("simulate_s4");
    CommandContext ctx = context(sim);
    ctx.scenario.degraded_device = DeviceId::S4;
    (void)cmd_simulate(ctx);
    const EstimateResult e = cmd_estimate(context(scratch("estimate_s4")), sim);
    REQUIRE(e.estimate.phase_hat.has_value());
    CHECK(*e.estimate.phase_hat == Phase::b);
    CHECK(e.estimate.delta_r_on_hat == Approx(1e-3).epsilon(0.05));
}

TEST_CASE("report from an explicit increment", "[cli]") {
    ReportOptions ro;
    ro.delta_r_on = 1.125e-3;
    const EolReport r = cmd_report(context(scratch("report_eol")), ro);
    CHECK(r.status == HealthStatus::end_of_life);
    CHECK_THROWS_AS(cmd_report(context(scratch("report_none")), ReportOptions{}), ConfigError);
}

TEST_CASE("sweep reproduces the linear trend", "[cli]") {
    const fs::path dir = scratch("sweep");
    const SweepResult r = cmd_sweep(context(dir));
    CHECK(r.rows.rows.size() == 11u * 6u);
    for (std::size_t k = 0; k <= 2; ++k) {
        CHECK(r.summary.number(k, "r2_d") > 0.999);
        CHECK(r.summary.number(k, "slope_err_d") < 0.03);
    }
    CHECK(r.summary.number(0, "avg_rel_err_d") < 0.02);
    CHECK(fs::exists(dir / "sweep_summary.csv"));
    CHECK_THROWS_AS(cmd_sweep(context(dir), {{-1e-3}}), ConfigError);
}

TEST_CASE("linear fit", "[cli]") {
    const LinearFit f = linear_fit({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
    CHECK(f.slope == Approx(2.0).epsilon(1e-14));
    CHECK(f.intercept == Approx(1.0).epsilon(1e-14));
    CHECK(f.r2 == Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(linear_fit({1.0, 1.0}, {0.0, 1.0}), NumericalError);
}

TEST_CASE("identical scenarios give bit-identical files", "[cli][property]") {
    const fs::path a = scratch("det_a");
    const fs::path b = scratch("det_b");
    (void)cmd_simulate(context(a));
    (void)cmd_simulate(context(b));
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        const fs::path other = b / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(slurp(entry.path()) == slurp(other));
        ++compared;
    }
    CHECK(compared > 20);
}
