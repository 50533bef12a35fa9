#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "vonmon/analytic.hpp"
#include "vonmon/simulation.hpp"

using namespace vonmon;
using Catch::Approx;

namespace {

double mean(const std::vector<double>& x, std::size_t from) {
    double acc = 0.0;
    for (std::size_t i = from; i < x.size(); ++i) acc += x[i];
    return acc / static_cast<double>(x.size() - from);
}

std::size_t window_start(const SimTrace& tr) {
    return static_cast<std::size_t>(tr.meta.settle_cycles) * tr.meta.params.samples_per_cycle();
}

}  // namespace

TEST_CASE("averaged run settles at the phasor steady state", "[simulation]") {
    const SystemParams p;
    const SimTrace tr = simulate(p, default_health(), SimOptions{});
    REQUIRE_NOTHROW(require_settled(tr));
    CHECK_FALSE(tr.meta.saturated);
    CHECK(tr.meta.settle_cycles == 20);
    CHECK(tr.size() == 30u * 400u);
    const std::size_t w = window_start(tr);
    const OperatingPoint op = operating_point(p);
    const double vd = mean(tr.channel(Channel::v_d_ref), w);
    const double vq = mean(tr.channel(Channel::v_q_ref), w);
    // on-state drops add about 1 V to the resistive drop on d
    CHECK(vd == Approx(p.v_g_amp + p.r_l * op.i_a_amp).margin(2.0));
    CHECK(vq == Approx(p.omega() * p.l_g * op.i_a_amp).margin(0.5));

    const Spectrum ia = sync_dft(tr, Channel::i_a, order_range(0, 3), 10, tr.meta.settle_cycles);
    CHECK(ia.magnitude(1) == Approx(op.i_a_amp).epsilon(0.005));
}

TEST_CASE("ideal devices deliver the rated power", "[simulation]") {
    SystemParams p;
    p.t_deadtime = 0.0;
    const SimTrace tr = simulate(p, DeviceHealth::ideal(), SimOptions{});
    const GridModel grid = GridModel::from(p);
    const std::size_t w = window_start(tr);
    double power = 0.0;
    for (std::size_t n = w; n < tr.size(); ++n) {
        const Abc v = grid.voltages(n * tr.sample_period);
        power += v[0] * tr.channel(Channel::i_a)[n] + v[1] * tr.channel(Channel::i_b)[n] +
                 v[2] * tr.channel(Channel::i_c)[n];
    }
    power /= static_cast<double>(tr.size() - w);
    CHECK(power == Approx(p.p_out).epsilon(0.01));
}

TEST_CASE("currents stay balanced in the loop", "[simulation][property]") {
    const SystemParams p;
    for (Fidelity f : {Fidelity::averaged, Fidelity::switched}) {
        SimOptions o;
        o.fidelity = f;
        o.settle_cycles = 2;
        o.n_cycles = 2;
        o.n_over = 50;
        const SimTrace tr = simulate(p, default_health().degraded(DeviceId::S1, 1e-3), o);
        double worst = 0.0;
        for (std::size_t n = 0; n < tr.size(); ++n) {
            worst = std::max(worst, std::abs(tr.channel(Channel::i_a)[n] + tr.channel(Channel::i_b)[n] +
                                             tr.channel(Channel::i_c)[n]));
        }
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("identical runs give a null delta and identical traces", "[simulation][property]") {
    const SystemParams p;
    const PairedRun run = simulate_paired(p, default_health(), DeviceId::S1, 0.0, SimOptions{});
    for (std::size_t c = 0; c < trace_channel_count; ++c) {
        CHECK(run.healthy.channels[c] == run.degraded.channels[c]);
    }
    const auto orders = order_range(0, 5);
    for (Channel c : {Channel::v_d_ref, Channel::v_q_ref, Channel::v_a_ref}) {
        const Spectrum d = delta_spectrum(sync_dft(run.healthy, c, orders, 10, 20),
                                          sync_dft(run.degraded, c, orders, 10, 20));
        for (int k : orders) CHECK(d.magnitude(k) < 1e-7);
    }
}

TEST_CASE("window start does not matter in steady state", "[simulation]") {
    const SystemParams p;
    SimOptions o;
    o.settle_cycles = 60;
    o.n_cycles = 12;
    const SimTrace tr = simulate(p, default_health(), o);
    const auto orders = order_range(0, 4);
    for (Channel c : {Channel::v_d_ref, Channel::v_a_ref, Channel::i_a}) {
        const Spectrum a = sync_dft(tr, c, orders, 10, tr.meta.settle_cycles);
        const Spectrum b = sync_dft(tr, c, orders, 10, tr.meta.settle_cycles + 2);
        for (int k : orders) {
            CHECK(std::abs(a.at(k) - b.at(k)) <= 1e-9 * std::max(1.0, std::abs(a.at(k))));
        }
    }
}

TEST_CASE("settling is extended until the criterion holds", "[simulation]") {
    const SystemParams p;
    SimOptions o;
    o.fidelity = Fidelity::switched;
    o.n_cycles = 2;
    const SimTrace tr = simulate(p, default_health(), o);
    CHECK(tr.meta.settle_cycles >= o.settle_cycles);
    CHECK(tr.meta.settle_cycles <= o.max_settle_cycles);
    CHECK(tr.meta.settle_rms_delta < settle_tolerance);
    CHECK(tr.size() == static_cast<std::size_t>((tr.meta.settle_cycles + 2) * 400));

    // a cold start with no room to extend is reported, not hidden
    SimOptions cold;
    cold.warm_start = false;
    cold.settle_cycles = 5;
    cold.max_settle_cycles = 5;
    cold.n_cycles = 1;
    const SimTrace c = simulate(p, default_health(), cold);
    CHECK(c.meta.settle_cycles == 5);
    CHECK_THROWS_AS(require_settled(c), NumericalError);
}

TEST_CASE("simulation rejects invalid options", "[simulation]") {
    const SystemParams p;
    SimOptions o;
    o.n_cycles = 0;
    CHECK_THROWS_AS(simulate(p, default_health(), o), ConfigError);
    o = SimOptions{};
    o.n_over = 0;
    CHECK_THROWS_AS(simulate(p, default_health(), o), ConfigError);
    CHECK_THROWS_AS(simulate_paired(p, default_health(), DeviceId::S1, -1e-3, SimOptions{}),
                    ConfigError);
    CHECK(parse_fidelity("switched") == Fidelity::switched);
    CHECK_THROWS_AS(parse_fidelity("spice"), ConfigError);
}

TEST_CASE("averaged delta matches the loop-corrected prediction", "[simulation]") {
    const SystemParams p;
    const PairedRun run = simulate_paired(p, default_health(), DeviceId::S1, 1e-3, SimOptions{});
    const auto orders = order_range(0, 2);
    const Spectrum d = delta_spectrum(sync_dft(run.healthy, Channel::v_d_ref, orders, 10, 20),
                                      sync_dft(run.degraded, Channel::v_d_ref, orders, 10, 20));
    const RefHarmonics pred =
        predicted_ref_harmonics(1e-3, operating_point(p), p, 2, PredictionMode::loop_corrected);
    // the d-axis DC per ampere from the sensitivity table
    CHECK(d.magnitude(0) == Approx(operating_point(p).i_a_amp * 0.1382e-3).epsilon(0.02));
    CHECK(d.magnitude(0) == Approx(pred.d.magnitude(0)).epsilon(0.02));
    CHECK(d.magnitude(1) == Approx(pred.d.magnitude(1)).epsilon(0.05));
    CHECK(d.magnitude(2) == Approx(pred.d.magnitude(2)).epsilon(0.05));
    // phases agree too, not just magnitudes
    CHECK(std::abs(std::arg(d.at(1) / pred.d.at(1))) < 0.05);
}
