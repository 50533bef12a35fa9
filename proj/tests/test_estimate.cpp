#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "vonmon/estimate.hpp"
#include "vonmon/simulation.hpp"

using namespace vonmon;
using Catch::Approx;

namespace {

RefHarmonics model(double dr, const OperatingPoint& op, const SystemParams& p,
                   DeviceId device = DeviceId::S1) {
    return predicted_ref_harmonics(dr, op, p, 6, PredictionMode::loop_corrected, device);
}

Spectrum zeros(Channel c, int k_max) {
    Spectrum s;
    s.channel = c;
    for (int k = 0; k <= k_max; ++k) s.phasors[k] = {};
    return s;
}

}  // namespace

TEST_CASE("exact model spectra are inverted exactly", "[estimate]") {
    const SystemParams p;
    const OperatingPoint op = operating_point(p);
    const RefHarmonics h = model(1e-3, op, p);
    const HealthEstimate e = estimate_delta_ron(h.d, h.q, op, p);
    CHECK(e.delta_r_on_hat == Approx(1e-3).epsilon(1e-10));
    CHECK(e.residual < 1e-10);
    CHECK_FALSE(e.clamped);
    CHECK(e.orders_used == std::vector<int>{0, 1, 2});
    CHECK(e.eol_fraction == Approx(1e-3 / (0.05 * 22.5e-3)).epsilon(1e-10));
}

TEST_CASE("estimator is consistent over resistance and current", "[estimate][property]") {
    const SystemParams p;
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> dr(0.0, 10e-3);
    std::uniform_real_distribution<double> cur(0.1, 30.0);
    for (int trial = 0; trial < 25; ++trial) {
        OperatingPoint op = operating_point(p);
        op.i_a_amp = cur(rng);
        const double truth = dr(rng);
        const RefHarmonics h = model(truth, op, p);
        EstimateOptions opt;
        opt.use_q_axis = trial % 2 == 1;
        opt.orders = trial % 3 == 0 ? std::vector<int>{0} : std::vector<int>{0, 1, 2, 3};
        const HealthEstimate e = estimate_delta_ron(h.d, h.q, op, p, opt);
        CHECK(std::abs(e.delta_r_on_hat - truth) <= 1e-10 * std::max(truth, 1e-12));
    }
}

TEST_CASE("zero input gives zero", "[estimate]") {
    const SystemParams p;
    const OperatingPoint op = operating_point(p);
    const HealthEstimate e =
        estimate_delta_ron(zeros(Channel::v_d_ref, 3), zeros(Channel::v_q_ref, 3), op, p);
    CHECK(e.delta_r_on_hat == 0.0);
    CHECK(e.eol_fraction == 0.0);
    CHECK(e.residual == 0.0);
}

TEST_CASE("estimate scales with the input and clamps negatives", "[estimate][property]") {
    const SystemParams p;
    const OperatingPoint op = operating_point(p);
    const RefHarmonics h = model(0.7e-3, op, p);
    const HealthEstimate base = estimate_delta_ron(h.d, h.q, op, p);
    for (double a : {0.5, 2.0, 7.5}) {
        const HealthEstimate e =
            estimate_delta_ron(scaled(h.d, {a, 0.0}), scaled(h.q, {a, 0.0}), op, p);
        CHECK(e.delta_r_on_hat == Approx(a * base.delta_r_on_hat).epsilon(1e-12));
    }
    const HealthEstimate neg =
        estimate_delta_ron(scaled(h.d, {-1.0, 0.0}), scaled(h.q, {-1.0, 0.0}), op, p);
    CHECK(neg.delta_r_on_hat == 0.0);
    CHECK(neg.clamped);
    CHECK(neg.residual >= 0.0);
}

TEST_CASE("estimator preconditions", "[estimate]") {
    const SystemParams p;
    OperatingPoint op = operating_point(p);
    const RefHarmonics h = model(1e-3, op, p);
    EstimateOptions opt;
    opt.orders = {};
    CHECK_THROWS_AS(estimate_delta_ron(h.d, h.q, op, p, opt), EstimationError);
    opt.orders = {9};
    CHECK_THROWS_AS(estimate_delta_ron(h.d, h.q, op, p, opt), EstimationError);
    opt.orders = {-1};
    CHECK_THROWS_AS(estimate_delta_ron(h.d, h.q, op, p, opt), EstimationError);
    op.i_a_amp = 0.0;
    CHECK_THROWS_AS(estimate_delta_ron(h.d, h.q, op, p), EstimationError);
}

TEST_CASE("phase location from exact patterns", "[estimate]") {
    auto pattern = [](int phase, Phasor scale) {
        std::array<Spectrum, 3> s;
        for (int j = 0; j < 3; ++j) {
            s[j].channel = static_cast<Channel>(static_cast<int>(Channel::v_a_ref) + j);
            for (int k = 0; k <= 1; ++k) {
                const double w = (j == phase ? 2.0 : -1.0) * (k == 0 ? 1.0 : 0.6);
                s[j].phasors[k] = k == 0 ? Phasor{(w * scale).real(), 0.0} : w * scale;
            }
        }
        return s;
    };
    for (int ph = 0; ph < 3; ++ph) {
        for (Phasor scale : {Phasor{1e-3, 0.0}, Phasor{-2e-3, 5e-4}, Phasor{0.0, 4e-3}}) {
            const auto s = pattern(ph, scale);
            const PhaseLocation loc = locate_phase(s[0], s[1], s[2]);
            REQUIRE(loc.phase.has_value());
            CHECK(static_cast<int>(*loc.phase) == ph);
            CHECK(loc.correlation[ph] == Approx(1.0).epsilon(1e-12));
            CHECK(loc.confidence == Approx(1.0).epsilon(1e-12));
        }
    }
    const auto z = pattern(0, {0.0, 0.0});
    CHECK_FALSE(locate_phase(z[0], z[1], z[2]).phase.has_value());
    const auto tiny = pattern(1, {1e-7, 0.0});
    CHECK_FALSE(locate_phase(tiny[0], tiny[1], tiny[2]).phase.has_value());
}

TEST_CASE("phase location is invariant to a common complex factor", "[estimate][property]") {
    const SystemParams p;
    const RefHarmonics h = model(1e-3, operating_point(p), p, DeviceId::S3);
    const PhaseLocation base = locate_phase(h.a, h.b, h.c);
    REQUIRE(base.phase == Phase::b);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 20; ++i) {
        const Phasor f{u(rng), u(rng)};
        const PhaseLocation loc = locate_phase(scaled(h.a, f), scaled(h.b, f), scaled(h.c, f));
        CHECK(loc.phase == base.phase);
    }
}

TEST_CASE("end-of-life status bands", "[estimate]") {
    const EolReport eol = eol_report(1.125e-3, 22.5e-3);
    CHECK(eol.eol_fraction == Approx(1.0).epsilon(1e-12));
    CHECK(eol.status == HealthStatus::end_of_life);
    const EolReport none = eol_report(0.0, 22.5e-3);
    CHECK(none.eol_fraction == 0.0);
    CHECK(none.status == HealthStatus::healthy);
    const EolReport half = eol_report(0.5625e-3, 22.5e-3);
    CHECK(half.eol_fraction == Approx(0.5).epsilon(1e-12));
    CHECK(half.status == HealthStatus::watch);
    CHECK(eol_report(0.3e-3, 22.5e-3).status == HealthStatus::healthy);
    CHECK(eol_report(2e-3, 22.5e-3).status == HealthStatus::end_of_life);
    CHECK(eol_report(2e-3, 22.5e-3, 0.2).status == HealthStatus::healthy);
    CHECK(to_string(HealthStatus::end_of_life) == "end-of-life");
    CHECK_THROWS_AS(eol_report(1e-3, 0.0), EstimationError);

    HealthEstimate est;
    est.delta_r_on_hat = 1.125e-3;
    est.phase_hat = Phase::a;
    const EolReport r = eol_report(est, default_health());
    CHECK(r.status == HealthStatus::end_of_life);
    CHECK(r.phase == Phase::a);
}

TEST_CASE("estimates from a simulated sweep increase strictly", "[estimate]") {
    const SystemParams p;
    const OperatingPoint op = operating_point(p);
    const SimTrace healthy = simulate(p, default_health(), SimOptions{});
    const auto orders = order_range(0, 2);
    const Spectrum hd = sync_dft(healthy, Channel::v_d_ref, orders, 10, healthy.meta.settle_cycles);
    const Spectrum hq = sync_dft(healthy, Channel::v_q_ref, orders, 10, healthy.meta.settle_cycles);
    double last = -1.0;
    for (int n = 0; n <= 10; ++n) {
        const double dr = n * 1e-4;
        const SimTrace tr = simulate(p, default_health().degraded(DeviceId::S1, dr), SimOptions{});
        const Spectrum dd = delta_spectrum(hd, sync_dft(tr, Channel::v_d_ref, orders, 10, tr.meta.settle_cycles));
        const Spectrum dq = delta_spectrum(hq, sync_dft(tr, Channel::v_q_ref, orders, 10, tr.meta.settle_cycles));
        const HealthEstimate e = estimate_delta_ron(dd, dq, op, p);
        CHECK(e.delta_r_on_hat > last);
        if (n > 0) CHECK(e.delta_r_on_hat == Approx(dr).epsilon(0.05));
        last = e.delta_r_on_hat;
    }
}
