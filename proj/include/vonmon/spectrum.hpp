#pragma once

// Harmonic phasors, simulated traces and the synchronized DFT that turns one
// into the other.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vonmon/params.hpp"

namespace vonmon {

using Phasor = std::complex<double>;

/// Signals that can carry a spectrum. The first nine are logged by the
/// simulator; the `*_err` channels are the bridge voltage errors of the
/// analytic model.
enum class Channel {
    i_a,
    i_b,
    i_c,
    v_d_ref,
    v_q_ref,
    v_a_ref,
    v_b_ref,
    v_c_ref,
    theta,
    v_an_err,
    v_d_err,
    v_q_err,
    v_0_err,
};

inline constexpr std::size_t trace_channel_count = 9;

inline constexpr std::array<std::string_view, 13> channel_names = {
    "i_a",     "i_b",     "i_c",   "v_d_ref",  "v_q_ref",  "v_a_ref", "v_b_ref",
    "v_c_ref", "theta",   "v_an_err", "v_d_err", "v_q_err", "v_0_err"};

[[nodiscard]] inline std::string_view to_string(Channel c) {
    return channel_names[static_cast<std::size_t>(c)];
}

[[nodiscard]] inline Channel parse_channel(std::string_view s) {
    for (std::size_t k = 0; k < channel_names.size(); ++k) {
        if (channel_names[k] == s) return static_cast<Channel>(k);
    }
    throw std::invalid_argument("unknown channel '" + std::string(s) + "'");
}

/// One-sided harmonic phasors of a real signal, referenced to an angle theta:
/// x = X_0 + sum_k Re{X_k e^{j k theta}}. X_0 is real.
struct Spectrum {
    Channel channel = Channel::v_d_ref;
    std::map<int, Phasor> phasors;

    [[nodiscard]] Phasor at(int order) const {
        auto it = phasors.find(order);
        if (it == phasors.end()) {
            throw std::out_of_range("spectrum " + std::string(to_string(channel)) +
                                    " has no order " + std::to_string(order));
        }
        return it->second;
    }

    [[nodiscard]] bool has(int order) const { return phasors.contains(order); }

    [[nodiscard]] double magnitude(int order) const { return std::abs(at(order)); }

    [[nodiscard]] std::vector<int> orders() const {
        std::vector<int> out;
        out.reserve(phasors.size());
        for (const auto& [k, v] : phasors) out.push_back(k);
        return out;
    }

    [[nodiscard]] int k_max() const { return phasors.empty() ? -1 : phasors.rbegin()->first; }

    bool operator==(const Spectrum&) const = default;
};

[[nodiscard]] inline Spectrum scaled(Spectrum s, Phasor factor) {
    for (auto& [k, v] : s.phasors) v *= factor;
    return s;
}

namespace detail {

inline void require_same_orders(const Spectrum& a, const Spectrum& b) {
    if (a.orders() != b.orders()) {
        throw std::invalid_argument("spectra have mismatched order sets");
    }
}

}  // namespace detail

/// Order-by-order complex sum.
[[nodiscard]] inline Spectrum operator+(const Spectrum& a, const Spectrum& b) {
    detail::require_same_orders(a, b);
    Spectrum out = a;
    for (auto& [k, v] : out.phasors) v += b.phasors.at(k);
    return out;
}

/// Degradation-induced harmonics: degraded minus healthy, order by order.
[[nodiscard]] inline Spectrum delta_spectrum(const Spectrum& healthy, const Spectrum& degraded) {
    if (healthy.channel != degraded.channel) {
        throw std::invalid_argument("delta_spectrum: channel mismatch");
    }
    detail::require_same_orders(healthy, degraded);
    Spectrum out = degraded;
    for (auto& [k, v] : out.phasors) v -= healthy.phasors.at(k);
    return out;
}

// =============================================================================
// Traces
// =============================================================================

struct TraceMetadata {
    SystemParams params;
    DeviceHealth health;
    bool saturated = false;
    double settle_rms_delta = 0.0;  // cycle-to-cycle RMS current change at end of settling
    int settle_cycles = 0;
    int n_cycles = 0;
};

/// Controller-rate signals, uniformly sampled at t_sa.
struct SimTrace {
    double sample_period = 0.0;
    std::array<std::vector<double>, trace_channel_count> channels;
    TraceMetadata meta;

    [[nodiscard]] const std::vector<double>& channel(Channel c) const {
        const auto idx = static_cast<std::size_t>(c);
        if (idx >= trace_channel_count) {
            throw std::invalid_argument("channel '" + std::string(to_string(c)) +
                                        "' is not part of a trace");
        }
        return channels[idx];
    }

    [[nodiscard]] std::vector<double>& channel(Channel c) {
        return const_cast<std::vector<double>&>(std::as_const(*this).channel(c));
    }

    [[nodiscard]] std::size_t size() const { return channels[0].size(); }
};

/// Phasors of `x` at the requested orders, referenced to the sampled angle
/// `theta`. The window must span whole fundamental cycles for the result to be
/// leakage free.
[[nodiscard]] inline std::map<int, Phasor> sync_dft(std::span<const double> x,
                                                    std::span<const double> theta,
                                                    std::span<const int> orders) {
    if (x.size() != theta.size() || x.empty()) {
        throw std::invalid_argument("sync_dft: signal and angle must be equal, non-empty length");
    }
    const double n = static_cast<double>(x.size());
    std::map<int, Phasor> out;
    for (int k : orders) {
        if (k < 0) throw std::invalid_argument("sync_dft: negative order");
        Phasor acc{0.0, 0.0};
        for (std::size_t i = 0; i < x.size(); ++i) {
            acc += x[i] * std::polar(1.0, -k * theta[i]);
        }
        out[k] = k == 0 ? Phasor{acc.real() / n, 0.0} : acc * (2.0 / n);
    }
    return out;
}

/// Synchronized DFT of one trace channel over `n_cycles` fundamental cycles
/// after skipping `settle_cycles`.
[[nodiscard]] inline Spectrum sync_dft(const SimTrace& trace, Channel channel,
                                       std::span<const int> orders, int n_cycles,
                                       int settle_cycles) {
    const double per_cycle = 1.0 / (trace.meta.params.f_g * trace.sample_period);
    const long spc = std::lround(per_cycle);
    if (spc < 1 || std::abs(per_cycle - static_cast<double>(spc)) > 1e-9 * per_cycle) {
        throw std::invalid_argument("sync_dft: sample rate is not an integer multiple of f_g");
    }
    if (n_cycles < 1 || settle_cycles < 0) {
        throw std::invalid_argument("sync_dft: window must cover at least one whole cycle");
    }
    const auto start = static_cast<std::size_t>(settle_cycles * spc);
    const auto len = static_cast<std::size_t>(n_cycles * spc);
    if (start + len > trace.size()) {
        throw std::invalid_argument("sync_dft: trace too short for the requested window");
    }
    const auto& x = trace.channel(channel);
    const auto& th = trace.channel(Channel::theta);
    Spectrum s;
    s.channel = channel;
    s.phasors = sync_dft(std::span(x).subspan(start, len), std::span(th).subspan(start, len), orders);
    return s;
}

[[nodiscard]] inline std::vector<int> order_range(int k0, int k1) {
    std::vector<int> out;
    for (int k = k0; k <= k1; ++k) out.push_back(k);
    return out;
}

}  // namespace vonmon
