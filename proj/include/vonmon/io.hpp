#pragma once

// CSV persistence for traces, spectra and result tables. Every file starts
// with optional '#' comment lines followed by a header naming the columns;
// readers locate columns only through that header.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "vonmon/config.hpp"
#include "vonmon/spectrum.hpp"

namespace vonmon {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest text that reads back to the same double.
[[nodiscard]] inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

[[nodiscard]] inline double parse_double(std::string_view s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw IoError("not a number: '" + std::string(s) + "'");
    }
    return v;
}

[[nodiscard]] inline std::string hex_digest(std::uint64_t d) {
    char buf[17];
    const auto res = std::to_chars(buf, buf + 16, d, 16);
    std::string s(buf, res.ptr);
    return std::string(16 - s.size(), '0') + s;
}

// =============================================================================
// Generic table
// =============================================================================

struct CsvTable {
    std::vector<std::string> comments;  // without the leading '#'
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(std::string_view name) const {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            if (columns[k] == name) return k;
        }
        throw IoError("no column '" + std::string(name) + "'");
    }

    [[nodiscard]] double number(std::size_t row, std::string_view name) const {
        return parse_double(rows.at(row).at(column(name)));
    }

    [[nodiscard]] const std::string& text(std::size_t row, std::string_view name) const {
        return rows.at(row).at(column(name));
    }

    void add_row(std::vector<std::string> row) {
        if (row.size() != columns.size()) throw IoError("row width does not match header");
        rows.push_back(std::move(row));
    }

    /// Key=value pairs stored in the comment lines ("# a=1 b=2").
    [[nodiscard]] std::map<std::string, std::string> comment_fields() const {
        std::map<std::string, std::string> out;
        for (const auto& line : comments) {
            std::istringstream is(line);
            std::string tok;
            while (is >> tok) {
                const auto eq = tok.find('=');
                if (eq != std::string::npos) out[tok.substr(0, eq)] = tok.substr(eq + 1);
            }
        }
        return out;
    }
};

inline void write_csv(std::ostream& os, const CsvTable& t) {
    for (const auto& c : t.comments) os << "# " << c << '\n';
    for (std::size_t k = 0; k < t.columns.size(); ++k) os << (k ? "," : "") << t.columns[k];
    os << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << r[k];
        os << '\n';
    }
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& t) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    write_csv(out, t);
}

[[nodiscard]] inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    bool header = false;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream is(s);
        while (std::getline(is, cell, ',')) out.push_back(cell);
        if (!s.empty() && s.back() == ',') out.emplace_back();
        return out;
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.comments.push_back(line.size() > 1 && line[1] == ' ' ? line.substr(2) : line.substr(1));
            continue;
        }
        if (!header) {
            t.columns = split(line);
            header = true;
        } else {
            auto row = split(line);
            if (row.size() != t.columns.size()) throw IoError("ragged CSV row: '" + line + "'");
            t.rows.push_back(std::move(row));
        }
    }
    if (!header) throw IoError("CSV has no header line");
    return t;
}

[[nodiscard]] inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return read_csv(in);
}

// =============================================================================
// Traces
// =============================================================================

[[nodiscard]] inline CsvTable trace_table(const SimTrace& tr) {
    CsvTable t;
    t.comments.push_back("digest=" + hex_digest(config_digest(tr.meta.params, tr.meta.health)) +
                         " sample_period=" + format_double(tr.sample_period) +
                         " f_g=" + format_double(tr.meta.params.f_g) +
                         " settle_cycles=" + std::to_string(tr.meta.settle_cycles) +
                         " n_cycles=" + std::to_string(tr.meta.n_cycles) +
                         " saturated=" + (tr.meta.saturated ? "1" : "0") +
                         " settle_rms_delta=" + format_double(tr.meta.settle_rms_delta));
    t.columns = {"n", "t"};
    for (std::size_t c = 0; c < trace_channel_count; ++c) {
        t.columns.emplace_back(channel_names[c]);
    }
    for (std::size_t n = 0; n < tr.size(); ++n) {
        std::vector<std::string> row{std::to_string(n), format_double(n * tr.sample_period)};
        for (const auto& ch : tr.channels) row.push_back(format_double(ch[n]));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void write_trace_csv(const std::filesystem::path& path, const SimTrace& tr) {
    write_csv(path, trace_table(tr));
}

/// Reads channels and timing back. Parameters and health are not stored in
/// the file; only f_g is restored so the trace can be analysed again.
[[nodiscard]] inline SimTrace read_trace_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const auto meta = t.comment_fields();
    SimTrace tr;
    auto field = [&](const char* key) {
        auto it = meta.find(key);
        if (it == meta.end()) throw IoError("trace lacks '" + std::string(key) + "' metadata");
        return it->second;
    };
    tr.sample_period = parse_double(field("sample_period"));
    tr.meta.params.f_g = parse_double(field("f_g"));
    tr.meta.params.f_sa = 1.0 / tr.sample_period;
    tr.meta.settle_cycles = std::stoi(field("settle_cycles"));
    tr.meta.n_cycles = std::stoi(field("n_cycles"));
    tr.meta.saturated = field("saturated") == "1";
    tr.meta.settle_rms_delta = parse_double(field("settle_rms_delta"));
    for (std::size_t c = 0; c < trace_channel_count; ++c) {
        const std::size_t col = t.column(channel_names[c]);
        auto& dst = tr.channels[c];
        dst.reserve(t.rows.size());
        for (const auto& row : t.rows) dst.push_back(parse_double(row[col]));
    }
    return tr;
}

// =============================================================================
// Spectra
// =============================================================================

[[nodiscard]] inline CsvTable spectrum_table(const Spectrum& s, std::string_view kind) {
    CsvTable t;
    t.comments.push_back("channel=" + std::string(to_string(s.channel)) + " kind=" + std::string(kind));
    t.columns = {"order", "magnitude", "phase_deg"};
    for (const auto& [k, v] : s.phasors) {
        t.add_row({std::to_string(k), format_double(std::abs(v)),
                   format_double(std::arg(v) * 180.0 / std::numbers::pi)});
    }
    return t;
}

inline void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s,
                               std::string_view kind) {
    write_csv(path, spectrum_table(s, kind));
}

[[nodiscard]] inline Spectrum read_spectrum_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const auto meta = t.comment_fields();
    Spectrum s;
    auto it = meta.find("channel");
    if (it == meta.end()) throw IoError("spectrum '" + path.string() + "' lacks a channel tag");
    s.channel = parse_channel(it->second);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const int k = static_cast<int>(t.number(r, "order"));
        const double mag = t.number(r, "magnitude");
        const double ph = t.number(r, "phase_deg") * std::numbers::pi / 180.0;
        s.phasors[k] = k == 0 ? Phasor{std::cos(ph) * mag, 0.0} : std::polar(mag, ph);
    }
    return s;
}

}  // namespace vonmon
