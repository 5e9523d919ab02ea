#pragma once

// JSON for potentials, specs and reports; CSV tables with a manifest digest
// line; SHA-256 of manifest text.

#include <openssl/evp.h>

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ssflab/errors.hpp"
#include "ssflab/potential.hpp"
#include "ssflab/shooting.hpp"

namespace ssflab {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline double finite_number(const json& j, const char* what) {
    if (!j.is_number()) throw ParameterError(std::string(what) + " must be a number");
    const double x = j.get<double>();
    if (!std::isfinite(x)) throw ParameterError(std::string(what) + " must be finite");
    return x;
}

inline std::vector<double> finite_array(const json& j, const char* what) {
    if (!j.is_array()) throw ParameterError(std::string(what) + " must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const json& x : j) out.push_back(finite_number(x, what));
    return out;
}

}  // namespace detail

inline json to_json(const PiecewisePotential& p) {
    return json{{"breakpoints", p.breakpoints}, {"values", p.values}, {"support_end", p.support_end}};
}

inline PiecewisePotential potential_from_json(const json& j) {
    if (!j.is_object() || !j.contains("breakpoints") || !j.contains("values"))
        throw ParameterError("potential JSON needs breakpoints and values");
    PiecewisePotential p =
        make_piecewise(detail::finite_array(j.at("breakpoints"), "breakpoints"), detail::finite_array(j.at("values"), "values"));
    if (j.contains("support_end") && detail::finite_number(j.at("support_end"), "support_end") != p.support_end)
        throw ParameterError("support_end does not match the breakpoints");
    return p;
}

inline json to_json(const BarrierSpec& s) {
    json bars = json::array();
    for (const Interval& iv : s.barriers) bars.push_back(json::array({iv.a, iv.b}));
    return json{{"lambda_star", s.lambda_star}, {"w", s.w}, {"s", s.s}, {"barriers", bars}, {"boundary_h", s.boundary_h}};
}

inline BarrierSpec barrier_spec_from_json(const json& j) {
    BarrierSpec s;
    s.lambda_star = detail::finite_number(j.at("lambda_star"), "lambda_star");
    s.w = detail::finite_number(j.at("w"), "w");
    s.s = detail::finite_number(j.at("s"), "s");
    s.boundary_h = detail::finite_number(j.at("boundary_h"), "boundary_h");
    for (const json& b : j.at("barriers")) {
        if (!b.is_array() || b.size() != 2) throw ParameterError("barrier must be [a, b]");
        s.barriers.push_back({detail::finite_number(b[0], "barrier"), detail::finite_number(b[1], "barrier")});
    }
    return s;
}

inline json to_json(const ShootingReport& r) {
    return json{{"entry_positions", r.entry_positions},
                {"entry_log_amplitudes", r.entry_log_amplitudes},
                {"entry_logderiv_residuals", r.entry_logderiv_residuals},
                {"amplitude_ratios", r.amplitude_ratios},
                {"decay_fit_exponent", r.decay_fit_exponent},
                {"decay_fit_coefficient", r.decay_fit_coefficient},
                {"decay_fit_rms", r.decay_fit_rms},
                {"l2_partials", r.l2_partials},
                {"l2_tail_estimate", r.l2_tail_estimate},
                {"l2_divergent", r.l2_divergent}};
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParameterError(path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Digest

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

/// Numbers with 17 significant digits (round-trip exact), a leading
/// "# manifest_digest:" comment when a digest is given.
class CsvTable {
public:
    using Cell = std::variant<double, long, std::string, bool>;

    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<Cell> row) {
        if (row.size() != header_.size()) throw std::logic_error("CSV row width does not match the header");
        rows_.push_back(std::move(row));
    }

    void append(const CsvTable& other) {
        for (const auto& row : other.rows_) add(row);
    }

    std::size_t rows() const { return rows_.size(); }

    static std::string format(const Cell& c) {
        struct Visitor {
            std::string operator()(double x) const {
                if (std::isnan(x)) return "nan";
                if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.17g", x);
                return buf;
            }
            std::string operator()(long x) const { return std::to_string(x); }
            std::string operator()(bool x) const { return x ? "1" : "0"; }
            std::string operator()(const std::string& s) const {
                if (s.find_first_of(",\"\n") == std::string::npos) return s;
                std::string q = "\"";
                for (char ch : s) {
                    if (ch == '"') q.push_back('"');
                    q.push_back(ch);
                }
                return q + "\"";
            }
        };
        return std::visit(Visitor{}, c);
    }

    std::string str(const std::string& digest = {}) const {
        std::ostringstream out;
        if (!digest.empty()) out << "# manifest_digest: " << digest << "\n";
        for (std::size_t i = 0; i < header_.size(); ++i) out << (i ? "," : "") << header_[i];
        out << "\n";
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format(row[i]);
            out << "\n";
        }
        return out.str();
    }

    void write(const std::string& path, const std::string& digest = {}) const { write_text_file(path, str(digest)); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<Cell>> rows_;
};

}  // namespace ssflab
