#pragma once

// JSON configs and CSV/JSON outputs. Floats are always written at 17
// significant digits so reruns are byte-identical.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "martquant/archmc.hpp"
#include "martquant/chain.hpp"
#include "martquant/errors.hpp"
#include "martquant/laws.hpp"
#include "martquant/noise.hpp"
#include "martquant/order.hpp"

namespace martquant {

// Malformed or inconsistent user input (exit code 1 in the command-line tool).
class ConfigError : public Error {
public:
    using Error::Error;
};

namespace io {

using json = nlohmann::json;

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// RFC-4180: fields with a comma, quote or line break are quoted, quotes doubled.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

class CsvWriter {
public:
    CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os), cols_(header.size()) {
        row_strings(header);
    }

    struct Cell {
        std::string text;
        Cell(double v) : text(fmt(v)) {}
        Cell(int v) : text(std::to_string(v)) {}
        Cell(long v) : text(std::to_string(v)) {}
        Cell(unsigned long v) : text(std::to_string(v)) {}
        Cell(unsigned long long v) : text(std::to_string(v)) {}
        Cell(long long v) : text(std::to_string(v)) {}
        Cell(unsigned v) : text(std::to_string(v)) {}
        Cell(bool v) : text(v ? "true" : "false") {}
        Cell(const char* s) : text(s) {}
        Cell(std::string s) : text(std::move(s)) {}
    };

    void row(std::initializer_list<Cell> cells) {
        std::vector<std::string> s;
        for (const auto& c : cells) s.push_back(c.text);
        row_strings(s);
    }
    void row(const std::vector<Cell>& cells) {
        std::vector<std::string> s;
        for (const auto& c : cells) s.push_back(c.text);
        row_strings(s);
    }

private:
    void row_strings(const std::vector<std::string>& s) {
        if (s.size() != cols_) throw DimensionMismatch("CSV row width differs from the header");
        for (std::size_t i = 0; i < s.size(); ++i) os_ << (i ? "," : "") << csv_field(s[i]);
        os_ << "\r\n";
    }
    std::ostream& os_;
    std::size_t cols_;
};

// Parse CSV produced by CsvWriter (quoted fields supported). Used by tests and tools.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(field);
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(field);
                rows.push_back(row);
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (any || !field.empty()) {
        row.push_back(field);
        rows.push_back(row);
    }
    return rows;
}

// nlohmann writes doubles shortest-round-trip; we want fixed 17 digits, so
// numbers in JSON outputs are emitted through this serializer.
inline void dump_json(std::ostream& os, const json& j, int indent = 2, int level = 0) {
    const std::string pad(static_cast<std::size_t>(indent * (level + 1)), ' ');
    const std::string end_pad(static_cast<std::size_t>(indent * level), ' ');
    switch (j.type()) {
        case json::value_t::number_float: os << fmt(j.get<double>()); break;
        case json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                break;
            }
            os << "{\n";
            std::size_t i = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++i) {
                os << pad << json(it.key()).dump() << ": ";
                dump_json(os, it.value(), indent, level + 1);
                os << (i + 1 < j.size() ? ",\n" : "\n");
            }
            os << end_pad << "}";
            break;
        }
        case json::value_t::array: {
            bool flat = true;
            for (const auto& v : j) flat = flat && !v.is_structured();
            if (j.empty()) {
                os << "[]";
            } else if (flat) {
                os << "[";
                for (std::size_t i = 0; i < j.size(); ++i) {
                    if (i) os << ", ";
                    dump_json(os, j[i], indent, level + 1);
                }
                os << "]";
            } else {
                os << "[\n";
                for (std::size_t i = 0; i < j.size(); ++i) {
                    os << pad;
                    dump_json(os, j[i], indent, level + 1);
                    os << (i + 1 < j.size() ? ",\n" : "\n");
                }
                os << end_pad << "]";
            }
            break;
        }
        default: os << j.dump();
    }
}

inline std::string dump_string(const json& j) {
    std::ostringstream os;
    dump_json(os, j);
    os << "\n";
    return os.str();
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path);
    os << text;
}

namespace detail {

inline double number(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing field \"") + key + "\"");
    if (!j[key].is_number()) throw ConfigError(std::string("field \"") + key + "\" must be a number");
    return j[key].get<double>();
}

inline double number_or(const json& j, const char* key, double fallback) {
    return j.contains(key) ? number(j, key) : fallback;
}

inline std::size_t count(const json& j, const char* key) {
    const double v = number(j, key);
    if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError(std::string("field \"") + key + "\" must be a nonnegative integer");
    return static_cast<std::size_t>(v);
}

inline std::vector<double> numbers(const json& j) {
    if (!j.is_array()) throw ConfigError("expected an array of numbers");
    std::vector<double> v;
    for (const auto& x : j) {
        if (!x.is_number()) throw ConfigError("expected an array of numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

// Domain errors raised while building objects from a config are config errors.
template <class F>
auto guarded(const std::string& what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const OutOfScopeError&) {
        throw;
    } catch (const DomainError& e) {
        throw ConfigError(what + ": " + e.what());
    } catch (const DimensionMismatch& e) {
        throw ConfigError(what + ": " + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

}  // namespace detail

// Laws: shorthand strings or {"kind": ...}. An optional "shift"/"scale" pair
// maps the law through x -> shift + scale x.
inline AnalyticLaw1D law_from_json(const json& j) {
    return detail::guarded("law", [&]() -> AnalyticLaw1D {
        if (j.is_string()) {
            const auto s = j.get<std::string>();
            if (s == "uniform01") return AnalyticLaw1D::uniform(0.0, 1.0);
            if (s == "normal01" || s == "standard_normal") return AnalyticLaw1D::normal(0.0, 1.0);
            if (s == "power_density_2x" || s == "power2x") return AnalyticLaw1D::power_density_2x();
            throw ConfigError("unknown law shorthand \"" + s + "\"");
        }
        if (!j.is_object() || !j.contains("kind")) throw ConfigError("law needs a \"kind\"");
        const auto kind = j["kind"].get<std::string>();
        AnalyticLaw1D law = [&] {
            if (kind == "uniform") return AnalyticLaw1D::uniform(detail::number_or(j, "a", 0.0), detail::number_or(j, "b", 1.0));
            if (kind == "normal") return AnalyticLaw1D::normal(detail::number_or(j, "mean", 0.0), detail::number_or(j, "sd", 1.0));
            if (kind == "exponential") return AnalyticLaw1D::exponential(detail::number_or(j, "rate", 1.0));
            if (kind == "power_density_2x") return AnalyticLaw1D::power_density_2x();
            if (kind == "point_mass") return AnalyticLaw1D::point_mass(detail::number(j, "x"));
            if (kind == "finite_atoms") {
                if (!j.contains("points") || !j.contains("weights")) throw ConfigError("finite_atoms needs points and weights");
                return AnalyticLaw1D::finite_atoms(detail::numbers(j["points"]), detail::numbers(j["weights"]));
            }
            throw ConfigError("unknown law kind \"" + kind + "\"");
        }();
        if (j.contains("shift") || j.contains("scale"))
            law = law.affine(detail::number_or(j, "shift", 0.0), detail::number_or(j, "scale", 1.0));
        return law;
    });
}

// {"points": [[x, ...], ...], "weights": [...]}; bare numbers are 1D points.
inline DiscreteDistribution distribution_from_json(const json& j) {
    return detail::guarded("distribution", [&] {
        if (!j.is_object() || !j.contains("points") || !j.contains("weights"))
            throw ConfigError("distribution needs points and weights");
        std::vector<Point> pts;
        for (const auto& p : j["points"]) pts.push_back(p.is_array() ? detail::numbers(p) : Point{p.get<double>()});
        return DiscreteDistribution(std::move(pts), detail::numbers(j["weights"]), 1e-9);
    });
}

inline json point_to_json(const Point& p) {
    json a = json::array();
    for (double v : p) a.push_back(v);
    return a;
}

inline json distribution_to_json(const DiscreteDistribution& mu) {
    json pts = json::array();
    for (const auto& p : mu.points()) pts.push_back(point_to_json(p));
    return {{"points", pts}, {"weights", mu.weights()}};
}

inline std::vector<Point> points_from_json(const json& j) {
    return detail::guarded("grid", [&] {
        if (!j.is_array()) throw ConfigError("grid must be an array");
        std::vector<Point> pts;
        for (const auto& p : j) pts.push_back(p.is_array() ? detail::numbers(p) : Point{p.get<double>()});
        return pts;
    });
}

inline json grid_to_json(const std::vector<double>& pts) { return json(pts); }

inline json triangulation_to_json(const Triangulation2D& tri) {
    json v = json::array(), s = json::array();
    for (const auto& p : tri.vertices()) v.push_back({p[0], p[1]});
    for (const auto& t : tri.simplices()) s.push_back({t[0], t[1], t[2]});
    return {{"vertices", v}, {"simplices", s}};
}

// (point coordinates..., weight)
inline void write_grid_csv(std::ostream& os, const std::vector<Point>& pts, const std::vector<double>& w) {
    if (pts.size() != w.size()) throw DimensionMismatch("grid and weights differ in length");
    const std::size_t d = pts.empty() ? 1 : pts.front().size();
    std::vector<std::string> header;
    if (d == 1) header.push_back("point");
    else
        for (std::size_t c = 0; c < d; ++c) header.push_back("x" + std::to_string(c + 1));
    header.push_back("weight");
    CsvWriter csv(os, header);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<CsvWriter::Cell> r;
        for (double v : pts[i]) r.emplace_back(v);
        r.emplace_back(w[i]);
        csv.row(r);
    }
}

inline void write_grid_csv(std::ostream& os, const std::vector<double>& pts, const std::vector<double>& w) {
    write_grid_csv(os, martquant::detail::as_points(pts), w);
}

// Coefficients: {"kind": "constant"|"affine"|"affine_abs"|"constant_matrix", ...}.
inline Theta theta_from_json(const json& j) {
    return detail::guarded("theta", [&]() -> Theta {
        if (!j.is_object() || !j.contains("kind")) throw ConfigError("theta needs a \"kind\"");
        const auto kind = j["kind"].get<std::string>();
        if (kind == "constant") return Theta::constant(detail::number(j, "value"));
        if (kind == "affine") return Theta::scalar_affine(detail::number(j, "a"), detail::number(j, "b"));
        if (kind == "affine_abs")
            return Theta::scalar_affine_abs(detail::number(j, "a"), detail::number(j, "b"), detail::number_or(j, "scale", 1.0),
                                            detail::number_or(j, "floor", 0.0));
        if (kind == "constant_matrix")
            return Theta::constant_matrix(detail::count(j, "d"), detail::count(j, "q"), detail::numbers(j.at("values")));
        throw ConfigError("unknown theta kind \"" + kind + "\"");
    });
}

// {"theta": ..., "steps": n} or {"theta": ..., "euler": {"horizon": T, "steps": n}}
inline ArchSpec arch_from_json(const json& j) {
    return detail::guarded("model", [&] {
        if (!j.is_object() || !j.contains("theta")) throw ConfigError("model needs a \"theta\"");
        const Theta th = theta_from_json(j["theta"]);
        ArchSpec a;
        if (j.contains("euler")) {
            const auto& e = j["euler"];
            const std::size_t n = detail::count(e, "steps");
            if (n == 0) throw ConfigError("model needs at least one step");
            a = ArchSpec::euler(th, detail::number_or(e, "horizon", 1.0), n);
        } else {
            const std::size_t n = detail::count(j, "steps");
            if (n == 0) throw ConfigError("model needs at least one step");
            a = ArchSpec::homogeneous(th, n);
        }
        a.validate();
        return a;
    });
}

// Noise: {"mode": "exact"|"truncated"|"ball"|"quantized", "law": ..., ...}.
// A truncation with "beta": "auto" picks beta so the truncated noise is
// centered; the chosen value is appended to `log`.
inline StepNoise noise_from_json(const json& j, std::vector<std::string>* log = nullptr) {
    return detail::guarded("noise", [&]() -> StepNoise {
        if (!j.is_object()) throw ConfigError("noise must be an object");
        const std::string mode = j.value("mode", "exact");
        const std::size_t q = j.contains("q") ? detail::count(j, "q") : 1;
        if (mode == "ball") return StepNoise::ball(q, detail::number(j, "radius"));
        const AnalyticLaw1D base = j.contains("law") ? law_from_json(j["law"]) : AnalyticLaw1D::normal(0.0, 1.0);
        if (mode == "exact") return StepNoise::exact(base, q);
        if (mode == "quantized") {
            if (j.contains("grid")) return StepNoise::quantized_grid(base, Grid1D(detail::numbers(j["grid"])), q);
            return StepNoise::quantized(base, detail::count(j, "points"), q);
        }
        if (mode == "truncated") {
            if (j.contains("radius")) return StepNoise::truncated(TruncatedLaw1D::symmetric(base, detail::number(j, "radius")), q);
            const double alpha = detail::number(j, "alpha");
            if (!j.contains("beta")) throw ConfigError("truncation needs \"beta\" (a number or \"auto\")");
            if (j["beta"].is_string()) {
                if (j["beta"].get<std::string>() != "auto") throw ConfigError("beta must be a number or \"auto\"");
                auto t = TruncatedLaw1D::centered(base, alpha);
                if (log) log->push_back("truncation centered automatically: alpha = " + fmt(alpha) + ", beta = " + fmt(t.beta()));
                return StepNoise::truncated(std::move(t), q);
            }
            return StepNoise::truncated(TruncatedLaw1D(base, alpha, detail::number(j, "beta")), q);
        }
        throw ConfigError("unknown noise mode \"" + mode + "\"");
    });
}

// One noise object for every step, or an array with one entry per step.
inline std::vector<StepNoise> noises_from_json(const json& j, std::size_t steps, std::vector<std::string>* log = nullptr) {
    std::vector<StepNoise> out;
    if (j.is_array()) {
        if (j.size() != steps && j.size() != 1) throw ConfigError("noise array needs one entry per step");
        for (const auto& e : j) out.push_back(noise_from_json(e, log));
    } else {
        out.push_back(noise_from_json(j, log));
    }
    return out;
}

inline bool is_distribution(const json& j) { return j.is_object() && j.contains("points") && j.contains("weights"); }

inline X0Input x0_from_json(const json& j) {
    if (is_distribution(j)) return distribution_from_json(j);
    return law_from_json(j);
}

inline X0Sampler x0_sampler_from_json(const json& j) {
    if (is_distribution(j)) return distribution_from_json(j);
    if (j.is_array()) return detail::numbers(j);
    if (j.is_number()) return Point{j.get<double>()};
    return law_from_json(j);
}

inline json kernel_to_json(const MartingaleKernel& k) {
    json rows = json::array();
    for (std::size_t i = 0; i < k.rows(); ++i) {
        json r = json::array();
        for (std::size_t c = 0; c < k.cols(); ++c) r.push_back(k.at(i, c));
        rows.push_back(r);
    }
    return rows;
}

inline json step_to_json(const StepDiagnostics& s) {
    json j = {{"transition", s.transition},
              {"noise", s.noise},
              {"dual_distortion", s.dual_distortion},
              {"martingale_residual", s.martingale_residual},
              {"row_sum_residual", s.row_sum_residual},
              {"hull_margin", s.hull_margin},
              {"widened", s.widened},
              {"fallback", s.fallback},
              {"lloyd_iterations", s.lloyd_iterations},
              {"lloyd_converged", s.lloyd_converged}};
    auto opt = [](const std::optional<OrderStatus>& o) { return o ? json(to_string(*o)) : json(nullptr); };
    j["order"] = opt(s.order);
    j["tilde_lower"] = opt(s.tilde_lower);
    j["tilde_upper"] = opt(s.tilde_upper);
    return j;
}

inline json chain_to_json(const ChainApproximation& ch) {
    json grids = json::array(), steps = json::array(), kernels = json::array();
    for (const auto& g : ch.grids) {
        json a = json::array();
        for (const auto& p : g) a.push_back(ch.dim == 1 ? json(p[0]) : point_to_json(p));
        grids.push_back(a);
    }
    for (const auto& k : ch.kernels) kernels.push_back(kernel_to_json(k));
    for (const auto& s : ch.steps) steps.push_back(step_to_json(s));
    return {{"dim", ch.dim},
            {"steps", ch.n()},
            {"x0_distortion", ch.x0_distortion},
            {"grids", grids},
            {"weights", ch.weights},
            {"kernels", kernels},
            {"diagnostics", steps}};
}

inline void write_chain_diagnostics_csv(std::ostream& os, const ChainApproximation& ch) {
    CsvWriter csv(os, {"step", "transition", "noise", "dual_distortion", "martingale_residual", "row_sum_residual",
                       "hull_margin", "widened", "fallback", "lloyd_iterations", "lloyd_converged", "order",
                       "tilde_lower", "tilde_upper"});
    auto opt = [](const std::optional<OrderStatus>& o) { return std::string(o ? to_string(*o) : ""); };
    for (std::size_t k = 0; k < ch.steps.size(); ++k) {
        const auto& s = ch.steps[k];
        csv.row({k + 1, s.transition, s.noise, s.dual_distortion, s.martingale_residual, s.row_sum_residual, s.hull_margin,
                 s.widened, s.fallback, s.lloyd_iterations, s.lloyd_converged, opt(s.order), opt(s.tilde_lower),
                 opt(s.tilde_upper)});
    }
}

inline std::string describe(const MaxAffine& f) {
    std::ostringstream os;
    os << "max of " << f.pieces().size() << " affine pieces:";
    for (const auto& p : f.pieces()) {
        os << "\n  " << fmt(p.intercept);
        for (std::size_t c = 0; c < p.slope.size(); ++c)
            os << " + " << fmt(p.slope[c]) << " * (x" << (p.slope.size() > 1 ? std::to_string(c + 1) : "") << " - "
               << fmt(p.anchor[c]) << ")";
    }
    return os.str();
}

}  // namespace io
}  // namespace martquant
