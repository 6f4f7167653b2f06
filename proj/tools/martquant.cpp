// martquant: command-line front end.
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "martquant/archmc.hpp"
#include "martquant/chain.hpp"
#include "martquant/dual.hpp"
#include "martquant/io.hpp"
#include "martquant/mot.hpp"
#include "martquant/order.hpp"
#include "martquant/primal.hpp"

namespace fs = std::filesystem;
using namespace martquant;
using io::json;

namespace {

struct Common {
    std::string out = ".";
    std::uint64_t seed = 1;
    unsigned threads = 0;
    double tol = 0.0;  // 0: keep library defaults
    bool seed_set = false;
};

unsigned resolve_threads(unsigned flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("MARTQUANT_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw ConfigError("MARTQUANT_THREADS must be a positive integer");
    }
    return 1;
}

std::string out_path(const Common& c, const std::string& name) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw ConfigError("cannot create output directory " + c.out);
    return (fs::path(c.out) / name).string();
}

template <class F>
void write_with(const std::string& path, F&& f) {
    std::ostringstream os;
    f(os);
    io::write_file(path, os.str());
}

// --law accepts a shorthand, inline JSON, or a path to a JSON file.
AnalyticLaw1D parse_law_arg(const std::string& s) {
    if (!s.empty() && (s.front() == '{' || s.front() == '"')) {
        try {
            return io::law_from_json(json::parse(s));
        } catch (const json::exception& e) {
            throw ConfigError(std::string("--law: ") + e.what());
        }
    }
    if (fs::exists(s)) return io::law_from_json(io::read_json_file(s));
    return io::law_from_json(json(s));
}

Payoff payoff_from_json(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "quadratic") return payoffs::quadratic();
        if (s == "spread") return payoffs::spread();
        throw ConfigError("unknown payoff \"" + s + "\"");
    }
    if (j.is_object() && j.value("kind", "") == "forward_start") return payoffs::forward_start(j.value("strike", 0.0));
    throw ConfigError("payoff must be \"quadratic\", \"spread\" or {\"kind\":\"forward_start\",...}");
}

double x0_second_moment(const X0Sampler& x0) {
    if (auto* l = std::get_if<AnalyticLaw1D>(&x0)) return l->second_moment();
    if (auto* p = std::get_if<Point>(&x0)) {
        double s = 0.0;
        for (double v : *p) s += v * v;
        return s;
    }
    return std::get<DiscreteDistribution>(x0).second_moment();
}

std::vector<std::size_t> sizes_from_json(const json& j, std::size_t steps) {
    if (j.is_number()) {
        const auto n = io::detail::count(json{{"sizes", j}}, "sizes");
        return std::vector<std::size_t>(steps + 1, n);
    }
    if (!j.is_array() || j.size() != steps + 1) throw ConfigError("\"sizes\" must be a number or an array of n+1 numbers");
    std::vector<std::size_t> v;
    for (const auto& e : j) v.push_back(io::detail::count(json{{"s", e}}, "s"));
    return v;
}

// ---------------------------------------------------------------- quantize

int cmd_quantize(const std::string& kind, const std::string& law_arg, long n, const Common& c) {
    if (n < 1) throw ConfigError("--n must be at least 1");
    if (kind == "dual" && n < 2) throw ConfigError("--n must be at least 2 for dual quantization");
    const AnalyticLaw1D law = parse_law_arg(law_arg);
    std::vector<double> pts, w;
    double distortion = 0.0;
    bool converged = true;
    if (kind == "primal") {
        LloydOptions opt;
        if (c.tol > 0.0) opt.tol = c.tol;
        auto q = lloyd_1d(law, static_cast<std::size_t>(n), std::nullopt, opt);
        pts = q.grid.points();
        w = q.weights;
        distortion = q.distortion;
        converged = q.converged;
    } else {
        if (!law.support().bounded()) throw ConfigError("dual quantization needs a compactly supported law");
        DualLloydOptions opt;
        if (c.tol > 0.0) opt.tol = c.tol;
        auto q = dual_lloyd_1d(law, static_cast<std::size_t>(n), std::nullopt, opt);
        pts = q.grid.points();
        w = q.weights;
        distortion = q.distortion;
        converged = q.converged;
    }
    write_with(out_path(c, "grid.csv"), [&](std::ostream& os) { io::write_grid_csv(os, pts, w); });
    io::write_file(out_path(c, "grid.json"),
                   io::dump_string({{"kind", kind}, {"points", pts}, {"weights", w}, {"distortion", distortion}}));
    std::cout << kind << " grid of size " << n << "\n";
    for (std::size_t i = 0; i < pts.size(); ++i) std::cout << "  " << io::fmt(pts[i]) << "  " << io::fmt(w[i]) << "\n";
    std::cout << "distortion " << io::fmt(distortion) << "\n";
    if (!converged) std::cerr << "warning: iteration stopped before reaching the tolerance\n";
    return 0;
}

// ---------------------------------------------------------------- chain

struct ChainConfig {
    ArchSpec arch;
    std::vector<StepNoise> noise;
    json x0;
    std::vector<std::size_t> sizes;
    ChainOptions opt;
    std::vector<std::string> notes;
};

ChainConfig chain_config(const json& cfg, const Common& c) {
    ChainConfig cc;
    if (!cfg.contains("model") || !cfg.contains("noise") || !cfg.contains("x0"))
        throw ConfigError("chain config needs \"model\", \"noise\" and \"x0\"");
    cc.arch = io::arch_from_json(cfg["model"]);
    cc.noise = io::noises_from_json(cfg["noise"], cc.arch.steps(), &cc.notes);
    cc.x0 = cfg["x0"];
    const std::string mode = cfg.value("mode", "embedded");
    if (mode == "fixed") {
        cc.opt.mode = GridMode::FixedGrids;
        if (!cfg.contains("grids") || !cfg["grids"].is_array()) throw ConfigError("fixed mode needs \"grids\"");
        for (const auto& g : cfg["grids"]) cc.opt.fixed_grids.push_back(io::points_from_json(g));
        for (const auto& g : cc.opt.fixed_grids)
            for (const auto& p : g)
                if (p.size() != cc.arch.d)
                    throw OutOfScopeError(cc.arch.d >= 3 ? "unsupported dimension: chains are built for d = 1 or 2"
                                                         : "grid points do not match the model dimension");
        std::vector<std::size_t> s{0};
        for (const auto& g : cc.opt.fixed_grids) s.push_back(g.size());
        cc.sizes = s;
        if (cfg.contains("sizes")) cc.sizes[0] = sizes_from_json(cfg["sizes"], cc.arch.steps())[0];
        else if (io::is_distribution(cc.x0)) cc.sizes[0] = cc.x0["points"].size();
        else throw ConfigError("fixed mode needs \"sizes\" for the initial grid");
    } else if (mode == "embedded") {
        if (!cfg.contains("sizes")) throw ConfigError("chain config needs \"sizes\"");
        cc.sizes = sizes_from_json(cfg["sizes"], cc.arch.steps());
    } else {
        throw ConfigError("mode must be \"embedded\" or \"fixed\"");
    }
    if (cfg.contains("x0_grid")) cc.opt.x0_grid = io::detail::numbers(cfg["x0_grid"]);
    cc.opt.mixture_cap = cfg.value("mixture_cap", cc.opt.mixture_cap);
    cc.opt.fallback_noise_points = cfg.value("fallback_noise_points", cc.opt.fallback_noise_points);
    cc.opt.force_finite_noise = cfg.value("force_finite_noise", false);
    cc.opt.check_order = cfg.value("check_order", true);
    if (c.tol > 0.0) {
        cc.opt.primal.tol = c.tol;
        cc.opt.dual.tol = c.tol;
    }
    return cc;
}

int cmd_chain(const std::string& config, const Common& c) {
    const json cfg = io::read_json_file(config);
    auto cc = chain_config(cfg, c);
    for (const auto& n : cc.notes) std::cerr << "note: " << n << "\n";
    const X0Input x0 = io::x0_from_json(cc.x0);
    const auto ch = build_chain(cc.arch, cc.noise, x0, cc.sizes, cc.opt);

    json j = io::chain_to_json(ch);
    j["notes"] = cc.notes;
    io::write_file(out_path(c, "chain.json"), io::dump_string(j));
    write_with(out_path(c, "diagnostics.csv"), [&](std::ostream& os) { io::write_chain_diagnostics_csv(os, ch); });
    for (std::size_t k = 0; k <= ch.n(); ++k)
        write_with(out_path(c, "marginal_" + std::to_string(k) + ".csv"),
                   [&](std::ostream& os) { io::write_grid_csv(os, ch.grids[k], ch.weights[k]); });

    std::cout << "chain with " << ch.n() << " steps in dimension " << ch.dim << "\n";
    for (std::size_t k = 0; k < ch.n(); ++k) {
        const auto& s = ch.steps[k];
        std::cout << "step " << k + 1 << ": " << s.transition << ", grid " << ch.grids[k + 1].size()
                  << ", martingale residual " << io::fmt(s.martingale_residual) << ", convex order "
                  << (s.order ? to_string(*s.order) : "not checked");
        if (s.widened) std::cout << ", hull widened";
        if (s.fallback) std::cout << ", quantized-noise fallback";
        std::cout << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- mot

DiscreteDistribution marginal_from_json(const json& m, std::size_t k, std::optional<std::size_t> size, const Common& c) {
    if (io::is_distribution(m)) return io::distribution_from_json(m);
    const auto law = io::law_from_json(m);
    if (!size) throw ConfigError("marginal " + std::to_string(k) + " is a law: \"sizes\" is required");
    std::vector<double> pts, w;
    if (k == 0) {
        LloydOptions o;
        if (c.tol > 0.0) o.tol = c.tol;
        auto q = lloyd_1d(law, *size, std::nullopt, o);
        pts = q.grid.points();
        w = q.weights;
    } else {
        if (!law.support().bounded()) throw ConfigError("later marginals must be compactly supported");
        DualLloydOptions o;
        if (c.tol > 0.0) o.tol = c.tol;
        auto q = dual_lloyd_1d(law, *size, std::nullopt, o);
        pts = q.grid.points();
        w = q.weights;
    }
    double s = 0.0;
    for (double v : w) s += v;
    for (double& v : w) v /= s;
    return DiscreteDistribution::from_1d(pts, w, 1e-9);
}

int cmd_mot(const std::string& config, bool export_lp, const Common& c) {
    const json cfg = io::read_json_file(config);
    if (!cfg.contains("marginals") || !cfg["marginals"].is_array() || cfg["marginals"].size() < 2)
        throw ConfigError("mot config needs at least two \"marginals\"");
    const Payoff payoff = payoff_from_json(cfg.value("payoff", json("quadratic")));
    MotOptions mo;
    mo.threads = resolve_threads(c.threads);
    if (c.tol > 0.0) mo.lp.feas_tol = c.tol;
    if (cfg.contains("budget")) io::detail::count(cfg, "budget");

    // Problems to solve: one per stability level, or the single configured one.
    std::vector<MotProblem> problems;
    const auto& ms = cfg["marginals"];
    if (cfg.contains("stability")) {
        if (ms.size() != 2 || io::is_distribution(ms[0]) || io::is_distribution(ms[1]))
            throw ConfigError("stability runs need two marginal laws");
        const auto levels = io::detail::numbers(cfg["stability"].at("levels"));
        for (double l : levels) {
            if (!(l >= 2.0) || l != std::floor(l)) throw ConfigError("stability levels must be integers >= 2");
            const auto n = static_cast<std::size_t>(l);
            problems.push_back(make_mot_problem(marginal_from_json(ms[0], 0, n, c), marginal_from_json(ms[1], 1, n, c), payoff));
        }
    } else {
        std::vector<std::size_t> sizes;
        if (cfg.contains("sizes")) {
            for (double v : io::detail::numbers(cfg["sizes"])) sizes.push_back(static_cast<std::size_t>(v));
            if (sizes.size() != ms.size()) throw ConfigError("\"sizes\" needs one entry per marginal");
        }
        MotProblem pb;
        pb.payoff = payoff;
        for (std::size_t k = 0; k < ms.size(); ++k)
            pb.marginals.push_back(marginal_from_json(ms[k], k, sizes.empty() ? std::nullopt : std::optional(sizes[k]), c));
        problems.push_back(std::move(pb));
    }
    for (auto& pb : problems)
        if (cfg.contains("budget")) pb.budget = io::detail::count(cfg, "budget");

    if (export_lp) {
        for (const auto& pb : problems) {
            std::string prefix = "mot";
            for (const auto& m : pb.marginals) prefix += "_" + std::to_string(m.size());
            export_mot_lp(pb, out_path(c, prefix));
            std::cout << "wrote " << out_path(c, prefix + "_lower.lp") << " and " << out_path(c, prefix + "_upper.lp") << "\n";
        }
        return 0;
    }

    std::ostringstream os;
    io::CsvWriter csv(os, {"N", "M", "lower", "upper", "runtime_ms"});
    for (const auto& pb : problems) {
        try {
            const auto r = mot_bounds(pb, mo);
            csv.row({pb.marginals.front().size(), pb.marginals.back().size(), r.lower, r.upper, r.runtime_ms});
            std::cout << "N=" << pb.marginals.front().size() << " M=" << pb.marginals.back().size()
                      << " lower=" << io::fmt(r.lower) << " upper=" << io::fmt(r.upper) << "\n";
        } catch (const NotInConvexOrder& e) {
            std::cerr << "error: " << e.what() << "\n";
            if (e.witness()) std::cerr << "witness (convex function with larger mean under the first law): "
                                       << io::describe(*e.witness()) << "\n";
            return 2;
        }
    }
    io::write_file(out_path(c, "bounds.csv"), os.str());
    return 0;
}

// ---------------------------------------------------------------- simulate / bounds

struct TruncationSetup {
    ArchSpec arch;
    X0Sampler x0 = Point{0.0};
    AnalyticLaw1D base = AnalyticLaw1D::normal(0.0, 1.0);
    std::vector<double> radii;
    std::size_t q = 1;
};

TruncationSetup truncation_setup(const json& cfg) {
    if (!cfg.contains("model") || !cfg.contains("x0")) throw ConfigError("config needs \"model\" and \"x0\"");
    TruncationSetup s;
    s.arch = io::arch_from_json(cfg["model"]);
    s.x0 = io::x0_sampler_from_json(cfg["x0"]);
    s.q = s.arch.q;
    if (cfg.contains("noise")) {
        const auto& nz = cfg["noise"].is_array() ? cfg["noise"][0] : cfg["noise"];
        if (nz.contains("law")) s.base = io::law_from_json(nz["law"]);
    }
    const json sim = cfg.value("simulate", json::object());
    s.radii = sim.contains("radii") ? io::detail::numbers(sim["radii"]) : std::vector<double>{1.0, 1.5, 2.0};
    if (s.radii.empty()) throw ConfigError("\"radii\" must not be empty");
    return s;
}

StepNoise truncated_noise(const TruncationSetup& s, double a) {
    if (s.q == 1) return StepNoise::truncated(TruncatedLaw1D::symmetric(s.base, a));
    return StepNoise::ball(s.q, a);
}

int cmd_simulate(const std::string& config, const Common& c) {
    const json cfg = io::read_json_file(config);
    const auto s = truncation_setup(cfg);
    const json sim = cfg.value("simulate", json::object());
    CoupledOptions opt;
    opt.paths = sim.value("paths", std::size_t{100000});
    opt.batches = sim.value("batches", std::size_t{30});
    opt.seed = c.seed_set ? c.seed : sim.value("seed", std::uint64_t{1});
    opt.threads = resolve_threads(c.threads);
    const double x0_sq = x0_second_moment(s.x0);
    bool ok = true;
    for (double a : s.radii) {
        const std::vector<StepNoise> noise{truncated_noise(s, a)};
        const auto sample = simulate_coupled(s.arch, noise, s.x0, opt);
        const auto bound = truncation_error_bound(TruncationBoundInputs::from(s.arch, noise, x0_sq));
        std::ostringstream os;
        io::CsvWriter csv(os, {"k", "empirical", "bound", "slack", "SE"});
        for (std::size_t k = 0; k <= s.arch.steps(); ++k) {
            const auto& e = sample.err_sq[k];
            const double emp = std::sqrt(e.mean);
            const double se = emp > 0.0 ? e.se / (2.0 * emp) : std::sqrt(e.se);
            const double b = std::sqrt(bound.refined[k]);
            csv.row({k, emp, b, b - emp, se});
            ok = ok && b - emp >= -3.0 * se;
        }
        const std::string name = "simulate_a" + io::fmt(a) + ".csv";
        io::write_file(out_path(c, name), os.str());
        const std::size_t n = s.arch.steps();
        const double doob_emp = std::sqrt(sample.runmax_sq[n].mean), last = std::sqrt(sample.err_sq[n].mean);
        std::cout << "a=" << io::fmt(a) << ": ||X_n - Xb_n||_2 = " << io::fmt(last) << ", bound " << io::fmt(std::sqrt(bound.refined[n]))
                  << ", ||max_k |X_k - Xb_k| ||_2 = " << io::fmt(doob_emp) << " (Doob factor 2 gives "
                  << io::fmt(2.0 * last) << ")\n";
    }
    if (!ok) std::cerr << "warning: an empirical error exceeded its bound by more than 3 standard errors\n";
    return 0;
}

int cmd_bounds(const std::string& config, const Common& c) {
    const json cfg = io::read_json_file(config);
    const auto s = truncation_setup(cfg);
    const double x0_sq = x0_second_moment(s.x0);
    std::ostringstream os;
    io::CsvWriter csv(os, {"a", "k", "refined", "product", "frobenius", "doob"});
    for (double a : s.radii) {
        const std::vector<StepNoise> noise{truncated_noise(s, a)};
        const auto b = truncation_error_bound(TruncationBoundInputs::from(s.arch, noise, x0_sq));
        for (std::size_t k = 0; k < b.refined.size(); ++k)
            csv.row({a, k, std::sqrt(b.refined[k]), std::sqrt(b.product[k]),
                     b.frobenius.empty() ? std::string("") : io::fmt(std::sqrt(b.frobenius[k])), std::sqrt(b.doob[k])});
    }
    io::write_file(out_path(c, "bounds.csv"), os.str());

    std::ostringstream ts;
    io::CsvWriter tail(ts, {"a", "q", "tail_exact", "tail_bound"});
    for (double a : s.radii) {
        double bnd = std::numeric_limits<double>::quiet_NaN();
        try {
            bnd = gaussian_tail_bound(a, s.q);
        } catch (const DomainError&) {
        }
        tail.row({a, s.q, gaussian_tail_exact(a, s.q), std::isnan(bnd) ? std::string("") : io::fmt(bnd)});
    }
    io::write_file(out_path(c, "gaussian_tail.csv"), ts.str());
    const double n = static_cast<double>(s.arch.steps());
    if (n >= 2.0) std::cout << "suggested truncation radius sqrt(2 log n) = " << io::fmt(select_truncation(n, 2.0, s.q)) << "\n";
    std::cout << "wrote " << out_path(c, "bounds.csv") << " and " << out_path(c, "gaussian_tail.csv") << "\n";
    return 0;
}

// ---------------------------------------------------------------- counterexample

int cmd_counterexample(const Common& c) {
    const double res = c.tol > 0.0 ? c.tol : 1e-4;
    const auto r = counterexample_2_2(res);
    std::ostringstream os;
    io::CsvWriter csv(os, {"quantity", "value"});
    csv.row({"u_star_moment", r.u_star_moment});
    csv.row({"min_second_moment", r.min_moment});
    csv.row({"u_star_w2", r.u_star_w2});
    csv.row({"min_w2_squared", r.min_w2_squared});
    csv.row({"dw2sq_du_at_one_third", r.derivative_at_third});
    io::write_file(out_path(c, "counterexample.csv"), os.str());
    std::cout << "second-moment minimizer u = " << io::fmt(r.u_star_moment) << "\n"
              << "W2 minimizer u = " << io::fmt(r.u_star_w2) << "\n"
              << "dW2^2/du at u = 1/3: " << io::fmt(r.derivative_at_third) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Martingale-preserving quantization of ARCH chains"};
    app.require_subcommand(1);
    Common c;
    auto common = [&](CLI::App* s) {
        s->add_option("--out", c.out, "output directory")->capture_default_str();
        s->add_option("--threads", c.threads, "worker threads (default: MARTQUANT_THREADS or 1)");
        s->add_option("--tol", c.tol, "tolerance override");
        s->add_option("--seed", c.seed, "random seed")->each([&](const std::string&) { c.seed_set = true; });
    };

    std::string kind, law = "uniform01", config;
    long n = -1;
    bool export_lp = false;

    auto* q = app.add_subcommand("quantize", "optimal primal or dual grid of a 1D law");
    q->add_option("kind", kind, "primal or dual")->required()->check(CLI::IsMember({"primal", "dual"}));
    q->add_option("--law", law, "law shorthand, inline JSON or JSON file");
    q->add_option("--n", n, "grid size")->required();
    common(q);

    auto* ch = app.add_subcommand("chain", "build a dual-quantized ARCH chain");
    ch->add_option("config", config, "chain config (JSON)")->required();
    common(ch);

    auto* mo = app.add_subcommand("mot", "martingale optimal transport bounds");
    mo->add_option("config", config, "MOT config (JSON)")->required();
    mo->add_flag("--export-lp", export_lp, "write the LPs instead of solving");
    common(mo);

    auto* si = app.add_subcommand("simulate", "coupled simulation of truncated noise versus the bound");
    si->add_option("config", config, "model config (JSON)")->required();
    common(si);

    auto* bo = app.add_subcommand("bounds", "theoretical truncation bounds and Gaussian tails");
    bo->add_option("config", config, "model config (JSON)")->required();
    common(bo);

    auto* ce = app.add_subcommand("counterexample", "moment versus W2 minimizers for the density 2x");
    common(ce);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*q) return cmd_quantize(kind, law, n, c);
        if (*ch) return cmd_chain(config, c);
        if (*mo) return cmd_mot(config, export_lp, c);
        if (*si) return cmd_simulate(config, c);
        if (*bo) return cmd_bounds(config, c);
        if (*ce) return cmd_counterexample(c);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const OutOfScopeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionMismatch& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const HullViolation& e) {
        std::cerr << "numerical error: " << e.what() << " (source point " << e.source_index() << ", excess "
                  << io::fmt(e.excess()) << ")\n";
        return 2;
    } catch (const NotInConvexOrder& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        if (e.witness()) std::cerr << "witness: " << io::describe(*e.witness()) << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
