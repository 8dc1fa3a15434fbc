#pragma once

// Command-line front end. Every command renders its output into a string
// first, so the bytes depend only on the parsed configuration.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "ghm/atlas.hpp"
#include "ghm/classifier.hpp"
#include "ghm/core.hpp"
#include "ghm/tangency.hpp"

namespace ghm::cli {

enum ExitCode : int { exit_ok = 0, exit_io = 2, exit_invalid = 3 };

class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// 17 significant digits: every double reads back bit-identical.
inline std::string format_real(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

inline void write_output(const std::string& content, const std::string& path, std::ostream& fallback)
{
    if (path.empty() || path == "-") {
        fallback << content;
        fallback.flush();
        return;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw io_error("cannot open '" + path + "' for writing");
    f << content;
    f.close();
    if (!f)
        throw io_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// curves

inline std::string curves_csv(double R, int samples)
{
    std::string s = "curve,param,M,B,R\n";
    for (const auto& c : trace_curves(R, samples)) {
        s += to_string(c.curve);
        s += ',' + format_real(c.parameter) + ',' + format_real(c.location.M) + ',' + format_real(c.location.B) +
             ',' + format_real(c.R) + '\n';
    }
    return s;
}

// ---------------------------------------------------------------------------
// sweep

inline std::string sweep_csv(const SweepGrid& g)
{
    std::string s = "M,B,R,class,period,lyap1,lyap2,rotation\n";
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
        const auto p = g.params(i);
        const auto& c = g.cells[i];
        s += format_real(p.M) + ',' + format_real(p.B) + ',' + format_real(p.R) + ',' + to_string(c.verdict) + ',';
        if (c.verdict == Verdict::sink)
            s += std::to_string(c.period);
        s += ',';
        if (c.verdict != Verdict::divergent)
            s += format_real(c.lyapunov.l1) + ',' + format_real(c.lyapunov.l2);
        else
            s += ',';
        s += ',' + format_optional(c.rotation_number) + '\n';
    }
    return s;
}

inline const char* verdict_color(Verdict v) noexcept
{
    switch (v) {
    case Verdict::sink: return "#4c78a8";
    case Verdict::invariant_circle: return "#f58518";
    case Verdict::chaotic: return "#e45756";
    case Verdict::divergent: return "#eeeeee";
    case Verdict::undecided: return "#9d9d9d";
    }
    return "#000000";
}

inline std::string sweep_svg(const SweepGrid& g, int cell_px = 8)
{
    const auto& sp = g.spec;
    const int W = sp.nx * cell_px, H = sp.ny * cell_px;
    const double dm = (sp.m_max - sp.m_min) / (sp.nx - 1), db = (sp.b_max - sp.b_min) / (sp.ny - 1);
    // cell centres sit on grid nodes, so the plot spans half a cell past each end
    auto px = [&](double M) { return (M - sp.m_min + 0.5 * dm) / (dm * sp.nx) * W; };
    auto py = [&](double B) { return H - (B - sp.b_min + 0.5 * db) / (db * sp.ny) * H; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n";
    o << "<clipPath id=\"frame\"><rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\"/></clipPath>\n";
    o << "<g shape-rendering=\"crispEdges\">\n";
    for (std::size_t idx = 0; idx < g.cells.size(); ++idx) {
        const int i = static_cast<int>(idx % sp.nx), j = static_cast<int>(idx / sp.nx);
        o << "<rect x=\"" << i * cell_px << "\" y=\"" << (sp.ny - 1 - j) * cell_px << "\" width=\"" << cell_px
          << "\" height=\"" << cell_px << "\" fill=\"" << verdict_color(g.cells[idx].verdict) << "\"/>\n";
    }
    o << "</g>\n<g clip-path=\"url(#frame)\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1.2\">\n";
    const auto samples = trace_curves(sp.R, 400);
    for (CurveId id : {CurveId::Lplus, CurveId::Lminus, CurveId::Lphi, CurveId::Lneutral}) {
        o << "<polyline class=\"" << to_string(id) << "\" points=\"";
        bool first = true;
        for (const auto& c : samples) {
            if (c.curve != id)
                continue;
            if (!first)
                o << ' ';
            first = false;
            o << format_real(px(c.location.M)) << ',' << format_real(py(c.location.B));
        }
        o << "\"/>\n";
    }
    o << "</g>\n</svg>\n";
    return o.str();
}

// ---------------------------------------------------------------------------
// rescale

struct RescaleRow {
    int n{0};
    std::optional<tangency::RescaledParams> fit;
    tangency::RescaledParams asym;
    std::optional<double> delta;
};

enum class RescaleMode { model, exact };

inline tangency::RescaledParams rescale_prediction(const tangency::SaddleSpectrum& s, const tangency::GlobalMapCoeffs& g,
                                                   int n, MB target)
{
    tangency::RescaledParams a;
    a.M = target.M;
    a.B = target.B;
    a.R = 2.0 * g.J1() * std::pow(s.lambda() * s.lambda() * s.gamma(), n) / target.B;
    return a;
}

inline std::vector<RescaleRow> rescale_rows(const tangency::SaddleSpectrum& s, const tangency::GlobalMapCoeffs& g,
                                            MB target, const std::vector<int>& ns, RescaleMode mode,
                                            const tangency::FitOptions& fopt = {})
{
    g.validate();
    if (target.B == 0.0)
        throw std::invalid_argument("rescale: target B must be nonzero");
    std::vector<RescaleRow> rows;
    for (int n : ns) {
        if (n < 1)
            throw std::invalid_argument("rescale: every n must be >= 1");
        RescaleRow r;
        r.n = n;
        r.asym = rescale_prediction(s, g, n, target);
        try {
            if (mode == RescaleMode::exact) {
                r.fit = tangency::fit_ghm_exact(r.asym.ghm(), fopt).params;
            } else {
                const auto cfg = tangency::window_config(s, g, n, target, s.phi0());
                r.fit = tangency::fit_ghm(cfg, fopt).params;
            }
            r.delta = tangency::rescale_discrepancy(*r.fit, r.asym);
        } catch (const tangency::fit_error&) {
        } catch (const tangency::excluded_target&) {
        }
        rows.push_back(r);
    }
    return rows;
}

inline std::string rescale_csv(const std::vector<RescaleRow>& rows)
{
    std::string s = "n,M_fit,B_fit,R_fit,M_asym,B_asym,R_asym,delta\n";
    for (const auto& r : rows) {
        s += std::to_string(r.n) + ',';
        if (r.fit)
            s += format_real(r.fit->M) + ',' + format_real(r.fit->B) + ',' + format_real(r.fit->R) + ',';
        else
            s += ",,,";
        s += format_real(r.asym.M) + ',' + format_real(r.asym.B) + ',' + format_real(r.asym.R) + ',' +
             format_optional(r.delta) + '\n';
    }
    return s;
}

// "yes" when every row has a delta and they strictly decrease.
inline std::string rescale_summary(const std::vector<RescaleRow>& rows)
{
    bool all = !rows.empty();
    bool mono = true;
    std::string list;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        all = all && rows[i].delta.has_value();
        if (i > 0 && rows[i].delta && rows[i - 1].delta && !(*rows[i].delta < *rows[i - 1].delta))
            mono = false;
        list += (i ? " " : "") + std::to_string(rows[i].n) + ':' +
                (rows[i].delta ? format_real(*rows[i].delta) : std::string("fit-failed"));
    }
    const char* verdict = !all ? "incomplete" : (mono ? "yes" : "no");
    return std::string("delta strictly decreasing: ") + verdict + " [" + list + "]\n";
}

// ---------------------------------------------------------------------------
// JSON reports

inline nlohmann::json finite_or_null(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const AttractorClass& c)
{
    nlohmann::json j;
    j["class"] = to_string(c.verdict);
    j["period"] = c.verdict == Verdict::sink ? nlohmann::json(c.period) : nlohmann::json(nullptr);
    j["lyap1"] = finite_or_null(c.lyapunov.l1);
    j["lyap2"] = finite_or_null(c.lyapunov.l2);
    j["rotation"] = c.rotation_number ? nlohmann::json(*c.rotation_number) : nlohmann::json(nullptr);
    j["evidence"] = {{"period_residual", finite_or_null(c.evidence.period_residual)},
                     {"cycle_radius", finite_or_null(c.evidence.cycle_radius)},
                     {"mean_log_det", finite_or_null(c.evidence.mean_log_det)},
                     {"circle_residual", finite_or_null(c.evidence.circle_residual)},
                     {"circle_gap_deg", finite_or_null(c.evidence.circle_gap_deg)},
                     {"escape_step", c.evidence.escape_step}};
    return j;
}

inline nlohmann::json to_json(const tangency::RescaledParams& p)
{
    nlohmann::json j{{"M", finite_or_null(p.M)}, {"B", finite_or_null(p.B)}, {"R", finite_or_null(p.R)}};
    if (p.fit_residual)
        j["residual"] = *p.fit_residual;
    return j;
}

inline nlohmann::json to_json(const tangency::AttractorEvidence& e)
{
    nlohmann::json j;
    j["n"] = e.n;
    j["verdict"] = to_json(e.verdict);
    j["fitted"] = to_json(e.fitted);
    j["model"] = to_json(e.model);
    j["sigma"] = {{"center", e.sigma.center}, {"half_width", e.sigma.half_width}};
    j["orbit_in_sigma"] = e.orbit_in_sigma;
    j["orbit_y_range"] = {e.y_lo, e.y_hi};
    j["orbit_period"] = e.orbit_period ? nlohmann::json(*e.orbit_period) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json coexist_report(const tangency::CoexistenceResult& r, int n_sink, int n_circle)
{
    nlohmann::json j;
    j["n_sink"] = n_sink;
    j["n_circle"] = n_circle;
    j["found"] = r.hit.has_value();
    j["status"] = r.hit ? "hit" : "none found";
    if (r.hit) {
        j["mu"] = r.hit->mu;
        j["phi"] = r.hit->phi;
        j["omega"] = r.hit->omega;
        j["offset"] = r.hit->offset;
        j["attractors"] = {to_json(r.hit->sink), to_json(r.hit->circle)};
    }
    auto& probes = j["probes"] = nlohmann::json::array();
    for (const auto& p : r.log) {
        nlohmann::json q{{"omega", p.omega}, {"offset", p.offset}, {"phi", p.phi}, {"mu", p.mu},
                         {"sink_model", {p.sink_model.M, p.sink_model.B}}, {"outcome", p.outcome}};
        if (p.circle_fit)
            q["circle_fit"] = {p.circle_fit->M, p.circle_fit->B, p.circle_fit->R};
        probes.push_back(q);
    }
    return j;
}

// ---------------------------------------------------------------------------
// argument handling

struct SpectrumArgs {
    double lambda{0.7};
    double gamma{1.8};
    double phi0{1.0};

    tangency::SaddleSpectrum make() const { return tangency::SaddleSpectrum::make(lambda, phi0, gamma); }
};

struct GlobalArgs {
    std::vector<double> x_plus;
    double y_minus{0.5};
    std::vector<double> A;
    std::vector<double> b;
    std::vector<double> c;
    double d{1.0};

    explicit GlobalArgs(const tangency::GlobalMapCoeffs& g)
        : x_plus{g.x_plus(0), g.x_plus(1)},
          y_minus{g.y_minus},
          A{g.A(0, 0), g.A(0, 1), g.A(1, 0), g.A(1, 1)},
          b{g.b(0), g.b(1)},
          c{g.c(0), g.c(1)},
          d{g.d}
    {
    }

    tangency::GlobalMapCoeffs make() const
    {
        tangency::GlobalMapCoeffs g;
        g.x_plus = {x_plus[0], x_plus[1]};
        g.y_minus = y_minus;
        g.A << A[0], A[1], A[2], A[3];
        g.b = {b[0], b[1]};
        g.c = {c[0], c[1]};
        g.d = d;
        g.validate();
        return g;
    }
};

inline void add_spectrum(CLI::App* sub, SpectrumArgs& a)
{
    sub->add_option("--lambda", a.lambda, "stable modulus")->capture_default_str();
    sub->add_option("--gamma", a.gamma, "unstable multiplier")->capture_default_str();
    sub->add_option("--phi0", a.phi0, "base rotation angle (also the branch reference for phi)")->capture_default_str();
}

inline void add_global(CLI::App* sub, GlobalArgs& a)
{
    sub->add_option("--x-plus", a.x_plus, "image of the tangency point on the stable plane")->expected(2);
    sub->add_option("--y-minus", a.y_minus, "height of the tangency preimage")->capture_default_str();
    sub->add_option("--a-matrix", a.A, "A, row-major")->expected(4);
    sub->add_option("--b-vec", a.b, "b")->expected(2);
    sub->add_option("--c-vec", a.c, "c")->expected(2);
    sub->add_option("--d", a.d, "quadratic coefficient")->capture_default_str();
}

struct Common {
    std::string out;
    unsigned threads{1};
};

inline void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--out", c.out, "output file (default: standard output)");
    sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

// Runs the CLI in-process. Returns the exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Generalized Hénon map bifurcation atlas and homoclinic-tangency rescaling lab", "ghm_atlas"};
    app.set_config("--config", "", "INI file; sections [curves], [sweep], ... hold subcommand options");
    app.allow_config_extras(false);
    app.require_subcommand(1, 1);

    Common common;

    auto* curves = app.add_subcommand("curves", "bifurcation curves as CSV");
    double curves_R = 0.0;
    int curves_n = 100;
    add_common(curves, common);
    curves->add_option("--R", curves_R, "R")->capture_default_str();
    curves->add_option("--samples", curves_n, "samples per curve")->check(CLI::Range(2, 1000000))->capture_default_str();

    auto* sweep_cmd = app.add_subcommand("sweep", "classify a parameter grid");
    GridSpec grid;
    ClassifyOptions sweep_opt;
    std::string svg_path;
    add_common(sweep_cmd, common);
    sweep_cmd->add_option("--m-min", grid.m_min)->capture_default_str();
    sweep_cmd->add_option("--m-max", grid.m_max)->capture_default_str();
    sweep_cmd->add_option("--b-min", grid.b_min)->capture_default_str();
    sweep_cmd->add_option("--b-max", grid.b_max)->capture_default_str();
    sweep_cmd->add_option("--nx", grid.nx)->capture_default_str();
    sweep_cmd->add_option("--ny", grid.ny)->capture_default_str();
    sweep_cmd->add_option("--R", grid.R)->capture_default_str();
    sweep_cmd->add_option("--span", sweep_opt.span, "Lyapunov averaging iterates")->capture_default_str();
    sweep_cmd->add_option("--burn-in", sweep_opt.burn_in)->capture_default_str();
    sweep_cmd->add_option("--svg", svg_path, "also render the grid as SVG");

    auto* classify_cmd = app.add_subcommand("classify", "classify one parameter point (JSON)");
    GhmParams cp;
    ClassifyOptions copt;
    copt.span = 1000000;
    add_common(classify_cmd, common);
    classify_cmd->add_option("--M", cp.M)->required();
    classify_cmd->add_option("--B", cp.B)->required();
    classify_cmd->add_option("--R", cp.R)->capture_default_str();
    classify_cmd->add_option("--span", copt.span)->capture_default_str();
    classify_cmd->add_option("--burn-in", copt.burn_in)->capture_default_str();

    auto* rescale = app.add_subcommand("rescale", "fitted vs predicted rescaled parameters");
    SpectrumArgs rs;
    GlobalArgs rg{tangency::GlobalMapCoeffs{}};
    std::vector<int> ns{8, 12, 16};
    MB rtarget{1.0, 0.5};
    std::string rmode = "model";
    add_common(rescale, common);
    add_spectrum(rescale, rs);
    add_global(rescale, rg);
    rescale->add_option("--n", ns, "return indices")->expected(1, 1000);
    rescale->add_option("--target-m", rtarget.M)->capture_default_str();
    rescale->add_option("--target-b", rtarget.B)->capture_default_str();
    rescale->add_option("--mode", rmode, "model: fit the 3D return map; exact: fit exact GHM orbits")
        ->check(CLI::IsMember({"model", "exact"}))
        ->capture_default_str();

    auto* window = app.add_subcommand("window", "invert a window target to (mu, phi) (JSON)");
    SpectrumArgs ws;
    GlobalArgs wg{tangency::GlobalMapCoeffs{}};
    int wn = 10;
    MB wtarget{1.0, 0.5};
    std::string wchart = "leading";
    double wr = tangency::kExcludedRadius;
    add_common(window, common);
    add_spectrum(window, ws);
    add_global(window, wg);
    window->add_option("--n", wn)->capture_default_str();
    window->add_option("--target-m", wtarget.M)->capture_default_str();
    window->add_option("--target-b", wtarget.B)->capture_default_str();
    window->add_option("--radius", wr, "excluded-ball radius")->capture_default_str();
    window->add_option("--chart", wchart, "leading or model")
        ->check(CLI::IsMember({"leading", "model"}))
        ->capture_default_str();

    auto* coexist = app.add_subcommand("coexist", "search for a sink and a circle at two return indices (JSON)");
    SpectrumArgs xs;
    GlobalArgs xg{tangency::coexistence_global()};
    int n_sink = 10, n_circle = 14;
    auto box = tangency::CoexistenceBox::defaults();
    add_common(coexist, common);
    add_spectrum(coexist, xs);
    add_global(coexist, xg);
    coexist->add_option("--n-sink", n_sink)->capture_default_str();
    coexist->add_option("--n-circle", n_circle)->capture_default_str();
    coexist->add_option("--phi-lo", box.phi_lo)->capture_default_str();
    coexist->add_option("--phi-hi", box.phi_hi)->capture_default_str();
    coexist->add_option("--omegas", box.omegas, "circle targets on Lphi")->expected(1, 100000);
    coexist->add_option("--offsets", box.offsets, "signed M offsets from Lphi")->expected(1, 1000);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::FileError& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    }

    try {
        if (curves->parsed()) {
            write_output(curves_csv(curves_R, curves_n), common.out, out);
        } else if (sweep_cmd->parsed()) {
            if (sweep_opt.span < 2 * sweep_opt.circle_points)
                throw std::invalid_argument("sweep: --span must be at least 8000");
            grid.validate();
            const auto g = sweep(grid, sweep_opt, common.threads);
            write_output(sweep_csv(g), common.out, out);
            if (!svg_path.empty())
                write_output(sweep_svg(g), svg_path, out);
        } else if (classify_cmd->parsed()) {
            if (!cp.finite())
                throw std::invalid_argument("classify: parameters must be finite");
            if (copt.span < 2 * copt.circle_points)
                throw std::invalid_argument("classify: --span must be at least 8000");
            auto j = to_json(classify(cp, copt));
            j["M"] = cp.M;
            j["B"] = cp.B;
            j["R"] = cp.R;
            write_output(j.dump(2) + "\n", common.out, out);
        } else if (rescale->parsed()) {
            const auto s = rs.make();
            const auto rows = rescale_rows(s, rg.make(), rtarget, ns,
                                           rmode == "exact" ? RescaleMode::exact : RescaleMode::model);
            write_output(rescale_csv(rows), common.out, out);
            err << rescale_summary(rows);
        } else if (window->parsed()) {
            const auto s = ws.make();
            nlohmann::json j{{"n", wn}, {"target", {wtarget.M, wtarget.B}}, {"chart", wchart}};
            if (wchart == "leading") {
                const auto w = tangency::window_invert(s, wn, wtarget, wr);
                const auto g = wg.make();
                j["mu"] = w.mu;
                j["phi"] = w.phi;
                j["leading_order"] = to_json(tangency::asymptotic_params(s, w.mu, w.phi, wn, g.J1(), wr));
            } else {
                const auto cfg = tangency::window_config(s, wg.make(), wn, wtarget, s.phi0());
                j["mu"] = cfg.global.mu;
                j["phi"] = cfg.phi;
                j["model"] = to_json(tangency::model_params(cfg));
                const auto sl = tangency::sigma_slice(s, cfg.global.y_minus, wn);
                j["sigma"] = {{"center", sl.center}, {"half_width", sl.half_width}};
            }
            write_output(j.dump(2) + "\n", common.out, out);
        } else if (coexist->parsed()) {
            if (n_sink == n_circle)
                throw std::invalid_argument("coexist: --n-sink and --n-circle must differ");
            const auto s = xs.make();
            const auto res = tangency::coexistence_search(s, xg.make(), n_sink, n_circle, box);
            write_output(coexist_report(res, n_sink, n_circle).dump(2) + "\n", common.out, out);
            if (!res.hit)
                err << "coexist: none found (" << res.log.size() << " probes)\n";
        }
    } catch (const io_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    } catch (const std::domain_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    }
    return exit_ok;
}

} // namespace ghm::cli
