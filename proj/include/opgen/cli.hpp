#pragma once

#include "opgen/config.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace opgen {

struct CliOptions {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    double tol_scale = 1.0;
    bool quiet = false;
};

enum ExitCode { exit_pass = 0, exit_check_failed = 1, exit_config_error = 2 };

inline json check_to_json(const Check& c) {
    return json{{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"bound", c.lower_bound ? "lower" : "upper"},
                {"pass", c.pass}, {"detail", c.detail}};
}

inline json checks_to_json(const std::vector<Check>& cs) {
    json a = json::array();
    for (const auto& c : cs) a.push_back(check_to_json(c));
    return a;
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << s;
}

inline json header(const std::string& cmd, const CliOptions& o) {
    return json{{"command", cmd}, {"seed", o.seed}, {"tol_scale", o.tol_scale}};
}

inline int finish(const std::vector<Check>& cs, json rep, const std::filesystem::path& file, const CliOptions& o, std::ostream& log) {
    const bool ok = all_pass(cs);
    rep["pass"] = ok;
    rep["checks"] = checks_to_json(cs);
    json failed = json::array();
    for (const auto& c : cs)
        if (!c.pass) failed.push_back(c.name);
    rep["failed"] = failed;
    write_text(file, rep.dump(2) + "\n");
    if (!o.quiet) {
        for (const auto& c : cs)
            if (!c.pass) log << "FAIL " << c.name << ": " << c.value << (c.lower_bound ? " < " : " > ") << c.threshold << "\n";
        log << (ok ? "PASS" : "FAIL") << " (" << cs.size() << " checks) -> " << file.string() << "\n";
    }
    return ok ? exit_pass : exit_check_failed;
}

inline int run_verify(const Config& cfg, const CliOptions& o, const std::filesystem::path& out, std::ostream& log) {
    auto eos = make_eos(cfg);
    PhenomenologicalModel pm = make_model(cfg);
    VerifyInput in;
    in.state = make_initial_state(cfg, make_grid(cfg, cfg.grid.N, cfg.grid.kind), *eos, pm);
    if (cfg.grid.kind == GridKind::interval && cfg.initial.profile != "nodal")
        in.companion = make_initial_state(cfg, make_grid(GridKind::periodic, cfg.grid.N, cfg.grid.L), *eos, pm);
    in.eos = eos.get();
    in.pm = &pm;
    in.tol = cfg.tol.scaled(o.tol_scale);
    in.seed = o.seed;
    std::vector<Check> cs = verify_suite(in);
    return finish(cs, header("verify", o), out / "verify.json", o, log);
}

inline int run_simulate(const Config& cfg, const CliOptions& o, const std::filesystem::path& out, std::ostream& log) {
    Scenario sc = make_scenario(cfg);
    TrajectoryRecord rec = simulate(sc);
    BalanceSummary bs = balance_report(rec, balance_tolerances(cfg.tol.scaled(o.tol_scale)));
    std::ostringstream csv;
    write_csv(csv, rec);
    write_text(out / "trajectory.csv", csv.str());
    json rep = header("simulate", o);
    rep["integrator"] = to_string(sc.integrator);
    rep["mode"] = to_string(sc.mode);
    rep["dt"] = sc.dt;
    rep["steps"] = rec.steps;
    rep["completed"] = rec.completed;
    rep["failure"] = rec.failure;
    rep["H0"] = rec.H0;
    rep["S0"] = rec.S0;
    rep["H_end"] = rec.samples.back().H;
    rep["S_end"] = rec.samples.back().S;
    rep["int_yHu"] = rec.int_yHu;
    rep["int_ySu"] = rec.int_ySu;
    rep["max_semi_discrete_energy"] = bs.max_resH;
    rep["mean_semi_discrete_energy"] = bs.mean_resH;
    rep["min_entropy_production_margin"] = bs.min_resS;
    rep["max_newton_iterations"] = rec.max_newton_iterations;
    if (!rec.completed && !o.quiet) log << "run aborted: " << rec.failure << "\n";
    return finish(bs.checks, rep, out / "summary.json", o, log);
}

inline int run_jacobi(const Config& cfg, const CliOptions& o, const std::filesystem::path& out, std::ostream& log) {
    if (cfg.grid.kind != GridKind::periodic) throw ConfigError("[grid.kind] jacobi needs a periodic grid");
    if (cfg.initial.profile == "nodal") throw ConfigError("[initial.profile] jacobi resamples the state per N; nodal tables cannot be refined");
    auto eos = make_eos(cfg);
    PhenomenologicalModel pm = make_model(cfg);
    const Tolerances tol = cfg.tol.scaled(o.tol_scale);
    auto state_at = [&](int N) { return make_initial_state(cfg, make_grid(cfg, N, GridKind::periodic), *eos, pm); };
    std::vector<JacobiLevel> lv = jacobi_refinement(cfg.jacobi, state_at, *eos, pm, o.seed);

    std::ostringstream csv;
    csv << "N,residual,max_residual\n" << std::setprecision(17);
    for (const auto& l : lv) csv << l.N << ',' << l.rms << ',' << l.max << '\n';
    write_text(out / "jacobi.csv", csv.str());

    std::vector<Check> cs;
    json levels = json::array();
    for (const auto& l : lv) levels.push_back(json{{"N", l.N}, {"rms", l.rms}, {"max", l.max}});
    if (cfg.jacobi.functional == JacobiFunctional::linear) {
        for (const auto& l : lv) cs.push_back(upper_check("jacobi_linear_N" + std::to_string(l.N), l.rms, tol.jacobi_linear, "rms relative residual"));
    } else {
        // residuals already at rounding level carry no rate information
        const double floor = 1e-13;
        for (size_t i = 1; i < lv.size(); ++i) {
            const std::string name = "jacobi_ratio_N" + std::to_string(lv[i - 1].N) + "_" + std::to_string(lv[i].N);
            if (lv[i - 1].rms <= floor)
                cs.push_back(upper_check(name, lv[i].rms, floor, "coarse level at rounding; finer level must stay there"));
            else
                cs.push_back(lower_check(name, lv[i - 1].rms / std::max(lv[i].rms, 1e-300), tol.jacobi_ratio, "rms ratio per grid doubling"));
        }
    }
    json rep = header("jacobi", o);
    rep["structure"] = cfg.jacobi.structure;
    rep["method"] = to_string(cfg.jacobi.method);
    rep["triples"] = cfg.jacobi.triples;
    rep["stencil"] = to_string(cfg.grid.stencil);
    rep["levels"] = levels;
    return finish(cs, rep, out / "jacobi.json", o, log);
}

inline int run_eos_check(const Config& cfg, const CliOptions& o, const std::filesystem::path& out, std::ostream& log) {
    auto eos = make_eos(cfg);
    PhenomenologicalModel pm = make_model(cfg);
    MixtureState z = make_initial_state(cfg, make_grid(cfg, cfg.grid.N, cfg.grid.kind), *eos, pm);
    std::vector<EosSample> smp = eos_samples_from(z, *eos);
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> R(0.1, 2.0), T(0.2, 5.0);
    for (int k = 0; k < 64; ++k) {
        Vec r(eos->species());
        for (auto& x : r) x = R(rng);
        smp.push_back({r, T(rng)});
    }
    const Tolerances tol = cfg.tol.scaled(o.tol_scale);
    std::vector<Check> cs;
    for (auto& c : eos_consistency(*eos, smp, tol.eos_fd, tol.eos_identity).checks) {
        c.name = "eos." + c.name;
        cs.push_back(c);
    }
    json rep = header("eos-check", o);
    rep["eos"] = eos->name();
    rep["samples"] = smp.size();
    return finish(cs, rep, out / "eos_check.json", o, log);
}

}  // namespace detail

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s{"verify", "simulate", "jacobi", "eos-check"};
    return s;
}

// Exit 0 iff every check passes, 1 on a failed check or aborted run, 2 on configuration errors.
inline int run_command(const std::string& cmd, const CliOptions& o, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    try {
        if (!(o.tol_scale > 0) || !std::isfinite(o.tol_scale)) throw ConfigError("--tol-scale must be positive");
        Config cfg = load_config(o.config);
        const std::filesystem::path out(o.out);
        std::error_code ec;
        std::filesystem::create_directories(out, ec);
        if (ec) throw ConfigError("cannot create output directory " + out.string() + ": " + ec.message());
        if (cmd == "verify") return detail::run_verify(cfg, o, out, log);
        if (cmd == "simulate") return detail::run_simulate(cfg, o, out, log);
        if (cmd == "jacobi") return detail::run_jacobi(cfg, o, out, log);
        if (cmd == "eos-check") return detail::run_eos_check(cfg, o, out, log);
        throw ConfigError("unknown subcommand '" + cmd + "'");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_check_failed;
    }
}

}  // namespace opgen
