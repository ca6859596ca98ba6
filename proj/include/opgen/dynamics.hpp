#pragma once

#include "opgen/generic_ops.hpp"

#include <Eigen/LU>

#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>

namespace opgen {

enum class Integrator { rk4, implicit_midpoint };

inline std::string to_string(Integrator i) { return i == Integrator::rk4 ? "rk4" : "implicit-midpoint"; }

struct StepRejected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A forced input component; everything not forced follows the boundary traces.
struct ForcedPort {
    int component = 0;
    int side = 0;  // 0: x = 0, 1: x = L
    std::function<double(double)> value;
};

struct Evaluation {
    CotangentField rate;
    double dH = 0, dS = 0;    // inner(grad, rhs)
    double yHu = 0, ySu = 0;  // port pairings
    double resH() const { return dH - yHu; }
    double resS() const { return dS - ySu; }
};

// Everything needed to evaluate zdot at a given time.
class System {
public:
    System(std::shared_ptr<const EquationOfState> eos, PhenomenologicalModel pm, Mode mode, std::vector<ForcedPort> forcing = {},
           RhsOptions opt = {}, double rho_floor = 0)
        : eos_(std::move(eos)), pm_(std::move(pm)), forcing_(std::move(forcing)), opt_(opt), rho_floor_(rho_floor) {
        opt_.mode = mode;
        if (mode == Mode::isolated && !forcing_.empty()) throw std::invalid_argument("port forcing needs open mode");
        for (const auto& f : forcing_) {
            if (!f.value) throw std::invalid_argument("forced port without a time series");
            if (f.side != 0 && f.side != 1) throw std::invalid_argument("forced port side must be 0 or 1");
        }
    }

    const EquationOfState& eos() const { return *eos_; }
    const PhenomenologicalModel& model() const { return pm_; }
    Mode mode() const { return opt_.mode; }
    const RhsOptions& options() const { return opt_; }
    double rho_floor() const { return rho_floor_; }

    PortSignals ports(const MixtureOperators& ops, double t) const {
        std::vector<PortOverride> ov;
        for (const auto& f : forcing_) ov.push_back({f.component, f.side, f.value(t)});
        return ops.ports(ov);
    }

    Evaluation evaluate(const MixtureState& z, double t) const {
        try {
            check_admissible(z, *eos_, rho_floor_);
        } catch (const DomainError& e) {
            throw StepRejected(std::string("admissibility lost at t = ") + std::to_string(t) + ": " + e.what() + "; reduce dt");
        }
        MixtureOperators ops(z, *eos_, pm_);
        Evaluation ev;
        const CotangentField gH = ops.grad_H(), gS = ops.grad_S();
        if (opt_.mode == Mode::open) {
            PortSignals ps = ports(ops, t);
            ev.rate = rhs(ops, opt_, &ps);
            ev.yHu = ps.pairing_H();
            ev.ySu = ps.pairing_S();
        } else {
            ev.rate = rhs(ops, opt_);
        }
        ev.dH = inner(z.g(), gH, ev.rate);
        ev.dS = inner(z.g(), gS, ev.rate);
        return ev;
    }

private:
    std::shared_ptr<const EquationOfState> eos_;
    PhenomenologicalModel pm_;
    std::vector<ForcedPort> forcing_;
    RhsOptions opt_;
    double rho_floor_;
};

struct StepResult {
    MixtureState z;
    double int_yHu = 0, int_ySu = 0;  // port work over the step, stage-weighted
    std::vector<Evaluation> stages;
    int newton_iterations = 0;
    double newton_residual = 0;
};

struct NewtonOptions {
    double tol = 1e-10;  // relative to max(1, |z|_inf)
    int max_iter = 30;
};

inline StepResult step_rk4(const System& sys, const MixtureState& z, double t, double dt) {
    StepResult r;
    auto stage = [&](const MixtureState& zs, double ts) {
        r.stages.push_back(sys.evaluate(zs, ts));
        return r.stages.back().rate;
    };
    const CotangentField k1 = stage(z, t);
    const CotangentField k2 = stage(z.with(z + (0.5 * dt) * k1), t + 0.5 * dt);
    const CotangentField k3 = stage(z.with(z + (0.5 * dt) * k2), t + 0.5 * dt);
    const CotangentField k4 = stage(z.with(z + dt * k3), t + dt);
    Blocks next = z;
    next.axpy(dt / 6, k1).axpy(dt / 3, k2).axpy(dt / 3, k3).axpy(dt / 6, k4);
    const double b[4] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};
    for (int i = 0; i < 4; ++i) {
        r.int_yHu += dt * b[i] * r.stages[i].yHu;
        r.int_ySu += dt * b[i] * r.stages[i].ySu;
    }
    r.z = z.with(next);
    return r;
}

// z1 = z0 + dt f(t + dt/2, m), m = (z0 + z1)/2, solved for m by chord Newton with a
// finite-difference Jacobian, refreshed when the contraction stalls.
inline StepResult step_implicit_midpoint(const System& sys, const MixtureState& z, double t, double dt, const NewtonOptions& nopt = {}) {
    StepResult r;
    const double th = t + 0.5 * dt;
    const Vec z0 = z.flat();
    const double scale = std::max(1.0, z0.cwiseAbs().maxCoeff());
    auto f = [&](const Vec& m) { return sys.evaluate(z.with(z.like(m)), th).rate.flat(); };
    auto G = [&](const Vec& m, const Vec& fm) -> Vec { return m - z0 - 0.5 * dt * fm; };

    Vec m = z0 + 0.5 * dt * f(z0);
    Vec fm = f(m);
    Vec res = G(m, fm);
    Eigen::PartialPivLU<Mat> lu;
    auto refresh = [&]() {
        const int n = static_cast<int>(m.size());
        Mat Jm(n, n);
        for (int j = 0; j < n; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(m[j]));
            Vec mp = m;
            mp[j] += h;
            Jm.col(j) = (f(mp) - fm) / h;
        }
        lu.compute(Mat::Identity(n, n) - 0.5 * dt * Jm);
    };
    refresh();
    double rn = res.cwiseAbs().maxCoeff();
    int it = 0;
    while (rn > nopt.tol * scale) {
        if (++it > nopt.max_iter)
            throw StepRejected("implicit midpoint: Newton did not converge at t = " + std::to_string(t) + " (residual " + std::to_string(rn / scale) +
                               "); reduce dt");
        m -= lu.solve(res);
        fm = f(m);
        res = G(m, fm);
        const double rn_new = res.cwiseAbs().maxCoeff();
        if (rn_new > 0.25 * rn) refresh();
        rn = rn_new;
    }
    r.newton_iterations = it;
    r.newton_residual = rn / scale;
    r.stages.push_back(sys.evaluate(z.with(z.like(m)), th));
    r.int_yHu = dt * r.stages[0].yHu;
    r.int_ySu = dt * r.stages[0].ySu;
    r.z = z.with(z.like(2 * m - z0));
    return r;
}

inline StepResult step(const System& sys, const MixtureState& z, double t, double dt, Integrator integ, const NewtonOptions& nopt = {}) {
    if (!(dt != 0) || !std::isfinite(dt)) throw std::invalid_argument("step: dt must be finite and nonzero");
    StepResult r = integ == Integrator::rk4 ? step_rk4(sys, z, t, dt) : step_implicit_midpoint(sys, z, t, dt, nopt);
    try {
        check_admissible(r.z, sys.eos(), sys.rho_floor());
    } catch (const DomainError& e) {
        throw StepRejected(std::string("admissibility lost after the step at t = ") + std::to_string(t + dt) + ": " + e.what() + "; reduce dt");
    }
    return r;
}

// --- trajectories ------------------------------------------------------------

struct Scenario {
    std::string name = "scenario";
    MixtureState z0;
    std::shared_ptr<const EquationOfState> eos;
    PhenomenologicalModel pm;
    Mode mode = Mode::isolated;
    std::vector<ForcedPort> forcing;
    RhsOptions rhs_options;
    Integrator integrator = Integrator::rk4;
    double dt = 1e-3, t_end = 1e-2;
    int output_every = 1;
    int snapshot_every = 0;  // 0: none
    double rho_floor = 0;
    NewtonOptions newton;
};

struct TrajectorySample {
    double t = 0, H = 0, S = 0;
    double yHu = 0, ySu = 0;    // instantaneous pairings
    double resH = 0, resS = 0;  // semi-discrete residuals at the sample
    double cum_yHu = 0, cum_ySu = 0;
};

struct TrajectoryRecord {
    Mode mode = Mode::isolated;
    std::vector<TrajectorySample> samples;
    std::vector<std::pair<double, MixtureState>> snapshots;
    double H0 = 0, S0 = 0;
    double int_yHu = 0, int_ySu = 0;
    // monitors over every stage of every accepted step
    double max_abs_resH = 0, sum_abs_resH = 0;
    double min_resS = std::numeric_limits<double>::infinity();
    long stage_evaluations = 0;
    long steps = 0;
    int max_newton_iterations = 0;
    bool completed = true;
    std::string failure;
    MixtureState final_state;
};

inline TrajectoryRecord simulate(const Scenario& sc) {
    if (!(sc.dt > 0)) throw std::invalid_argument("scenario: dt must be positive");
    if (!(sc.t_end >= 0)) throw std::invalid_argument("scenario: t_end must be non-negative");
    if (sc.output_every < 1) throw std::invalid_argument("scenario: output cadence must be >= 1");
    if (sc.mode == Mode::open && sc.z0.g().kind() != GridKind::interval) throw std::invalid_argument("scenario: open mode needs an interval grid");
    check_admissible(sc.z0, *sc.eos, sc.rho_floor);
    System sys(sc.eos, sc.pm, sc.mode, sc.forcing, sc.rhs_options, sc.rho_floor);

    TrajectoryRecord rec;
    rec.mode = sc.mode;
    MixtureState z = sc.z0;
    double t = 0;
    auto sample = [&](const MixtureState& zs, double ts) {
        MixtureOperators ops(zs, *sc.eos, sc.pm);
        Evaluation ev = sys.evaluate(zs, ts);
        TrajectorySample s;
        s.t = ts;
        s.H = ops.H();
        s.S = ops.S();
        s.yHu = ev.yHu;
        s.ySu = ev.ySu;
        s.resH = ev.resH();
        s.resS = ev.resS();
        s.cum_yHu = rec.int_yHu;
        s.cum_ySu = rec.int_ySu;
        rec.samples.push_back(s);
    };
    sample(z, t);
    rec.H0 = rec.samples[0].H;
    rec.S0 = rec.samples[0].S;
    if (sc.snapshot_every > 0) rec.snapshots.emplace_back(t, z);

    const long nsteps = static_cast<long>(std::llround(sc.t_end / sc.dt));
    for (long n = 0; n < nsteps; ++n) {
        StepResult r;
        try {
            r = step(sys, z, t, sc.dt, sc.integrator, sc.newton);
        } catch (const std::exception& e) {
            rec.completed = false;
            rec.failure = e.what();
            break;
        }
        for (const auto& ev : r.stages) {
            rec.max_abs_resH = std::max(rec.max_abs_resH, std::abs(ev.resH()));
            rec.sum_abs_resH += std::abs(ev.resH());
            rec.min_resS = std::min(rec.min_resS, ev.resS());
            ++rec.stage_evaluations;
        }
        rec.max_newton_iterations = std::max(rec.max_newton_iterations, r.newton_iterations);
        rec.int_yHu += r.int_yHu;
        rec.int_ySu += r.int_ySu;
        z = r.z;
        t = (n + 1) * sc.dt;
        ++rec.steps;
        const bool last = (n + 1 == nsteps);
        if ((n + 1) % sc.output_every == 0 || last) sample(z, t);
        if (sc.snapshot_every > 0 && ((n + 1) % sc.snapshot_every == 0 || last)) rec.snapshots.emplace_back(t, z);
    }
    // partial runs still end on a sample, so balances compare like with like
    if (rec.samples.back().t != t) sample(z, t);
    rec.final_state = z;
    return rec;
}

struct BalanceTolerances {
    double semi_discrete_isolated = 1e-12;
    double semi_discrete_open = 1e-10;
    double entropy_margin = 1e-10;  // S monotone / production margin, relative
    double energy_drift = 1e-8;     // isolated H drift, relative
    double open_energy_balance = 1e-6;
    double open_entropy_balance = 1e-8;
};

struct BalanceSummary {
    double H_scale = 1, S_scale = 1;
    double max_resH = 0, mean_resH = 0;  // relative to H_scale
    double min_resS = 0;                 // relative to S_scale
    double energy_balance = 0;           // |H_end - H0 - int yHu| / H_scale
    double entropy_balance = 0;          // (S_end - S0 - int ySu) / S_scale
    double min_sample_dS = 0;            // smallest S increment between samples / S_scale
    std::vector<Check> checks;
    bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

inline BalanceSummary balance_report(const TrajectoryRecord& rec, const BalanceTolerances& tol = {}) {
    if (rec.samples.empty()) throw std::invalid_argument("balance_report: empty record");
    BalanceSummary s;
    s.H_scale = std::max(1.0, std::abs(rec.H0));
    s.S_scale = std::max(1.0, std::abs(rec.S0));
    s.max_resH = rec.max_abs_resH / s.H_scale;
    s.mean_resH = rec.stage_evaluations ? rec.sum_abs_resH / rec.stage_evaluations / s.H_scale : 0.0;
    s.min_resS = rec.stage_evaluations ? rec.min_resS / s.S_scale : 0.0;
    const auto& last = rec.samples.back();
    s.energy_balance = std::abs(last.H - rec.H0 - rec.int_yHu) / s.H_scale;
    s.entropy_balance = (last.S - rec.S0 - rec.int_ySu) / s.S_scale;
    s.min_sample_dS = rec.samples.size() > 1 ? std::numeric_limits<double>::infinity() : 0.0;
    for (size_t i = 1; i < rec.samples.size(); ++i)
        s.min_sample_dS = std::min(s.min_sample_dS, (rec.samples[i].S - rec.samples[i - 1].S) / s.S_scale);

    const bool iso = rec.mode == Mode::isolated;
    const double semi = iso ? tol.semi_discrete_isolated : tol.semi_discrete_open;
    s.checks.push_back(upper_check("semi_discrete_energy", s.max_resH, semi, "max |dH/dt - <yH,u>| over all stages"));
    s.checks.push_back(lower_check("semi_discrete_entropy", s.min_resS, -semi, "min dS/dt - <yS,u> over all stages"));
    if (iso) {
        s.checks.push_back(upper_check("energy_drift", s.energy_balance, tol.energy_drift, "|H(t_end) - H(0)|"));
        s.checks.push_back(lower_check("entropy_monotone", s.min_sample_dS, -tol.entropy_margin, "min S increment between samples"));
    } else {
        s.checks.push_back(upper_check("energy_balance", s.energy_balance, tol.open_energy_balance, "|H(t_end) - H(0) - int <yH,u> dt|"));
        s.checks.push_back(lower_check("entropy_balance", s.entropy_balance, -tol.open_entropy_balance, "S(t_end) - S(0) - int <yS,u> dt"));
    }
    if (!rec.completed) s.checks.push_back({"completed", 0, 1, true, false, rec.failure});
    return s;
}

inline void write_csv(std::ostream& os, const TrajectoryRecord& rec) {
    os << "t,H,S,yHu,ySu,resH,resS\n";
    os << std::setprecision(17);
    for (const auto& s : rec.samples) os << s.t << ',' << s.H << ',' << s.S << ',' << s.yHu << ',' << s.ySu << ',' << s.resH << ',' << s.resS << '\n';
}

}  // namespace opgen
