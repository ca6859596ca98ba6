#pragma once

#include "opgen/brackets.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <optional>
#include <random>

namespace opgen {

// Defaults as used throughout the library; --tol-scale multiplies all but jacobi_ratio.
struct Tolerances {
    double adjointness = 1e-12;
    double psd = 1e-10;
    double degeneracy = 1e-12;
    double bracket = 1e-12;
    double operator_consistency = 1e-10;
    double boundary_identity = 1e-10;
    double port_balance = 1e-10;
    double isolated_balance = 1e-12;
    double model_sum = 1e-12;
    double model_psd = 1e-10;
    double eos_fd = 1e-6;
    double eos_identity = 1e-10;
    double energy_drift = 1e-8;
    double entropy_margin = 1e-10;
    double open_energy_balance = 1e-6;
    double open_entropy_balance = 1e-8;
    double jacobi_linear = 1e-8;
    double jacobi_ratio = 3.5;  // lower bound, not scaled

    Tolerances scaled(double f) const {
        Tolerances t = *this;
        for (double* x : {&t.adjointness, &t.psd, &t.degeneracy, &t.bracket, &t.operator_consistency, &t.boundary_identity, &t.port_balance,
                          &t.isolated_balance, &t.model_sum, &t.model_psd, &t.eos_fd, &t.eos_identity, &t.energy_drift, &t.entropy_margin,
                          &t.open_energy_balance, &t.open_entropy_balance, &t.jacobi_linear})
            *x *= f;
        return t;
    }
};

// --- operator structure ------------------------------------------------------

struct DenseStructure {
    double J_skew = 0;   // |WJ + J^T W| / |WJ|
    double R_sym = 0;    // |WR - R^T W| / |WR|
    double R_min_eig = 0;  // smallest W-weighted eigenvalue / max(1, largest |eigenvalue|)
};

inline DenseStructure dense_structure(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm) {
    MixtureOperators ops(z, eos, pm);
    const Mat J = assemble_dense(ops, OperatorKind::J, z.potential);
    const Mat R = assemble_dense(ops, OperatorKind::R, z.potential);
    const Vec w = block_weights(z.g(), z.species());
    const Mat WJ = w.asDiagonal() * J, WR = w.asDiagonal() * R;
    DenseStructure d;
    d.J_skew = (WJ + WJ.transpose()).cwiseAbs().maxCoeff() / std::max(1e-300, WJ.cwiseAbs().maxCoeff());
    d.R_sym = (WR - WR.transpose()).cwiseAbs().maxCoeff() / std::max(1e-300, WR.cwiseAbs().maxCoeff());
    // W^{1/2} R W^{-1/2}, symmetrized
    const Vec sw = w.cwiseSqrt();
    Mat S = sw.cwiseInverse().asDiagonal() * WR * sw.cwiseInverse().asDiagonal();
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    d.R_min_eig = es.eigenvalues().minCoeff() / std::max(1.0, lmax);
    return d;
}

// |J gS|, |R gH| against |J gH|, |R gS|.
inline std::pair<Residual, Residual> operator_degeneracy(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm) {
    MixtureOperators ops(z, eos, pm);
    const CotangentField gH = ops.grad_H(), gS = ops.grad_S();
    Residual j{ops.J(gS).max_abs(), std::max(1.0, ops.J(gH).max_abs())};
    Residual r{ops.R(gH).max_abs(), std::max(1.0, ops.R(gS).max_abs())};
    return {j, r};
}

// --- verify suite --------------------------------------------------------------

struct VerifyInput {
    MixtureState state;                   // the configured state, either grid kind
    std::optional<MixtureState> companion;  // periodic stand-in for dense checks on interval runs
    const EquationOfState* eos = nullptr;
    const PhenomenologicalModel* pm = nullptr;
    Tolerances tol;
    std::uint64_t seed = 0;
    int functionals = 4;
    int max_dense_dofs = 1200;
};

inline std::vector<EosSample> eos_samples_from(const MixtureState& z, const EquationOfState& eos, int max_points = 16) {
    NodalThermo th = evaluate_thermo(z, eos);
    std::vector<EosSample> out;
    const int stride = std::max(1, z.size() / max_points);
    for (int i = 0; i < z.size(); i += stride) out.push_back({node_densities(z, i), th.T[i]});
    return out;
}

inline std::vector<Check> verify_suite(const VerifyInput& in) {
    if (!in.eos || !in.pm) throw std::invalid_argument("verify_suite: EOS and model required");
    const EquationOfState& eos = *in.eos;
    const PhenomenologicalModel& pm = *in.pm;
    const Tolerances& tol = in.tol;
    std::vector<Check> out;
    auto add = [&](const std::string& prefix, Check c) {
        c.name = prefix + c.name;
        out.push_back(std::move(c));
    };

    check_admissible(in.state, eos, 0);
    NodalThermo th0 = evaluate_thermo(in.state, eos);
    std::vector<double> Ts{th0.T.minCoeff(), th0.T.mean(), th0.T.maxCoeff()};
    for (auto& c : validate_model(pm, Ts, tol.model_psd, tol.model_sum).checks) add("model.", c);
    for (auto& c : eos_consistency(eos, eos_samples_from(in.state, eos), tol.eos_fd, tol.eos_identity).checks) add("eos.", c);

    for (Potential pot : {Potential::energy, Potential::entropy}) {
        const std::string p = to_string(pot) + ".";
        const MixtureState z = convert_state(in.state, pot, eos);
        const bool interval = z.g().kind() == GridKind::interval;

        const MixtureState* dz = interval ? (in.companion ? &*in.companion : nullptr) : &in.state;
        if (dz && dz->dofs() <= in.max_dense_dofs) {
            DenseStructure d = dense_structure(convert_state(*dz, pot, eos), eos, pm);
            add(p, upper_check("J_adjointness", d.J_skew, tol.adjointness, "|WJ + J^T W| / |WJ| on a periodic grid"));
            add(p, upper_check("R_adjointness", d.R_sym, tol.adjointness, "|WR - R^T W| / |WR| on a periodic grid"));
            add(p, lower_check("R_psd", d.R_min_eig, -tol.psd, "smallest W-weighted eigenvalue of R, relative"));
        }

        auto [dj, dr] = operator_degeneracy(z, eos, pm);
        add(p, upper_check("degeneracy_J_gradS", dj.relative(), tol.degeneracy, "|J dS/dz| / max(1, |J dH/dz|)"));
        add(p, upper_check("degeneracy_R_gradH", dr.relative(), tol.degeneracy, "|R dH/dz| / max(1, |R dS/dz|)"));

        std::mt19937_64 rng(in.seed);
        std::vector<FunctionalPtr> F;
        for (int k = 0; k < std::max(3, in.functionals); ++k) F.push_back(random_polynomial_functional(z, rng, 0.3, 0.1, 1));
        BracketEvaluator ev(z, eos, pm);
        const BracketVariant pv = poisson_variant(pot), dv = dissipation_variant(pot);
        std::vector<CotangentField> g;
        for (const auto& f : F) g.push_back(f->gradient(z));
        double anti = 0, sym = 0, nonneg = std::numeric_limits<double>::infinity(), lp = 0, ld = 0, opc = 0, deg = 0, bid = 0;
        for (size_t a = 0; a < F.size(); ++a) {
            DegeneracyResult dg = degeneracy_check(z, eos, pm, g[a]);
            deg = std::max({deg, dg.poisson_S.full / dg.poisson_S.scale, dg.poisson_S.boundary / dg.poisson_S.scale,
                            dg.dissipation_H.full / dg.dissipation_H.scale, dg.dissipation_H.boundary / dg.dissipation_H.scale});
            const double aa = ev.eval(dv, Scope::full, g[a], g[a]);
            nonneg = std::min(nonneg, aa / std::max(1.0, std::abs(aa)));
            if (interval) bid = std::max(bid, boundary_identity_residual(z, eos, pm, g[a]).relative());
            const size_t b = (a + 1) % F.size(), c = (a + 2) % F.size();
            const double ab = ev.eval(pv, Scope::full, g[a], g[b]), ba = ev.eval(pv, Scope::full, g[b], g[a]);
            anti = std::max(anti, std::abs(ab + ba) / std::max({1.0, std::abs(ab), std::abs(ba)}));
            const double dab = ev.eval(dv, Scope::full, g[a], g[b]), dba = ev.eval(dv, Scope::full, g[b], g[a]);
            sym = std::max(sym, std::abs(dab - dba) / std::max({1.0, std::abs(dab), std::abs(dba)}));
            lp = std::max(lp, leibniz_residual({pv, Scope::full, &pm, &eos}, F[a], F[b], F[c], z).relative());
            ld = std::max(ld, leibniz_residual({dv, Scope::full, &pm, &eos}, F[a], F[b], F[c], z).relative());
            opc = std::max({opc, operator_consistency(z, eos, pm, pv, g[a], g[b]).relative(), operator_consistency(z, eos, pm, dv, g[a], g[b]).relative()});
        }
        add(p, upper_check("degeneracy_brackets", deg, tol.degeneracy, "{A,S} and [A,H], full and boundary scopes"));
        add(p, upper_check("poisson_antisymmetry", anti, tol.bracket, "full scope"));
        add(p, upper_check("dissipation_symmetry", sym, tol.bracket, "full scope"));
        add(p, lower_check("dissipation_nonnegative", nonneg, -tol.bracket, "min [A,A], full scope"));
        add(p, upper_check("leibniz_poisson", lp, tol.bracket));
        add(p, upper_check("leibniz_dissipation", ld, tol.bracket));
        add(p, upper_check("operator_consistency", opc, tol.operator_consistency, "bracket against <gA, J gB> and <gA, R gB>"));

        MixtureOperators ops(z, eos, pm);
        const double Hs = std::max(1.0, std::abs(ops.H())), Ss = std::max(1.0, std::abs(ops.S()));
        const CotangentField gH = ops.grad_H(), gS = ops.grad_S();
        if (interval) {
            add(p, upper_check("boundary_identity", bid, tol.boundary_identity, "<gA, B u> + {A,H}_bdry + [A,S]_bdry"));
            PortSignals ps = ops.ports();
            RhsOptions ro;
            ro.mode = Mode::open;
            const CotangentField r = rhs(ops, ro, &ps);
            add(p, upper_check("port_balance_energy", std::abs(inner(z.g(), gH, r) - ps.pairing_H()) / Hs, tol.port_balance, "|dH/dt - <yH,u>|"));
            add(p, lower_check("port_balance_entropy", (inner(z.g(), gS, r) - ps.pairing_S()) / Ss, -tol.port_balance, "dS/dt - <yS,u>"));
        } else {
            const CotangentField r = rhs(ops, RhsOptions{});
            add(p, upper_check("isolated_energy", std::abs(inner(z.g(), gH, r)) / Hs, tol.isolated_balance, "|dH/dt|"));
            add(p, lower_check("isolated_entropy", inner(z.g(), gS, r) / Ss, -tol.isolated_balance, "dS/dt"));
        }
    }
    return out;
}

inline bool all_pass(const std::vector<Check>& cs) {
    for (const auto& c : cs)
        if (!c.pass) return false;
    return true;
}

// --- Jacobi refinement ---------------------------------------------------------

enum class JacobiFunctional { linear, quadratic, cubic };

struct JacobiStudy {
    std::string structure = "transport-polynomial";  // | transport | mixture
    JacobiMethod method = JacobiMethod::closed_form;
    JacobiFunctional functional = JacobiFunctional::cubic;
    int triples = 16;
    std::vector<int> refine{16, 32, 64};
};

struct JacobiLevel {
    int N = 0;
    double rms = 0, max = 0;  // relative residuals over the triples
};

inline std::unique_ptr<PoissonStructure> make_structure(const std::string& name, const EquationOfState& eos, const PhenomenologicalModel& pm) {
    const int nu = pm.species();
    if (name == "transport") return std::make_unique<TransportBracket>(TransportBracket::energy_variant(pm));
    if (name == "mixture") return std::make_unique<MixturePoisson>(eos, pm);
    if (name == "transport-polynomial") {
        // fixed smooth coupling of moderate size, entries cycled to fit nu
        const double cs[3] = {0.1, -0.2, 0.05};
        const double bs[3][3] = {{0.1, 0.2, 0}, {-0.1, 0.05, 0.1}, {0.2, 0, -0.1}};
        Vec c(nu + 1);
        Mat b(nu + 1, nu + 1);
        for (int i = 0; i <= nu; ++i) {
            c[i] = cs[i % 3];
            for (int j = 0; j <= nu; ++j) b(i, j) = bs[i % 3][j % 3];
        }
        std::vector<Mat> Q(nu + 1, 0.05 * Mat::Identity(nu + 1, nu + 1));
        return std::make_unique<TransportBracket>(TransportBracket::polynomial(c, b, Q));
    }
    throw std::invalid_argument("unknown Poisson structure '" + name + "' (transport-polynomial | transport | mixture)");
}

// The same draws at every N, so each triple samples one fixed set of continuum functionals.
inline std::vector<JacobiLevel> jacobi_refinement(const JacobiStudy& st, const std::function<MixtureState(int)>& state_at, const EquationOfState& eos,
                                                  const PhenomenologicalModel& pm, std::uint64_t seed) {
    auto P = make_structure(st.structure, eos, pm);
    std::vector<JacobiLevel> out;
    for (int N : st.refine) {
        const MixtureState z = state_at(N);
        std::mt19937_64 rng(seed);
        JacobiLevel lv;
        lv.N = N;
        double ss = 0;
        for (int t = 0; t < st.triples; ++t) {
            auto draw = [&]() -> FunctionalPtr {
                switch (st.functional) {
                    case JacobiFunctional::linear: return random_linear_functional(z, rng, 1);
                    case JacobiFunctional::quadratic: return random_polynomial_functional(z, rng, 0.3, 0.0, 1);
                    default: return random_polynomial_functional(z, rng, 0.3, 0.1, 1);
                }
            };
            auto A = draw(), B = draw(), C = draw();
            const double r = jacobi_residual(*P, z, *A, *B, *C, st.method).relative();
            ss += r * r;
            lv.max = std::max(lv.max, r);
        }
        lv.rms = std::sqrt(ss / std::max(1, st.triples));
        out.push_back(lv);
    }
    return out;
}

}  // namespace opgen
