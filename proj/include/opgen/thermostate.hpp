#pragma once

#include "opgen/state.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace opgen {

struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ThermoPoint {
    double T = 0;
    double p = 0;
    double u = 0;
    double s = 0;
    Vec mu;
};

// energy_form: thermal variable is s and u(rho, s) is the potential.
// entropy_form: thermal variable is u and s(rho, u) is the potential.
enum class EosForm { energy_form, entropy_form };

inline EosForm form_of(Potential p) { return p == Potential::energy ? EosForm::energy_form : EosForm::entropy_form; }

class EquationOfState {
public:
    virtual ~EquationOfState() = default;
    virtual std::string name() const = 0;
    virtual int species() const = 0;
    virtual double energy(const Vec& rho, double s) const = 0;
    virtual double entropy(const Vec& rho, double u) const = 0;
    // T = du/ds, mu = du/drho
    virtual ThermoPoint at_entropy(const Vec& rho, double s) const = 0;
    // 1/T = ds/du, -mu/T = ds/drho
    virtual ThermoPoint at_energy(const Vec& rho, double u) const = 0;
};

using EosPtr = std::shared_ptr<const EquationOfState>;

// Ideal mixture with k_B = 1: n_a = rho_a/m_a, T = u/(cv n),
// s = sum n_a (cv ln T - ln n_a + sigma_a). Needs every rho_a > 0.
class IdealMixture final : public EquationOfState {
public:
    IdealMixture(Vec m, double cv, Vec sigma) : m_(std::move(m)), cv_(cv), sigma_(std::move(sigma)) {
        if (m_.size() == 0) throw std::invalid_argument("ideal mixture: no constituents");
        if (sigma_.size() != m_.size()) throw std::invalid_argument("ideal mixture: sigma and m differ in length");
        if (!(cv_ > 0)) throw std::invalid_argument("ideal mixture: cv must be positive");
        for (int a = 0; a < m_.size(); ++a)
            if (!(m_[a] > 0)) throw std::invalid_argument("ideal mixture: molecular mass m_" + std::to_string(a + 1) + " must be positive");
    }

    std::string name() const override { return "ideal-mixture"; }
    int species() const override { return static_cast<int>(m_.size()); }
    const Vec& masses() const { return m_; }
    double cv() const { return cv_; }
    const Vec& sigma() const { return sigma_; }

    double energy(const Vec& rho, double s) const override { return at_entropy(rho, s).u; }
    double entropy(const Vec& rho, double u) const override { return at_energy(rho, u).s; }

    ThermoPoint at_entropy(const Vec& rho, double s) const override {
        Vec n = numbers(rho);
        const double ntot = n.sum();
        double acc = s;
        for (int a = 0; a < n.size(); ++a) acc += n[a] * (std::log(n[a]) - sigma_[a]);
        const double T = std::exp(acc / (cv_ * ntot));
        if (!(T > 0) || !std::isfinite(T)) throw DomainError("ideal mixture: temperature not representable (T = " + fmt(T) + ")");
        return finish(rho, n, T, s);
    }

    ThermoPoint at_energy(const Vec& rho, double u) const override {
        Vec n = numbers(rho);
        const double T = u / (cv_ * n.sum());
        if (!(T > 0)) throw DomainError("ideal mixture: T = " + fmt(T) + " <= 0 (internal energy must be positive)");
        double s = 0;
        for (int a = 0; a < n.size(); ++a) s += n[a] * (cv_ * std::log(T) - std::log(n[a]) + sigma_[a]);
        return finish(rho, n, T, s);
    }

private:
    static std::string fmt(double x) {
        std::ostringstream o;
        o << x;
        return o.str();
    }

    Vec numbers(const Vec& rho) const {
        if (rho.size() != m_.size()) throw std::invalid_argument("ideal mixture: expected " + std::to_string(m_.size()) + " densities");
        Vec n(rho.size());
        for (int a = 0; a < rho.size(); ++a) {
            if (!(rho[a] > 0)) throw DomainError("ideal mixture: rho_" + std::to_string(a + 1) + " = " + fmt(rho[a]) + " must be > 0");
            n[a] = rho[a] / m_[a];
        }
        return n;
    }

    ThermoPoint finish(const Vec& rho, const Vec& n, double T, double s) const {
        (void)rho;
        ThermoPoint pt;
        pt.T = T;
        pt.s = s;
        const double ntot = n.sum();
        pt.u = cv_ * ntot * T;
        pt.p = ntot * T;
        pt.mu.resize(n.size());
        const double lnT = std::log(T);
        for (int a = 0; a < n.size(); ++a)
            pt.mu[a] = (T / m_[a]) * (std::log(n[a]) + 1 + cv_ - cv_ * lnT - sigma_[a]);
        return pt;
    }

    Vec m_;
    double cv_;
    Vec sigma_;
};

inline ThermoPoint eos_eval(const EquationOfState& eos, const Vec& rho, double thermal, EosForm which) {
    if (rho.sum() <= 0) throw DomainError("eos_eval: total density must be positive");
    return which == EosForm::energy_form ? eos.at_entropy(rho, thermal) : eos.at_energy(rho, thermal);
}

// p - (-u + T s + sum rho mu), relative
inline double pressure_identity_residual(const ThermoPoint& pt, const Vec& rho) {
    const double rhs = -pt.u + pt.T * pt.s + rho.dot(pt.mu);
    const double scale = std::max({std::abs(pt.p), std::abs(pt.u), std::abs(pt.T * pt.s), std::abs(rho.dot(pt.mu))});
    return std::abs(pt.p - rhs) / std::max(scale, 1e-300);
}

// --- phenomenological coefficients ----------------------------------------

struct ReactionCoefficients {
    Vec LL;    // LL_a = sum_k gamma_a^k m_a L^k
    Mat LLab;  // LL_ab = sum_{k,b} gamma_a^k m_a L^{kb} gamma_b^b m_b
};

inline ReactionCoefficients build_reaction_coeffs(const Mat& gamma, const Vec& m, const Mat& Lkb, const Vec& Lk, double tol = 1e-12) {
    const int nu = static_cast<int>(m.size());
    const int nr = static_cast<int>(gamma.cols());
    if (gamma.rows() != nu) throw std::invalid_argument("reactions: gamma must have one row per constituent");
    if (Lkb.rows() != nr || Lkb.cols() != nr || Lk.size() != nr)
        throw std::invalid_argument("reactions: L^{kb} must be n x n and L^k of length n (n = " + std::to_string(nr) + ")");
    const double lscale = nr ? std::max(1.0, Lkb.cwiseAbs().maxCoeff()) : 1.0;
    if (nr && (Lkb - Lkb.transpose()).cwiseAbs().maxCoeff() > tol * lscale)
        throw std::invalid_argument("reactions: L^{kb} is not symmetric");
    std::ostringstream bad;
    bool fail = false;
    for (int k = 0; k < nr; ++k) {
        double r = 0, sc = 0;
        for (int a = 0; a < nu; ++a) {
            r += gamma(a, k) * m[a];
            sc += std::abs(gamma(a, k) * m[a]);
        }
        if (std::abs(r) > tol * std::max(1.0, sc)) {
            fail = true;
            bad << " reaction " << k + 1 << ": sum gamma m = " << r << ";";
        }
    }
    if (fail) throw std::invalid_argument("reactions: stoichiometry violates mass conservation:" + bad.str());

    Mat gm(nu, nr);
    for (int a = 0; a < nu; ++a)
        for (int k = 0; k < nr; ++k) gm(a, k) = gamma(a, k) * m[a];
    ReactionCoefficients rc;
    rc.LL = nr ? Vec(gm * Lk) : Vec::Zero(nu);
    rc.LLab = nr ? Mat(gm * Lkb * gm.transpose()) : Mat::Zero(nu, nu);
    return rc;
}

struct TransportCoefficients {
    double zeta = 0, lambda = 0, kappa = 0;
    Vec B;    // thermal diffusion cross coefficients
    Mat Bab;  // diffusion matrix
};

struct PhenomenologicalModel {
    double zeta = 0, lambda = 0, kappa = 0;
    Vec B;
    Mat Bab;
    Mat gamma;  // nu x n
    Vec m;
    Mat Lkb;
    Vec Lk;
    Vec LL;
    Mat LLab;
    // Optional state dependence of the transport block. Must keep the row sums.
    std::function<TransportCoefficients(const ThermoPoint&, const Vec& rho)> transport_hook;

    int species() const { return static_cast<int>(m.size()); }
    int reactions() const { return static_cast<int>(gamma.cols()); }

    static PhenomenologicalModel build(double zeta, double lambda, double kappa, Vec B, Mat Bab, Mat gamma, Vec m, Mat Lkb, Vec Lk) {
        const int nu = static_cast<int>(m.size());
        if (B.size() != nu || Bab.rows() != nu || Bab.cols() != nu)
            throw std::invalid_argument("coefficients: B_a and B_ab must match the number of constituents");
        PhenomenologicalModel p;
        p.zeta = zeta;
        p.lambda = lambda;
        p.kappa = kappa;
        p.B = std::move(B);
        p.Bab = std::move(Bab);
        p.gamma = gamma.size() ? std::move(gamma) : Mat::Zero(nu, 0);
        p.m = std::move(m);
        p.Lkb = std::move(Lkb);
        p.Lk = std::move(Lk);
        auto rc = build_reaction_coeffs(p.gamma, p.m, p.Lkb, p.Lk);
        p.LL = rc.LL;
        p.LLab = rc.LLab;
        return p;
    }

    TransportCoefficients transport(const ThermoPoint& pt, const Vec& rho) const {
        if (transport_hook) return transport_hook(pt, rho);
        return {zeta, lambda, kappa, B, Bab};
    }
};

// [[kappa T^2, B_b], [B_a, B_ab]] acting on (grad 1/T, grad(-mu_b/T)).
inline Mat transport_matrix(const TransportCoefficients& c, double T) {
    const int nu = static_cast<int>(c.B.size());
    Mat K(nu + 1, nu + 1);
    K(0, 0) = c.kappa * T * T;
    K.block(0, 1, 1, nu) = c.B.transpose();
    K.block(1, 0, nu, 1) = c.B;
    K.block(1, 1, nu, nu) = c.Bab;
    return K;
}

// [[lambda, LL_b], [-LL_a, LL_ab]]: couples (div v, mu) to (-pi, tau).
inline Mat bulk_reaction_matrix(const PhenomenologicalModel& p) {
    const int nu = p.species();
    Mat M2(nu + 1, nu + 1);
    M2(0, 0) = p.lambda;
    M2.block(0, 1, 1, nu) = p.LL.transpose();
    M2.block(1, 0, nu, 1) = -p.LL;
    M2.block(1, 1, nu, nu) = p.LLab;
    return M2;
}

inline double min_sym_eigenvalue(const Mat& a) {
    if (a.size() == 0) return 0;
    Mat s = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

struct Check {
    std::string name;
    double value = 0;      // residual, or minimum eigenvalue for PSD checks
    double threshold = 0;  // pass iff value <= threshold (or >= for lower-bound checks)
    bool lower_bound = false;
    bool pass = true;
    std::string detail;
};

struct ModelReport {
    std::vector<Check> checks;
    bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    const Check* find(const std::string& n) const {
        for (const auto& c : checks)
            if (c.name == n) return &c;
        return nullptr;
    }
};

inline Check upper_check(std::string name, double value, double thr, std::string detail = {}) {
    return {std::move(name), value, thr, false, value <= thr, std::move(detail)};
}
inline Check lower_check(std::string name, double value, double thr, std::string detail = {}) {
    return {std::move(name), value, thr, true, value >= thr, std::move(detail)};
}

inline ModelReport validate_model(const PhenomenologicalModel& p, const std::vector<double>& T_samples,
                                  double psd_tol = 1e-10, double sum_tol = 1e-12) {
    ModelReport rep;
    const int nu = p.species();
    TransportCoefficients tc{p.zeta, p.lambda, p.kappa, p.B, p.Bab};

    rep.checks.push_back(lower_check("viscosity_signs", std::min({p.zeta, p.lambda, p.kappa}), 0.0, "min(zeta, lambda, kappa)"));

    double kmin = 0, kworst = 0;
    bool first = true;
    for (double T : T_samples) {
        Mat K = transport_matrix(tc, T);
        const double e = min_sym_eigenvalue(K);
        const double nrm = std::max(1e-300, K.cwiseAbs().maxCoeff());
        if (first || e / nrm < kworst) {
            kworst = e / nrm;
            kmin = e;
            first = false;
        }
    }
    {
        std::ostringstream d;
        d << "min eigenvalue " << kmin << " over " << T_samples.size() << " temperatures";
        rep.checks.push_back(lower_check("transport_psd", kworst, -psd_tol, d.str()));
    }

    const double bscale = std::max({1.0, p.B.size() ? p.B.cwiseAbs().maxCoeff() : 0.0, p.Bab.size() ? p.Bab.cwiseAbs().maxCoeff() : 0.0});
    double rs = nu ? std::abs(p.B.sum()) : 0.0;
    for (int a = 0; a < nu; ++a) rs = std::max(rs, std::abs(p.Bab.row(a).sum()));
    rep.checks.push_back(upper_check("transport_row_sums", rs / bscale, sum_tol, "max |sum_b B_b|, |sum_b B_ab|"));

    const double asym = nu ? (p.Bab - p.Bab.transpose()).cwiseAbs().maxCoeff() / bscale : 0.0;
    rep.checks.push_back(upper_check("transport_symmetry", asym, sum_tol, "max |B_ab - B_ba|"));

    double mass = 0;
    for (int k = 0; k < p.reactions(); ++k) {
        double r = 0;
        for (int a = 0; a < nu; ++a) r += p.gamma(a, k) * p.m[a];
        mass = std::max(mass, std::abs(r));
    }
    rep.checks.push_back(upper_check("mass_conservation", mass, sum_tol, "max_k |sum_a gamma_a^k m_a|"));

    const double lscale = std::max({1.0, p.Lkb.size() ? p.Lkb.cwiseAbs().maxCoeff() : 0.0, p.LLab.size() ? p.LLab.cwiseAbs().maxCoeff() : 0.0});
    const double lmin = min_sym_eigenvalue(p.Lkb);
    {
        std::ostringstream d;
        d << "min eigenvalue of L^{kb} " << lmin;
        rep.checks.push_back(lower_check("reaction_psd", p.Lkb.size() ? lmin / lscale : 0.0, -psd_tol, d.str()));
    }
    double lrs = nu ? std::abs(p.LL.sum()) : 0.0;
    for (int a = 0; a < nu; ++a) lrs = std::max(lrs, std::abs(p.LLab.row(a).sum()));
    rep.checks.push_back(upper_check("reaction_row_sums", lrs / lscale, sum_tol, "max |sum LL_a|, |sum_b LL_ab|"));

    Mat M2 = bulk_reaction_matrix(p);
    const double m2min = min_sym_eigenvalue(M2);
    const double m2n = std::max(1e-300, M2.cwiseAbs().maxCoeff());
    {
        std::ostringstream d;
        d << "min eigenvalue " << m2min;
        rep.checks.push_back(lower_check("bulk_reaction_psd", m2min / m2n, -psd_tol, d.str()));
    }
    // Onsager symmetry of LL_ab and Casimir antisymmetry of the lambda/LL coupling
    double oc = nu ? (p.LLab - p.LLab.transpose()).cwiseAbs().maxCoeff() : 0.0;
    for (int a = 0; a < nu; ++a) oc = std::max(oc, std::abs(M2(0, a + 1) + M2(a + 1, 0)));
    rep.checks.push_back(upper_check("onsager_casimir", oc / lscale, sum_tol, "LL_ab symmetric, coupling antisymmetric"));
    return rep;
}

// --- closures ---------------------------------------------------------------

struct ClosureInput {
    ThermoPoint pt;
    Vec rho;
    Vec3 v = Vec3::Zero();
    Mat3 grad_v = Mat3::Zero();                  // (grad v)_{ij} = d_j v_i
    Vec3 grad_inv_T = Vec3::Zero();              // grad(1/T)
    std::vector<Vec3> grad_mu_over_T;            // grad(mu_a/T)
};

struct LocalFluxes {
    Mat3 Td;      // deviatoric stress
    Vec3 q;       // heat flux
    std::vector<Vec3> J;  // diffusion fluxes
    Vec Lambda;   // reaction rates
    Vec affinity;
    double pi = 0;  // dynamic pressure
    Mat3 S;       // viscous stress
    Mat3 T_full;  // total stress
    Vec tau;      // mass production
    double sigma = 0;      // entropy production, flux-force sum
    double sigma_pre = 0;  // same, from the pre-closure balance form
    double sigma_scale = 0;  // sum of magnitudes of the individual products
    Vec3 Phi;     // non-convective entropy flux
};

inline LocalFluxes constitutive_closure(const ClosureInput& in, const PhenomenologicalModel& pm) {
    const double T = in.pt.T;
    if (!(T > 0)) throw DomainError("constitutive_closure: T must be positive");
    const int nu = pm.species();
    if (static_cast<int>(in.grad_mu_over_T.size()) != nu || in.pt.mu.size() != nu)
        throw std::invalid_argument("constitutive_closure: constituent count mismatch");
    const TransportCoefficients c = pm.transport(in.pt, in.rho);
    const Vec& mu = in.pt.mu;
    LocalFluxes f;

    const Mat3 I = Mat3::Identity();
    const double divv = in.grad_v.trace();
    const Mat3 Dv = sym(in.grad_v);
    const Mat3 Dd = deviator(Dv);
    f.Td = 2 * c.zeta * Dd;
    f.S = (c.lambda - 2 * c.zeta / 3) * divv * I + c.zeta * (in.grad_v + in.grad_v.transpose());

    f.q = c.kappa * T * T * in.grad_inv_T;
    for (int b = 0; b < nu; ++b) f.q -= c.B[b] * in.grad_mu_over_T[b];
    f.J.assign(nu, Vec3::Zero());
    for (int a = 0; a < nu; ++a) {
        f.J[a] = c.B[a] * in.grad_inv_T;
        for (int b = 0; b < nu; ++b) f.J[a] -= c.Bab(a, b) * in.grad_mu_over_T[b];
    }

    const int nr = pm.reactions();
    f.affinity = Vec::Zero(nr);
    for (int k = 0; k < nr; ++k)
        for (int a = 0; a < nu; ++a) f.affinity[k] += mu[a] * pm.gamma(a, k) * pm.m[a];
    f.Lambda = Vec::Zero(nr);
    for (int k = 0; k < nr; ++k) f.Lambda[k] = -pm.Lkb.row(k).dot(f.affinity) + pm.Lk[k] * divv;

    const double LLmu = pm.LL.dot(mu);
    f.pi = -(LLmu + c.lambda * divv);
    f.T_full = (-in.pt.p + LLmu) * I + f.S;
    f.tau = Vec::Zero(nu);
    for (int a = 0; a < nu; ++a)
        for (int k = 0; k < nr; ++k) f.tau[a] += pm.gamma(a, k) * pm.m[a] * f.Lambda[k];

    // flux-force sum
    double terms[5];
    terms[0] = ddot(f.Td, Dd) / T;
    terms[1] = -f.pi * divv / T;
    terms[2] = f.q.dot(in.grad_inv_T);
    terms[3] = 0;
    for (int a = 0; a < nu; ++a) terms[3] -= f.J[a].dot(in.grad_mu_over_T[a]);
    terms[4] = -f.affinity.dot(f.Lambda) / T;
    f.sigma = terms[0] + terms[1] + terms[2] + terms[3] + terms[4];
    f.sigma_scale = 0;
    for (double t : terms) f.sigma_scale += std::abs(t);
    f.sigma_scale += std::abs(LLmu * divv / T);

    // q.grad(1/T) + (T:grad v + p div v)/T - sum(J.grad(mu/T) + tau mu/T)
    double pre = f.q.dot(in.grad_inv_T) + (ddot(f.T_full, in.grad_v) + in.pt.p * divv) / T;
    for (int a = 0; a < nu; ++a) pre -= f.J[a].dot(in.grad_mu_over_T[a]) + f.tau[a] * mu[a] / T;
    f.sigma_pre = pre;

    f.Phi = f.q;
    for (int a = 0; a < nu; ++a) f.Phi -= mu[a] * f.J[a];
    f.Phi /= T;
    return f;
}

// Internal energy density with T(rho, u) = T, by fixed-point scaling of u (exact in one step for
// energy linear in T).
inline double energy_at_temperature(const EquationOfState& eos, const Vec& rho, double T, int max_iter = 100) {
    if (!(T > 0)) throw DomainError("energy_at_temperature: T must be positive");
    double u = T * rho.sum();
    for (int it = 0; it < max_iter; ++it) {
        const double Tu = eos.at_energy(rho, u).T;
        if (std::abs(Tu - T) <= 1e-14 * T) return u;
        u *= T / Tu;
    }
    throw DomainError("energy_at_temperature: no convergence");
}

inline Vec affinities(const PhenomenologicalModel& pm, const Vec& mu) {
    Vec A = Vec::Zero(pm.reactions());
    for (int k = 0; k < pm.reactions(); ++k)
        for (int a = 0; a < pm.species(); ++a) A[k] += mu[a] * pm.gamma(a, k) * pm.m[a];
    return A;
}

// Mass-preserving shift rho = rho0 + sum_k xi_k gamma^k m with vanishing affinities at fixed T.
inline Vec equilibrium_composition(const EquationOfState& eos, const PhenomenologicalModel& pm, const Vec& rho0, double T) {
    const int nr = pm.reactions(), nu = pm.species();
    if (nr == 0) return rho0;
    Mat G(nu, nr);
    for (int k = 0; k < nr; ++k)
        for (int a = 0; a < nu; ++a) G(a, k) = pm.gamma(a, k) * pm.m[a];
    auto A = [&](const Vec& xi) {
        Vec r = rho0 + G * xi;
        return affinities(pm, eos.at_energy(r, energy_at_temperature(eos, r, T)).mu);
    };
    Vec xi = Vec::Zero(nr);
    for (int it = 0; it < 100; ++it) {
        Vec a0 = A(xi);
        if (a0.cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, T)) return rho0 + G * xi;
        Mat J(nr, nr);
        for (int k = 0; k < nr; ++k) {
            Vec xp = xi;
            const double h = 1e-7 * std::max(1.0, rho0.cwiseAbs().maxCoeff());
            xp[k] += h;
            J.col(k) = (A(xp) - a0) / h;
        }
        Vec step = J.fullPivLu().solve(-a0);
        double lam = 1;
        // keep the densities positive
        while (lam > 1e-6 && ((rho0 + G * (xi + lam * step)).minCoeff() <= 0)) lam *= 0.5;
        xi += lam * step;
    }
    throw DomainError("equilibrium_composition: no convergence");
}

// --- EOS plug-in contract -----------------------------------------------------

struct EosSample {
    Vec rho;
    double T;
};

// Central differences of both potentials against the returned T, mu, plus the
// pressure identity and the s <-> u round trip. Run at registration time.
inline ModelReport eos_consistency(const EquationOfState& eos, const std::vector<EosSample>& samples, double fd_tol = 1e-6,
                                   double identity_tol = 1e-10) {
    const double step = std::cbrt(std::numeric_limits<double>::epsilon());
    double eT = 0, emu = 0, einvT = 0, emuT = 0, ep = 0, erd = 0;
    for (const auto& smp : samples) {
        const Vec& r = smp.rho;
        const int nu = static_cast<int>(r.size());
        const double u = energy_at_temperature(eos, r, smp.T);
        const ThermoPoint pe = eos.at_energy(r, u);
        const ThermoPoint ps = eos.at_entropy(r, pe.s);
        const double hs = step * std::max(1.0, std::abs(pe.s)), hu = step * std::max(1.0, u);
        const double dUds = (eos.energy(r, pe.s + hs) - eos.energy(r, pe.s - hs)) / (2 * hs);
        const double dSdu = (eos.entropy(r, u + hu) - eos.entropy(r, u - hu)) / (2 * hu);
        eT = std::max(eT, std::abs(dUds - ps.T) / ps.T);
        einvT = std::max(einvT, std::abs(dSdu - 1 / pe.T) * pe.T);
        const double muscale = std::max(1.0, pe.mu.cwiseAbs().maxCoeff());
        for (int a = 0; a < nu; ++a) {
            const double h = step * std::max(1.0, r[a]);
            Vec rp = r, rm = r;
            rp[a] += h;
            rm[a] -= h;
            const double dU = (eos.energy(rp, pe.s) - eos.energy(rm, pe.s)) / (2 * h);
            const double dS = (eos.entropy(rp, u) - eos.entropy(rm, u)) / (2 * h);
            emu = std::max(emu, std::abs(dU - ps.mu[a]) / muscale);
            emuT = std::max(emuT, std::abs(-dS * pe.T - pe.mu[a]) / muscale);
        }
        ep = std::max({ep, pressure_identity_residual(pe, r), pressure_identity_residual(ps, r)});
        erd = std::max({erd, std::abs(ps.u - u) / std::max(1.0, u), std::abs(ps.T - pe.T) / pe.T,
                        (ps.mu - pe.mu).cwiseAbs().maxCoeff() / muscale});
    }
    ModelReport rep;
    rep.checks.push_back(upper_check("eos_T_vs_du_ds", eT, fd_tol, "central differences of u(rho, s)"));
    rep.checks.push_back(upper_check("eos_mu_vs_du_drho", emu, fd_tol, "central differences of u(rho, s)"));
    rep.checks.push_back(upper_check("eos_invT_vs_ds_du", einvT, fd_tol, "central differences of s(rho, u)"));
    rep.checks.push_back(upper_check("eos_mu_vs_ds_drho", emuT, fd_tol, "-T ds/drho against mu"));
    rep.checks.push_back(upper_check("eos_pressure_identity", ep, identity_tol, "p = -u + T s + sum rho mu"));
    rep.checks.push_back(upper_check("eos_round_trip", erd, identity_tol, "entropy form then energy form"));
    return rep;
}

// --- nodal thermodynamics ---------------------------------------------------

struct NodalThermo {
    Vec T, invT, p, u, s, rho_tot;
    std::vector<Vec> mu;
    VecField v;
};

inline Vec node_densities(const Blocks& z, int i) {
    Vec r(z.species());
    for (int a = 0; a < z.species(); ++a) r[a] = z.rho[a][i];
    return r;
}

inline NodalThermo evaluate_thermo(const MixtureState& z, const EquationOfState& eos) {
    const int n = z.size(), nu = z.species();
    if (eos.species() != nu) throw std::invalid_argument("state and EOS disagree on the number of constituents");
    NodalThermo t;
    t.T.resize(n);
    t.invT.resize(n);
    t.p.resize(n);
    t.u.resize(n);
    t.s.resize(n);
    t.mu.assign(nu, Vec(n));
    t.rho_tot = z.total_density();
    t.v = z.velocity();
    const EosForm form = form_of(z.potential);
    for (int i = 0; i < n; ++i) {
        ThermoPoint pt;
        try {
            pt = eos_eval(eos, node_densities(z, i), z.thermal[i], form);
        } catch (const std::invalid_argument& e) {
            throw DomainError("node " + std::to_string(i) + ": " + e.what());
        }
        t.T[i] = pt.T;
        t.invT[i] = 1.0 / pt.T;
        t.p[i] = pt.p;
        t.u[i] = pt.u;
        t.s[i] = pt.s;
        for (int a = 0; a < nu; ++a) t.mu[a][i] = pt.mu[a];
    }
    return t;
}

inline void check_admissible(const MixtureState& z, const EquationOfState& eos, double rho_floor) {
    Vec r = z.total_density();
    for (int i = 0; i < z.size(); ++i)
        if (!(r[i] >= rho_floor))
            throw DomainError("node " + std::to_string(i) + ": total density " + std::to_string(r[i]) + " below floor " + std::to_string(rho_floor));
    evaluate_thermo(z, eos);
}

inline MixtureState convert_state(const MixtureState& z, Potential to, const EquationOfState& eos) {
    if (z.potential == to) return z;
    MixtureState out = z;
    out.potential = to;
    const EosForm from = form_of(z.potential);
    for (int i = 0; i < z.size(); ++i) {
        ThermoPoint pt;
        try {
            pt = eos_eval(eos, node_densities(z, i), z.thermal[i], from);
        } catch (const std::invalid_argument& e) {
            throw DomainError("convert_state: node " + std::to_string(i) + ": " + e.what());
        }
        out.thermal[i] = (to == Potential::energy) ? pt.s : pt.u;
    }
    return out;
}

}  // namespace opgen
