#pragma once

#include "opgen/generic_ops.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

namespace opgen {

// --- test functionals --------------------------------------------------------

class TestFunctional {
public:
    virtual ~TestFunctional() = default;
    virtual std::string kind() const = 0;
    virtual double value(const MixtureState& z) const = 0;
    // W-resolved: d/de F(z + e h) = inner(grid, gradient(z), h)
    virtual CotangentField gradient(const MixtureState& z) const = 0;
    virtual bool has_second_variation() const { return false; }
    // d/de gradient(z + e h) at e = 0
    virtual CotangentField second_variation(const MixtureState&, const Blocks&) const {
        throw std::logic_error(kind() + " functional has no closed-form second variation");
    }
};

using FunctionalPtr = std::shared_ptr<const TestFunctional>;

// nodal component vector [rho_1 .. rho_nu, M_x, M_y, M_z, thermal]
inline Vec node_vector(const Blocks& b, int i) {
    Vec v(b.components());
    for (int c = 0; c < b.components(); ++c) v[c] = b.comp(c)[i];
    return v;
}
inline void set_node(Blocks& b, int i, const Vec& v) {
    for (int c = 0; c < b.components(); ++c) b.comp(c)[i] = v[c];
}

class LinearFunctional final : public TestFunctional {
public:
    explicit LinearFunctional(CotangentField phi) : phi_(std::move(phi)) {}
    std::string kind() const override { return "linear"; }
    double value(const MixtureState& z) const override { return inner(z.g(), phi_, z); }
    CotangentField gradient(const MixtureState&) const override { return phi_; }
    bool has_second_variation() const override { return true; }
    CotangentField second_variation(const MixtureState& z, const Blocks&) const override {
        return Blocks::zeros(z.species(), z.size());
    }

private:
    CotangentField phi_;
};

// Pointwise density phi.z + z^T Q z / 2 + c (eta.z)^3 / 3 with x-dependent coefficients.
class PolynomialFunctional final : public TestFunctional {
public:
    PolynomialFunctional(CotangentField phi, std::vector<Mat> Q, std::vector<Vec> eta, Vec c)
        : phi_(std::move(phi)), Q_(std::move(Q)), eta_(std::move(eta)), c_(std::move(c)) {
        const int n = phi_.size();
        if (static_cast<int>(Q_.size()) != n || static_cast<int>(eta_.size()) != n || c_.size() != n)
            throw std::invalid_argument("polynomial functional: coefficient tables need one entry per node");
        for (auto& q : Q_) q = 0.5 * (q + q.transpose()).eval();
    }
    std::string kind() const override { return c_.cwiseAbs().maxCoeff() > 0 ? "cubic" : "quadratic"; }

    double value(const MixtureState& z) const override {
        const Vec& w = z.g().weights();
        double acc = 0;
        for (int i = 0; i < z.size(); ++i) {
            Vec zi = node_vector(z, i);
            const double e = eta_[i].dot(zi);
            acc += w[i] * (node_vector(phi_, i).dot(zi) + 0.5 * zi.dot(Q_[i] * zi) + c_[i] * e * e * e / 3.0);
        }
        return acc;
    }
    CotangentField gradient(const MixtureState& z) const override {
        CotangentField g = Blocks::zeros(z.species(), z.size());
        for (int i = 0; i < z.size(); ++i) {
            Vec zi = node_vector(z, i);
            const double e = eta_[i].dot(zi);
            set_node(g, i, node_vector(phi_, i) + Q_[i] * zi + c_[i] * e * e * eta_[i]);
        }
        return g;
    }
    bool has_second_variation() const override { return true; }
    CotangentField second_variation(const MixtureState& z, const Blocks& h) const override {
        CotangentField g = Blocks::zeros(z.species(), z.size());
        for (int i = 0; i < z.size(); ++i) {
            Vec zi = node_vector(z, i), hi = node_vector(h, i);
            set_node(g, i, Q_[i] * hi + 2 * c_[i] * eta_[i].dot(zi) * eta_[i].dot(hi) * eta_[i]);
        }
        return g;
    }

private:
    CotangentField phi_;
    std::vector<Mat> Q_;
    std::vector<Vec> eta_;
    Vec c_;
};

// Smooth function of (x, nodal state) with partials in the state.
struct NodalFn {
    std::function<double(double, const Vec&)> f;
    std::function<Vec(double, const Vec&)> grad;
    std::function<Mat(double, const Vec&)> hess;  // optional
};

// F(z) = sum over terms of  int a(x,z) d_x chi(x,z) dx  (slab form of a_k g^kl grad_l chi).
class AppendixFunctional final : public TestFunctional {
public:
    struct Term {
        NodalFn a, chi;
    };
    explicit AppendixFunctional(std::vector<Term> terms) : terms_(std::move(terms)) {
        for (const auto& t : terms_)
            if (!t.a.f || !t.chi.f || !t.a.grad || !t.chi.grad)
                throw std::invalid_argument("appendix-form functional: a and chi need values and state partials");
    }
    std::string kind() const override { return "appendix-form"; }

    double value(const MixtureState& z) const override {
        const Grid& g = z.g();
        double acc = 0;
        for (const auto& t : terms_) {
            Vec a(z.size()), chi(z.size());
            for (int i = 0; i < z.size(); ++i) {
                Vec zi = node_vector(z, i);
                a[i] = t.a.f(g.nodes()[i], zi);
                chi[i] = t.chi.f(g.nodes()[i], zi);
            }
            acc += inner(g, a, g.d(chi));
        }
        return acc;
    }

    // dF/dz_c = (da/dz_c) D chi + (dchi/dz_c) Dadj(a)
    CotangentField gradient(const MixtureState& z) const override {
        const Grid& g = z.g();
        const int n = z.size();
        CotangentField out = Blocks::zeros(z.species(), n);
        for (const auto& t : terms_) {
            Vec a(n), chi(n);
            std::vector<Vec> da(n), dchi(n);
            for (int i = 0; i < n; ++i) {
                Vec zi = node_vector(z, i);
                const double x = g.nodes()[i];
                a[i] = t.a.f(x, zi);
                chi[i] = t.chi.f(x, zi);
                da[i] = t.a.grad(x, zi);
                dchi[i] = t.chi.grad(x, zi);
            }
            Vec Dchi = g.d(chi), Dadj_a = g.dadj(a);
            for (int i = 0; i < n; ++i) set_node(out, i, node_vector(out, i) + da[i] * Dchi[i] + dchi[i] * Dadj_a[i]);
        }
        return out;
    }

    bool has_second_variation() const override {
        for (const auto& t : terms_)
            if (!t.a.hess || !t.chi.hess) return false;
        return true;
    }
    CotangentField second_variation(const MixtureState& z, const Blocks& h) const override {
        if (!has_second_variation()) return TestFunctional::second_variation(z, h);
        const Grid& g = z.g();
        const int n = z.size();
        CotangentField out = Blocks::zeros(z.species(), n);
        for (const auto& t : terms_) {
            Vec a(n), chi(n), a_h(n), chi_h(n);
            std::vector<Vec> da(n), dchi(n), Ha(n), Hchi(n);
            for (int i = 0; i < n; ++i) {
                Vec zi = node_vector(z, i), hi = node_vector(h, i);
                const double x = g.nodes()[i];
                a[i] = t.a.f(x, zi);
                chi[i] = t.chi.f(x, zi);
                da[i] = t.a.grad(x, zi);
                dchi[i] = t.chi.grad(x, zi);
                Ha[i] = t.a.hess(x, zi) * hi;
                Hchi[i] = t.chi.hess(x, zi) * hi;
                a_h[i] = da[i].dot(hi);
                chi_h[i] = dchi[i].dot(hi);
            }
            Vec Dchi = g.d(chi), Dadj_a = g.dadj(a), Dchi_h = g.d(chi_h), Dadj_ah = g.dadj(a_h);
            for (int i = 0; i < n; ++i)
                set_node(out, i,
                         node_vector(out, i) + Ha[i] * Dchi[i] + da[i] * Dchi_h[i] + Hchi[i] * Dadj_a[i] + dchi[i] * Dadj_ah[i]);
        }
        return out;
    }

private:
    std::vector<Term> terms_;
};

// (AB)(z) = A(z) B(z)
class ProductFunctional final : public TestFunctional {
public:
    ProductFunctional(FunctionalPtr a, FunctionalPtr b) : a_(std::move(a)), b_(std::move(b)) {}
    std::string kind() const override { return "product(" + a_->kind() + "," + b_->kind() + ")"; }
    double value(const MixtureState& z) const override { return a_->value(z) * b_->value(z); }
    CotangentField gradient(const MixtureState& z) const override {
        return b_->value(z) * a_->gradient(z) + a_->value(z) * b_->gradient(z);
    }
    bool has_second_variation() const override { return a_->has_second_variation() && b_->has_second_variation(); }
    CotangentField second_variation(const MixtureState& z, const Blocks& h) const override {
        const CotangentField ga = a_->gradient(z), gb = b_->gradient(z);
        const double dA = inner(z.g(), ga, h), dB = inner(z.g(), gb, h);
        CotangentField out = dB * ga + dA * gb;
        out.axpy(b_->value(z), a_->second_variation(z, h));
        out.axpy(a_->value(z), b_->second_variation(z, h));
        return out;
    }

private:
    FunctionalPtr a_, b_;
};

// Central differences of the quadrature value, one DOF at a time.
inline CotangentField fd_gradient(const TestFunctional& F, const MixtureState& z, double rel_step = 0) {
    if (rel_step <= 0) rel_step = std::cbrt(std::numeric_limits<double>::epsilon());
    const Vec& w = z.g().weights();
    const int n = z.size();
    Vec x = z.flat();
    Vec out(x.size());
    for (int j = 0; j < x.size(); ++j) {
        const double h = rel_step * std::max(1.0, std::abs(x[j]));
        const double x0 = x[j];
        x[j] = x0 + h;
        const double fp = F.value(z.with(z.like(x)));
        x[j] = x0 - h;
        const double fm = F.value(z.with(z.like(x)));
        x[j] = x0;
        out[j] = (fp - fm) / (2 * h * w[j % n]);
    }
    return z.like(out);
}

inline CotangentField functional_gradient(const TestFunctional& F, const MixtureState& z, bool oracle = false) {
    return oracle ? fd_gradient(F, z) : F.gradient(z);
}

// Trigonometric profile a0 + a1 sin(th) + b1 cos(th) + a2 sin(2 th), th = 2 pi x / L.
// harmonics = 1 drops the second harmonic (the draw sequence is unchanged).
inline Vec trig_profile(const Grid& g, std::mt19937_64& rng, double amp = 1.0, int harmonics = 2) {
    std::uniform_real_distribution<double> U(-1, 1);
    const double a0 = U(rng), a1 = U(rng), b1 = U(rng), a2 = harmonics > 1 ? 0.5 * U(rng) : (U(rng), 0.0);
    Vec f(g.size());
    for (int i = 0; i < g.size(); ++i) {
        const double th = 2 * std::numbers::pi * g.nodes()[i] / g.length();
        f[i] = amp * (a0 + a1 * std::sin(th) + b1 * std::cos(th) + a2 * std::sin(2 * th));
    }
    return f;
}

inline FunctionalPtr random_linear_functional(const MixtureState& z, std::mt19937_64& rng, int harmonics = 2) {
    CotangentField phi = Blocks::zeros(z.species(), z.size());
    for (int c = 0; c < phi.components(); ++c) phi.comp(c) = trig_profile(z.g(), rng, 1.0, harmonics);
    return std::make_shared<LinearFunctional>(phi);
}

// cubic_amp = 0 gives a quadratic functional.
inline FunctionalPtr random_polynomial_functional(const MixtureState& z, std::mt19937_64& rng, double quad_amp = 0.5,
                                                  double cubic_amp = 0.2, int harmonics = 2) {
    const int C = z.components(), n = z.size();
    const Grid& g = z.g();
    CotangentField phi = Blocks::zeros(z.species(), n);
    for (int c = 0; c < C; ++c) phi.comp(c) = trig_profile(g, rng, 1.0, harmonics);
    std::uniform_real_distribution<double> U(-1, 1);
    Mat Q0(C, C), Q1(C, C), E(C, 2);
    for (int r = 0; r < C; ++r)
        for (int c = 0; c < C; ++c) {
            Q0(r, c) = U(rng);
            Q1(r, c) = U(rng);
        }
    for (int r = 0; r < C; ++r) {
        E(r, 0) = U(rng);
        E(r, 1) = U(rng);
    }
    std::vector<Mat> Q(n);
    std::vector<Vec> eta(n);
    Vec cc(n);
    for (int i = 0; i < n; ++i) {
        const double th = 2 * std::numbers::pi * g.nodes()[i] / g.length();
        Q[i] = quad_amp * (Q0 + std::sin(th) * Q1);
        eta[i] = E.col(0) + std::cos(th) * E.col(1);
        cc[i] = cubic_amp * (1.0 + 0.5 * std::sin(th));
    }
    return std::make_shared<PolynomialFunctional>(phi, Q, eta, cc);
}

// --- brackets ----------------------------------------------------------------

enum class BracketVariant { poisson_energy, poisson_entropy, dissipation_energy, dissipation_entropy };
enum class Scope { full, boundary, bulk };

inline bool is_poisson(BracketVariant v) { return v == BracketVariant::poisson_energy || v == BracketVariant::poisson_entropy; }
inline Potential potential_of(BracketVariant v) {
    return (v == BracketVariant::poisson_energy || v == BracketVariant::dissipation_energy) ? Potential::energy : Potential::entropy;
}
inline BracketVariant poisson_variant(Potential p) { return p == Potential::energy ? BracketVariant::poisson_energy : BracketVariant::poisson_entropy; }
inline BracketVariant dissipation_variant(Potential p) {
    return p == Potential::energy ? BracketVariant::dissipation_energy : BracketVariant::dissipation_entropy;
}

inline std::string to_string(BracketVariant v) {
    switch (v) {
        case BracketVariant::poisson_energy: return "poisson-energy";
        case BracketVariant::poisson_entropy: return "poisson-entropy";
        case BracketVariant::dissipation_energy: return "dissipation-energy";
        default: return "dissipation-entropy";
    }
}
inline std::string to_string(Scope s) { return s == Scope::full ? "full" : s == Scope::boundary ? "boundary" : "bulk"; }

struct BracketSpec {
    BracketVariant variant = BracketVariant::poisson_energy;
    Scope scope = Scope::full;
    const PhenomenologicalModel* pm = nullptr;
    const EquationOfState* eos = nullptr;
};

// Direct quadrature of the bracket integrands at a fixed state.
class BracketEvaluator {
public:
    BracketEvaluator(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm)
        : z_(z), pm_(&pm), th_(evaluate_thermo(z, eos)) {
        const Grid& g = z.g();
        for (int k = 0; k < 3; ++k) dv_[k] = g.d(th_.v[k]);
        const int n = z.size(), nu = z.species();
        LLmu_ = Vec::Zero(n);
        for (int a = 0; a < nu; ++a) LLmu_ += pm.LL[a] * th_.mu[a];
        for (int i = 0; i < n; ++i) {
            ThermoPoint pt;
            pt.T = th_.T[i];
            pt.p = th_.p[i];
            pt.u = th_.u[i];
            pt.s = th_.s[i];
            pt.mu.resize(nu);
            for (int a = 0; a < nu; ++a) pt.mu[a] = th_.mu[a][i];
            tc_.push_back(pm.transport(pt, node_densities(z, i)));
        }
    }

    const MixtureState& state() const { return z_; }
    const NodalThermo& thermo() const { return th_; }

    double eval(BracketVariant v, Scope s, const CotangentField& a, const CotangentField& b) const {
        if (potential_of(v) != z_.potential)
            throw std::invalid_argument("bracket " + to_string(v) + " needs the " + (potential_of(v) == Potential::energy ? "s" : "u") +
                                        "-state");
        const bool pb = is_poisson(v);
        switch (s) {
            case Scope::full: return pb ? poisson_full(a, b) : dissipation_full(a, b);
            case Scope::boundary: return pb ? poisson_boundary(a, b) : dissipation_boundary(a, b);
            default: return (pb ? poisson_full(a, b) : dissipation_full(a, b)) - (pb ? poisson_boundary(a, b) : dissipation_boundary(a, b));
        }
    }

    double poisson_full(const CotangentField& a, const CotangentField& b) const {
        const Grid& g = z_.g();
        const int nu = z_.species();
        const Vec& ax = a.M[0];
        const Vec& bx = b.M[0];
        Vec dens = Vec::Zero(z_.size());
        auto transport = [&](const Vec& weight, const Vec& fa, const Vec& fb) {
            dens -= weight.cwiseProduct(ax.cwiseProduct(g.d(fb)) - bx.cwiseProduct(g.d(fa)));
        };
        auto coupling = [&](const Vec& fa, const Vec& fb) { dens += ax.cwiseProduct(g.d(fb)) - bx.cwiseProduct(g.d(fa)); };
        for (int al = 0; al < nu; ++al) {
            transport(z_.rho[al], a.rho[al], b.rho[al]);
            coupling(pm_->LL[al] * a.rho[al], pm_->LL[al] * b.rho[al]);
        }
        for (int k = 0; k < 3; ++k) transport(z_.M[k], a.M[k], b.M[k]);
        transport(z_.thermal, a.thermal, b.thermal);
        if (z_.potential == Potential::entropy) {
            // grad(p psi) realized as sum rho grad(mu psi) + s grad(T psi) - u grad psi
            dens -= ax.cwiseProduct(pressure_work(b.thermal)) - bx.cwiseProduct(pressure_work(a.thermal));
            coupling(LLmu_.cwiseProduct(a.thermal), LLmu_.cwiseProduct(b.thermal));
        }
        return (g.weights().array() * dens.array()).sum();
    }

    double poisson_boundary(const CotangentField& a, const CotangentField& b) const {
        const int nu = z_.species();
        double acc = 0;
        for (const auto& e : z_.g().boundary()) {
            const int i = e.node;
            double f = 0;
            for (int al = 0; al < nu; ++al) f += a.rho[al][i] * (z_.rho[al][i] - pm_->LL[al]);
            for (int k = 0; k < 3; ++k) f += a.M[k][i] * z_.M[k][i];
            f += a.thermal[i] * (z_.potential == Potential::energy ? th_.s[i] : th_.u[i] + th_.p[i] - LLmu_[i]);
            acc += f * b.M[0][i] * e.normal;
        }
        return acc;
    }

    double dissipation_full(const CotangentField& a, const CotangentField& b) const {
        const Grid& g = z_.g();
        const int nu = z_.species(), n = z_.size();
        const Forces fa = forces(a), fb = forces(b);
        const Vec& w = g.weights();
        double acc = 0;
        Vec ga(nu + 1), gb(nu + 1), ca(nu), cb(nu);
        for (int i = 0; i < n; ++i) {
            const auto& c = tc_[i];
            const double T = th_.T[i];
            const Mat3 Xa = fa.X(i, dv_), Xb = fb.X(i, dv_);
            const double da = fa.div[i] - dv_[0][i] * fa.t[i];
            const double db = fb.div[i] - dv_[0][i] * fb.t[i];
            double dens = 0.5 * c.zeta * T * ddot(Xa, Xb) + T * (c.lambda - 2 * c.zeta / 3) * da * db;
            ga[0] = fa.Dt[i];
            gb[0] = fb.Dt[i];
            for (int al = 0; al < nu; ++al) {
                ga[al + 1] = fa.Dc[al][i];
                gb[al + 1] = fb.Dc[al][i];
                ca[al] = fa.c[al][i];
                cb[al] = fb.c[al][i];
            }
            dens += ga.dot(transport_matrix(c, T) * gb) + T * ca.dot(pm_->LLab * cb);
            acc += w[i] * dens;
        }
        return acc;
    }

    double dissipation_boundary(const CotangentField& a, const CotangentField& b) const {
        const int nu = z_.species();
        const Forces fa = forces(a), fb = forces(b);
        double acc = 0;
        for (const auto& e : z_.g().boundary()) {
            const int i = e.node;
            const double nn = e.normal, T = th_.T[i];
            const auto& c = tc_[i];
            const Mat3 Xb = fb.X(i, dv_);
            const Vec3 aM(a.M[0][i], a.M[1][i], a.M[2][i]);
            double f = c.zeta * T * aM.dot(Xb.col(0)) * nn;
            f += a.M[0][i] * nn * T * (c.lambda - 2 * c.zeta / 3) * (fb.div[i] - dv_[0][i] * fb.t[i]);
            Vec fa_i(nu + 1), gb(nu + 1);
            fa_i[0] = fa.t[i];
            gb[0] = fb.Dt[i] * nn;
            double llc = 0;
            for (int al = 0; al < nu; ++al) {
                fa_i[al + 1] = fa.c[al][i];
                gb[al + 1] = fb.Dc[al][i] * nn;
                llc += pm_->LL[al] * fb.c[al][i];
            }
            f += fa_i.dot(transport_matrix(c, T) * gb);
            // normal momentum work of the chemical part of the pressure
            f -= T * a.M[0][i] * nn * llc;
            acc += f;
        }
        return acc;
    }

private:
    struct Forces {
        Vec t, Dt, div;
        std::vector<Vec> c, Dc;
        VecField DM;
        Mat3 X(int i, const VecField& dv) const {
            Mat3 G = Mat3::Zero(), Gv = Mat3::Zero();
            for (int k = 0; k < 3; ++k) {
                G(k, 0) = DM[k][i];
                Gv(k, 0) = dv[k][i];
            }
            return G + G.transpose() - t[i] * (Gv + Gv.transpose());
        }
    };

    Forces forces(const CotangentField& a) const {
        const Grid& g = z_.g();
        const int nu = z_.species();
        Forces f;
        if (z_.potential == Potential::energy) {
            f.t = a.thermal.cwiseProduct(th_.invT);
            for (int al = 0; al < nu; ++al) f.c.push_back(a.rho[al] - th_.mu[al].cwiseProduct(f.t));
        } else {
            f.t = a.thermal;
            f.c = a.rho;
        }
        f.Dt = g.d(f.t);
        for (int al = 0; al < nu; ++al) f.Dc.push_back(g.d(f.c[al]));
        for (int k = 0; k < 3; ++k) f.DM[k] = g.d(a.M[k]);
        f.div = f.DM[0];
        return f;
    }

    Vec pressure_work(const Vec& psi) const {
        const Grid& g = z_.g();
        Vec out = th_.s.cwiseProduct(g.d(th_.T.cwiseProduct(psi))) - th_.u.cwiseProduct(g.d(psi));
        for (int al = 0; al < z_.species(); ++al) out += z_.rho[al].cwiseProduct(g.d(th_.mu[al].cwiseProduct(psi)));
        return out;
    }

    MixtureState z_;
    const PhenomenologicalModel* pm_;
    NodalThermo th_;
    VecField dv_;
    Vec LLmu_;
    std::vector<TransportCoefficients> tc_;
};

inline void require_spec(const BracketSpec& s) {
    if (!s.pm || !s.eos) throw std::invalid_argument("bracket spec needs a coefficient model and an EOS");
}

inline double eval_bracket(const BracketSpec& spec, const TestFunctional& A, const TestFunctional& B, const MixtureState& z) {
    require_spec(spec);
    BracketEvaluator ev(z, *spec.eos, *spec.pm);
    return ev.eval(spec.variant, spec.scope, A.gradient(z), B.gradient(z));
}

// --- property checks ---------------------------------------------------------

struct ScopeResiduals {
    double full = 0, bulk = 0, boundary = 0;
    double scale = 1;
};

struct DegeneracyResult {
    ScopeResiduals poisson_S;      // |{A,S}|
    ScopeResiduals dissipation_H;  // |[A,H]|
};

inline DegeneracyResult degeneracy_check(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm,
                                         const CotangentField& gA) {
    BracketEvaluator ev(z, eos, pm);
    MixtureOperators ops(z, eos, pm);
    const CotangentField gH = ops.grad_H(), gS = ops.grad_S();
    const BracketVariant pv = poisson_variant(z.potential), dv = dissipation_variant(z.potential);
    DegeneracyResult r;
    r.poisson_S.full = std::abs(ev.eval(pv, Scope::full, gA, gS));
    r.poisson_S.boundary = std::abs(ev.eval(pv, Scope::boundary, gA, gS));
    r.poisson_S.bulk = std::abs(ev.eval(pv, Scope::bulk, gA, gS));
    r.poisson_S.scale = std::max(1.0, std::abs(ev.eval(pv, Scope::full, gA, gH)));
    r.dissipation_H.full = std::abs(ev.eval(dv, Scope::full, gA, gH));
    r.dissipation_H.boundary = std::abs(ev.eval(dv, Scope::boundary, gA, gH));
    r.dissipation_H.bulk = std::abs(ev.eval(dv, Scope::bulk, gA, gH));
    r.dissipation_H.scale = std::max(1.0, std::abs(ev.eval(dv, Scope::full, gA, gS)));
    return r;
}

inline DegeneracyResult degeneracy_check(const BracketSpec& spec, const TestFunctional& A, const MixtureState& z) {
    require_spec(spec);
    return degeneracy_check(z, *spec.eos, *spec.pm, A.gradient(z));
}

struct Residual {
    double value = 0;  // absolute
    double scale = 1;
    double relative() const { return value / scale; }
};

inline Residual leibniz_residual(const BracketSpec& spec, const FunctionalPtr& A, const FunctionalPtr& B, const FunctionalPtr& C,
                                 const MixtureState& z) {
    ProductFunctional AB(A, B);
    const double lhs = eval_bracket(spec, AB, *C, z);
    const double t1 = A->value(z) * eval_bracket(spec, *B, *C, z);
    const double t2 = B->value(z) * eval_bracket(spec, *A, *C, z);
    return {std::abs(lhs - t1 - t2), std::max({1.0, std::abs(lhs), std::abs(t1) + std::abs(t2)})};
}

// |{A,B} - <gA, O gB>| with O the matching operator.
inline Residual operator_consistency(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm,
                                     BracketVariant v, const CotangentField& gA, const CotangentField& gB) {
    BracketEvaluator ev(z, eos, pm);
    MixtureOperators ops(z, eos, pm);
    const double br = ev.eval(v, Scope::full, gA, gB);
    const double op = inner(z.g(), gA, is_poisson(v) ? ops.J(gB) : ops.R(gB));
    return {std::abs(br - op), std::max({1.0, std::abs(br), std::abs(op)})};
}

// <gA, B u> + {A,H}_bdry + [A,S]_bdry with the self-consistent port.
inline Residual boundary_identity_residual(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm,
                                           const CotangentField& gA) {
    if (z.g().kind() != GridKind::interval) throw std::invalid_argument("boundary identity needs an interval grid");
    BracketEvaluator ev(z, eos, pm);
    MixtureOperators ops(z, eos, pm);
    const double port = inner(z.g(), gA, ops.B(ops.ports()));
    const double ph = ev.eval(poisson_variant(z.potential), Scope::boundary, gA, ops.grad_H());
    const double ds = ev.eval(dissipation_variant(z.potential), Scope::boundary, gA, ops.grad_S());
    return {std::abs(port + ph + ds), std::max({1.0, std::abs(port), std::abs(ph) + std::abs(ds)})};
}

// --- Jacobi identity ---------------------------------------------------------

class PoissonStructure {
public:
    virtual ~PoissonStructure() = default;
    virtual std::string name() const = 0;
    virtual double bracket(const MixtureState& z, const CotangentField& a, const CotangentField& b) const = 0;
    virtual bool has_nested_gradient() const { return false; }
    // gradient of z -> bracket(z, gB(z), gC(z)) given the second variations of B and C
    virtual CotangentField nested_gradient(const MixtureState&, const TestFunctional&, const TestFunctional&) const {
        throw std::logic_error(name() + ": no closed-form nested gradient");
    }
};

// -sum zt_g [a_Mx D b_g - b_Mx D a_g] - M.[...] + sum [a_Mx D(f_g b_g) - b_Mx D(f_g a_g)]
// with zt = (rho_1 .. rho_nu, thermal) and f = f(zt) pointwise.
class TransportBracket final : public PoissonStructure {
public:
    using Coupling = std::function<Vec(const Vec&)>;
    using CouplingJacobian = std::function<Mat(const Vec&)>;

    TransportBracket(Coupling f, CouplingJacobian df, std::string name = "transport") : f_(std::move(f)), df_(std::move(df)), name_(std::move(name)) {}

    // Energy-variant Poisson bracket: f = (LL_1 .. LL_nu, 0).
    static TransportBracket energy_variant(const PhenomenologicalModel& pm) {
        const int nu = pm.species();
        Vec f(nu + 1);
        f << pm.LL, 0.0;
        return TransportBracket([f](const Vec&) { return f; }, [nu](const Vec&) { return Mat(Mat::Zero(nu + 1, nu + 1)); }, "poisson-energy");
    }

    // f_g = c_g + b_g . zt + zt^T Q_g zt / 2
    static TransportBracket polynomial(Vec c, Mat b, std::vector<Mat> Q) {
        for (auto& q : Q) q = 0.5 * (q + q.transpose()).eval();
        auto f = [=](const Vec& zt) {
            Vec out = c + b * zt;
            for (int g = 0; g < out.size(); ++g) out[g] += 0.5 * zt.dot(Q[g] * zt);
            return out;
        };
        auto df = [=](const Vec& zt) {
            Mat J = b;
            for (int g = 0; g < J.rows(); ++g) J.row(g) += (Q[g] * zt).transpose();
            return J;
        };
        return TransportBracket(f, df, "polynomial-transport");
    }

    std::string name() const override { return name_; }
    bool has_nested_gradient() const override { return true; }

    double bracket(const MixtureState& z, const CotangentField& a, const CotangentField& b) const override {
        const Grid& g = z.g();
        const int nu = z.species();
        const std::vector<Vec> f = couplings(z);
        const Vec& ax = a.M[0];
        const Vec& bx = b.M[0];
        Vec dens = Vec::Zero(z.size());
        for (int gm = 0; gm <= nu; ++gm) {
            const Vec& zt = gm < nu ? z.rho[gm] : z.thermal;
            const Vec& ag = gm < nu ? a.rho[gm] : a.thermal;
            const Vec& bg = gm < nu ? b.rho[gm] : b.thermal;
            dens -= zt.cwiseProduct(ax.cwiseProduct(g.d(bg)) - bx.cwiseProduct(g.d(ag)));
            dens += ax.cwiseProduct(g.d(f[gm].cwiseProduct(bg))) - bx.cwiseProduct(g.d(f[gm].cwiseProduct(ag)));
        }
        for (int k = 0; k < 3; ++k) dens -= z.M[k].cwiseProduct(ax.cwiseProduct(g.d(b.M[k])) - bx.cwiseProduct(g.d(a.M[k])));
        return (g.weights().array() * dens.array()).sum();
    }

    // Dual of the bracket in its second slot: bracket(z, a, b) = inner(a, apply(z, b)).
    CotangentField apply(const MixtureState& z, const CotangentField& b) const {
        const Grid& g = z.g();
        const int nu = z.species(), n = z.size();
        const std::vector<Vec> f = couplings(z);
        const Vec& bx = b.M[0];
        const Vec dadj_bx = g.dadj(bx);
        CotangentField d = Blocks::zeros(nu, n);
        Vec dx = Vec::Zero(n);
        for (int gm = 0; gm <= nu; ++gm) {
            const Vec& zt = gm < nu ? z.rho[gm] : z.thermal;
            const Vec& bg = gm < nu ? b.rho[gm] : b.thermal;
            Vec& dg = gm < nu ? d.rho[gm] : d.thermal;
            dx += g.d(f[gm].cwiseProduct(bg)) - zt.cwiseProduct(g.d(bg));
            dg = g.dadj(bx.cwiseProduct(zt)) - f[gm].cwiseProduct(dadj_bx);
        }
        for (int k = 0; k < 3; ++k) {
            dx -= z.M[k].cwiseProduct(g.d(b.M[k]));
            d.M[k] = g.dadj(bx.cwiseProduct(z.M[k]));
        }
        d.M[0] += dx;
        return d;
    }

    // W^-1 d/dz of bracket(z, a, b) at fixed a, b.
    CotangentField state_partial(const MixtureState& z, const CotangentField& a, const CotangentField& b) const {
        const Grid& g = z.g();
        const int nu = z.species(), n = z.size();
        const Vec& ax = a.M[0];
        const Vec& bx = b.M[0];
        const Vec adj_ax = g.dadj(ax), adj_bx = g.dadj(bx);
        CotangentField out = Blocks::zeros(nu, n);
        std::vector<Mat> J(n);
        for (int i = 0; i < n; ++i) J[i] = df_(tilde(z, i));
        for (int dl = 0; dl <= nu; ++dl) {
            const Vec& ad = dl < nu ? a.rho[dl] : a.thermal;
            const Vec& bd = dl < nu ? b.rho[dl] : b.thermal;
            Vec& od = dl < nu ? out.rho[dl] : out.thermal;
            od = -(ax.cwiseProduct(g.d(bd)) - bx.cwiseProduct(g.d(ad)));
            for (int gm = 0; gm <= nu; ++gm) {
                const Vec& ag = gm < nu ? a.rho[gm] : a.thermal;
                const Vec& bg = gm < nu ? b.rho[gm] : b.thermal;
                for (int i = 0; i < n; ++i) od[i] += J[i](gm, dl) * (bg[i] * adj_ax[i] - ag[i] * adj_bx[i]);
            }
        }
        for (int k = 0; k < 3; ++k) out.M[k] = -(ax.cwiseProduct(g.d(b.M[k])) - bx.cwiseProduct(g.d(a.M[k])));
        return out;
    }

    CotangentField nested_gradient(const MixtureState& z, const TestFunctional& B, const TestFunctional& C) const override {
        const CotangentField gB = B.gradient(z), gC = C.gradient(z);
        CotangentField out = state_partial(z, gB, gC);
        out += B.second_variation(z, apply(z, gC));
        out -= C.second_variation(z, apply(z, gB));
        return out;
    }

private:
    static Vec tilde(const MixtureState& z, int i) {
        Vec zt(z.species() + 1);
        for (int a = 0; a < z.species(); ++a) zt[a] = z.rho[a][i];
        zt[z.species()] = z.thermal[i];
        return zt;
    }
    std::vector<Vec> couplings(const MixtureState& z) const {
        const int nu = z.species(), n = z.size();
        std::vector<Vec> f(nu + 1, Vec(n));
        for (int i = 0; i < n; ++i) {
            Vec fi = f_(tilde(z, i));
            if (fi.size() != nu + 1) throw std::invalid_argument("transport bracket: coupling must return nu + 1 entries");
            for (int gm = 0; gm <= nu; ++gm) f[gm][i] = fi[gm];
        }
        return f;
    }

    Coupling f_;
    CouplingJacobian df_;
    std::string name_;
};

// The mixture Poisson bracket of either variant through the explicit integrand.
class MixturePoisson final : public PoissonStructure {
public:
    MixturePoisson(const EquationOfState& eos, const PhenomenologicalModel& pm) : eos_(&eos), pm_(&pm) {}
    std::string name() const override { return "mixture-poisson"; }
    double bracket(const MixtureState& z, const CotangentField& a, const CotangentField& b) const override {
        return BracketEvaluator(z, *eos_, *pm_).poisson_full(a, b);
    }

private:
    const EquationOfState* eos_;
    const PhenomenologicalModel* pm_;
};

enum class JacobiMethod { closed_form, nested_fd };

inline std::string to_string(JacobiMethod m) { return m == JacobiMethod::closed_form ? "closed-form" : "nested-fd"; }

struct JacobiResult {
    double residual = 0;  // |sum of the cyclic terms|
    double scale = 1;     // max(1, sum of |terms|)
    double h = 0;
    std::array<double, 3> terms{};
    double relative() const { return residual / scale; }
};

// Central differences of z -> P(z, gB(z), gC(z)) per DOF.
inline CotangentField nested_fd_gradient(const PoissonStructure& P, const MixtureState& z, const TestFunctional& B,
                                         const TestFunctional& C) {
    const double rel = std::cbrt(std::numeric_limits<double>::epsilon());
    const Vec& w = z.g().weights();
    const int n = z.size();
    Vec x = z.flat();
    Vec out(x.size());
    auto F = [&](const Vec& xs) {
        MixtureState zp = z.with(z.like(xs));
        return P.bracket(zp, B.gradient(zp), C.gradient(zp));
    };
    for (int j = 0; j < x.size(); ++j) {
        const double h = rel * std::max(1.0, std::abs(x[j]));
        const double x0 = x[j];
        x[j] = x0 + h;
        const double fp = F(x);
        x[j] = x0 - h;
        const double fm = F(x);
        x[j] = x0;
        out[j] = (fp - fm) / (2 * h * w[j % n]);
    }
    return z.like(out);
}

inline JacobiResult jacobi_residual(const PoissonStructure& P, const MixtureState& z, const TestFunctional& A, const TestFunctional& B,
                                    const TestFunctional& C, JacobiMethod method) {
    if (z.g().kind() != GridKind::periodic) throw std::invalid_argument("jacobi_residual: periodic grid required (boundary-bracket Jacobi is out of scope)");
    if (method == JacobiMethod::closed_form) {
        if (!P.has_nested_gradient()) throw std::invalid_argument("jacobi_residual: " + P.name() + " supports nested-fd only");
        for (const TestFunctional* F : {&A, &B, &C})
            if (!F->has_second_variation()) throw std::invalid_argument("jacobi_residual: " + F->kind() + " functional lacks a second variation");
    }
    auto nested = [&](const TestFunctional& X, const TestFunctional& Y) {
        return method == JacobiMethod::closed_form ? P.nested_gradient(z, X, Y) : nested_fd_gradient(P, z, X, Y);
    };
    JacobiResult r;
    r.h = z.g().spacing();
    r.terms[0] = P.bracket(z, A.gradient(z), nested(B, C));
    r.terms[1] = P.bracket(z, B.gradient(z), nested(C, A));
    r.terms[2] = P.bracket(z, C.gradient(z), nested(A, B));
    r.residual = std::abs(r.terms[0] + r.terms[1] + r.terms[2]);
    r.scale = std::max({1.0, std::abs(r.terms[0]) + std::abs(r.terms[1]) + std::abs(r.terms[2])});
    return r;
}

}  // namespace opgen
