#pragma once

#include "opgen/thermostate.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace opgen {

enum class OperatorKind { J, R, B };
enum class Mode { isolated, open };

inline std::string to_string(Mode m) { return m == Mode::isolated ? "isolated" : "open"; }

// Port layout per boundary point (length nu + 6):
// [sum LL mu, v.n, q.n, J_1.n .. J_nu.n, (S.n)_x, (S.n)_y, (S.n)_z]
struct PortPoint {
    int node = 0;
    double normal = 0;
    Vec u, yH, yS;
};

struct PortSignals {
    std::vector<PortPoint> points;

    double pairing_H() const {
        double s = 0;
        for (const auto& p : points) s += p.yH.dot(p.u);
        return s;
    }
    double pairing_S() const {
        double s = 0;
        for (const auto& p : points) s += p.yS.dot(p.u);
        return s;
    }
};

inline int port_length(int nu) { return nu + 6; }

inline std::vector<std::string> port_names(int nu) {
    std::vector<std::string> n{"LLmu", "v_n", "q_n"};
    for (int a = 0; a < nu; ++a) n.push_back("J" + std::to_string(a + 1) + "_n");
    n.insert(n.end(), {"S_n_x", "S_n_y", "S_n_z"});
    return n;
}

// A forced input replaces one component of u at one endpoint (side 0: x = 0, side 1: x = L).
struct PortOverride {
    int component = 0;
    int side = 0;
    double value = 0;
};

struct ViscousForces {
    VecField e;        // D psi_M - t D v
    Vec t;             // thermal force
    std::vector<Vec> c;  // chemical forces
};

class MixtureOperators {
public:
    MixtureOperators(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm)
        : z_(z), eos_(&eos), pm_(&pm), th_(evaluate_thermo(z, eos)) {
        if (pm.species() != z.species()) throw std::invalid_argument("state and coefficient model disagree on the number of constituents");
        const Grid& g = z.g();
        for (int k = 0; k < 3; ++k) dv_[k] = g.d(th_.v[k]);
        const int n = z.size(), nu = z.species();
        inv_T_mu_.assign(nu, Vec(n));
        for (int a = 0; a < nu; ++a) inv_T_mu_[a] = th_.mu[a].cwiseProduct(th_.invT);
        tc_.reserve(n);
        K_.reserve(n);
        for (int i = 0; i < n; ++i) {
            ThermoPoint pt = point(i);
            tc_.push_back(pm.transport(pt, node_densities(z, i)));
            K_.push_back(transport_matrix(tc_.back(), th_.T[i]));
        }
    }

    const MixtureState& state() const { return z_; }
    const Grid& grid() const { return z_.g(); }
    const NodalThermo& thermo() const { return th_; }
    const PhenomenologicalModel& model() const { return *pm_; }
    const EquationOfState& eos() const { return *eos_; }
    Potential variant() const { return z_.potential; }
    const VecField& dv() const { return dv_; }
    const TransportCoefficients& transport(int i) const { return tc_[i]; }
    const Mat& K(int i) const { return K_[i]; }
    const std::vector<Vec>& mu_over_T() const { return inv_T_mu_; }

    ThermoPoint point(int i) const {
        ThermoPoint pt;
        pt.T = th_.T[i];
        pt.p = th_.p[i];
        pt.u = th_.u[i];
        pt.s = th_.s[i];
        pt.mu.resize(z_.species());
        for (int a = 0; a < z_.species(); ++a) pt.mu[a] = th_.mu[a][i];
        return pt;
    }

    double H() const {
        const Vec& r = th_.rho_tot;
        Vec e = th_.u;
        for (int k = 0; k < 3; ++k) e += 0.5 * z_.M[k].cwiseAbs2().cwiseQuotient(r);
        return (grid().weights().array() * e.array()).sum();
    }
    double S() const { return (grid().weights().array() * th_.s.array()).sum(); }

    CotangentField grad_H() const {
        const int nu = z_.species(), n = z_.size();
        CotangentField g = Blocks::zeros(nu, n);
        Vec half_v2 = 0.5 * (th_.v[0].cwiseAbs2() + th_.v[1].cwiseAbs2() + th_.v[2].cwiseAbs2());
        for (int a = 0; a < nu; ++a) g.rho[a] = (variant() == Potential::energy) ? Vec(th_.mu[a] - half_v2) : Vec(-half_v2);
        for (int k = 0; k < 3; ++k) g.M[k] = th_.v[k];
        g.thermal = (variant() == Potential::energy) ? th_.T : Vec::Ones(n);
        return g;
    }

    CotangentField grad_S() const {
        const int nu = z_.species(), n = z_.size();
        CotangentField g = Blocks::zeros(nu, n);
        if (variant() == Potential::energy) {
            g.thermal = Vec::Ones(n);
        } else {
            for (int a = 0; a < nu; ++a) g.rho[a] = -inv_T_mu_[a];
            g.thermal = th_.invT;
        }
        return g;
    }

    // Cotangent in (rho, M, u) coordinates -> (rho, M, s) coordinates.
    CotangentField to_energy_frame(const CotangentField& psi) const {
        if (variant() == Potential::energy) return psi;
        CotangentField out = psi;
        for (int a = 0; a < z_.species(); ++a) out.rho[a] = psi.rho[a] + th_.mu[a].cwiseProduct(psi.thermal);
        out.thermal = th_.T.cwiseProduct(psi.thermal);
        return out;
    }

    // Dual vector in (rho, M, s) coordinates -> (rho, M, u) coordinates.
    CotangentField from_energy_frame(const CotangentField& d) const {
        if (variant() == Potential::energy) return d;
        CotangentField out = d;
        out.thermal = th_.T.cwiseProduct(d.thermal);
        for (int a = 0; a < z_.species(); ++a) out.thermal += th_.mu[a].cwiseProduct(d.rho[a]);
        return out;
    }

    CotangentField J(const CotangentField& psi_in) const {
        const Grid& g = grid();
        const int nu = z_.species(), n = z_.size();
        const CotangentField psi = to_energy_frame(psi_in);
        const Vec& s = th_.s;
        const Vec& LL = pm_->LL;
        CotangentField d = Blocks::zeros(nu, n);
        Vec dx = Vec::Zero(n);
        for (int a = 0; a < nu; ++a) {
            dx -= z_.rho[a].cwiseProduct(g.d(psi.rho[a]));
            dx += g.d(LL[a] * psi.rho[a]);
        }
        for (int k = 0; k < 3; ++k) dx -= z_.M[k].cwiseProduct(g.d(psi.M[k]));
        dx -= s.cwiseProduct(g.d(psi.thermal));

        const Vec& bx = psi.M[0];
        const Vec dadj_bx = g.dadj(bx);
        for (int a = 0; a < nu; ++a) d.rho[a] = g.dadj(bx.cwiseProduct(z_.rho[a])) - LL[a] * dadj_bx;
        for (int k = 0; k < 3; ++k) d.M[k] = g.dadj(bx.cwiseProduct(z_.M[k]));
        d.M[0] += dx;
        d.thermal = g.dadj(bx.cwiseProduct(s));
        return from_energy_frame(d);
    }

    ViscousForces forces(const CotangentField& psi) const {
        const Grid& g = grid();
        const int nu = z_.species();
        ViscousForces f;
        if (variant() == Potential::energy) {
            f.t = psi.thermal.cwiseQuotient(th_.T);
            f.c.resize(nu);
            for (int a = 0; a < nu; ++a) f.c[a] = psi.rho[a] - th_.mu[a].cwiseProduct(f.t);
        } else {
            f.t = psi.thermal;
            f.c = psi.rho;
        }
        for (int k = 0; k < 3; ++k) f.e[k] = g.d(psi.M[k]) - f.t.cwiseProduct(dv_[k]);
        return f;
    }

    CotangentField R(const CotangentField& psi) const {
        const Grid& g = grid();
        const int nu = z_.species(), n = z_.size();
        const ViscousForces f = forces(psi);
        const Vec& T = th_.T;

        VecField sig;
        for (int k = 0; k < 3; ++k) sig[k] = Vec(n);
        std::vector<Vec> F(nu + 1, Vec(n));
        std::vector<Vec> omega(nu, Vec::Zero(n));
        std::vector<Vec> gc(nu);
        Vec gt = g.d(f.t);
        for (int a = 0; a < nu; ++a) gc[a] = g.d(f.c[a]);
        Vec gi(nu + 1), ci(nu);
        for (int i = 0; i < n; ++i) {
            const auto& c = tc_[i];
            sig[0][i] = T[i] * (4 * c.zeta / 3 + c.lambda) * f.e[0][i];
            sig[1][i] = T[i] * c.zeta * f.e[1][i];
            sig[2][i] = T[i] * c.zeta * f.e[2][i];
            gi[0] = gt[i];
            for (int a = 0; a < nu; ++a) {
                gi[a + 1] = gc[a][i];
                ci[a] = f.c[a][i];
            }
            Vec Fi = K_[i] * gi;
            for (int r = 0; r <= nu; ++r) F[r][i] = Fi[r];
            Vec oi = T[i] * (pm_->LLab * ci);
            for (int a = 0; a < nu; ++a) omega[a][i] = oi[a];
        }

        Vec tdual = g.dadj(F[0]);
        for (int k = 0; k < 3; ++k) tdual -= sig[k].cwiseProduct(dv_[k]);
        std::vector<Vec> cdual(nu);
        for (int a = 0; a < nu; ++a) cdual[a] = g.dadj(F[a + 1]) + omega[a];

        CotangentField d = Blocks::zeros(nu, n);
        for (int k = 0; k < 3; ++k) d.M[k] = g.dadj(sig[k]);
        for (int a = 0; a < nu; ++a) d.rho[a] = cdual[a];
        if (variant() == Potential::energy) {
            Vec acc = tdual;
            for (int a = 0; a < nu; ++a) acc -= th_.mu[a].cwiseProduct(cdual[a]);
            d.thermal = acc.cwiseQuotient(T);
        } else {
            d.thermal = tdual;
        }
        return d;
    }

    // Fluxes at node i from the discrete gradients used by R.
    LocalFluxes fluxes_at(int i) const {
        const Grid& g = grid();
        const int nu = z_.species();
        ClosureInput in;
        in.pt = point(i);
        in.rho = node_densities(z_, i);
        in.v = Vec3(th_.v[0][i], th_.v[1][i], th_.v[2][i]);
        in.grad_v = Mat3::Zero();
        for (int k = 0; k < 3; ++k) in.grad_v(k, 0) = dv_[k][i];
        ensure_gradients();
        in.grad_inv_T = Vec3(dinvT_[i], 0, 0);
        in.grad_mu_over_T.resize(nu);
        for (int a = 0; a < nu; ++a) in.grad_mu_over_T[a] = Vec3(dmuT_[a][i], 0, 0);
        (void)g;
        return constitutive_closure(in, *pm_);
    }

    // Self-consistent port inputs from boundary traces, with closed-form outputs.
    PortSignals ports(const std::vector<PortOverride>& overrides = {}) const {
        const Grid& g = grid();
        const int nu = z_.species();
        PortSignals ps;
        int side = 0;
        for (const auto& e : g.boundary()) {
            const int i = e.node;
            const double nn = e.normal;
            PortPoint pp;
            pp.node = i;
            pp.normal = nn;
            pp.u = Vec::Zero(port_length(nu));
            LocalFluxes f = fluxes_at(i);
            double llmu = 0;
            for (int a = 0; a < nu; ++a) llmu += pm_->LL[a] * th_.mu[a][i];
            pp.u[0] = llmu;
            pp.u[1] = th_.v[0][i] * nn;
            pp.u[2] = f.q[0] * nn;
            for (int a = 0; a < nu; ++a) pp.u[3 + a] = f.J[a][0] * nn;
            for (int k = 0; k < 3; ++k) pp.u[3 + nu + k] = f.S(k, 0) * nn;
            for (const auto& o : overrides)
                if (o.side == side) {
                    if (o.component < 0 || o.component >= port_length(nu)) throw std::invalid_argument("port override: component out of range");
                    pp.u[o.component] = o.value;
                }
            closed_form_outputs(pp);
            ps.points.push_back(pp);
            ++side;
        }
        return ps;
    }

    void closed_form_outputs(PortPoint& pp) const {
        const int nu = z_.species();
        const int i = pp.node;
        const double nn = pp.normal;
        const double T = th_.T[i], s = th_.s[i];
        Vec3 v(th_.v[0][i], th_.v[1][i], th_.v[2][i]);
        Vec3 M(z_.M[0][i], z_.M[1][i], z_.M[2][i]);
        pp.yH = Vec::Zero(port_length(nu));
        pp.yS = Vec::Zero(port_length(nu));
        double y1 = -0.5 * M.dot(v) - T * s;
        for (int a = 0; a < nu; ++a) y1 += th_.mu[a][i] * (pm_->LL[a] - z_.rho[a][i]);
        pp.yH[0] = -v[0] * nn;
        pp.yH[1] = y1;
        pp.yH[2] = -1;
        for (int a = 0; a < nu; ++a) pp.yH[3 + a] = 0.5 * v.squaredNorm();
        for (int k = 0; k < 3; ++k) pp.yH[3 + nu + k] = v[k];
        pp.yS[1] = -s;
        pp.yS[2] = -1.0 / T;
        for (int a = 0; a < nu; ++a) pp.yS[3 + a] = th_.mu[a][i] / T;
    }

    CotangentField B(const PortSignals& ps) const {
        const Grid& g = grid();
        const int nu = z_.species(), n = z_.size();
        if (g.kind() != GridKind::interval) throw std::invalid_argument("B: port operator needs an interval grid");
        CotangentField d = Blocks::zeros(nu, n);
        for (const auto& pp : ps.points) {
            const int i = pp.node;
            const double w = g.weights()[i];
            const Vec& u = pp.u;
            const double u2 = u[1], u3 = u[2];
            for (int a = 0; a < nu; ++a) d.rho[a][i] += ((pm_->LL[a] - z_.rho[a][i]) * u2 - u[3 + a]) / w;
            for (int k = 0; k < 3; ++k) d.M[k][i] += (u[3 + nu + k] - z_.M[k][i] * u2) / w;
            d.M[0][i] -= pp.normal * u[0] / w;
            double th = th_.s[i] * u2 + u3 / th_.T[i];
            for (int a = 0; a < nu; ++a) th -= (th_.mu[a][i] / th_.T[i]) * u[3 + a];
            d.thermal[i] -= th / w;
        }
        return from_energy_frame(d);
    }

    // y = B^* psi evaluated through the W-pairing with unit inputs.
    std::vector<Vec> B_adjoint(const CotangentField& psi, const PortSignals& shape) const {
        const Grid& g = grid();
        std::vector<Vec> out;
        for (size_t p = 0; p < shape.points.size(); ++p) {
            const int L = port_length(z_.species());
            Vec y(L);
            for (int k = 0; k < L; ++k) {
                PortSignals unit;
                PortPoint pp = shape.points[p];
                pp.u = Vec::Zero(L);
                pp.u[k] = 1;
                unit.points.push_back(pp);
                y[k] = inner(g, psi, B(unit));
            }
            out.push_back(y);
        }
        return out;
    }

private:
    void ensure_gradients() const {
        if (dinvT_.size()) return;
        const Grid& g = grid();
        dinvT_ = g.d(th_.invT);
        dmuT_.resize(z_.species());
        for (int a = 0; a < z_.species(); ++a) dmuT_[a] = g.d(inv_T_mu_[a]);
    }

    MixtureState z_;
    const EquationOfState* eos_;
    const PhenomenologicalModel* pm_;
    NodalThermo th_;
    VecField dv_;
    std::vector<Vec> inv_T_mu_;
    std::vector<TransportCoefficients> tc_;
    std::vector<Mat> K_;
    mutable Vec dinvT_;
    mutable std::vector<Vec> dmuT_;
};

// --- free-function API -------------------------------------------------------

struct FunctionalDerivatives {
    CotangentField gradH, gradS;
};

inline FunctionalDerivatives functional_derivatives(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm) {
    MixtureOperators ops(z, eos, pm);
    return {ops.grad_H(), ops.grad_S()};
}

inline double total_energy(const MixtureState& z, const EquationOfState& eos) {
    NodalThermo th = evaluate_thermo(z, eos);
    Vec e = th.u;
    for (int k = 0; k < 3; ++k) e += 0.5 * z.M[k].cwiseAbs2().cwiseQuotient(th.rho_tot);
    return (z.g().weights().array() * e.array()).sum();
}

inline double total_entropy(const MixtureState& z, const EquationOfState& eos) {
    NodalThermo th = evaluate_thermo(z, eos);
    return (z.g().weights().array() * th.s.array()).sum();
}

inline void require_variant(const MixtureState& z, Potential variant) {
    if (z.potential != variant)
        throw std::invalid_argument("variant mismatch: " + to_string(variant) + " operators need the " +
                                    (variant == Potential::energy ? std::string("s") : std::string("u")) + "-state, got the " +
                                    (z.potential == Potential::energy ? std::string("s") : std::string("u")) + "-state");
}

inline CotangentField apply_operator(const MixtureOperators& ops, OperatorKind which, Potential variant, const CotangentField& arg) {
    require_variant(ops.state(), variant);
    switch (which) {
        case OperatorKind::J: return ops.J(arg);
        case OperatorKind::R: return ops.R(arg);
        default: throw std::invalid_argument("apply_operator: B takes port signals");
    }
}

inline CotangentField apply_operator(const MixtureOperators& ops, Potential variant, const PortSignals& u) {
    require_variant(ops.state(), variant);
    return ops.B(u);
}

// Column j is the operator applied to the j-th unit cotangent (Blocks::flat ordering).
inline Mat assemble_dense(const MixtureOperators& ops, OperatorKind which, Potential variant, int cap = 2048) {
    require_variant(ops.state(), variant);
    const MixtureState& z = ops.state();
    const int n = z.dofs();
    if (n > cap) throw std::invalid_argument("assemble_dense: " + std::to_string(n) + " DOFs exceed the cap of " + std::to_string(cap));
    Mat A(n, n);
    Vec e = Vec::Zero(n);
    for (int j = 0; j < n; ++j) {
        e[j] = 1;
        CotangentField col = z.like(e);
        A.col(j) = (which == OperatorKind::J ? ops.J(col) : ops.R(col)).flat();
        e[j] = 0;
    }
    return A;
}

struct RhsOptions {
    Mode mode = Mode::isolated;
    bool reversible = true;
    bool dissipative = true;
};

inline CotangentField rhs(const MixtureOperators& ops, const RhsOptions& opt, const PortSignals* port = nullptr) {
    const Grid& g = ops.grid();
    CotangentField out = Blocks::zeros(ops.state().species(), ops.state().size());
    if (opt.reversible) out += ops.J(ops.grad_H());
    if (opt.dissipative) out += ops.R(ops.grad_S());
    if (opt.mode == Mode::open) {
        if (g.kind() != GridKind::interval) throw std::invalid_argument("rhs: open mode needs an interval grid");
        if (!port) throw std::invalid_argument("rhs: open mode needs port signals");
        out += ops.B(*port);
    } else if (g.kind() == GridKind::interval) {
        PortSignals ps = ops.ports();
        double m = 0;
        for (const auto& p : ps.points) m = std::max(m, p.u.cwiseAbs().maxCoeff());
        if (m > 1e-12 * std::max(1.0, ops.state().max_abs()))
            throw std::invalid_argument("rhs: isolated mode on an interval grid needs vanishing boundary traces");
    }
    return out;
}

inline CotangentField rhs(const MixtureState& z, Mode mode, const PhenomenologicalModel& pm, const EquationOfState& eos,
                          const PortSignals* port = nullptr) {
    MixtureOperators ops(z, eos, pm);
    RhsOptions opt;
    opt.mode = mode;
    return rhs(ops, opt, port);
}

}  // namespace opgen
