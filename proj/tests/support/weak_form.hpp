#pragma once

// Independent discretization of the weak balance laws. Works from pointwise
// fluxes returned by constitutive_closure and never touches MixtureOperators.

#include "opgen/thermostate.hpp"

#include <vector>

namespace oracle {

using namespace opgen;

struct BoundaryInput {
    int node;
    double normal;
    Vec u;  // same layout as PortPoint::u
};

class WeakForm {
public:
    WeakForm(const MixtureState& z, const EquationOfState& eos, const PhenomenologicalModel& pm, std::vector<BoundaryInput> bdry = {})
        : z_(z), pm_(pm), bdry_(std::move(bdry)) {
        const Grid& g = z.g();
        const int n = z.size(), nu = z.species();
        nu_ = nu;
        T_.resize(n);
        p_.resize(n);
        u_.resize(n);
        s_.resize(n);
        rho_.resize(n);
        mu_.assign(nu, Vec(n));
        for (int i = 0; i < n; ++i) {
            Vec r(nu);
            for (int a = 0; a < nu; ++a) r[a] = z.rho[a][i];
            ThermoPoint pt = eos_eval(eos, r, z.thermal[i], form_of(z.potential));
            T_[i] = pt.T;
            p_[i] = pt.p;
            u_[i] = pt.u;
            s_[i] = pt.s;
            rho_[i] = r.sum();
            for (int a = 0; a < nu; ++a) mu_[a][i] = pt.mu[a];
            pts_.push_back(pt);
        }
        for (int k = 0; k < 3; ++k) v_[k] = z.M[k].cwiseQuotient(rho_);
        Vec invT = T_.cwiseInverse();
        Vec dinvT = g.d(invT);
        std::vector<Vec> dmuT(nu);
        for (int a = 0; a < nu; ++a) dmuT[a] = g.d(mu_[a].cwiseProduct(invT));
        VecField dv;
        for (int k = 0; k < 3; ++k) dv[k] = g.d(v_[k]);
        for (int i = 0; i < n; ++i) {
            ClosureInput in;
            in.pt = pts_[i];
            in.rho.resize(nu);
            for (int a = 0; a < nu; ++a) in.rho[a] = z.rho[a][i];
            in.v = Vec3(v_[0][i], v_[1][i], v_[2][i]);
            in.grad_v = Mat3::Zero();
            for (int k = 0; k < 3; ++k) in.grad_v(k, 0) = dv[k][i];
            in.grad_inv_T = Vec3(dinvT[i], 0, 0);
            for (int a = 0; a < nu; ++a) in.grad_mu_over_T.push_back(Vec3(dmuT[a][i], 0, 0));
            grad_v_.push_back(in.grad_v);
            fl_.push_back(constitutive_closure(in, pm));
        }
        LLmu_ = Vec::Zero(n);
        for (int a = 0; a < nu; ++a) LLmu_ += pm.LL[a] * mu_[a];
    }

    // Discrete weak form <phi, zdot>.
    double operator()(const CotangentField& phi) const {
        const Grid& g = z_.g();
        const Vec& w = g.weights();
        const int n = z_.size(), nu = nu_;
        double acc = 0;

        // partial masses
        for (int a = 0; a < nu; ++a) {
            Vec dphi = g.d(phi.rho[a]);
            for (int i = 0; i < n; ++i) {
                const double flux = z_.rho[a][i] * v_[0][i] + fl_[i].J[a][0];
                acc += w[i] * (flux * dphi[i] + fl_[i].tau[a] * phi.rho[a][i]);
            }
            for (const auto& b : bdry_) acc -= phi.rho[a][b.node] * (z_.rho[a][b.node] * b.u[1] + b.u[3 + a]);
        }

        // momentum
        {
            VecField dphi;
            for (int k = 0; k < 3; ++k) dphi[k] = g.d(phi.M[k]);
            Vec half_v2 = 0.5 * (v_[0].cwiseAbs2() + v_[1].cwiseAbs2() + v_[2].cwiseAbs2());
            Vec d_half_v2 = g.d(half_v2);
            Vec dT = g.d(T_);
            Vec dLLmu = g.d(LLmu_);
            Vec pressure_force = s_.cwiseProduct(dT);  // Gibbs-Duhem form of grad p
            for (int a = 0; a < nu; ++a) pressure_force += z_.rho[a].cwiseProduct(g.d(mu_[a]));
            VecField dv;
            for (int k = 0; k < 3; ++k) dv[k] = g.d(v_[k]);
            for (int i = 0; i < n; ++i) {
                Mat3 gphi = Mat3::Zero();
                for (int k = 0; k < 3; ++k) gphi(k, 0) = dphi[k][i];
                double conv = 0, mdv = 0;
                for (int k = 0; k < 3; ++k) {
                    conv += z_.M[k][i] * v_[0][i] * dphi[k][i];
                    mdv += z_.M[k][i] * dv[k][i];
                }
                // rho grad(v^2/2) - M_k grad v_k vanishes in the continuum
                const double kin = rho_[i] * d_half_v2[i] - mdv;
                acc += w[i] * (conv - phi.M[0][i] * pressure_force[i] + phi.M[0][i] * dLLmu[i] + phi.M[0][i] * kin -
                               ddot(fl_[i].S, gphi));
            }
            for (const auto& b : bdry_) {
                const int i = b.node;
                double mphi = 0;
                for (int k = 0; k < 3; ++k) mphi += phi.M[k][i] * (b.u[3 + nu + k] - z_.M[k][i] * b.u[1]);
                acc += mphi - phi.M[0][i] * b.normal * b.u[0];
            }
        }

        // thermal variable
        if (z_.potential == Potential::energy) {
            Vec phiT = phi.thermal.cwiseQuotient(T_);
            Vec dphi = g.d(phi.thermal);
            Vec dphiT = g.d(phiT);
            std::vector<Vec> dmuphiT(nu);
            for (int a = 0; a < nu; ++a) dmuphiT[a] = g.d(mu_[a].cwiseProduct(phiT));
            for (int i = 0; i < n; ++i) {
                double t = s_[i] * v_[0][i] * dphi[i] + fl_[i].q[0] * dphiT[i] + ddot(fl_[i].S, grad_v_[i]) * phiT[i];
                const double divv = grad_v_[i].trace();
                for (int a = 0; a < nu; ++a)
                    t -= fl_[i].J[a][0] * dmuphiT[a][i] + (fl_[i].tau[a] - pm_.LL[a] * divv) * mu_[a][i] * phiT[i];
                acc += w[i] * t;
            }
            for (const auto& b : bdry_) {
                const int i = b.node;
                double f = s_[i] * b.u[1] + b.u[2] / T_[i];
                for (int a = 0; a < nu; ++a) f -= mu_[a][i] / T_[i] * b.u[3 + a];
                acc -= phi.thermal[i] * f;
            }
        } else {
            Vec dphi = g.d(phi.thermal);
            // discrete pressure work: sum rho D(mu phi) + s D(T phi) - u D phi
            Vec pw = s_.cwiseProduct(g.d(T_.cwiseProduct(phi.thermal))) - u_.cwiseProduct(dphi);
            for (int a = 0; a < nu; ++a) pw += z_.rho[a].cwiseProduct(g.d(mu_[a].cwiseProduct(phi.thermal)));
            Vec dLLmuphi = g.d(LLmu_.cwiseProduct(phi.thermal));
            for (int i = 0; i < n; ++i) {
                const double t = (u_[i] * v_[0][i] + fl_[i].q[0]) * dphi[i] + v_[0][i] * pw[i] - v_[0][i] * dLLmuphi[i] +
                                 ddot(fl_[i].S, grad_v_[i]) * phi.thermal[i];
                acc += w[i] * t;
            }
            for (const auto& b : bdry_) {
                const int i = b.node;
                acc -= phi.thermal[i] * ((u_[i] + p_[i] - LLmu_[i]) * b.u[1] + b.u[2]);
            }
        }
        return acc;
    }

    // zdot resolved against the quadrature pairing, one unit test function at a time.
    CotangentField rate() const {
        const Vec& w = z_.g().weights();
        const int n = z_.size();
        Vec e = Vec::Zero(z_.dofs());
        Vec out(z_.dofs());
        for (int j = 0; j < z_.dofs(); ++j) {
            e[j] = 1;
            out[j] = (*this)(z_.like(e)) / w[j % n];
            e[j] = 0;
        }
        return z_.like(out);
    }

    const std::vector<LocalFluxes>& fluxes() const { return fl_; }

private:
    MixtureState z_;
    const PhenomenologicalModel& pm_;
    std::vector<BoundaryInput> bdry_;
    int nu_ = 0;
    Vec T_, p_, u_, s_, rho_, LLmu_;
    std::vector<Vec> mu_;
    VecField v_;
    std::vector<ThermoPoint> pts_;
    std::vector<Mat3> grad_v_;
    std::vector<LocalFluxes> fl_;
};

}  // namespace oracle
