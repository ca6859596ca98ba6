#pragma once

#include "opgen/generic_ops.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace fixtures {

using namespace opgen;

inline std::shared_ptr<IdealMixture> ideal_eos(int nu) {
    Vec m(nu), sigma(nu);
    for (int a = 0; a < nu; ++a) {
        m[a] = 1.0 + a;
        sigma[a] = 0.1 * a;
    }
    return std::make_shared<IdealMixture>(m, 1.5, sigma);
}

// Row sums of B_a and B_ab are exactly zero, K is PSD for T >= 0.3.
inline PhenomenologicalModel model(int nu, bool reactions = true) {
    Vec m(nu);
    for (int a = 0; a < nu; ++a) m[a] = 1.0 + a;
    Vec B = Vec::Zero(nu);
    Mat Bab = Mat::Zero(nu, nu);
    Mat gamma, Lkb;
    Vec Lk;
    if (nu == 1) {
        gamma = Mat::Zero(1, 0);
    } else if (nu == 2) {
        Bab << 0.05, -0.05, -0.05, 0.05;
        B << 0.01, -0.01;
        gamma = Mat(2, 1);
        gamma << 2, -1;
        Lkb = Mat::Constant(1, 1, 0.25);
        Lk = Vec::Constant(1, 0.125);
    } else {
        Bab << 0.0625, -0.03125, -0.03125, -0.03125, 0.09375, -0.0625, -0.03125, -0.0625, 0.09375;
        B << 0.015625, -0.0078125, -0.0078125;
        gamma = Mat(3, 2);
        gamma << 2, 1, -1, 1, 0, -1;
        Lkb = Mat(2, 2);
        Lkb << 0.25, 0.0625, 0.0625, 0.125;
        Lk = Vec(2);
        Lk << 0.125, -0.0625;
        if (nu > 3) throw std::invalid_argument("fixtures: nu <= 3");
    }
    if (!reactions || nu == 1) {
        gamma = Mat::Zero(nu, 0);
        Lkb = Mat::Zero(0, 0);
        Lk = Vec::Zero(0);
    }
    return PhenomenologicalModel::build(0.02, 0.01, 0.05, B, Bab, gamma, m, Lkb, Lk);
}

struct Profile {
    double mean, amp;
    int k;
    double phase;
    double operator()(double x, double L) const { return mean + amp * std::sin(2 * std::numbers::pi * k * x / L + phase); }
};

// Smooth state from temperature and density profiles; thermal variable from the EOS.
inline MixtureState smooth_state(GridPtr g, Potential pot, const EquationOfState& eos, std::mt19937_64& rng, double vamp = 0.3,
                                 int kmax = 2) {
    const int nu = eos.species();
    std::uniform_real_distribution<double> U(0, 1);
    auto rand_profile = [&](double mean, double amp) {
        const double a = amp * (0.5 + 0.5 * U(rng));
        const int k = 1 + std::min(kmax - 1, static_cast<int>(U(rng) * 2));
        return Profile{mean, a, k, 2 * std::numbers::pi * U(rng)};
    };
    MixtureState z(g, pot, nu);
    const double L = g->length();
    std::vector<Profile> rp;
    for (int a = 0; a < nu; ++a) rp.push_back(rand_profile(0.6 + 0.4 * U(rng), 0.2));
    std::array<Profile, 3> vp{rand_profile(0, vamp), rand_profile(0, vamp), rand_profile(0, vamp)};
    Profile tp = rand_profile(1.0 + 0.3 * U(rng), 0.3);
    for (int i = 0; i < g->size(); ++i) {
        const double x = g->nodes()[i];
        Vec rho(nu);
        for (int a = 0; a < nu; ++a) rho[a] = z.rho[a][i] = rp[a](x, L);
        const double rt = rho.sum();
        for (int k = 0; k < 3; ++k) z.M[k][i] = rt * vp[k](x, L);
        const double T = tp(x, L);
        // invert T for the thermal variable through the entropy form at u = cv n T
        const double u_guess = T;
        ThermoPoint p1 = eos.at_energy(rho, u_guess);
        const double u = u_guess * T / p1.T;
        ThermoPoint pt = eos.at_energy(rho, u);
        z.thermal[i] = (pot == Potential::energy) ? pt.s : pt.u;
    }
    return z;
}

inline CotangentField random_cotangent(const MixtureState& z, std::mt19937_64& rng) {
    std::normal_distribution<double> N(0, 1);
    Vec v(z.dofs());
    for (auto& x : v) x = N(rng);
    return z.like(v);
}

// Smooth random cotangent (low wavenumbers), periodic compatible.
inline CotangentField smooth_cotangent(const MixtureState& z, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(-1, 1);
    CotangentField c = Blocks::zeros(z.species(), z.size());
    const Grid& g = z.g();
    for (int comp = 0; comp < c.components(); ++comp) {
        const double a0 = U(rng), a1 = U(rng), b1 = U(rng), a2 = 0.5 * U(rng);
        for (int i = 0; i < z.size(); ++i) {
            const double th = 2 * std::numbers::pi * g.nodes()[i] / g.length();
            c.comp(comp)[i] = a0 + a1 * std::sin(th) + b1 * std::cos(th) + a2 * std::sin(2 * th);
        }
    }
    return c;
}

}  // namespace fixtures
