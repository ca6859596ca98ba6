#include <catch_amalgamated.hpp>

#include "opgen/brackets.hpp"
#include "opgen/generic_ops.hpp"
#include "support/fixtures.hpp"
#include "support/weak_form.hpp"

#include <random>

using namespace opgen;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct Setup {
    std::shared_ptr<IdealMixture> eos;
    PhenomenologicalModel pm;
    MixtureState z;
};

Setup make_setup(GridKind kind, Potential pot, int nu, int n, std::uint64_t seed, double vamp = 0.3) {
    std::mt19937_64 rng(seed);
    Setup s{fixtures::ideal_eos(nu), fixtures::model(nu), {}};
    s.z = fixtures::smooth_state(make_grid(kind, n, 1.0), pot, *s.eos, rng, vamp);
    return s;
}

// H and S as plain quadrature functionals, for finite differencing
struct QuadH final : TestFunctional {
    const EquationOfState* eos;
    explicit QuadH(const EquationOfState& e) : eos(&e) {}
    std::string kind() const override { return "H"; }
    double value(const MixtureState& z) const override { return total_energy(z, *eos); }
    CotangentField gradient(const MixtureState&) const override { throw std::logic_error("unused"); }
};
struct QuadS final : TestFunctional {
    const EquationOfState* eos;
    explicit QuadS(const EquationOfState& e) : eos(&e) {}
    std::string kind() const override { return "S"; }
    double value(const MixtureState& z) const override { return total_entropy(z, *eos); }
    CotangentField gradient(const MixtureState&) const override { throw std::logic_error("unused"); }
};

double rel_diff(const Blocks& a, const Blocks& b) { return (a - b).max_abs() / std::max(1.0, b.max_abs()); }

std::vector<oracle::BoundaryInput> boundary_inputs(const PortSignals& ps) {
    std::vector<oracle::BoundaryInput> b;
    for (const auto& p : ps.points) b.push_back({p.node, p.normal, p.u});
    return b;
}

}  // namespace

TEST_CASE("functional derivatives: closed forms", "[generic_ops]") {
    SECTION("entropy gradient on the s-state is the last unit block") {
        auto s = make_setup(GridKind::periodic, Potential::energy, 2, 12, 1);
        auto d = functional_derivatives(s.z, *s.eos, s.pm);
        for (int a = 0; a < 2; ++a) CHECK(d.gradS.rho[a].cwiseAbs().maxCoeff() == 0.0);
        for (int k = 0; k < 3; ++k) CHECK(d.gradS.M[k].cwiseAbs().maxCoeff() == 0.0);
        CHECK((d.gradS.thermal.array() == 1.0).all());
    }
    SECTION("at rest the energy gradient carries the chemical potentials") {
        auto s = make_setup(GridKind::periodic, Potential::energy, 3, 12, 2, 0.0);
        auto d = functional_derivatives(s.z, *s.eos, s.pm);
        NodalThermo th = evaluate_thermo(s.z, *s.eos);
        for (int k = 0; k < 3; ++k) CHECK(d.gradH.M[k].cwiseAbs().maxCoeff() == 0.0);
        for (int a = 0; a < 3; ++a) CHECK((d.gradH.rho[a] - th.mu[a]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((d.gradH.thermal - th.T).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("u-state duals") {
        auto s = make_setup(GridKind::periodic, Potential::entropy, 2, 12, 3);
        auto d = functional_derivatives(s.z, *s.eos, s.pm);
        NodalThermo th = evaluate_thermo(s.z, *s.eos);
        CHECK((d.gradH.thermal.array() == 1.0).all());
        CHECK((d.gradS.thermal - th.invT).cwiseAbs().maxCoeff() < 1e-15);
        for (int a = 0; a < 2; ++a) CHECK((d.gradS.rho[a] + th.mu[a].cwiseProduct(th.invT)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("functional derivatives against finite differences of the quadrature functionals", "[generic_ops]") {
    for (auto kind : {GridKind::periodic, GridKind::interval})
        for (auto pot : {Potential::energy, Potential::entropy}) {
            auto s = make_setup(kind, pot, 2, 10, 4);
            auto d = functional_derivatives(s.z, *s.eos, s.pm);
            INFO(to_string(kind) << " " << to_string(pot));
            CHECK(rel_diff(fd_gradient(QuadH(*s.eos), s.z), d.gradH) < 1e-6);
            CHECK(rel_diff(fd_gradient(QuadS(*s.eos), s.z), d.gradS) < 1e-6);
        }
}

TEST_CASE("degeneracy of J and R", "[generic_ops]") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto pot = seed % 2 ? Potential::entropy : Potential::energy;
        auto s = make_setup(GridKind::periodic, pot, 2 + seed % 2, 16, 100 + seed);
        MixtureOperators ops(s.z, *s.eos, s.pm);
        const auto gH = ops.grad_H(), gS = ops.grad_S();
        CHECK(apply_operator(ops, OperatorKind::J, pot, gS).max_abs() <= 1e-12 * std::max(1.0, ops.J(gH).max_abs()));
        CHECK(apply_operator(ops, OperatorKind::R, pot, gH).max_abs() <= 1e-12 * std::max(1.0, ops.R(gS).max_abs()));
    }
}

TEST_CASE("dense operators: adjointness and positivity", "[generic_ops]") {
    for (auto pot : {Potential::energy, Potential::entropy}) {
        auto s = make_setup(GridKind::periodic, pot, 2, 8, 9);
        MixtureOperators ops(s.z, *s.eos, s.pm);
        const Mat J = assemble_dense(ops, OperatorKind::J, pot);
        const Mat R = assemble_dense(ops, OperatorKind::R, pot);
        const Vec w = block_weights(s.z.g(), 2);
        const Mat WJ = w.asDiagonal() * J, WR = w.asDiagonal() * R;
        INFO(to_string(pot));
        CHECK((WJ + J.transpose() * w.asDiagonal()).norm() <= 1e-12 * WJ.norm());
        CHECK((WR - WR.transpose()).norm() <= 1e-12 * WR.norm());
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (WR + WR.transpose()), Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());

        std::mt19937_64 rng(17);
        for (int k = 0; k < 100; ++k) {
            CotangentField phi = fixtures::random_cotangent(s.z, rng);
            const double q = inner(s.z.g(), phi, ops.J(phi));
            CHECK(std::abs(q) <= 1e-12 * std::max(1.0, ops.J(phi).max_abs() * phi.max_abs()));
        }
        std::uniform_int_distribution<int> col(0, static_cast<int>(J.cols()) - 1);
        for (int k = 0; k < 20; ++k) {
            const int j = col(rng);
            Vec e = Vec::Zero(J.cols());
            e[j] = 1;
            CHECK((ops.J(s.z.like(e)).flat() - J.col(j)).cwiseAbs().maxCoeff() <= 1e-13);
            CHECK((ops.R(s.z.like(e)).flat() - R.col(j)).cwiseAbs().maxCoeff() <= 1e-13);
        }
        CotangentField phi = fixtures::random_cotangent(s.z, rng);
        CHECK((J * phi.flat() - ops.J(phi).flat()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, ops.J(phi).max_abs()));
    }
}

TEST_CASE("dense assembly respects the DOF cap", "[generic_ops]") {
    auto s = make_setup(GridKind::periodic, Potential::energy, 2, 40, 1);
    MixtureOperators ops(s.z, *s.eos, s.pm);
    CHECK_THROWS_WITH(assemble_dense(ops, OperatorKind::J, Potential::energy, 100), ContainsSubstring("cap"));
}

TEST_CASE("variant mismatch is rejected", "[generic_ops]") {
    auto s = make_setup(GridKind::periodic, Potential::energy, 2, 8, 1);
    MixtureOperators ops(s.z, *s.eos, s.pm);
    CHECK_THROWS_WITH(apply_operator(ops, OperatorKind::J, Potential::entropy, ops.grad_H()), ContainsSubstring("variant mismatch"));
    CHECK_THROWS_AS(assemble_dense(ops, OperatorKind::R, Potential::entropy), std::invalid_argument);
    CHECK_THROWS_AS(MixtureOperators(s.z, *fixtures::ideal_eos(2), fixtures::model(3)), std::invalid_argument);
}

TEST_CASE("ports: closed forms and the adjoint of B", "[generic_ops]") {
    for (auto pot : {Potential::energy, Potential::entropy})
        for (std::uint64_t seed : {21u, 22u, 23u}) {
            auto s = make_setup(GridKind::interval, pot, 2, 12, seed);
            MixtureOperators ops(s.z, *s.eos, s.pm);
            PortSignals ps = ops.ports();
            REQUIRE(ps.points.size() == 2u);
            auto yH = ops.B_adjoint(ops.grad_H(), ps);
            auto yS = ops.B_adjoint(ops.grad_S(), ps);
            NodalThermo th = evaluate_thermo(s.z, *s.eos);
            for (size_t p = 0; p < 2; ++p) {
                const auto& pp = ps.points[p];
                const double sc = std::max(1.0, pp.yH.cwiseAbs().maxCoeff());
                INFO(to_string(pot) << " endpoint " << p);
                CHECK((yH[p] - pp.yH).cwiseAbs().maxCoeff() <= 1e-10 * sc);
                CHECK((yS[p] - pp.yS).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, pp.yS.cwiseAbs().maxCoeff()));
                CHECK(pp.yS[0] == 0.0);
                CHECK_THAT(pp.yS[1], WithinRel(-th.s[pp.node], 1e-15));
                CHECK_THAT(pp.yS[2], WithinRel(-th.invT[pp.node], 1e-15));
                CHECK_THAT(pp.yS[3], WithinRel(th.mu[0][pp.node] * th.invT[pp.node], 1e-14));
                CHECK(pp.yS.tail(3).cwiseAbs().maxCoeff() == 0.0);
            }
        }
}

TEST_CASE("ports: isolated-compatible traces", "[generic_ops]") {
    auto s = make_setup(GridKind::interval, Potential::energy, 2, 12, 31);
    MixtureOperators ops(s.z, *s.eos, s.pm);
    const int L = port_length(2);
    std::vector<PortOverride> ov;
    for (int side = 0; side < 2; ++side)
        for (int c = 1; c < L; ++c) ov.push_back({c, side, 0.0});
    PortSignals ps = ops.ports(ov);
    NodalThermo th = evaluate_thermo(s.z, *s.eos);
    for (const auto& p : ps.points) {
        CHECK_THAT(p.u[0], WithinRel(s.pm.LL[0] * th.mu[0][p.node] + s.pm.LL[1] * th.mu[1][p.node], 1e-14));
        CHECK(p.u.tail(L - 1).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(ps.pairing_S() == 0.0);
    CHECK_THROWS_AS(ops.ports({{L, 0, 1.0}}), std::invalid_argument);
    auto names = port_names(2);
    CHECK(names.size() == static_cast<size_t>(L));
    CHECK(names[2] == "q_n");
    CHECK(names[4] == "J2_n");
}

TEST_CASE("uniform equilibrium is a fixed point", "[generic_ops]") {
    for (int nu : {2, 3})
        for (auto kind : {GridKind::periodic, GridKind::interval}) {
            auto eos = fixtures::ideal_eos(nu);
            auto pm = fixtures::model(nu);
            Vec r = equilibrium_composition(*eos, pm, Vec::LinSpaced(nu, 0.5, 0.8), 1.1);
            auto g = make_grid(kind, 12, 1.0);
            MixtureState z(g, Potential::energy, nu);
            const double s = eos->at_energy(r, energy_at_temperature(*eos, r, 1.1)).s;
            for (int a = 0; a < nu; ++a) z.rho[a].setConstant(r[a]);
            z.thermal.setConstant(s);
            for (auto pot : {Potential::energy, Potential::entropy}) {
                MixtureState zz = convert_state(z, pot, *eos);
                MixtureOperators ops(zz, *eos, pm);
                RhsOptions opt;
                opt.mode = kind == GridKind::interval ? Mode::open : Mode::isolated;
                PortSignals ps = ops.ports();
                CotangentField rate = rhs(ops, opt, &ps);
                CHECK(rate.max_abs() <= 1e-12 * std::max(1.0, zz.max_abs()));
            }
        }
}

TEST_CASE("Hamiltonian density equation converges to the continuous flux form", "[generic_ops]") {
    // rho_a' = -(rho_a v)' + LL_a v' on smooth periodic data, R switched off
    const double pi = std::numbers::pi;
    auto eos = fixtures::ideal_eos(2);
    auto pm = fixtures::model(2);
    REQUIRE(pm.LL.cwiseAbs().maxCoeff() > 0.1);
    double prev = 0;
    for (int n : {32, 64, 128}) {
        auto g = make_grid(GridKind::periodic, n, 1.0);
        MixtureState z(g, Potential::energy, 2);
        Vec exact0(n), exact1(n);
        for (int i = 0; i < n; ++i) {
            const double x = g->nodes()[i], th = 2 * pi * x;
            const double r0 = 0.7 + 0.2 * std::sin(th), r1 = 0.5 + 0.1 * std::cos(th);
            const double dr0 = 0.4 * pi * std::cos(th), dr1 = -0.2 * pi * std::sin(th);
            const double v = 0.3 * std::sin(th), dv = 0.6 * pi * std::cos(th);
            z.rho[0][i] = r0;
            z.rho[1][i] = r1;
            z.M[0][i] = (r0 + r1) * v;
            z.M[1][i] = 0.1 * (r0 + r1);
            z.thermal[i] = eos->at_energy(Eigen::Vector2d(r0, r1), energy_at_temperature(*eos, Eigen::Vector2d(r0, r1), 1 + 0.2 * std::cos(th))).s;
            exact0[i] = -(dr0 * v + r0 * dv) + pm.LL[0] * dv;
            exact1[i] = -(dr1 * v + r1 * dv) + pm.LL[1] * dv;
        }
        MixtureOperators ops(z, *eos, pm);
        RhsOptions opt;
        opt.dissipative = false;
        CotangentField rate = rhs(ops, opt);
        const double err = std::max((rate.rho[0] - exact0).cwiseAbs().maxCoeff(), (rate.rho[1] - exact1).cwiseAbs().maxCoeff());
        if (prev > 0) CHECK(std::log2(prev / err) > 1.8);
        prev = err;
    }
    CHECK(prev < 1e-2);
}

TEST_CASE("rhs agrees with an independent weak-form discretization", "[generic_ops]") {
    for (auto kind : {GridKind::periodic, GridKind::interval})
        for (auto pot : {Potential::energy, Potential::entropy})
            for (std::uint64_t seed = 0; seed < 4; ++seed) {
                auto s = make_setup(kind, pot, 2 + seed % 2, 14, 300 + seed);
                MixtureOperators ops(s.z, *s.eos, s.pm);
                RhsOptions opt;
                CotangentField rate;
                std::vector<oracle::BoundaryInput> bd;
                if (kind == GridKind::interval) {
                    opt.mode = Mode::open;
                    PortSignals ps = ops.ports({{2, 0, 0.3}, {3, 1, 0.01}, {4 + s.z.species() + 1, 0, 0.02}});
                    rate = rhs(ops, opt, &ps);
                    bd = boundary_inputs(ps);
                } else {
                    rate = rhs(ops, opt);
                }
                oracle::WeakForm wf(s.z, *s.eos, s.pm, bd);
                std::mt19937_64 rng(seed);
                for (int k = 0; k < 5; ++k) {
                    CotangentField phi = fixtures::random_cotangent(s.z, rng);
                    const double a = inner(s.z.g(), phi, rate), b = wf(phi);
                    INFO(to_string(kind) << " " << to_string(pot) << " seed " << seed);
                    CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b)));
                }
            }
}

TEST_CASE("forced normal velocity enters the reaction source through the port", "[generic_ops]") {
    // the density row of B carries LL_a u_2; a pointwise weak form sees LL_a v.n instead
    auto s = make_setup(GridKind::interval, Potential::energy, 2, 14, 41);
    MixtureOperators ops(s.z, *s.eos, s.pm);
    const double forced = -0.05;
    PortSignals ps = ops.ports({{1, 1, forced}});
    RhsOptions opt;
    opt.mode = Mode::open;
    CotangentField diff = rhs(ops, opt, &ps) - oracle::WeakForm(s.z, *s.eos, s.pm, boundary_inputs(ps)).rate();
    const int i = ps.points[1].node;
    const double vn = ops.thermo().v[0][i] * ps.points[1].normal;
    for (int a = 0; a < 2; ++a) {
        CHECK_THAT(diff.rho[a][i], WithinAbs(s.pm.LL[a] * (forced - vn) / s.z.g().weights()[i], 1e-12));
        Vec rest = diff.rho[a];
        rest[i] = 0;
        CHECK(rest.cwiseAbs().maxCoeff() < 1e-12);
    }
    for (int c = 2; c < diff.components(); ++c) CHECK(diff.comp(c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("semi-discrete balances", "[generic_ops]") {
    SECTION("isolated periodic") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            auto s = make_setup(GridKind::periodic, seed % 2 ? Potential::entropy : Potential::energy, 2, 16, 500 + seed);
            MixtureOperators ops(s.z, *s.eos, s.pm);
            CotangentField rate = rhs(ops, RhsOptions{});
            const double scH = std::max(1.0, std::abs(ops.H())), scS = std::max(1.0, std::abs(ops.S()));
            CHECK(std::abs(inner(s.z.g(), ops.grad_H(), rate)) <= 1e-12 * scH);
            CHECK(inner(s.z.g(), ops.grad_S(), rate) >= -1e-12 * scS);
        }
    }
    SECTION("open interval with the self-consistent port") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            auto s = make_setup(GridKind::interval, seed % 2 ? Potential::entropy : Potential::energy, 2, 16, 600 + seed);
            MixtureOperators ops(s.z, *s.eos, s.pm);
            PortSignals ps = ops.ports();
            RhsOptions opt;
            opt.mode = Mode::open;
            CotangentField rate = rhs(ops, opt, &ps);
            const double scH = std::max(1.0, std::abs(ops.H())), scS = std::max(1.0, std::abs(ops.S()));
            CHECK(std::abs(inner(s.z.g(), ops.grad_H(), rate) - ps.pairing_H()) <= 1e-10 * scH);
            CHECK(inner(s.z.g(), ops.grad_S(), rate) - ps.pairing_S() >= -1e-10 * scS);
        }
    }
    SECTION("mode and grid mismatches") {
        auto s = make_setup(GridKind::periodic, Potential::energy, 2, 8, 1);
        MixtureOperators ops(s.z, *s.eos, s.pm);
        RhsOptions opt;
        opt.mode = Mode::open;
        CHECK_THROWS_AS(rhs(ops, opt), std::invalid_argument);
        auto si = make_setup(GridKind::interval, Potential::energy, 2, 8, 1);
        CHECK_THROWS_WITH(rhs(si.z, Mode::isolated, si.pm, *si.eos), ContainsSubstring("vanishing boundary traces"));
        MixtureOperators opi(si.z, *si.eos, si.pm);
        RhsOptions o2;
        o2.mode = Mode::open;
        CHECK_THROWS_WITH(rhs(opi, o2), ContainsSubstring("port"));
    }
}

TEST_CASE("energy and entropy variants describe the same dynamics", "[generic_ops]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto s = make_setup(seed % 2 ? GridKind::interval : GridKind::periodic, Potential::energy, 2 + seed % 2, 16, 700 + seed);
        MixtureState zu = convert_state(s.z, Potential::entropy, *s.eos);
        RhsOptions opt;
        if (s.z.g().kind() == GridKind::interval) opt.mode = Mode::open;
        MixtureOperators os(s.z, *s.eos, s.pm), ou(zu, *s.eos, s.pm);
        PortSignals ps = os.ports(), pu = ou.ports();
        CotangentField rs = rhs(os, opt, &ps), ru = rhs(ou, opt, &pu);
        // chain rule of u(rho, s): du = T ds + sum mu drho
        const NodalThermo& th = os.thermo();
        CotangentField mapped = rs;
        mapped.thermal = th.T.cwiseProduct(rs.thermal);
        for (int a = 0; a < s.z.species(); ++a) mapped.thermal += th.mu[a].cwiseProduct(rs.rho[a]);
        CHECK(rel_diff(mapped, ru) <= 1e-8);
    }
}
