#include <catch_amalgamated.hpp>

#include "opgen/discretize.hpp"

#include <cmath>
#include <numbers>

using namespace opgen;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vec apply(const Grid& g, double (*f)(double)) {
    Vec v(g.size());
    for (int i = 0; i < g.size(); ++i) v[i] = f(g.nodes()[i]);
    return v;
}

double max_err_interior(const Grid& g, const Vec& a, const Vec& b, int skip) {
    double e = 0;
    for (int i = skip; i < g.size() - skip; ++i) e = std::max(e, std::abs(a[i] - b[i]));
    return e;
}

}  // namespace

TEST_CASE("quadrature weights sum to the domain length", "[discretize]") {
    for (auto kind : {GridKind::periodic, GridKind::interval})
        for (int n : {4, 7, 16, 33}) {
            auto g = make_grid(kind, n, 2.5);
            CHECK_THAT(g->weights().sum(), WithinRel(2.5, 1e-14));
            CHECK((g->weights().array() > 0).all());
        }
    auto s = make_grid(GridKind::periodic, 16, 1.0, Stencil::spectral);
    CHECK_THAT(s->weights().sum(), WithinRel(1.0, 1e-14));
}

TEST_CASE("summation by parts holds to rounding", "[discretize]") {
    for (int n : {4, 8, 64}) {
        CHECK(sbp_residual(*make_grid(GridKind::interval, n, 1.0)) < 1e-14);
        CHECK(sbp_residual(*make_grid(GridKind::periodic, n, 1.0)) < 1e-14);
    }
    CHECK(sbp_residual(*make_grid(GridKind::periodic, 16, 3.0, Stencil::spectral)) < 1e-13);
}

TEST_CASE("discrete integration by parts with the boundary pairing", "[discretize]") {
    auto g = make_grid(GridKind::interval, 21, 1.3);
    Vec f = apply(*g, [](double x) { return std::exp(x) + x * x; });
    Vec h = apply(*g, [](double x) { return std::cos(3 * x); });
    const double lhs = inner(*g, f, g->d(h)) + inner(*g, g->d(f), h);
    CHECK_THAT(lhs, WithinAbs(boundary_pairing(*g, f, h), 1e-13));
    CHECK_THAT(boundary_pairing(*g, f, h), WithinAbs(f[20] * h[20] - f[0] * h[0], 1e-15));
    // dadj is the W-adjoint of D up to the boundary term
    CHECK_THAT(inner(*g, f, g->d(h)), WithinAbs(inner(*g, g->dadj(f), h), 1e-13));
}

TEST_CASE("grids below the closure width are rejected", "[discretize]") {
    CHECK_THROWS_AS(make_grid(GridKind::interval, 3, 1.0), std::invalid_argument);
    CHECK_THROWS_WITH(make_grid(GridKind::periodic, 2, 1.0), Catch::Matchers::ContainsSubstring("< 4"));
    CHECK_THROWS_AS(make_grid(GridKind::interval, 8, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(GridKind::interval, 8, 1.0, Stencil::spectral), std::invalid_argument);
    CHECK_NOTHROW(make_grid(GridKind::interval, 4, 1.0));
}

TEST_CASE("derivatives of polynomials and trigonometric data", "[discretize]") {
    SECTION("linear data is differentiated exactly, closures included") {
        auto g = make_grid(GridKind::interval, 9, 2.0);
        Vec f = apply(*g, [](double x) { return 3 * x - 1; });
        CHECK((g->d(f).array() - 3).abs().maxCoeff() < 1e-13);
        Vec c = Vec::Constant(9, 4.2);
        CHECK(g->d(c).cwiseAbs().maxCoeff() < 1e-13);
    }
    SECTION("second order in the interior and on periodic grids") {
        double prev_p = 0, prev_i = 0;
        for (int n : {32, 64, 128}) {
            const double L = 2 * std::numbers::pi;
            auto gp = make_grid(GridKind::periodic, n, L);
            auto gi = make_grid(GridKind::interval, n + 1, L);
            const double ep = (gp->d(apply(*gp, [](double x) { return std::sin(x); })) - apply(*gp, [](double x) { return std::cos(x); }))
                                  .cwiseAbs()
                                  .maxCoeff();
            const double ei = max_err_interior(*gi, gi->d(apply(*gi, [](double x) { return std::sin(x); })),
                                               apply(*gi, [](double x) { return std::cos(x); }), 1);
            if (prev_p > 0) {
                CHECK_THAT(std::log2(prev_p / ep), WithinAbs(2.0, 0.1));
                CHECK_THAT(std::log2(prev_i / ei), WithinAbs(2.0, 0.1));
            }
            prev_p = ep;
            prev_i = ei;
        }
    }
    SECTION("first order at the one-sided closures") {
        double prev = 0;
        for (int n : {33, 65, 129}) {
            auto g = make_grid(GridKind::interval, n, 1.0);
            Vec e = g->d(apply(*g, [](double x) { return std::exp(x); })) - apply(*g, [](double x) { return std::exp(x); });
            const double eb = std::max(std::abs(e[0]), std::abs(e[n - 1]));
            if (prev > 0) CHECK_THAT(std::log2(prev / eb), WithinAbs(1.0, 0.1));
            prev = eb;
        }
    }
    SECTION("spectral differentiation is exact for resolved modes") {
        auto g = make_grid(GridKind::periodic, 16, 2 * std::numbers::pi, Stencil::spectral);
        Vec f = apply(*g, [](double x) { return std::sin(3 * x) + 0.5 * std::cos(x); });
        Vec df = apply(*g, [](double x) { return 3 * std::cos(3 * x) - 0.5 * std::sin(x); });
        CHECK((g->d(f) - df).cwiseAbs().maxCoeff() < 1e-12);
        auto g7 = make_grid(GridKind::periodic, 7, 2 * std::numbers::pi, Stencil::spectral);
        Vec f7 = apply(*g7, [](double x) { return std::sin(2 * x); });
        CHECK((g7->d(f7) - 2 * apply(*g7, [](double x) { return std::cos(2 * x); })).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("slab gradient of a shear field", "[discretize]") {
    auto g = make_grid(GridKind::interval, 11, 1.0);
    VecField v{Vec::Zero(11), apply(*g, [](double x) { return 2 * x; }), Vec::Constant(11, 0.7)};
    TensorField gv = grad(*g, v);
    REQUIRE(gv.size() == 11u);
    for (const Mat3& t : gv) {
        Mat3 expect = Mat3::Zero();
        expect(1, 0) = 2;
        CHECK((t - expect).cwiseAbs().maxCoeff() < 1e-13);
        CHECK_THAT(trace(t), WithinAbs(0.0, 1e-13));
        CHECK(sym(t)(0, 1) == Catch::Approx(1.0));
        CHECK(skew(t)(1, 0) == Catch::Approx(1.0));
    }
    CHECK(div(*g, v).cwiseAbs().maxCoeff() < 1e-13);
    VecField dt = div(*g, gv);
    for (int k = 0; k < 3; ++k) CHECK(dt[k].cwiseAbs().maxCoeff() < 1e-12);
    VecField gf = grad(*g, apply(*g, [](double x) { return x * x; }));
    CHECK(gf[1].cwiseAbs().maxCoeff() == 0.0);
    CHECK(gf[2].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tensor algebra identities", "[discretize]") {
    Mat3 a;
    a << 1, 2, 3, 4, 5, 6, 7, 8, 10;
    CHECK_THAT(trace(deviator(a)), WithinAbs(0.0, 1e-14));
    CHECK(((sym(a) + skew(a)) - a).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THAT(ddot(sym(a), skew(a)), WithinAbs(0.0, 1e-13));
    CHECK_THAT(ddot(a, Mat3::Identity()), WithinAbs(16.0, 1e-14));
    CHECK_THAT(ddot(deviator(a), Mat3::Identity()), WithinAbs(0.0, 1e-13));
}

TEST_CASE("boundary traces and pairings", "[discretize]") {
    auto gi = make_grid(GridKind::interval, 6, 1.0);
    Vec f(6);
    f << 2, 0, 0, 0, 0, 5;
    auto tr = boundary_trace(*gi, f);
    REQUIRE(tr.size() == 2u);
    CHECK(tr[0].node == 0);
    CHECK(tr[0].normal == -1.0);
    CHECK(tr[0].value == 2.0);
    CHECK(tr[1].normal == 1.0);
    CHECK(tr[1].value == 5.0);
    auto gp = make_grid(GridKind::periodic, 6, 1.0);
    CHECK(boundary_trace(*gp, f).empty());
    CHECK(boundary_pairing(*gp, f, f) == 0.0);
    VecField a{f, f, f};
    CHECK_THAT(inner(*gi, a, a), WithinRel(3 * inner(*gi, f, f), 1e-15));
}
