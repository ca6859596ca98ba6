#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace opgen {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using SpMat = Eigen::SparseMatrix<double>;

// Slab symmetry: everything varies along x only, vectors and tensors stay 3D.
using Field = Vec;
using VecField = std::array<Vec, 3>;
using TensorField = std::vector<Mat3>;

enum class GridKind { periodic, interval };
enum class Stencil { central2, spectral };

inline std::string to_string(GridKind k) { return k == GridKind::periodic ? "periodic" : "sbp-interval"; }
inline std::string to_string(Stencil s) { return s == Stencil::central2 ? "central2" : "spectral"; }

class Grid;
using GridPtr = std::shared_ptr<const Grid>;
GridPtr make_grid(GridKind kind, int n, double len, Stencil stencil = Stencil::central2);

struct Endpoint {
    int node;
    double normal;  // outward, -1 at x = 0 and +1 at x = L
};

class Grid {
public:
    GridKind kind() const { return kind_; }
    Stencil stencil() const { return stencil_; }
    int size() const { return n_; }
    double length() const { return len_; }
    double spacing() const { return h_; }
    const Vec& nodes() const { return x_; }
    const Vec& weights() const { return w_; }
    const SpMat& derivative_matrix() const { return d_; }
    const std::vector<Endpoint>& boundary() const { return bdry_; }

    Vec d(const Vec& f) const { return d_ * f; }
    // W^{-1} D^T W f: moves a derivative off a test function in the quadrature pairing.
    Vec dadj(const Vec& f) const { return dadj_ * f; }

    double dnorm() const { return dnorm_; }

    friend GridPtr make_grid(GridKind, int, double, Stencil);

private:
    GridKind kind_{};
    Stencil stencil_{};
    int n_ = 0;
    double len_ = 0, h_ = 0, dnorm_ = 0;
    Vec x_, w_;
    SpMat d_, dadj_;
    std::vector<Endpoint> bdry_;
};

inline GridPtr make_grid(GridKind kind, int n, double len, Stencil stencil) {
    if (n < 4)
        throw std::invalid_argument("make_grid: N = " + std::to_string(n) + " < 4 (stencil closure width)");
    if (!(len > 0))
        throw std::invalid_argument("make_grid: L must be positive");
    if (stencil == Stencil::spectral && kind != GridKind::periodic)
        throw std::invalid_argument("make_grid: spectral stencil needs a periodic grid");

    auto g = std::make_shared<Grid>();
    g->kind_ = kind;
    g->stencil_ = stencil;
    g->n_ = n;
    g->len_ = len;
    g->x_.resize(n);
    g->w_.resize(n);
    std::vector<Eigen::Triplet<double>> trip;

    if (kind == GridKind::periodic) {
        g->h_ = len / n;
        for (int i = 0; i < n; ++i) {
            g->x_[i] = i * g->h_;
            g->w_[i] = g->h_;
        }
        if (stencil == Stencil::central2) {
            for (int i = 0; i < n; ++i) {
                trip.emplace_back(i, (i + 1) % n, 0.5 / g->h_);
                trip.emplace_back(i, (i + n - 1) % n, -0.5 / g->h_);
            }
        } else {
            // Fourier collocation derivative.
            const double pi = std::numbers::pi;
            const double scale = 2 * pi / len;
            const double dt = 2 * pi / n;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    if (i == j) continue;
                    const int k = i - j;
                    const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
                    const double a = 0.5 * k * dt;
                    const double v = (n % 2 == 0) ? 0.5 * sgn / std::tan(a) : 0.5 * sgn / std::sin(a);
                    trip.emplace_back(i, j, scale * v);
                }
        }
    } else {
        g->h_ = len / (n - 1);
        const double h = g->h_;
        for (int i = 0; i < n; ++i) {
            g->x_[i] = i * h;
            g->w_[i] = h;
        }
        g->w_[0] = g->w_[n - 1] = 0.5 * h;
        trip.emplace_back(0, 0, -1 / h);
        trip.emplace_back(0, 1, 1 / h);
        for (int i = 1; i < n - 1; ++i) {
            trip.emplace_back(i, i + 1, 0.5 / h);
            trip.emplace_back(i, i - 1, -0.5 / h);
        }
        trip.emplace_back(n - 1, n - 1, 1 / h);
        trip.emplace_back(n - 1, n - 2, -1 / h);
        g->bdry_ = {{0, -1.0}, {n - 1, 1.0}};
    }

    g->d_.resize(n, n);
    g->d_.setFromTriplets(trip.begin(), trip.end());
    g->d_.makeCompressed();
    Vec winv = g->w_.cwiseInverse();
    SpMat dt = g->d_.transpose();
    g->dadj_ = winv.asDiagonal() * dt * g->w_.asDiagonal();
    g->dadj_.makeCompressed();
    g->dnorm_ = Mat(g->d_).cwiseAbs().rowwise().sum().maxCoeff();
    return g;
}

// ||W D + D^T W - (E_R - E_L)||_max / ||W D||_max
inline double sbp_residual(const Grid& g) {
    Mat wd = g.weights().asDiagonal() * Mat(g.derivative_matrix());
    Mat r = wd + wd.transpose();
    for (const auto& e : g.boundary()) r(e.node, e.node) -= e.normal;
    return r.cwiseAbs().maxCoeff() / wd.cwiseAbs().maxCoeff();
}

// --- calculus -------------------------------------------------------------

inline Field d(const Grid& g, const Field& f) { return g.d(f); }

inline VecField grad(const Grid& g, const Field& f) {
    return {g.d(f), Vec::Zero(f.size()), Vec::Zero(f.size())};
}

// (grad a)_{ij} = d_j a_i, only the x column survives.
inline TensorField grad(const Grid& g, const VecField& a) {
    TensorField out(g.size(), Mat3::Zero());
    for (int i = 0; i < 3; ++i) {
        Vec di = g.d(a[i]);
        for (int n = 0; n < g.size(); ++n) out[n](i, 0) = di[n];
    }
    return out;
}

inline Field div(const Grid& g, const VecField& a) { return g.d(a[0]); }

inline VecField div(const Grid& g, const TensorField& t) {
    VecField out;
    for (int i = 0; i < 3; ++i) {
        Vec col(g.size());
        for (int n = 0; n < g.size(); ++n) col[n] = t[n](i, 0);
        out[i] = g.d(col);
    }
    return out;
}

inline double inner(const Grid& g, const Field& a, const Field& b) {
    if (a.size() != g.size() || b.size() != g.size())
        throw std::invalid_argument("inner: field length does not match grid");
    return (g.weights().array() * a.array() * b.array()).sum();
}

inline double inner(const Grid& g, const VecField& a, const VecField& b) {
    return inner(g, a[0], b[0]) + inner(g, a[1], b[1]) + inner(g, a[2], b[2]);
}

struct TracePoint {
    int node;
    double normal;
    double value;
};

inline std::vector<TracePoint> boundary_trace(const Grid& g, const Field& f) {
    std::vector<TracePoint> out;
    for (const auto& e : g.boundary()) out.push_back({e.node, e.normal, f[e.node]});
    return out;
}

// sum over endpoints of n f g, i.e. f(L)g(L) - f(0)g(0)
inline double boundary_pairing(const Grid& g, const Field& f, const Field& h) {
    double s = 0;
    for (const auto& e : g.boundary()) s += e.normal * f[e.node] * h[e.node];
    return s;
}

// --- tensor algebra -------------------------------------------------------

inline double trace(const Mat3& a) { return a.trace(); }
inline Mat3 deviator(const Mat3& a) { return a - (a.trace() / 3.0) * Mat3::Identity(); }
inline double ddot(const Mat3& a, const Mat3& b) { return (a.array() * b.array()).sum(); }
inline Mat3 sym(const Mat3& a) { return 0.5 * (a + a.transpose()); }
inline Mat3 skew(const Mat3& a) { return 0.5 * (a - a.transpose()); }

}  // namespace opgen
