#pragma once

#include "opgen/discretize.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace opgen {

// Which functional generates the dynamics. The energy variant carries the
// entropy density s as thermal variable, the entropy variant carries u.
enum class Potential { energy, entropy };

inline std::string to_string(Potential p) { return p == Potential::energy ? "energy" : "entropy"; }

// Nodal block layout [rho_1 .. rho_nu, M_x, M_y, M_z, thermal].
struct Blocks {
    std::vector<Vec> rho;
    VecField M;
    Vec thermal;

    static Blocks zeros(int nu, int n) {
        Blocks b;
        b.rho.assign(nu, Vec::Zero(n));
        for (auto& m : b.M) m = Vec::Zero(n);
        b.thermal = Vec::Zero(n);
        return b;
    }

    int species() const { return static_cast<int>(rho.size()); }
    int size() const { return static_cast<int>(thermal.size()); }
    int components() const { return species() + 4; }
    int dofs() const { return components() * size(); }

    Vec& comp(int c) {
        const int nu = species();
        if (c < nu) return rho[c];
        if (c < nu + 3) return M[c - nu];
        return thermal;
    }
    const Vec& comp(int c) const { return const_cast<Blocks*>(this)->comp(c); }

    Vec flat() const {
        const int n = size();
        Vec out(dofs());
        for (int c = 0; c < components(); ++c) out.segment(c * n, n) = comp(c);
        return out;
    }
    void set_flat(const Vec& v) {
        const int n = size();
        if (v.size() != dofs()) throw std::invalid_argument("set_flat: length mismatch");
        for (int c = 0; c < components(); ++c) comp(c) = v.segment(c * n, n);
    }
    // shape of this, values from v
    Blocks like(const Vec& v) const {
        Blocks b = zeros(species(), size());
        b.set_flat(v);
        return b;
    }

    Blocks& axpy(double a, const Blocks& x) {
        for (int c = 0; c < components(); ++c) comp(c) += a * x.comp(c);
        return *this;
    }
    Blocks& operator+=(const Blocks& x) { return axpy(1.0, x); }
    Blocks& operator-=(const Blocks& x) { return axpy(-1.0, x); }
    Blocks& operator*=(double a) {
        for (int c = 0; c < components(); ++c) comp(c) *= a;
        return *this;
    }

    double max_abs() const {
        double m = 0;
        for (int c = 0; c < components(); ++c)
            if (comp(c).size()) m = std::max(m, comp(c).cwiseAbs().maxCoeff());
        return m;
    }
};

inline Blocks operator+(Blocks a, const Blocks& b) { return a += b; }
inline Blocks operator-(Blocks a, const Blocks& b) { return a -= b; }
inline Blocks operator*(double s, Blocks a) { return a *= s; }

// Functional gradients, test directions and dual vectors all share this shape.
using CotangentField = Blocks;

struct MixtureState : Blocks {
    GridPtr grid;
    Potential potential = Potential::energy;

    MixtureState() = default;
    MixtureState(GridPtr g, Potential p, int nu) : Blocks(zeros(nu, g->size())), grid(std::move(g)), potential(p) {}

    const Grid& g() const { return *grid; }

    Vec total_density() const {
        Vec r = Vec::Zero(size());
        for (const auto& a : rho) r += a;
        return r;
    }
    VecField velocity() const {
        Vec r = total_density();
        return {M[0].cwiseQuotient(r), M[1].cwiseQuotient(r), M[2].cwiseQuotient(r)};
    }
    MixtureState with(const Blocks& b) const {
        MixtureState z = *this;
        static_cast<Blocks&>(z) = b;
        return z;
    }
};

inline double inner(const Grid& g, const Blocks& a, const Blocks& b) {
    double s = 0;
    for (int c = 0; c < a.components(); ++c) s += inner(g, a.comp(c), b.comp(c));
    return s;
}

// diag(W) repeated per block, matching Blocks::flat ordering
inline Vec block_weights(const Grid& g, int nu) {
    const int n = g.size();
    Vec w(n * (nu + 4));
    for (int c = 0; c < nu + 4; ++c) w.segment(c * n, n) = g.weights();
    return w;
}

}  // namespace opgen
