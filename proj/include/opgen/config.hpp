#pragma once

// Scenario configuration: a JSON document with the sections grid, eos,
// coefficients, reactions, initial, mode, integrator, tolerances, output and
// an optional jacobi section. Unknown keys are errors.

#include "opgen/dynamics.hpp"
#include "opgen/verify.hpp"

#include <json.hpp>

#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace opgen {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridSpec {
    GridKind kind = GridKind::periodic;
    int N = 32;
    double L = 1.0;
    Stencil stencil = Stencil::central2;
    std::vector<int> refine;
};

struct EosSpec {
    std::string name = "ideal-mixture";
    Vec m, sigma;
    double cv = 1.5;
};

struct ForcingSpec {
    std::string port;
    int component = 0;
    int side = 0;
    std::string type = "constant";
    double value = 0, amplitude = 0, omega = 0, phase = 0, offset = 0;
    std::vector<double> t, table;

    double operator()(double time) const {
        if (type == "constant") return value;
        if (type == "sine") return offset + amplitude * std::sin(omega * time + phase);
        // table: linear interpolation, held constant outside
        if (time <= t.front()) return table.front();
        if (time >= t.back()) return table.back();
        const size_t k = static_cast<size_t>(std::upper_bound(t.begin(), t.end(), time) - t.begin());
        const double a = (time - t[k - 1]) / (t[k] - t[k - 1]);
        return (1 - a) * table[k - 1] + a * table[k];
    }
};

struct InitialSpec {
    Potential potential = Potential::energy;
    std::string profile = "uniform";  // uniform | equilibrium | sinusoid | nodal
    Vec rho, rho_amp;
    double T = 1.0, T_amp = 0;
    Vec3 v = Vec3::Zero(), v_amp = Vec3::Zero();
    int k = 1;
    double phase = 0;
    std::vector<Vec> nodal_rho;  // per constituent
    std::array<Vec, 3> nodal_v;
    Vec nodal_T;
};

struct OutputSpec {
    int every = 1;
    int snapshots = 0;
};

struct Config {
    std::string source;
    GridSpec grid;
    EosSpec eos;
    double zeta = 0, lambda = 0, kappa = 0;
    Vec B;
    Mat Bab;
    Mat gamma;
    Mat Lkb;
    Vec Lk;
    InitialSpec initial;
    Mode mode = Mode::isolated;
    std::vector<ForcingSpec> forcing;
    Integrator integrator = Integrator::rk4;
    double dt = 1e-3, t_end = 0.1, rho_floor = 1e-8;
    bool reversible = true, dissipative = true;
    double newton_tol = 1e-10;
    int newton_max_iter = 30;
    Tolerances tol;
    OutputSpec output;
    JacobiStudy jacobi;
};

namespace detail {

class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) fail("", "must be an object");
    }
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const std::string where = name_.empty() ? (key.empty() ? std::string("document") : key) : name_ + (key.empty() ? "" : "." + key);
        throw ConfigError("[" + where + "] " + msg);
    }
    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) fail(it.key(), "unknown key");
    }
    bool has(const std::string& k) const { return j_.contains(k); }
    const json& raw(const std::string& k) const {
        if (!has(k)) fail(k, "required key missing");
        return j_.at(k);
    }
    double num(const std::string& k) const {
        const json& v = raw(k);
        if (!v.is_number()) fail(k, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(k, "must be finite");
        return x;
    }
    double num(const std::string& k, double def) const { return has(k) ? num(k) : def; }
    int integer(const std::string& k, int def) const {
        if (!has(k)) return def;
        const json& v = raw(k);
        if (!v.is_number_integer()) fail(k, "expected an integer");
        return v.get<int>();
    }
    bool boolean(const std::string& k, bool def) const {
        if (!has(k)) return def;
        if (!raw(k).is_boolean()) fail(k, "expected true or false");
        return raw(k).get<bool>();
    }
    std::string str(const std::string& k, const std::string& def) const {
        if (!has(k)) return def;
        if (!raw(k).is_string()) fail(k, "expected a string");
        return raw(k).get<std::string>();
    }
    template <class T>
    T choice(const std::string& k, const std::vector<std::pair<std::string, T>>& opts, T def) const {
        if (!has(k)) return def;
        const std::string s = str(k, "");
        std::string list;
        for (const auto& [n, v] : opts) {
            if (n == s) return v;
            list += (list.empty() ? "" : " | ") + n;
        }
        fail(k, "'" + s + "' is not one of " + list);
    }
    Vec vec(const std::string& k) const {
        const json& v = raw(k);
        if (!v.is_array()) fail(k, "expected an array of numbers");
        Vec out(v.size());
        for (size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) fail(k, "entry " + std::to_string(i) + " is not a number");
            out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
        }
        return out;
    }
    Vec vec(const std::string& k, Eigen::Index len) const {
        Vec v = vec(k);
        if (v.size() != len) fail(k, "expected " + std::to_string(len) + " entries, got " + std::to_string(v.size()));
        return v;
    }
    // row-major rows x cols
    Mat mat(const std::string& k, Eigen::Index rows, Eigen::Index cols) const {
        Vec v = vec(k);
        if (v.size() != rows * cols)
            fail(k, "expected " + std::to_string(rows) + " x " + std::to_string(cols) + " = " + std::to_string(rows * cols) + " row-major entries, got " +
                        std::to_string(v.size()));
        Mat m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[r * cols + c];
        return m;
    }
    Section sub(const std::string& k) const { return Section(raw(k), name_.empty() ? k : name_ + "." + k); }
    const json& j() const { return j_; }
    const std::string& name() const { return name_; }

private:
    const json& j_;
    std::string name_;
};

inline int line_of(const std::string& text, size_t byte) {
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(byte, text.size())), '\n'));
}

}  // namespace detail

inline Config parse_config(const std::string& text, const std::string& source = "<config>") {
    using detail::Section;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(source + ": line " + std::to_string(detail::line_of(text, e.byte > 0 ? e.byte - 1 : 0)) + ": malformed JSON: " + e.what());
    }
    Config c;
    c.source = source;
    Section top(doc, "");
    top.allow({"grid", "eos", "coefficients", "reactions", "initial", "mode", "integrator", "tolerances", "output", "jacobi"});

    {
        Section s = top.sub("grid");
        s.allow({"kind", "N", "L", "stencil", "refine"});
        c.grid.kind = s.choice<GridKind>("kind", {{"periodic", GridKind::periodic}, {"interval", GridKind::interval}}, GridKind::periodic);
        c.grid.N = s.integer("N", 32);
        c.grid.L = s.num("L", 1.0);
        c.grid.stencil = s.choice<Stencil>("stencil", {{"central2", Stencil::central2}, {"spectral", Stencil::spectral}}, Stencil::central2);
        if (c.grid.N < 4) s.fail("N", "must be at least 4");
        if (!(c.grid.L > 0)) s.fail("L", "must be positive");
        if (c.grid.stencil == Stencil::spectral && c.grid.kind != GridKind::periodic) s.fail("stencil", "spectral needs a periodic grid");
        if (s.has("refine")) {
            Vec r = s.vec("refine");
            for (double x : r) {
                if (x != std::floor(x) || x < 4) s.fail("refine", "entries must be integers >= 4");
                c.grid.refine.push_back(static_cast<int>(x));
            }
        }
    }
    int nu = 0;
    {
        Section s = top.sub("eos");
        s.allow({"name", "m", "cv", "sigma"});
        c.eos.name = s.str("name", "ideal-mixture");
        if (c.eos.name != "ideal-mixture") s.fail("name", "unknown EOS '" + c.eos.name + "' (built-in: ideal-mixture)");
        c.eos.m = s.vec("m");
        nu = static_cast<int>(c.eos.m.size());
        if (nu < 1) s.fail("m", "at least one constituent");
        for (double x : c.eos.m)
            if (!(x > 0)) s.fail("m", "molecular masses must be positive");
        c.eos.cv = s.num("cv", 1.5);
        if (!(c.eos.cv > 0)) s.fail("cv", "must be positive");
        c.eos.sigma = s.has("sigma") ? s.vec("sigma", nu) : Vec::Zero(nu);
    }
    {
        Section s = top.sub("coefficients");
        s.allow({"zeta", "lambda", "kappa", "B", "Bab"});
        c.zeta = s.num("zeta", 0);
        c.lambda = s.num("lambda", 0);
        c.kappa = s.num("kappa", 0);
        c.B = s.has("B") ? s.vec("B", nu) : Vec::Zero(nu);
        c.Bab = s.has("Bab") ? s.mat("Bab", nu, nu) : Mat::Zero(nu, nu);
    }
    if (top.has("reactions")) {
        Section s = top.sub("reactions");
        s.allow({"count", "gamma", "Lkb", "Lk"});
        const int nr = s.integer("count", 0);
        if (nr < 0) s.fail("count", "must be non-negative");
        c.gamma = nr ? s.mat("gamma", nu, nr) : Mat::Zero(nu, 0);
        c.Lkb = nr ? s.mat("Lkb", nr, nr) : Mat::Zero(0, 0);
        c.Lk = nr ? (s.has("Lk") ? s.vec("Lk", nr) : Vec::Zero(nr)) : Vec::Zero(0);
    } else {
        c.gamma = Mat::Zero(nu, 0);
        c.Lkb = Mat::Zero(0, 0);
        c.Lk = Vec::Zero(0);
    }
    {
        Section s = top.sub("initial");
        s.allow({"potential", "profile", "rho", "rho_amp", "T", "T_amp", "v", "v_amp", "k", "phase", "nodal"});
        auto& in = c.initial;
        in.potential = s.choice<Potential>("potential", {{"energy", Potential::energy}, {"entropy", Potential::entropy}}, Potential::energy);
        in.profile = s.choice<std::string>("profile", {{"uniform", "uniform"}, {"equilibrium", "equilibrium"}, {"sinusoid", "sinusoid"}, {"nodal", "nodal"}},
                                           "uniform");
        if (in.profile == "nodal") {
            Section n = s.sub("nodal");
            n.allow({"rho", "v", "T"});
            const int N = c.grid.N;
            const json& r = n.raw("rho");
            if (!r.is_array() || static_cast<int>(r.size()) != nu) n.fail("rho", "expected one array per constituent");
            for (int a = 0; a < nu; ++a) {
                const json wrap = json::object({{"x", r[static_cast<size_t>(a)]}});
                in.nodal_rho.push_back(Section(wrap, n.name() + ".rho[" + std::to_string(a) + "]").vec("x", N));
            }
            in.nodal_T = n.vec("T", N);
            if (n.has("v")) {
                const json& v = n.raw("v");
                if (!v.is_array() || v.size() != 3) n.fail("v", "expected three arrays");
                for (int k = 0; k < 3; ++k) {
                    const json wrap = json::object({{"x", v[static_cast<size_t>(k)]}});
                    in.nodal_v[k] = Section(wrap, n.name() + ".v[" + std::to_string(k) + "]").vec("x", N);
                }
            } else {
                for (auto& v : in.nodal_v) v = Vec::Zero(N);
            }
        } else {
            in.rho = s.vec("rho", nu);
            in.T = s.num("T", 1.0);
            if (!(in.T > 0)) s.fail("T", "must be positive");
            in.v = s.has("v") ? Vec3(s.vec("v", 3)) : Vec3::Zero();
            in.rho_amp = s.has("rho_amp") ? s.vec("rho_amp", nu) : Vec::Zero(nu);
            in.T_amp = s.num("T_amp", 0);
            in.v_amp = s.has("v_amp") ? Vec3(s.vec("v_amp", 3)) : Vec3::Zero();
            in.k = s.integer("k", 1);
            in.phase = s.num("phase", 0);
            if (in.profile != "sinusoid")
                for (const char* k : {"rho_amp", "T_amp", "v_amp", "k", "phase"})
                    if (s.has(k)) s.fail(k, "only used by the sinusoid profile");
            if (in.profile == "equilibrium" && s.has("v")) s.fail("v", "the equilibrium profile is at rest");
        }
    }
    {
        Section s = top.sub("mode");
        s.allow({"kind", "forcing"});
        c.mode = s.choice<Mode>("kind", {{"isolated", Mode::isolated}, {"open", Mode::open}}, Mode::isolated);
        if (c.mode == Mode::isolated && s.has("forcing")) s.fail("forcing", "isolated systems have no ports");
        if (c.mode == Mode::open && c.grid.kind != GridKind::interval) s.fail("kind", "open systems need an interval grid");
        if (c.mode == Mode::isolated && c.grid.kind != GridKind::periodic) s.fail("kind", "isolated systems run on periodic grids");
        if (s.has("forcing")) {
            const json& f = s.raw("forcing");
            if (!f.is_array()) s.fail("forcing", "expected an array");
            const auto names = port_names(nu);
            for (size_t i = 0; i < f.size(); ++i) {
                Section e(f[i], s.name() + ".forcing[" + std::to_string(i) + "]");
                e.allow({"port", "side", "type", "value", "amplitude", "omega", "phase", "offset", "t", "table"});
                ForcingSpec fs;
                fs.port = e.str("port", "");
                if (fs.port.empty()) e.fail("port", "required");
                if (fs.port[0] == 'y')
                    e.fail("port", "'" + fs.port + "' is an output; only inputs u can be forced");
                auto it = std::find(names.begin(), names.end(), fs.port);
                if (it == names.end()) {
                    std::string list;
                    for (const auto& n : names) list += " " + n;
                    e.fail("port", "unknown input '" + fs.port + "' (inputs:" + list + ")");
                }
                fs.component = static_cast<int>(it - names.begin());
                fs.side = e.choice<int>("side", {{"left", 0}, {"right", 1}}, -1);
                if (fs.side < 0) e.fail("side", "required (left | right)");
                fs.type = e.choice<std::string>("type", {{"constant", "constant"}, {"sine", "sine"}, {"table", "table"}}, "constant");
                if (fs.type == "constant") {
                    fs.value = e.num("value");
                } else if (fs.type == "sine") {
                    fs.amplitude = e.num("amplitude");
                    fs.omega = e.num("omega");
                    fs.phase = e.num("phase", 0);
                    fs.offset = e.num("offset", 0);
                } else {
                    Vec t = e.vec("t"), v = e.vec("table", t.size());
                    if (t.size() < 1) e.fail("t", "at least one sample");
                    for (Eigen::Index k = 1; k < t.size(); ++k)
                        if (!(t[k] > t[k - 1])) e.fail("t", "times must increase strictly");
                    fs.t.assign(t.begin(), t.end());
                    fs.table.assign(v.begin(), v.end());
                }
                for (const auto& prev : c.forcing)
                    if (prev.component == fs.component && prev.side == fs.side) e.fail("port", "forced twice on the same side");
                c.forcing.push_back(fs);
            }
        }
    }
    if (top.has("integrator")) {
        Section s = top.sub("integrator");
        s.allow({"method", "dt", "t_end", "rho_floor", "reversible", "dissipative", "newton_tol", "newton_max_iter"});
        c.integrator = s.choice<Integrator>("method", {{"rk4", Integrator::rk4}, {"implicit-midpoint", Integrator::implicit_midpoint}}, Integrator::rk4);
        c.dt = s.num("dt", c.dt);
        c.t_end = s.num("t_end", c.t_end);
        c.rho_floor = s.num("rho_floor", c.rho_floor);
        c.reversible = s.boolean("reversible", true);
        c.dissipative = s.boolean("dissipative", true);
        c.newton_tol = s.num("newton_tol", c.newton_tol);
        c.newton_max_iter = s.integer("newton_max_iter", c.newton_max_iter);
        if (!(c.dt > 0)) s.fail("dt", "must be positive");
        if (!(c.t_end >= 0)) s.fail("t_end", "must be non-negative");
        if (!(c.rho_floor > 0)) s.fail("rho_floor", "must be positive");
    }
    if (top.has("tolerances")) {
        Section s = top.sub("tolerances");
        auto& t = c.tol;
        const std::vector<std::pair<const char*, double*>> keys{
            {"adjointness", &t.adjointness},
            {"psd", &t.psd},
            {"degeneracy", &t.degeneracy},
            {"bracket", &t.bracket},
            {"operator_consistency", &t.operator_consistency},
            {"boundary_identity", &t.boundary_identity},
            {"port_balance", &t.port_balance},
            {"isolated_balance", &t.isolated_balance},
            {"model_sum", &t.model_sum},
            {"model_psd", &t.model_psd},
            {"eos_fd", &t.eos_fd},
            {"eos_identity", &t.eos_identity},
            {"energy_drift", &t.energy_drift},
            {"entropy_margin", &t.entropy_margin},
            {"open_energy_balance", &t.open_energy_balance},
            {"open_entropy_balance", &t.open_entropy_balance},
            {"jacobi_linear", &t.jacobi_linear},
            {"jacobi_ratio", &t.jacobi_ratio},
        };
        std::set<std::string> ok;
        for (const auto& [k, p] : keys) ok.insert(k);
        for (auto it = s.j().begin(); it != s.j().end(); ++it)
            if (!ok.count(it.key())) s.fail(it.key(), "unknown tolerance");
        for (const auto& [k, p] : keys) {
            *p = s.num(k, *p);
            if (!(*p > 0)) s.fail(k, "must be positive");
        }
    }
    if (top.has("output")) {
        Section s = top.sub("output");
        s.allow({"every", "snapshots"});
        c.output.every = s.integer("every", 1);
        c.output.snapshots = s.integer("snapshots", 0);
        if (c.output.every < 1) s.fail("every", "must be at least 1");
        if (c.output.snapshots < 0) s.fail("snapshots", "must be non-negative");
    }
    if (top.has("jacobi")) {
        Section s = top.sub("jacobi");
        s.allow({"structure", "method", "functional", "triples"});
        c.jacobi.structure = s.choice<std::string>(
            "structure", {{"transport-polynomial", "transport-polynomial"}, {"transport", "transport"}, {"mixture", "mixture"}}, "transport-polynomial");
        c.jacobi.method = s.choice<JacobiMethod>("method", {{"closed-form", JacobiMethod::closed_form}, {"nested-fd", JacobiMethod::nested_fd}},
                                                 JacobiMethod::closed_form);
        c.jacobi.functional = s.choice<JacobiFunctional>(
            "functional", {{"linear", JacobiFunctional::linear}, {"quadratic", JacobiFunctional::quadratic}, {"cubic", JacobiFunctional::cubic}},
            JacobiFunctional::cubic);
        c.jacobi.triples = s.integer("triples", 16);
        if (c.jacobi.triples < 1) s.fail("triples", "must be at least 1");
        if (c.jacobi.structure == "mixture" && c.jacobi.method == JacobiMethod::closed_form)
            s.fail("method", "the mixture structure supports nested-fd only");
    }
    c.jacobi.refine = c.grid.refine.empty() ? std::vector<int>{16, 32, 64} : c.grid.refine;
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot read");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path);
}

// --- builders -----------------------------------------------------------------

inline std::shared_ptr<const EquationOfState> make_eos(const Config& c) {
    return std::make_shared<IdealMixture>(c.eos.m, c.eos.cv, c.eos.sigma);
}

inline PhenomenologicalModel make_model(const Config& c) {
    try {
        return PhenomenologicalModel::build(c.zeta, c.lambda, c.kappa, c.B, c.Bab, c.gamma, c.eos.m, c.Lkb, c.Lk);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[reactions] ") + e.what());
    }
}

inline GridPtr make_grid(const Config& c, int N, GridKind kind) { return make_grid(kind, N, c.grid.L, c.grid.stencil); }

// The configured initial profile sampled on g, in the configured potential form.
inline MixtureState make_initial_state(const Config& c, const GridPtr& g, const EquationOfState& eos, const PhenomenologicalModel& pm) {
    const auto& in = c.initial;
    const int nu = eos.species(), N = g->size();
    if (in.profile == "nodal" && N != c.grid.N) throw ConfigError("[initial.nodal] tables are tied to grid.N = " + std::to_string(c.grid.N));
    MixtureState z(g, in.potential, nu);
    Vec req;
    if (in.profile == "equilibrium") {
        try {
            req = equilibrium_composition(eos, pm, in.rho, in.T);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("[initial] equilibrium composition: ") + e.what());
        }
    }
    for (int i = 0; i < N; ++i) {
        const double x = g->nodes()[i];
        const double wave = std::sin(2 * std::numbers::pi * in.k * x / g->length() + in.phase);
        Vec rho(nu);
        Vec3 v;
        double T;
        if (in.profile == "nodal") {
            for (int a = 0; a < nu; ++a) rho[a] = in.nodal_rho[a][i];
            v = Vec3(in.nodal_v[0][i], in.nodal_v[1][i], in.nodal_v[2][i]);
            T = in.nodal_T[i];
        } else if (in.profile == "equilibrium") {
            rho = req;
            v = Vec3::Zero();
            T = in.T;
        } else {
            rho = in.rho + wave * in.rho_amp;
            v = in.v + wave * in.v_amp;
            T = in.T + wave * in.T_amp;
        }
        for (int a = 0; a < nu; ++a) z.rho[a][i] = rho[a];
        for (int k = 0; k < 3; ++k) z.M[k][i] = rho.sum() * v[k];
        try {
            const double u = energy_at_temperature(eos, rho, T);
            z.thermal[i] = in.potential == Potential::energy ? eos.at_energy(rho, u).s : u;
        } catch (const std::invalid_argument& e) {
            throw ConfigError("[initial] node " + std::to_string(i) + " is not admissible: " + e.what());
        }
    }
    return z;
}

inline std::vector<ForcedPort> make_forcing(const Config& c) {
    std::vector<ForcedPort> out;
    for (const auto& f : c.forcing) out.push_back({f.component, f.side, [f](double t) { return f(t); }});
    return out;
}

inline Scenario make_scenario(const Config& c) {
    Scenario sc;
    sc.name = c.source;
    sc.eos = make_eos(c);
    sc.pm = make_model(c);
    sc.z0 = make_initial_state(c, make_grid(c, c.grid.N, c.grid.kind), *sc.eos, sc.pm);
    sc.mode = c.mode;
    sc.forcing = make_forcing(c);
    sc.rhs_options.reversible = c.reversible;
    sc.rhs_options.dissipative = c.dissipative;
    sc.integrator = c.integrator;
    sc.dt = c.dt;
    sc.t_end = c.t_end;
    sc.output_every = c.output.every;
    sc.snapshot_every = c.output.snapshots;
    sc.rho_floor = c.rho_floor;
    sc.newton = {c.newton_tol, c.newton_max_iter};
    return sc;
}

inline BalanceTolerances balance_tolerances(const Tolerances& t) {
    BalanceTolerances b;
    b.semi_discrete_isolated = t.isolated_balance;
    b.semi_discrete_open = t.port_balance;
    b.entropy_margin = t.entropy_margin;
    b.energy_drift = t.energy_drift;
    b.open_energy_balance = t.open_energy_balance;
    b.open_entropy_balance = t.open_entropy_balance;
    return b;
}

}  // namespace opgen
