#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "wegp/bo.hpp"

namespace wegp {

// ---- accuracy metric ----

// Relative root-mean-squared error: 1 matches the mean predictor.
inline double rrmse(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
    if (truth.size() != pred.size()) throw DimensionError("rrmse: length mismatch");
    if (truth.size() < 2) throw DimensionError("rrmse: need at least two points");
    const double ybar = truth.mean();
    const double denom = (truth.array() - ybar).square().sum();
    if (denom <= 0.0) throw UndefinedMetricError("rrmse: truth is constant");
    const double num = (truth - pred).array().square().sum();
    return std::sqrt(num / denom);
}

struct EvalReport {
    double rrmse = 0.0;
    int n_test = 0;
    Eigen::VectorXd residuals;
};

inline EvalReport evaluate_predictions(const Eigen::VectorXd& truth,
                                       const Eigen::VectorXd& pred) {
    EvalReport r;
    r.rrmse = rrmse(truth, pred);
    r.n_test = static_cast<int>(truth.size());
    r.residuals = truth - pred;
    return r;
}

// ---- engineering test functions (fixed input orders documented per op) ----

namespace detail {

inline void check_range(const char* fn, const Eigen::VectorXd& v,
                        std::initializer_list<double> lo, std::initializer_list<double> hi) {
    if (static_cast<std::size_t>(v.size()) != lo.size())
        throw DimensionError(std::string(fn) + ": wrong input arity");
    auto l = lo.begin();
    auto h = hi.begin();
    for (int i = 0; i < v.size(); ++i, ++l, ++h)
        if (!(v[i] >= *l && v[i] <= *h))
            throw DomainError(std::string(fn) + ": input " + std::to_string(i) +
                              " out of range");
}

inline double otl_formula(const Eigen::VectorXd& v) {
    const double Rb1 = v[0], Rb2 = v[1], Rf = v[2], Rc1 = v[3], Rc2 = v[4], beta = v[5];
    const double Vb1 = 12.0 * Rb2 / (Rb1 + Rb2);
    return (Vb1 + 0.74) * beta * (Rc2 + 9.0) + 11.35 * Rf +
           0.74 * Rf * beta * (Rc2 + 9.0) / (beta * (Rc2 + 9.0) + Rf) * Rc1;
}

inline double piston_formula(const Eigen::VectorXd& v) {
    const double M = v[0], S = v[1], V0 = v[2], k = v[3], P0 = v[4], T = v[5], T0 = v[6];
    const double A = P0 * S + 19.62 * M - k * V0 / S;
    const double V = S / (2.0 * k) * (A * A + 4.0 * k * T / T0);
    return 2.0 * M_PI * std::sqrt(M / (k + S * S * P0 * V0 * T / (T0 * V * V)));
}

inline double borehole_formula(const Eigen::VectorXd& v) {
    const double Tu = v[0], Hu = v[1], Hl = v[2], r = v[3], rw = v[4], Tl = v[5], L = v[6],
                 Kw = v[7];
    const double lr = std::log(r / rw);
    return 2.0 * M_PI * Tu * (Hu - Hl) /
           (lr * (1.0 + 2.0 * L * Tu / (lr * rw * rw * Kw) + Tu / Tl));
}

}  // namespace detail

// Output transistorless amplifier circuit; inputs (R_b1, R_b2, R_f, R_c1,
// R_c2, beta).
inline double otl(const Eigen::VectorXd& v) {
    detail::check_range("otl", v, {50, 25, 0.5, 1.2, 0.25, 30}, {150, 70, 3, 2.5, 1.2, 50});
    return detail::otl_formula(v);
}

// Piston cycle time; inputs (M, S, V_0, k, P_0, T, T_0).
inline double piston(const Eigen::VectorXd& v) {
    detail::check_range("piston", v, {30, 0.005, 0.002, 1000, 90000, 290, 340},
                        {60, 0.02, 0.01, 5000, 110000, 296, 360});
    return detail::piston_formula(v);
}

// Borehole water flow; inputs (T_u, H_u, H_l, r, r_w, T_l, L, K_w).
inline double borehole(const Eigen::VectorXd& v) {
    detail::check_range("borehole", v, {63070, 990, 700, 100, 0.05, 63.1, 1120, 9855},
                        {115600, 1110, 820, 50000, 0.15, 116, 1680, 12045});
    return detail::borehole_formula(v);
}

inline const std::vector<std::string>& beam_shapes() {
    static const std::vector<std::string> s = {"circular", "square", "i-shape",
                                               "hollow-square", "hollow-circular"};
    return s;
}

inline double beam_inertia(const std::string& shape) {
    if (shape == "circular") return 0.0491;
    if (shape == "square") return 0.0833;
    if (shape == "i-shape") return 0.0449;
    if (shape == "hollow-square") return 0.0633;
    if (shape == "hollow-circular") return 0.0373;
    throw DomainError("beam_bending: unknown shape '" + shape + "'");
}

// Cantilever tip deflection y = P L^3 / (3 E I(shape) w^4) with fixed
// P = 600 and E = 600e3; the five normalized moments of inertia give the
// non-equally-spaced categorical structure.
inline double beam_bending(double length, double width, const std::string& shape) {
    if (!(length >= 10.0 && length <= 20.0) || !(width >= 1.0 && width <= 2.0))
        throw DomainError("beam_bending: input out of range");
    const double P = 600.0, E = 600e3;
    return P * length * length * length / (3.0 * E * beam_inertia(shape) * width * width * width * width);
}

// ---- synthetic optimization functions ----

namespace detail {

// Canonical 2-d test functions, affinely rescaled onto [-1,1]^2 from their
// usual domains: Beale [-4.5,4.5]^2, six-hump camel [-3,3]x[-2,2],
// Rosenbrock [-2.048,2.048]^2.
inline double beale2(double u, double v) {
    const double a = 1.5 - u + u * v;
    const double b = 2.25 - u + u * v * v;
    const double c = 2.625 - u + u * v * v * v;
    return a * a + b * b + c * c;
}
inline double camel2(double u, double v) {
    return (4.0 - 2.1 * u * u + u * u * u * u / 3.0) * u * u + u * v +
           (-4.0 + 4.0 * v * v) * v * v;
}
inline double rosen2(double u, double v) {
    return 100.0 * (v - u * u) * (v - u * u) + (1.0 - u) * (1.0 - u);
}

}  // namespace detail

inline double bea(const Eigen::Vector2d& x) { return detail::beale2(4.5 * x[0], 4.5 * x[1]); }
inline double cam(const Eigen::Vector2d& x) { return detail::camel2(3.0 * x[0], 2.0 * x[1]); }
inline double ros(const Eigen::Vector2d& x) {
    return detail::rosen2(2.048 * x[0], 2.048 * x[1]);
}

// Func2C: f_{h1}(x) + f_{h2}(x), h1 in {ros,cam,bea}, h2 in
// {+ros,+cam,+bea,+bea,+bea} (the bea repetition is part of the problem).
inline double func2c(const Eigen::Vector2d& x, int h1, int h2) {
    if (!(x.cwiseAbs().maxCoeff() <= 1.0)) throw DomainError("func2c: x outside [-1,1]^2");
    if (h1 < 0 || h1 > 2 || h2 < 0 || h2 > 4) throw std::out_of_range("func2c: level index");
    const auto pick3 = [&](int h) { return h == 0 ? ros(x) : h == 1 ? cam(x) : bea(x); };
    const double second = h2 == 0 ? ros(x) : h2 == 1 ? cam(x) : bea(x);
    return pick3(h1) + second;
}

// Func3C adds h3 in {+5 cam, +2 ros, +2 bea, +3 bea}.
inline double func3c(const Eigen::Vector2d& x, int h1, int h2, int h3) {
    if (h3 < 0 || h3 > 3) throw std::out_of_range("func3c: level index");
    const double extra = h3 == 0   ? 5.0 * cam(x)
                         : h3 == 1 ? 2.0 * ros(x)
                         : h3 == 2 ? 2.0 * bea(x)
                                   : 3.0 * bea(x);
    return func2c(x, h1, h2) + extra;
}

// Ackley (a=20, b=0.2, c=2pi) on the 7-vector (h1..h4, x1..x3); categorical
// values prepend the continuous vector.
inline double ackley4c(const Eigen::Vector3d& x, const std::array<int, 4>& h) {
    if (!(x.cwiseAbs().maxCoeff() <= 1.0)) throw DomainError("ackley4c: x outside [-1,1]^3");
    static const double hv[3] = {0.0, 0.5, 1.0};
    Eigen::VectorXd v(7);
    for (int k = 0; k < 4; ++k) {
        if (h[static_cast<std::size_t>(k)] < 0 || h[static_cast<std::size_t>(k)] > 2)
            throw std::out_of_range("ackley4c: level index");
        v[k] = hv[h[static_cast<std::size_t>(k)]];
    }
    v.segment(4, 3) = x;
    const double n = 7.0;
    const double s1 = v.squaredNorm() / n;
    const double s2 = (2.0 * M_PI * v.array()).cos().sum() / n;
    return -20.0 * std::exp(-0.2 * std::sqrt(s1)) - std::exp(s2) + 20.0 + std::exp(1.0);
}

// ---- benchmark specifications ----

struct Variable {
    std::string name;
    double lo = 0.0, hi = 1.0;
    std::vector<double> levels;        // empty for continuous variables
    std::vector<std::string> labels;   // optional level labels

    bool is_cat() const { return !levels.empty(); }
};

struct Optimum {
    double value = 0.0;
    Eigen::VectorXd x_raw;
    std::vector<int> h;
};

// A named mixed-input benchmark: variables in their original order plus a
// response over the full raw vector (level values substituted in place).
struct BenchmarkSpec {
    std::string name;
    std::vector<Variable> vars;
    std::function<double(const Eigen::VectorXd&)> response;
    std::optional<Optimum> optimum;

    int d() const {
        int n = 0;
        for (const auto& v : vars)
            if (!v.is_cat()) ++n;
        return n;
    }
    int c() const { return static_cast<int>(vars.size()) - d(); }

    std::vector<int> cat_levels() const {
        std::vector<int> out;
        for (const auto& v : vars)
            if (v.is_cat()) out.push_back(static_cast<int>(v.levels.size()));
        return out;
    }

    // Assemble the full raw vector from continuous raw values (in order of
    // the continuous variables) and level indices (in order of the
    // categorical variables), with range checks.
    double evaluate(const Eigen::VectorXd& cont_raw, const std::vector<int>& lvls) const {
        Eigen::VectorXd full(static_cast<Eigen::Index>(vars.size()));
        int ic = 0, ik = 0;
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const Variable& v = vars[i];
            if (v.is_cat()) {
                const int h = lvls.at(static_cast<std::size_t>(ik++));
                if (h < 0 || h >= static_cast<int>(v.levels.size()))
                    throw std::out_of_range(name + ": level index for " + v.name);
                full[static_cast<Eigen::Index>(i)] = v.levels[static_cast<std::size_t>(h)];
            } else {
                const double x = cont_raw[ic++];
                if (!(x >= v.lo && x <= v.hi))
                    throw DomainError(name + ": " + v.name + " out of range");
                full[static_cast<Eigen::Index>(i)] = x;
            }
        }
        return response(full);
    }

    SearchSpace search_space() const {
        SearchSpace s;
        s.lo.resize(d());
        s.hi.resize(d());
        int ic = 0;
        for (const auto& v : vars)
            if (!v.is_cat()) {
                s.lo[ic] = v.lo;
                s.hi[ic] = v.hi;
                ++ic;
            }
        s.cat_levels = cat_levels();
        return s;
    }

    // Black-box objective over normalized MixedPoints.
    Objective objective() const {
        const BenchmarkSpec copy = *this;
        const SearchSpace space = search_space();
        return [copy, space](const MixedPoint& z) {
            return copy.evaluate(space.to_raw(z.x), z.h);
        };
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["name"] = name;
        j["variables"] = nlohmann::json::array();
        for (const auto& v : vars) {
            nlohmann::json jv;
            jv["name"] = v.name;
            jv["min"] = v.lo;
            jv["max"] = v.hi;
            if (v.is_cat()) {
                jv["levels"] = v.levels;
                if (!v.labels.empty()) jv["labels"] = v.labels;
            }
            j["variables"].push_back(jv);
        }
        return j;
    }
};

// Replace each named continuous variable by four equally spaced levels
// min + i (max-min)/3. A degenerate range is permitted with a warning.
inline BenchmarkSpec categorize(const BenchmarkSpec& raw, const std::vector<std::string>& which) {
    BenchmarkSpec out = raw;
    for (const std::string& name : which) {
        bool found = false;
        for (Variable& v : out.vars) {
            if (v.name != name) continue;
            if (v.is_cat()) throw ConfigError("categorize: '" + name + "' already categorical");
            found = true;
            if (v.lo == v.hi)
                std::cerr << "categorize: warning: degenerate range for '" << name << "'\n";
            v.levels.clear();
            for (int i = 0; i < 4; ++i)
                v.levels.push_back(v.lo + i * (v.hi - v.lo) / 3.0);
        }
        if (!found) throw ConfigError("categorize: unknown variable '" + name + "'");
    }
    return out;
}

namespace detail {

inline BenchmarkSpec otl_raw_spec() {
    BenchmarkSpec s;
    s.name = "otl";
    s.vars = {{"R_b1", 50, 150, {}, {}},  {"R_b2", 25, 70, {}, {}}, {"R_f", 0.5, 3, {}, {}},
              {"R_c1", 1.2, 2.5, {}, {}}, {"R_c2", 0.25, 1.2, {}, {}}, {"beta", 30, 50, {}, {}}};
    s.response = [](const Eigen::VectorXd& v) { return otl_formula(v); };
    return s;
}

inline BenchmarkSpec piston_raw_spec() {
    BenchmarkSpec s;
    s.name = "piston";
    s.vars = {{"M", 30, 60, {}, {}},        {"S", 0.005, 0.02, {}, {}},
              {"V_0", 0.002, 0.01, {}, {}}, {"k", 1000, 5000, {}, {}},
              {"P_0", 90000, 110000, {}, {}}, {"T", 290, 296, {}, {}},
              {"T_0", 340, 360, {}, {}}};
    s.response = [](const Eigen::VectorXd& v) { return piston_formula(v); };
    return s;
}

inline BenchmarkSpec borehole_raw_spec() {
    BenchmarkSpec s;
    s.name = "borehole";
    s.vars = {{"T_u", 63070, 115600, {}, {}}, {"H_u", 990, 1110, {}, {}},
              {"H_l", 700, 820, {}, {}},      {"r", 100, 50000, {}, {}},
              {"r_w", 0.05, 0.15, {}, {}},    {"T_l", 63.1, 116, {}, {}},
              {"L", 1120, 1680, {}, {}},      {"K_w", 9855, 12045, {}, {}}};
    s.response = [](const Eigen::VectorXd& v) { return borehole_formula(v); };
    return s;
}

}  // namespace detail

inline BenchmarkSpec benchmark_registry(const std::string& name) {
    if (name == "otl") return categorize(detail::otl_raw_spec(), {"R_f", "beta"});
    if (name == "piston") return categorize(detail::piston_raw_spec(), {"k", "P_0"});
    if (name == "borehole") return categorize(detail::borehole_raw_spec(), {"H_l", "r_w"});
    if (name == "beam") {
        BenchmarkSpec s;
        s.name = "beam";
        Variable shape;
        shape.name = "shape";
        shape.lo = 0;
        shape.hi = 4;
        shape.levels = {0, 1, 2, 3, 4};
        shape.labels = beam_shapes();
        s.vars = {{"L", 10, 20, {}, {}}, {"w", 1, 2, {}, {}}, shape};
        s.response = [](const Eigen::VectorXd& v) {
            const int idx = static_cast<int>(v[2] + 0.5);
            return beam_bending(v[0], v[1], beam_shapes()[static_cast<std::size_t>(idx)]);
        };
        return s;
    }
    if (name == "func2c") {
        BenchmarkSpec s;
        s.name = "func2c";
        s.vars = {{"x1", -1, 1, {}, {}},
                  {"x2", -1, 1, {}, {}},
                  {"h1", 0, 2, {0, 1, 2}, {"ros", "cam", "bea"}},
                  {"h2", 0, 4, {0, 1, 2, 3, 4}, {"+ros", "+cam", "+bea", "+bea", "+bea"}}};
        s.response = [](const Eigen::VectorXd& v) {
            return func2c(Eigen::Vector2d(v[0], v[1]), static_cast<int>(v[2] + 0.5),
                          static_cast<int>(v[3] + 0.5));
        };
        return s;
    }
    if (name == "func3c") {
        BenchmarkSpec s;
        s.name = "func3c";
        s.vars = {{"x1", -1, 1, {}, {}},
                  {"x2", -1, 1, {}, {}},
                  {"h1", 0, 2, {0, 1, 2}, {"ros", "cam", "bea"}},
                  {"h2", 0, 4, {0, 1, 2, 3, 4}, {"+ros", "+cam", "+bea", "+bea", "+bea"}},
                  {"h3", 0, 3, {0, 1, 2, 3}, {"+5cam", "+2ros", "+2bea", "+3bea"}}};
        s.response = [](const Eigen::VectorXd& v) {
            return func3c(Eigen::Vector2d(v[0], v[1]), static_cast<int>(v[2] + 0.5),
                          static_cast<int>(v[3] + 0.5), static_cast<int>(v[4] + 0.5));
        };
        return s;
    }
    if (name == "ackley4c") {
        BenchmarkSpec s;
        s.name = "ackley4c";
        for (int k = 1; k <= 4; ++k) {
            Variable h;
            h.name = "h" + std::to_string(k);
            h.lo = 0;
            h.hi = 1;
            h.levels = {0.0, 0.5, 1.0};
            s.vars.push_back(h);
        }
        s.vars.push_back({"x1", -1, 1, {}, {}});
        s.vars.push_back({"x2", -1, 1, {}, {}});
        s.vars.push_back({"x3", -1, 1, {}, {}});
        s.response = [](const Eigen::VectorXd& v) {
            // level values already substituted; evaluate Ackley directly
            const double n = 7.0;
            const double s1 = v.squaredNorm() / n;
            const double s2 = (2.0 * M_PI * v.array()).cos().sum() / n;
            return -20.0 * std::exp(-0.2 * std::sqrt(s1)) - std::exp(s2) + 20.0 + std::exp(1.0);
        };
        Optimum opt;
        opt.value = 0.0;
        opt.x_raw = Eigen::VectorXd::Zero(3);
        opt.h = {0, 0, 0, 0};
        s.optimum = opt;
        return s;
    }
    if (name == "toy1d") {
        // cheap smooth toy for plumbing tests
        BenchmarkSpec s;
        s.name = "toy1d";
        s.vars = {{"x", 0, 1, {}, {}}, {"h", 0, 2, {0, 1, 2}, {"a", "b", "c"}}};
        s.response = [](const Eigen::VectorXd& v) {
            return std::sin(3.0 * v[0]) + 0.5 * v[1] + 0.2 * v[0] * v[1];
        };
        return s;
    }
    throw ConfigError("unknown benchmark '" + name + "'");
}

inline std::vector<std::string> benchmark_names() {
    return {"otl", "piston", "borehole", "beam", "func2c", "func3c", "ackley4c", "toy1d"};
}

// ---- design generation ----

// Latin hypercube on the continuous dimensions (best of 100 candidate
// hypercubes by maximin pairwise distance), independent uniform categorical
// levels. Deterministic given the seed.
inline std::vector<MixedPoint> lhs_design(const SearchSpace& space, int n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("lhs_design: need n >= 1");
    space.validate();
    Rng rng(seed);
    const int d = space.d();

    Eigen::MatrixXd best(n, d);
    if (d == 0 || n == 1) {
        for (int j = 0; j < d; ++j) best(0, j) = rng.uniform01();
    } else {
        double best_score = -1.0;
        std::vector<int> strata(static_cast<std::size_t>(n));
        Eigen::MatrixXd cand(n, d);
        for (int c = 0; c < 100; ++c) {
            for (int j = 0; j < d; ++j) {
                for (int i = 0; i < n; ++i) strata[static_cast<std::size_t>(i)] = i;
                rng.shuffle(strata);
                for (int i = 0; i < n; ++i)
                    cand(i, j) = (strata[static_cast<std::size_t>(i)] + rng.uniform01()) / n;
            }
            double score = std::numeric_limits<double>::infinity();
            for (int p = 0; p < n && score > best_score; ++p)
                for (int q = p + 1; q < n; ++q)
                    score = std::min(score, (cand.row(p) - cand.row(q)).squaredNorm());
            if (score > best_score) {
                best_score = score;
                best = cand;
            }
        }
    }
    std::vector<MixedPoint> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        MixedPoint z;
        z.x = best.row(i).transpose();
        z.h.resize(static_cast<std::size_t>(space.c()));
        for (int k = 0; k < space.c(); ++k)
            z.h[static_cast<std::size_t>(k)] =
                rng.uniform_int(space.cat_levels[static_cast<std::size_t>(k)]);
        out.push_back(std::move(z));
    }
    return out;
}

// ---- external objective adapter ----

// Process-boundary protocol for user-supplied objectives: each candidate is
// written as one JSON-lines record {"x": [raw...], "h": [indices...]} on the
// command's stdin and one line is read back (a bare number or {"y": value}).
class ExternalObjective {
public:
    ExternalObjective(std::string command, SearchSpace space)
        : command_(std::move(command)), space_(std::move(space)) {
        space_.validate();
    }

    double operator()(const MixedPoint& z) const {
        nlohmann::json rec;
        const Eigen::VectorXd raw = space_.to_raw(z.x);
        rec["x"] = std::vector<double>(raw.data(), raw.data() + raw.size());
        rec["h"] = z.h;

        char tmpl[] = "/tmp/wegp_objXXXXXX";
        const int fd = mkstemp(tmpl);
        if (fd < 0) throw std::runtime_error("ExternalObjective: mkstemp failed");
        {
            std::ofstream f(tmpl);
            f << rec.dump() << '\n';
        }
        close(fd);
        const std::string cmd = command_ + " < " + tmpl;
        FILE* pipe = popen(cmd.c_str(), "r");
        if (!pipe) {
            std::remove(tmpl);
            throw std::runtime_error("ExternalObjective: popen failed");
        }
        char buf[4096];
        std::string line;
        if (std::fgets(buf, sizeof(buf), pipe)) line = buf;
        const int rc = pclose(pipe);
        std::remove(tmpl);
        if (rc != 0 || line.empty())
            throw std::runtime_error("ExternalObjective: command failed");
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            if (j.is_number()) return j.get<double>();
            return j.at("y").get<double>();
        } catch (const nlohmann::json::exception&) {
            return std::stod(line);
        }
    }

private:
    std::string command_;
    SearchSpace space_;
};

}  // namespace wegp
