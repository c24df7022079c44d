#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "wegp/inference.hpp"

namespace wegp {

// Mixed search domain: raw continuous box bounds plus categorical level
// counts. Continuous coordinates inside MixedPoint stay normalized to
// [0,1]; the bounds map them back to raw units.
struct SearchSpace {
    Eigen::VectorXd lo, hi;
    std::vector<int> cat_levels;
    int n_cand = 500;

    int d() const { return static_cast<int>(lo.size()); }
    int c() const { return static_cast<int>(cat_levels.size()); }

    void validate() const {
        if (lo.size() != hi.size()) throw DimensionError("SearchSpace: bound length mismatch");
        for (int j = 0; j < lo.size(); ++j)
            if (!(lo[j] < hi[j]) || !std::isfinite(lo[j]) || !std::isfinite(hi[j]))
                throw ValidationError("SearchSpace: need finite lower < upper bounds");
        for (int ck : cat_levels)
            if (ck < 2) throw ValidationError("SearchSpace: categorical needs >= 2 levels");
        if (n_cand < 1) throw ValidationError("SearchSpace: n_cand must be >= 1");
    }

    Eigen::VectorXd to_raw(const Eigen::VectorXd& x01) const {
        return lo.array() + (hi - lo).array() * x01.array();
    }
};

// Standard normal pdf/cdf. std::erfc is accurate to about 1e-16, well
// inside the 1e-12 budget for the EI closed form.
inline double norm_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI); }
inline double norm_cdf(double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); }

// Minimization expected improvement in closed form.
inline double expected_improvement(double mean, double sd, double y_min) {
    if (sd <= 1e-12) return std::max(y_min - mean, 0.0);
    const double u = (y_min - mean) / sd;
    return (y_min - mean) * norm_cdf(u) + sd * norm_pdf(u);
}

inline double ei_single(const MixedPoint& z, const FittedGp& gp, double y_min) {
    const Prediction p = predict(gp, z);
    return expected_improvement(p.mean, std::sqrt(p.var), y_min);
}

// Posterior-averaged EI: the arithmetic mean of per-draw EI values. The
// incumbent is standardized into the ensemble's units and the average is
// scaled back, so the result is in raw response units.
inline double ei_averaged(const MixedPoint& z, const GpEnsemble& ens, double y_min_raw) {
    if (ens.gps.empty()) throw ValidationError("ei_averaged: need at least one fitted draw");
    const double y_min_std = (y_min_raw - ens.y_shift) / ens.y_scale;
    double acc = 0.0;
    for (const FittedGp& gp : ens.gps) acc += ei_single(z, gp, y_min_std);
    return ens.y_scale * acc / static_cast<double>(ens.gps.size());
}

inline MixedPoint sample_candidate(const SearchSpace& space, Rng& rng) {
    MixedPoint z;
    z.x.resize(space.d());
    for (int j = 0; j < space.d(); ++j) z.x[j] = rng.uniform01();
    z.h.resize(static_cast<std::size_t>(space.c()));
    for (int k = 0; k < space.c(); ++k)
        z.h[static_cast<std::size_t>(k)] = rng.uniform_int(space.cat_levels[static_cast<std::size_t>(k)]);
    return z;
}

// Acquisition optimization over a fresh pool of uniform candidates; ties
// break toward the lowest candidate index.
inline MixedPoint propose(const GpEnsemble& ens, double y_min_raw, const SearchSpace& space,
                          Rng& rng) {
    space.validate();
    MixedPoint best = sample_candidate(space, rng);
    double best_ei = ei_averaged(best, ens, y_min_raw);
    for (int i = 1; i < space.n_cand; ++i) {
        MixedPoint cand = sample_candidate(space, rng);
        const double e = ei_averaged(cand, ens, y_min_raw);
        if (e > best_ei) {
            best_ei = e;
            best = std::move(cand);
        }
    }
    return best;
}

struct TraceRow {
    int t = 0;
    double y = 0.0;
    double y_min = 0.0;
    double seconds = 0.0;
    bool fallback = false;
};

struct BoState {
    Dataset data;
    MixedPoint z_min;
    double y_min = 0.0;
    int iteration = 0;
    std::vector<TraceRow> trace;
};

// Objective raised an exception mid-run; the partial state is preserved.
struct ObjectiveError : std::runtime_error {
    ObjectiveError(const std::string& msg, BoState state)
        : std::runtime_error(msg), partial(std::move(state)) {}
    BoState partial;
};

using Objective = std::function<double(const MixedPoint&)>;

struct WeboConfig {
    NutsConfig nuts{200, 64, 0.8, 10, 0};
    PriorSpec prior;
    KernelFamily family = KernelFamily::SquaredExponential;
    BasisScheme scheme = BasisScheme::Ordinal;
    int m_policy = 0;               // 0 -> c_k(c_k-1)/2 bases per variable
    int ei_subsample = 16;          // draws used per EI evaluation
    bool map_only = false;          // skip NUTS and use the MAP point
    bool random_search = false;     // baseline: uniform proposals, same accounting
    MapConfig map;
    std::uint64_t seed = 0;
};

// The sequential model-based optimization loop: refit the posterior on the
// accumulated data, propose the EI argmax over a candidate pool, query the
// objective, repeat. A sampler-health failure on one iteration falls back
// to the MAP point for that iteration and is recorded in the trace.
inline BoState run_webo(const Objective& objective, const SearchSpace& space,
                        const Dataset& init, int budget, const WeboConfig& cfg) {
    space.validate();
    if (init.size() < 1) throw ValidationError("run_webo: need a non-empty initial design");

    Rng spec_rng(derive_seed(cfg.seed, 0xb0));
    const KernelSpec kspec = make_kernel_spec(space.d(), space.cat_levels, cfg.scheme,
                                              cfg.m_policy, cfg.family, spec_rng);

    BoState st;
    st.data = init;
    Eigen::Index imin = 0;
    st.y_min = init.y.minCoeff(&imin);
    st.z_min = init.points[static_cast<std::size_t>(imin)];

    for (int t = 1; t <= budget; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        bool fallback = false;
        MixedPoint z;
        Rng cand_rng(derive_seed(cfg.seed, 0xca, static_cast<std::uint64_t>(t)));
        if (cfg.random_search) {
            z = sample_candidate(space, cand_rng);
        } else {
            PosteriorDraws draws;
            if (cfg.map_only) {
                MapConfig mc = cfg.map;
                mc.seed = derive_seed(cfg.seed, 0x3a, static_cast<std::uint64_t>(t));
                draws = map_draws(st.data, kspec, cfg.prior, mc);
            } else {
                NutsConfig nc = cfg.nuts;
                nc.seed = derive_seed(cfg.seed, 0x17, static_cast<std::uint64_t>(t));
                try {
                    draws = nuts_sample(st.data, kspec, cfg.prior, nc);
                } catch (const SamplerHealthError&) {
                    fallback = true;
                    MapConfig mc = cfg.map;
                    mc.seed = derive_seed(cfg.seed, 0x3a, static_cast<std::uint64_t>(t));
                    draws = map_draws(st.data, kspec, cfg.prior, mc);
                }
            }
            const GpEnsemble ens = fit_ensemble(st.data, kspec, draws, cfg.ei_subsample);
            z = propose(ens, st.y_min, space, cand_rng);
        }

        double y;
        try {
            y = objective(z);
        } catch (const std::exception& e) {
            throw ObjectiveError(std::string("run_webo: objective failed at t=") +
                                     std::to_string(t) + ": " + e.what(),
                                 std::move(st));
        }
        st.data.points.push_back(z);
        st.data.y.conservativeResize(st.data.y.size() + 1);
        st.data.y[st.data.y.size() - 1] = y;
        if (y < st.y_min) {
            st.y_min = y;
            st.z_min = z;
        }
        st.iteration = t;
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        st.trace.push_back(TraceRow{t, y, st.y_min, secs, fallback});
    }
    return st;
}

// Trace rows in the streaming CSV schema.
inline constexpr const char* kTraceCsvHeader = "replication,t,y_t,y_min_t,seconds,fallback_used";

inline void write_trace_rows(std::ostream& os, const BoState& st, int replication) {
    os.precision(17);
    for (const TraceRow& r : st.trace)
        os << replication << ',' << r.t << ',' << r.y << ',' << r.y_min << ',' << r.seconds
           << ',' << (r.fallback ? 1 : 0) << '\n';
}

}  // namespace wegp
