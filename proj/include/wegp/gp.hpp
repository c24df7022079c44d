#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <memory>
#include <vector>

#include "wegp/kernel.hpp"

namespace wegp {

struct Dataset {
    std::vector<MixedPoint> points;
    Eigen::VectorXd y;

    int size() const { return static_cast<int>(points.size()); }

    void validate(const KernelSpec& spec) const {
        if (static_cast<Eigen::Index>(points.size()) != y.size())
            throw DimensionError("Dataset: points/response length mismatch");
        if (points.empty()) throw DimensionError("Dataset: need at least one observation");
        for (const auto& z : points) {
            if (z.x.size() != spec.d || static_cast<int>(z.h.size()) != spec.cat_count())
                throw DimensionError("Dataset: point does not conform to kernel spec");
        }
    }
};

struct Prediction {
    double mean = 0.0;
    double var = 0.0;
};

namespace detail {

// Pairwise structures that depend only on (points, spec): per-dimension
// squared coordinate differences and per-variable level indices. Building
// these once per dataset keeps the per-evaluation cost of the likelihood
// at one Cholesky plus O(P n^2) contractions.
struct PairCache {
    int n = 0, d = 0, M = 0;
    std::vector<Eigen::MatrixXd> dx2;
    std::vector<Eigen::VectorXi> levels;

    PairCache() = default;

    PairCache(const std::vector<MixedPoint>& pts, const KernelSpec& spec) {
        n = static_cast<int>(pts.size());
        d = spec.d;
        M = spec.weight_count();
        dx2.reserve(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            Eigen::MatrixXd m(n, n);
            for (int p = 0; p < n; ++p) {
                m(p, p) = 0.0;
                for (int q = p + 1; q < n; ++q) {
                    const double dx = pts[static_cast<std::size_t>(p)].x[j] -
                                      pts[static_cast<std::size_t>(q)].x[j];
                    m(p, q) = m(q, p) = dx * dx;
                }
            }
            dx2.push_back(std::move(m));
        }
        levels.reserve(spec.bases.size());
        for (int k = 0; k < spec.cat_count(); ++k) {
            Eigen::VectorXi lv(n);
            for (int p = 0; p < n; ++p) {
                const int h = pts[static_cast<std::size_t>(p)].h[static_cast<std::size_t>(k)];
                if (h < 0 || h >= spec.cat_levels[static_cast<std::size_t>(k)])
                    throw std::out_of_range("PairCache: level index out of range");
                lv[p] = h;
            }
            levels.push_back(std::move(lv));
        }
    }
};

// Combined weighted squared distance matrix S, zero diagonal.
inline Eigen::MatrixXd combined_sqdist(const PairCache& pc, const KernelSpec& spec,
                                       const HyperParams& hp) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(pc.n, pc.n);
    for (int j = 0; j < pc.d; ++j) S.noalias() += hp.theta[j] * pc.dx2[static_cast<std::size_t>(j)];
    for (int k = 0; k < spec.cat_count(); ++k) {
        const auto& basis = spec.bases[static_cast<std::size_t>(k)];
        const auto& w = hp.weights[static_cast<std::size_t>(k)];
        const int ck = spec.cat_levels[static_cast<std::size_t>(k)];
        Eigen::MatrixXd small = Eigen::MatrixXd::Zero(ck, ck);
        for (int i = 0; i < w.size(); ++i)
            small += w[i] * basis.bases[static_cast<std::size_t>(i)].d2;
        const auto& lv = pc.levels[static_cast<std::size_t>(k)];
        for (int p = 0; p < pc.n; ++p)
            for (int q = p + 1; q < pc.n; ++q) {
                const double v = small(lv[p], lv[q]);
                S(p, q) += v;
                S(q, p) += v;
            }
    }
    return S;
}

struct Factorization {
    Eigen::MatrixXd L;
    double jitter = 0.0;
    bool ok = false;
    std::vector<double> ladder;
};

// Cholesky with jitter escalation: 1e-8 * sigma2, x10 per rung, up to
// 1e-4 * sigma2.
inline Factorization factorize_with_ladder(const Eigen::MatrixXd& K_base, double sigma2) {
    Factorization f;
    double jitter = 1e-8 * sigma2;
    for (int rung = 0; rung < 5; ++rung, jitter *= 10.0) {
        f.ladder.push_back(jitter);
        Eigen::MatrixXd K = K_base;
        K.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(K);
        if (llt.info() == Eigen::Success) {
            f.L = llt.matrixL();
            if (f.L.diagonal().minCoeff() > 0.0 && f.L.allFinite()) {
                f.jitter = jitter;
                f.ok = true;
                return f;
            }
        }
    }
    return f;
}

// Log marginal likelihood with gradient on the unconstrained scale.
// Gradient layout: [log sigma2, logit theta_0..d-1, log w (k-major), mu,
// log noise]; the log-noise entry is 0 when noise == 0.
struct LmlEval {
    double value = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd L;
    Eigen::VectorXd alpha;
    double jitter = 0.0;
    bool ok = false;
    std::vector<double> ladder;
};

inline LmlEval lml_eval(const PairCache& pc, const Eigen::VectorXd& y, const KernelSpec& spec,
                        const HyperParams& hp, bool want_grad) {
    const int n = pc.n;
    const bool se = spec.family == KernelFamily::SquaredExponential;
    LmlEval out;

    const Eigen::MatrixXd S = combined_sqdist(pc, spec, hp);
    Eigen::MatrixXd knf(n, n);
    Eigen::MatrixXd dprof;  // sigma2 * dprofile/ds, Matern families only
    if (se) {
        knf = hp.sigma2 * (-S).array().exp().matrix();
    } else {
        knf.resize(n, n);
        if (want_grad) dprof.resize(n, n);
        for (int p = 0; p < n; ++p)
            for (int q = p; q < n; ++q) {
                const double s = S(p, q);
                const double v = hp.sigma2 * matern_profile(spec.family, std::sqrt(s));
                knf(p, q) = knf(q, p) = v;
                if (want_grad) {
                    const double dv = hp.sigma2 * matern_dprofile_ds(spec.family, s);
                    dprof(p, q) = dprof(q, p) = dv;
                }
            }
    }

    Eigen::MatrixXd K_base = knf;
    K_base.diagonal().array() += hp.noise;
    Factorization fac = factorize_with_ladder(K_base, hp.sigma2);
    out.ladder = fac.ladder;
    if (!fac.ok) return out;
    out.jitter = fac.jitter;
    out.L = std::move(fac.L);

    const Eigen::VectorXd r = y.array() - hp.mu;
    const Eigen::VectorXd v = out.L.triangularView<Eigen::Lower>().solve(r);
    out.alpha = out.L.transpose().triangularView<Eigen::Upper>().solve(v);
    out.value = -0.5 * r.dot(out.alpha) - out.L.diagonal().array().log().sum() -
                0.5 * n * std::log(2.0 * M_PI);
    out.ok = std::isfinite(out.value);
    if (!out.ok || !want_grad) return out;

    // A = alpha alpha^T - K^{-1}; dL/dphi = 1/2 sum(A o dK/dphi).
    Eigen::MatrixXd Linv = Eigen::MatrixXd::Identity(n, n);
    out.L.triangularView<Eigen::Lower>().solveInPlace(Linv);
    Eigen::MatrixXd A = -(Linv.transpose() * Linv);
    A.noalias() += out.alpha * out.alpha.transpose();

    const Eigen::MatrixXd B = se ? (A.array() * knf.array()).matrix()
                                 : (A.array() * dprof.array()).matrix();
    const double sign = se ? -0.5 : 0.5;
    const double trA = A.trace();

    const int d = pc.d, M = pc.M;
    out.grad = Eigen::VectorXd::Zero(1 + d + M + 2);
    // d/d log sigma2; includes the jitter term, which scales with sigma2
    out.grad[0] = 0.5 * ((A.array() * knf.array()).sum() + out.jitter * trA);
    for (int j = 0; j < d; ++j) {
        const double th = hp.theta[j];
        if (!(th > 0.0 && th < 1.0))
            throw ValidationError("lml gradient: theta must lie in (0,1) for the logit scale");
        const double raw = sign * (B.array() * pc.dx2[static_cast<std::size_t>(j)].array()).sum();
        out.grad[1 + j] = raw * th * (1.0 - th);
    }
    int at = 1 + d;
    for (int k = 0; k < spec.cat_count(); ++k) {
        const auto& basis = spec.bases[static_cast<std::size_t>(k)];
        const auto& lv = pc.levels[static_cast<std::size_t>(k)];
        const int ck = spec.cat_levels[static_cast<std::size_t>(k)];
        // aggregate B by level pair, then contract with each base EDM
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(ck, ck);
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q) C(lv[p], lv[q]) += B(p, q);
        const auto& w = hp.weights[static_cast<std::size_t>(k)];
        for (int i = 0; i < basis.size(); ++i) {
            const double raw =
                sign * (C.array() * basis.bases[static_cast<std::size_t>(i)].d2.array()).sum();
            out.grad[at++] = raw * w[i];  // d/d log w = w * d/dw (0 at w = 0)
        }
    }
    out.grad[1 + d + M] = out.alpha.sum();                 // d/d mu
    out.grad[1 + d + M + 1] = 0.5 * hp.noise * trA;        // d/d log noise
    return out;
}

}  // namespace detail

// Exact GP conditioned on one hyperparameter assignment.
struct FittedGp {
    KernelSpec spec;
    HyperParams hp;
    Eigen::MatrixXd chol;   // lower-triangular factor of K
    Eigen::VectorXd alpha;  // K^{-1} (y - mu 1)
    Dataset data;
    double jitter = 0.0;
    std::shared_ptr<std::atomic<long long>> var_clamp_count =
        std::make_shared<std::atomic<long long>>(0);
};

inline FittedGp fit(const Dataset& data, const KernelSpec& spec, const HyperParams& hp) {
    spec.validate();
    hp.validate(spec);
    data.validate(spec);
    detail::PairCache pc(data.points, spec);
    detail::LmlEval ev = detail::lml_eval(pc, data.y, spec, hp, false);
    if (ev.L.size() == 0)
        throw ConditioningError("fit: Cholesky failed at every jitter rung", ev.ladder);
    FittedGp gp;
    gp.spec = spec;
    gp.hp = hp;
    gp.chol = std::move(ev.L);
    gp.alpha = std::move(ev.alpha);
    gp.data = data;
    gp.jitter = ev.jitter;
    return gp;
}

// Noise-free latent prediction. The raw variance sigma2 - ||L^{-1}k||^2 is
// clamped at zero; excursions below -1e-8 * sigma2 bump the warning counter.
inline Prediction predict(const FittedGp& gp, const MixedPoint& z) {
    const int n = gp.data.size();
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i)
        k[i] = kernel_value(z, gp.data.points[static_cast<std::size_t>(i)], gp.spec, gp.hp);
    Prediction pr;
    pr.mean = gp.hp.mu + k.dot(gp.alpha);
    const Eigen::VectorXd v = gp.chol.triangularView<Eigen::Lower>().solve(k);
    double raw = gp.hp.sigma2 - v.squaredNorm();
    if (raw < 0.0) {
        if (raw < -1e-8 * gp.hp.sigma2) gp.var_clamp_count->fetch_add(1);
        raw = 0.0;
    }
    pr.var = raw;
    return pr;
}

struct LmlResult {
    double value = 0.0;
    Eigen::VectorXd grad;  // [log sigma2, logit theta, log w (k-major), mu, log noise]
};

inline LmlResult log_marginal_likelihood(const Dataset& data, const KernelSpec& spec,
                                         const HyperParams& hp) {
    spec.validate();
    hp.validate(spec);
    data.validate(spec);
    detail::PairCache pc(data.points, spec);
    detail::LmlEval ev = detail::lml_eval(pc, data.y, spec, hp, true);
    if (!ev.ok)
        throw ConditioningError("log_marginal_likelihood: factorization failed", ev.ladder);
    return LmlResult{ev.value, ev.grad};
}

}  // namespace wegp
