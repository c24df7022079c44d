#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wegp/edm.hpp"
#include "wegp/errors.hpp"

namespace wegp {

// One mixed input: continuous coordinates normalized to [0,1] per dimension
// plus a 0-based level index per categorical variable.
struct MixedPoint {
    Eigen::VectorXd x;
    std::vector<int> h;
};

enum class KernelFamily { SquaredExponential, Matern12, Matern32, Matern52 };

inline std::string family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::SquaredExponential: return "squared-exponential";
        case KernelFamily::Matern12: return "matern12";
        case KernelFamily::Matern32: return "matern32";
        case KernelFamily::Matern52: return "matern52";
    }
    return "?";
}

struct KernelSpec {
    int d = 0;                       // continuous dimension
    std::vector<int> cat_levels;     // c_k per categorical variable
    std::vector<BaseEdmSet> bases;   // one base set per categorical variable
    KernelFamily family = KernelFamily::SquaredExponential;

    int cat_count() const { return static_cast<int>(cat_levels.size()); }

    int weight_count() const {
        int m = 0;
        for (const auto& b : bases) m += b.size();
        return m;
    }

    void validate() const {
        if (d < 0) throw ValidationError("KernelSpec: d must be >= 0");
        if (bases.size() != cat_levels.size())
            throw ValidationError("KernelSpec: one base set per categorical variable");
        for (std::size_t k = 0; k < bases.size(); ++k) {
            if (cat_levels[k] < 2) throw ValidationError("KernelSpec: levels must be >= 2");
            if (bases[k].n != cat_levels[k])
                throw ValidationError("KernelSpec: base set level count mismatch");
        }
        if (d == 0 && cat_levels.empty())
            throw ValidationError("KernelSpec: empty input space");
    }
};

// One full kernel-hyperparameter assignment in constrained form.
struct HyperParams {
    double sigma2 = 1.0;                    // process variance
    Eigen::VectorXd theta;                  // inverse squared length scales, one per continuous dim
    std::vector<Eigen::VectorXd> weights;   // base-EDM weights, one vector per categorical variable
    double noise = 0.0;                     // observation noise variance
    double mu = 0.0;                        // constant prior mean

    void validate(const KernelSpec& spec) const {
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
            throw ValidationError("HyperParams: sigma2 must be positive and finite");
        if (theta.size() != spec.d) throw DimensionError("HyperParams: theta length != d");
        for (int j = 0; j < theta.size(); ++j)
            if (!(theta[j] > 0.0) || !std::isfinite(theta[j]))
                throw ValidationError("HyperParams: theta must be positive and finite");
        if (weights.size() != spec.bases.size())
            throw DimensionError("HyperParams: one weight vector per categorical variable");
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (weights[k].size() != spec.bases[k].size())
                throw DimensionError("HyperParams: weight vector length mismatch");
            for (int i = 0; i < weights[k].size(); ++i)
                if (!(weights[k][i] >= 0.0) || !std::isfinite(weights[k][i]))
                    throw ValidationError("HyperParams: weights must be non-negative and finite");
        }
        if (!(noise >= 0.0) || !std::isfinite(noise))
            throw ValidationError("HyperParams: noise must be non-negative and finite");
        if (!std::isfinite(mu)) throw ValidationError("HyperParams: mu must be finite");
    }

    Eigen::VectorXd flat_weights() const {
        int m = 0;
        for (const auto& w : weights) m += static_cast<int>(w.size());
        Eigen::VectorXd out(m);
        int at = 0;
        for (const auto& w : weights)
            for (int i = 0; i < w.size(); ++i) out[at++] = w[i];
        return out;
    }
};

inline double default_jitter(const HyperParams& hp) { return 1e-8 * hp.sigma2; }

// ---- Matern radial profiles (half-integer closed forms) ----

inline double matern_profile(KernelFamily f, double r) {
    switch (f) {
        case KernelFamily::Matern12:
            return std::exp(-r);
        case KernelFamily::Matern32: {
            const double a = std::sqrt(3.0) * r;
            return (1.0 + a) * std::exp(-a);
        }
        case KernelFamily::Matern52: {
            const double a = std::sqrt(5.0) * r;
            return (1.0 + a + a * a / 3.0) * std::exp(-a);
        }
        default:
            throw ValidationError("matern_profile: not a Matern family");
    }
}

// d/ds of matern_profile(sqrt(s)) where s = r^2. For nu = 1/2 the limit at
// s -> 0 is unbounded; the s == 0 case only arises for identically equal
// inputs, where the derivative is defined as 0.
inline double matern_dprofile_ds(KernelFamily f, double s) {
    const double r = std::sqrt(s);
    switch (f) {
        case KernelFamily::Matern12:
            if (s == 0.0) return 0.0;
            return -std::exp(-r) / (2.0 * r);
        case KernelFamily::Matern32:
            return -1.5 * std::exp(-std::sqrt(3.0) * r);
        case KernelFamily::Matern52: {
            const double a = std::sqrt(5.0) * r;
            return -(5.0 / 6.0) * (1.0 + a) * std::exp(-a);
        }
        default:
            throw ValidationError("matern_dprofile_ds: not a Matern family");
    }
}

// ---- pointwise kernel operations ----

// Categorical correlation exp(-sum_i w_k^(i) D_k^(i)[a][b]), in (0,1].
inline double cat_corr(int k, int a, int b, const KernelSpec& spec, const HyperParams& hp) {
    if (k < 0 || k >= spec.cat_count()) throw std::out_of_range("cat_corr: categorical index");
    const int ck = spec.cat_levels[static_cast<std::size_t>(k)];
    if (a < 0 || a >= ck || b < 0 || b >= ck) throw std::out_of_range("cat_corr: level index");
    const auto& basis = spec.bases[static_cast<std::size_t>(k)];
    const auto& w = hp.weights[static_cast<std::size_t>(k)];
    double s = 0.0;
    for (int i = 0; i < w.size(); ++i) s += w[i] * basis.bases[static_cast<std::size_t>(i)].d2(a, b);
    return std::exp(-s);
}

// Continuous ARD correlation exp(-sum_j theta_j (xp_j - xq_j)^2).
inline double cont_corr(const Eigen::VectorXd& xp, const Eigen::VectorXd& xq,
                        const HyperParams& hp) {
    if (xp.size() != xq.size() || xp.size() != hp.theta.size())
        throw DimensionError("cont_corr: dimension mismatch");
    double s = 0.0;
    for (int j = 0; j < xp.size(); ++j) {
        const double dx = xp[j] - xq[j];
        s += hp.theta[j] * dx * dx;
    }
    return std::exp(-s);
}

namespace detail {

// Weighted squared mixed distance sum_j theta_j dx_j^2 + sum_k sum_i w D.
inline double mixed_sqdist(const MixedPoint& zp, const MixedPoint& zq, const KernelSpec& spec,
                           const HyperParams& hp) {
    double s = 0.0;
    for (int j = 0; j < spec.d; ++j) {
        const double dx = zp.x[j] - zq.x[j];
        s += hp.theta[j] * dx * dx;
    }
    for (int k = 0; k < spec.cat_count(); ++k) {
        const auto& basis = spec.bases[static_cast<std::size_t>(k)];
        const auto& w = hp.weights[static_cast<std::size_t>(k)];
        const int a = zp.h[static_cast<std::size_t>(k)];
        const int b = zq.h[static_cast<std::size_t>(k)];
        const int ck = spec.cat_levels[static_cast<std::size_t>(k)];
        if (a < 0 || a >= ck || b < 0 || b >= ck)
            throw std::out_of_range("kernel: level index out of range");
        for (int i = 0; i < w.size(); ++i)
            s += w[i] * basis.bases[static_cast<std::size_t>(i)].d2(a, b);
    }
    return s;
}

}  // namespace detail

// Mixed-input covariance. Squared-exponential: the product kernel
// sigma2 * exp(-sum theta dx^2) * prod_k exp(-sum w D). Matern: the radial
// profile applied to the combined distance r = sqrt(mixed_sqdist).
inline double kernel_value(const MixedPoint& zp, const MixedPoint& zq, const KernelSpec& spec,
                           const HyperParams& hp) {
    if (zp.x.size() != spec.d || zq.x.size() != spec.d)
        throw DimensionError("kernel_value: continuous dimension mismatch");
    if (static_cast<int>(zp.h.size()) != spec.cat_count() ||
        static_cast<int>(zq.h.size()) != spec.cat_count())
        throw DimensionError("kernel_value: categorical arity mismatch");
    const double s = detail::mixed_sqdist(zp, zq, spec, hp);
    if (spec.family == KernelFamily::SquaredExponential) return hp.sigma2 * std::exp(-s);
    return hp.sigma2 * matern_profile(spec.family, std::sqrt(s));
}

// Full covariance matrix including observation noise and jitter on the
// diagonal. Computed on the upper triangle and mirrored. A negative
// `jitter` selects the default 1e-8 * sigma2.
inline Eigen::MatrixXd kernel_matrix(const std::vector<MixedPoint>& points,
                                     const KernelSpec& spec, const HyperParams& hp,
                                     double jitter = -1.0) {
    const int n = static_cast<int>(points.size());
    if (n < 1) throw DimensionError("kernel_matrix: need at least one point");
    if (jitter < 0.0) jitter = default_jitter(hp);
    Eigen::MatrixXd K(n, n);
    for (int p = 0; p < n; ++p) {
        K(p, p) = hp.sigma2 + hp.noise + jitter;
        for (int q = p + 1; q < n; ++q) {
            const double v = kernel_value(points[static_cast<std::size_t>(p)],
                                          points[static_cast<std::size_t>(q)], spec, hp);
            K(p, q) = v;
            K(q, p) = v;
        }
    }
    return K;
}

// Per-hyperparameter derivative matrices of kernel_matrix. Scale parameters
// (sigma2, noise) are differentiated on the log scale, theta and the weights
// on their raw scale; this matches how each enters the model.
struct KernelGradients {
    Eigen::MatrixXd d_log_sigma2;
    std::vector<Eigen::MatrixXd> d_theta;    // one per continuous dim
    std::vector<Eigen::MatrixXd> d_weight;   // flattened k-major over (k, i)
    Eigen::MatrixXd d_log_noise;
};

inline KernelGradients kernel_gradients(const std::vector<MixedPoint>& points,
                                        const KernelSpec& spec, const HyperParams& hp,
                                        double jitter = -1.0) {
    const int n = static_cast<int>(points.size());
    if (n < 1) throw DimensionError("kernel_gradients: need at least one point");
    if (jitter < 0.0) jitter = default_jitter(hp);
    const bool se = spec.family == KernelFamily::SquaredExponential;

    // dK/dphi = factor(p,q) * delta_phi(p,q), where factor is K_nf for the
    // squared-exponential family and sigma2 * dprofile/ds for Matern.
    Eigen::MatrixXd knf(n, n), factor(n, n);
    for (int p = 0; p < n; ++p) {
        knf(p, p) = hp.sigma2;
        factor(p, p) = se ? hp.sigma2 : hp.sigma2 * matern_dprofile_ds(spec.family, 0.0);
        for (int q = p + 1; q < n; ++q) {
            const double s = detail::mixed_sqdist(points[static_cast<std::size_t>(p)],
                                                  points[static_cast<std::size_t>(q)], spec, hp);
            if (se) {
                knf(p, q) = knf(q, p) = hp.sigma2 * std::exp(-s);
                factor(p, q) = factor(q, p) = knf(p, q);
            } else {
                knf(p, q) = knf(q, p) = hp.sigma2 * matern_profile(spec.family, std::sqrt(s));
                factor(p, q) = factor(q, p) = hp.sigma2 * matern_dprofile_ds(spec.family, s);
            }
        }
    }

    KernelGradients g;
    g.d_log_sigma2 = knf + jitter * Eigen::MatrixXd::Identity(n, n);
    g.d_log_noise = hp.noise * Eigen::MatrixXd::Identity(n, n);
    const double sign = se ? -1.0 : 1.0;  // d(exp(-s))/ds vs chain rule through dprofile/ds

    g.d_theta.reserve(static_cast<std::size_t>(spec.d));
    for (int j = 0; j < spec.d; ++j) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double dx = points[static_cast<std::size_t>(p)].x[j] -
                                  points[static_cast<std::size_t>(q)].x[j];
                m(p, q) = m(q, p) = sign * factor(p, q) * dx * dx;
            }
        g.d_theta.push_back(std::move(m));
    }
    for (int k = 0; k < spec.cat_count(); ++k) {
        const auto& basis = spec.bases[static_cast<std::size_t>(k)];
        for (int i = 0; i < basis.size(); ++i) {
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q) {
                    const double dkv =
                        basis.bases[static_cast<std::size_t>(i)].d2(
                            points[static_cast<std::size_t>(p)].h[static_cast<std::size_t>(k)],
                            points[static_cast<std::size_t>(q)].h[static_cast<std::size_t>(k)]);
                    m(p, q) = m(q, p) = sign * factor(p, q) * dkv;
                }
            g.d_weight.push_back(std::move(m));
        }
    }
    return g;
}

// ---- base-set construction policies ----

enum class BasisScheme { Ordinal, Extreme, OrdinalThenExtreme, OneHot };

inline std::string scheme_name(BasisScheme s) {
    switch (s) {
        case BasisScheme::Ordinal: return "ordinal";
        case BasisScheme::Extreme: return "extreme";
        case BasisScheme::OrdinalThenExtreme: return "ordinal-then-extreme";
        case BasisScheme::OneHot: return "onehot";
    }
    return "?";
}

// Build one base set of size m for a variable with `levels` categories.
// OrdinalThenExtreme tops an exhausted ordinal family up with random
// extreme directions; the mixture is visible in the provenance tags.
inline BaseEdmSet build_basis(int levels, int m, BasisScheme scheme, Rng& rng) {
    switch (scheme) {
        case BasisScheme::Ordinal:
            return build_ordinal_basis(levels, m, rng);
        case BasisScheme::Extreme: {
            BaseEdmSet full = build_extreme_basis(levels, rng);
            if (m > full.size())
                throw ValidationError("build_basis: m exceeds cone dimension");
            full.bases.resize(static_cast<std::size_t>(m));
            full.provenance.resize(static_cast<std::size_t>(m));
            return full;
        }
        case BasisScheme::OneHot: {
            BaseEdmSet out;
            out.n = levels;
            out.bases.push_back(one_hot_edm(levels));
            out.provenance.push_back(BasisProvenance{BasisOrigin::External, {}, {}});
            return out;
        }
        case BasisScheme::OrdinalThenExtreme: {
            BaseEdmSet out;
            try {
                out = build_ordinal_basis(levels, m, rng);
            } catch (const BasisExhaustionError&) {
                out = build_ordinal_basis(levels, 1, rng);
                // retry upward from whatever rank is attainable
                for (int target = out.size() + 1; target <= m; ++target) {
                    try {
                        out = build_ordinal_basis(levels, target, rng);
                    } catch (const BasisExhaustionError&) {
                        break;
                    }
                }
            }
            if (out.size() < m) {
                detail::RankAccumulator rank(levels * (levels - 1) / 2);
                for (const Edm& e : out.bases) rank.try_add(upper_tri(e.d2));
                const int budget = 200 * m + 100;
                for (int attempt = 0; attempt < budget && out.size() < m; ++attempt) {
                    Eigen::VectorXd z = detail::random_null_unit(levels, rng);
                    if (z.norm() == 0.0) continue;
                    Edm cand = extreme_direction(ExtremeGenerator(z));
                    if (rank.try_add(upper_tri(cand.d2))) {
                        out.bases.push_back(std::move(cand));
                        out.provenance.push_back(
                            BasisProvenance{BasisOrigin::Extreme, {}, z});
                    }
                }
                if (out.size() < m)
                    throw BasisExhaustionError("build_basis: top-up failed", out.size());
            }
            return out;
        }
    }
    throw ValidationError("build_basis: unknown scheme");
}

// Assemble a KernelSpec for a mixed space. m_policy 0 selects the full
// pairwise count c_k(c_k-1)/2 per categorical variable (ignored for the
// one-hot scheme, which always has a single base).
inline KernelSpec make_kernel_spec(int d, const std::vector<int>& cat_levels,
                                   BasisScheme scheme, int m_policy, KernelFamily family,
                                   Rng& rng) {
    KernelSpec spec;
    spec.d = d;
    spec.cat_levels = cat_levels;
    spec.family = family;
    for (int ck : cat_levels) {
        const int full = ck * (ck - 1) / 2;
        const int m = (m_policy <= 0) ? full : std::min(m_policy, full);
        spec.bases.push_back(build_basis(ck, scheme == BasisScheme::OneHot ? 1 : m, scheme, rng));
    }
    spec.validate();
    return spec;
}

}  // namespace wegp
