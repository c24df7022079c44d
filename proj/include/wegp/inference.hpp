#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "wegp/gp.hpp"
#include "wegp/nuts.hpp"

namespace wegp {

// Hierarchical prior of the shrinkage model: log-normal process variance,
// uniform length-scale rates, and half-Cauchy global/local scales on the
// base-EDM weights. Responses are standardized internally, so the mu and
// noise priors are expressed in standardized units.
struct PriorSpec {
    double alpha = 0.1;            // global half-Cauchy scale
    double sigma2_log_mean = 0.0;  // sigma2 ~ LN(0, 10^2)
    double sigma2_log_sd = 10.0;
    double mu_mean = 0.0;          // mu ~ N(0, 10^2) on the standardized scale
    double mu_sd = 10.0;
    bool infer_noise = false;
    double noise_log_mean = -4.0;  // noise ~ LN(-4, 2^2) when inferred
    double noise_log_sd = 2.0;

    void validate() const {
        if (!(alpha > 0.0)) throw ValidationError("PriorSpec: alpha must be positive");
        if (!(sigma2_log_sd > 0.0) || !(mu_sd > 0.0) || !(noise_log_sd > 0.0))
            throw ValidationError("PriorSpec: scales must be positive");
    }
};

// Half-Cauchy log density for x > 0 with scale s:
// log 2 - log pi - log s - log(1 + (x/s)^2).
inline double half_cauchy_logpdf(double x, double s) {
    const double r = x / s;
    return std::log(2.0) - std::log(M_PI) - std::log(s) - std::log1p(r * r);
}

// Fixed packing of the unconstrained state:
//   [log sigma2, logit theta_1..d, log tau, log w (k-major), mu, (log noise)]
struct ParamLayout {
    int d = 0;
    std::vector<int> m_k;
    bool infer_noise = false;

    int weight_count() const {
        int m = 0;
        for (int v : m_k) m += v;
        return m;
    }
    int dim() const { return 3 + d + weight_count() + (infer_noise ? 1 : 0); }

    int i_log_sigma2() const { return 0; }
    int i_logit_theta(int j) const { return 1 + j; }
    int i_log_tau() const { return 1 + d; }
    int i_log_w(int flat) const { return 2 + d + flat; }
    int i_mu() const { return 2 + d + weight_count(); }
    int i_log_noise() const { return 3 + d + weight_count(); }

    static ParamLayout for_spec(const KernelSpec& spec, bool infer_noise) {
        ParamLayout l;
        l.d = spec.d;
        for (const auto& b : spec.bases) l.m_k.push_back(b.size());
        l.infer_noise = infer_noise;
        return l;
    }

    Eigen::VectorXd pack(const HyperParams& hp, double tau) const {
        Eigen::VectorXd u(dim());
        u[i_log_sigma2()] = std::log(hp.sigma2);
        for (int j = 0; j < d; ++j) {
            const double th = hp.theta[j];
            if (!(th > 0.0 && th < 1.0))
                throw ValidationError("pack: theta must lie in (0,1)");
            u[i_logit_theta(j)] = std::log(th) - std::log1p(-th);
        }
        u[i_log_tau()] = std::log(tau);
        int flat = 0;
        for (std::size_t k = 0; k < m_k.size(); ++k)
            for (int i = 0; i < m_k[k]; ++i) {
                const double w = hp.weights[k][i];
                if (!(w > 0.0)) throw ValidationError("pack: weights must be positive");
                u[i_log_w(flat++)] = std::log(w);
            }
        u[i_mu()] = hp.mu;
        if (infer_noise) {
            if (!(hp.noise > 0.0)) throw ValidationError("pack: noise must be positive");
            u[i_log_noise()] = std::log(hp.noise);
        }
        return u;
    }

    struct Unpacked {
        HyperParams hp;
        double tau = 0.0;
    };

    Unpacked unpack(const Eigen::VectorXd& u) const {
        Unpacked out;
        out.hp.sigma2 = std::exp(u[i_log_sigma2()]);
        out.hp.theta.resize(d);
        for (int j = 0; j < d; ++j) {
            const double v = u[i_logit_theta(j)];
            // clamp away from the saturated endpoints of the logit map
            out.hp.theta[j] = std::min(1.0 - 1e-15, std::max(1e-300, 1.0 / (1.0 + std::exp(-v))));
        }
        out.tau = std::exp(u[i_log_tau()]);
        int flat = 0;
        for (std::size_t k = 0; k < m_k.size(); ++k) {
            Eigen::VectorXd w(m_k[k]);
            for (int i = 0; i < m_k[k]; ++i) w[i] = std::exp(u[i_log_w(flat++)]);
            out.hp.weights.push_back(std::move(w));
        }
        out.hp.mu = u[i_mu()];
        out.hp.noise = infer_noise ? std::exp(u[i_log_noise()]) : 0.0;
        return out;
    }
};

// Unconstrained-space log posterior of the hierarchical GP, with exact
// gradient: marginal likelihood (on internally standardized responses)
// plus prior log densities plus log transform Jacobians. A conditioning
// failure in the factorization evaluates to -inf with zero gradient (NUTS
// treats the move as divergent).
class LogPosterior {
public:
    LogPosterior(const Dataset& data, const KernelSpec& spec, const PriorSpec& prior)
        : spec_(spec), prior_(prior), layout_(ParamLayout::for_spec(spec, prior.infer_noise)) {
        spec_.validate();
        prior_.validate();
        data.validate(spec_);
        shift_ = data.y.mean();
        const double var = (data.y.array() - shift_).square().sum() / data.size();
        scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
        std_data_ = data;
        std_data_.y = (data.y.array() - shift_) / scale_;
        cache_ = detail::PairCache(data.points, spec_);
    }

    const ParamLayout& layout() const { return layout_; }
    double y_shift() const { return shift_; }
    double y_scale() const { return scale_; }
    const Dataset& standardized_data() const { return std_data_; }

    // Prior + Jacobian part only, in unconstrained coordinates.
    double prior_only(const Eigen::VectorXd& u, Eigen::VectorXd* grad = nullptr) const {
        const ParamLayout& L = layout_;
        if (grad) grad->setZero(L.dim());
        double lp = 0.0;

        // log sigma2 ~ N(m, s^2) (log-normal density + log Jacobian)
        {
            const double v = u[L.i_log_sigma2()];
            const double z = (v - prior_.sigma2_log_mean) / prior_.sigma2_log_sd;
            lp += -0.5 * z * z - std::log(prior_.sigma2_log_sd) - 0.5 * std::log(2.0 * M_PI);
            if (grad) (*grad)[L.i_log_sigma2()] += -z / prior_.sigma2_log_sd;
        }
        // theta ~ Uniform(0,1) through the logit: density 1, Jacobian theta(1-theta)
        for (int j = 0; j < L.d; ++j) {
            const double v = u[L.i_logit_theta(j)];
            // log sigmoid(v) + log sigmoid(-v), stable form
            const double sp_pos = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
            lp += v - 2.0 * sp_pos;
            const double th = 1.0 / (1.0 + std::exp(-v));
            if (grad) (*grad)[L.i_logit_theta(j)] += 1.0 - 2.0 * th;
        }
        // tau ~ HC(alpha), w ~ HC(tau), both with log Jacobians
        const double tau = std::exp(u[L.i_log_tau()]);
        {
            const double r2 = (tau / prior_.alpha) * (tau / prior_.alpha);
            lp += half_cauchy_logpdf(tau, prior_.alpha) + u[L.i_log_tau()];
            if (grad) (*grad)[L.i_log_tau()] += 1.0 - 2.0 * r2 / (1.0 + r2);
        }
        const int M = L.weight_count();
        for (int i = 0; i < M; ++i) {
            const double uw = u[L.i_log_w(i)];
            const double w = std::exp(uw);
            const double r2 = (w / tau) * (w / tau);
            lp += half_cauchy_logpdf(w, tau) + uw;
            if (grad) {
                (*grad)[L.i_log_w(i)] += 1.0 - 2.0 * r2 / (1.0 + r2);
                (*grad)[L.i_log_tau()] += -1.0 + 2.0 * r2 / (1.0 + r2);
            }
        }
        // mu ~ N(mu_mean, mu_sd^2) in standardized units
        {
            const double z = (u[L.i_mu()] - prior_.mu_mean) / prior_.mu_sd;
            lp += -0.5 * z * z - std::log(prior_.mu_sd) - 0.5 * std::log(2.0 * M_PI);
            if (grad) (*grad)[L.i_mu()] += -z / prior_.mu_sd;
        }
        if (L.infer_noise) {
            const double v = u[L.i_log_noise()];
            const double z = (v - prior_.noise_log_mean) / prior_.noise_log_sd;
            lp += -0.5 * z * z - std::log(prior_.noise_log_sd) - 0.5 * std::log(2.0 * M_PI);
            if (grad) (*grad)[L.i_log_noise()] += -z / prior_.noise_log_sd;
        }
        return lp;
    }

    double value_grad(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const {
        const ParamLayout& L = layout_;
        grad.setZero(L.dim());
        if (!u.allFinite()) return -std::numeric_limits<double>::infinity();

        ParamLayout::Unpacked s = layout_.unpack(u);
        if (!(s.hp.sigma2 > 0.0) || !std::isfinite(s.hp.sigma2) || !std::isfinite(s.tau))
            return -std::numeric_limits<double>::infinity();

        detail::LmlEval ev = detail::lml_eval(cache_, std_data_.y, spec_, s.hp, true);
        if (!ev.ok) {
            grad.setZero();
            return -std::numeric_limits<double>::infinity();
        }
        double lp = ev.value + prior_only(u, &grad);
        // scatter the likelihood gradient (its layout omits tau)
        grad[L.i_log_sigma2()] += ev.grad[0];
        for (int j = 0; j < L.d; ++j) grad[L.i_logit_theta(j)] += ev.grad[1 + j];
        const int M = L.weight_count();
        for (int i = 0; i < M; ++i) grad[L.i_log_w(i)] += ev.grad[1 + L.d + i];
        grad[L.i_mu()] += ev.grad[1 + L.d + M];
        if (L.infer_noise) grad[L.i_log_noise()] += ev.grad[2 + L.d + M];
        if (!std::isfinite(lp)) {
            grad.setZero();
            return -std::numeric_limits<double>::infinity();
        }
        return lp;
    }

    // Default chain initialization: moderate scales plus a small seeded
    // perturbation so distinct seeds explore distinct basins.
    Eigen::VectorXd initial_state(Rng& rng) const {
        const ParamLayout& L = layout_;
        Eigen::VectorXd u(L.dim());
        u[L.i_log_sigma2()] = 0.0;
        for (int j = 0; j < L.d; ++j) u[L.i_logit_theta(j)] = 0.0;
        u[L.i_log_tau()] = std::log(prior_.alpha);
        for (int i = 0; i < L.weight_count(); ++i) u[L.i_log_w(i)] = std::log(0.1);
        u[L.i_mu()] = 0.0;
        if (L.infer_noise) u[L.i_log_noise()] = prior_.noise_log_mean;
        for (int i = 0; i < u.size(); ++i) u[i] += rng.uniform(-0.5, 0.5);
        return u;
    }

private:
    KernelSpec spec_;
    PriorSpec prior_;
    ParamLayout layout_;
    Dataset std_data_;
    detail::PairCache cache_;
    double shift_ = 0.0, scale_ = 1.0;
};

// Sampler health failure: more than 10% post-warmup divergences.
struct SamplerHealthError : std::runtime_error {
    SamplerHealthError(const std::string& msg, NutsDiagnostics d)
        : std::runtime_error(msg), diagnostics(std::move(d)) {}
    NutsDiagnostics diagnostics;
};

// Posterior hyperparameter draws. The HyperParams are expressed for the
// internally standardized responses; y_shift/y_scale restore the original
// units at prediction time.
struct PosteriorDraws {
    std::vector<HyperParams> draws;
    std::vector<double> taus;
    NutsDiagnostics diag;
    double y_shift = 0.0;
    double y_scale = 1.0;
};

inline PosteriorDraws nuts_sample(const Dataset& data, const KernelSpec& spec,
                                  const PriorSpec& prior, const NutsConfig& cfg) {
    LogPosterior post(data, spec, prior);
    Rng rng(cfg.seed);
    LogDensityGrad target = [&post](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        return post.value_grad(u, g);
    };
    NutsResult res = nuts_run(target, post.initial_state(rng), cfg, rng);

    PosteriorDraws out;
    out.diag = res.diag;
    out.y_shift = post.y_shift();
    out.y_scale = post.y_scale();
    out.draws.reserve(static_cast<std::size_t>(cfg.draws));
    for (int i = 0; i < res.draws.rows(); ++i) {
        ParamLayout::Unpacked s = post.layout().unpack(res.draws.row(i).transpose());
        out.draws.push_back(std::move(s.hp));
        out.taus.push_back(s.tau);
    }
    if (res.diag.divergences > 0.1 * cfg.draws)
        throw SamplerHealthError("nuts_sample: more than 10% post-warmup divergences",
                                 res.diag);
    return out;
}

struct MapConfig {
    int restarts = 8;
    int max_iters = 500;
    std::uint64_t seed = 0;
    double grad_tol = 1e-5;
};

namespace detail {

struct AscentResult {
    Eigen::VectorXd state;
    double value = -std::numeric_limits<double>::infinity();
    bool converged = false;
};

// Gradient ascent with backtracking line search; the initial step uses a
// Barzilai-Borwein scaling of the previous move.
inline AscentResult ascend(const LogDensityGrad& f, Eigen::VectorXd u, int max_iters,
                           double grad_tol) {
    AscentResult out;
    Eigen::VectorXd g(u.size()), g_prev, u_prev;
    double v = f(u, g);
    if (!std::isfinite(v)) return out;
    double step = 1.0;
    for (int it = 0; it < max_iters; ++it) {
        if (g.lpNorm<Eigen::Infinity>() <= grad_tol) {
            out.converged = true;
            break;
        }
        if (u_prev.size()) {
            const Eigen::VectorXd du = u - u_prev;
            const Eigen::VectorXd dg = g - g_prev;
            const double denom = -du.dot(dg);  // positive near a maximum
            if (denom > 1e-16) step = du.squaredNorm() / denom;
            step = std::min(std::max(step, 1e-12), 1e3);
        }
        double t = step;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            Eigen::VectorXd u_try = u + t * g;
            Eigen::VectorXd g_try(u.size());
            const double v_try = f(u_try, g_try);
            if (std::isfinite(v_try) && v_try > v + 1e-4 * t * g.squaredNorm()) {
                u_prev = u;
                g_prev = g;
                u = std::move(u_try);
                g = std::move(g_try);
                v = v_try;
                moved = true;
                break;
            }
        }
        if (!moved) break;  // stalled line search
    }
    out.state = std::move(u);
    out.value = v;
    return out;
}

inline AscentResult map_optimize(const LogPosterior& post, const MapConfig& cfg) {
    LogDensityGrad f = [&post](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        return post.value_grad(u, g);
    };
    Rng rng(cfg.seed);
    AscentResult best;
    for (int r = 0; r < cfg.restarts; ++r) {
        AscentResult res = ascend(f, post.initial_state(rng), cfg.max_iters, cfg.grad_tol);
        if (std::isfinite(res.value) && res.value > best.value) best = std::move(res);
    }
    if (!std::isfinite(best.value))
        throw OptimizationError("map_estimate: every restart diverged");
    return best;
}

}  // namespace detail

// Multi-start MAP estimate of the hyperparameters (standardized units).
inline HyperParams map_estimate(const Dataset& data, const KernelSpec& spec,
                                const PriorSpec& prior, const MapConfig& cfg) {
    LogPosterior post(data, spec, prior);
    detail::AscentResult best = detail::map_optimize(post, cfg);
    return post.layout().unpack(best.state).hp;
}

// MAP point wrapped as a single-draw PosteriorDraws, for use as a drop-in
// fallback wherever posterior draws are consumed.
inline PosteriorDraws map_draws(const Dataset& data, const KernelSpec& spec,
                                const PriorSpec& prior, const MapConfig& cfg) {
    LogPosterior post(data, spec, prior);
    detail::AscentResult best = detail::map_optimize(post, cfg);
    ParamLayout::Unpacked s = post.layout().unpack(best.state);
    PosteriorDraws out;
    out.draws.push_back(std::move(s.hp));
    out.taus.push_back(s.tau);
    out.y_shift = post.y_shift();
    out.y_scale = post.y_scale();
    return out;
}

// Collection of GPs fitted to the standardized data, one per (subsampled)
// posterior draw. Predictions are de-standardized exactly.
struct GpEnsemble {
    std::vector<FittedGp> gps;
    double y_shift = 0.0;
    double y_scale = 1.0;

    // Draw-averaged predictive mean with the mixture variance.
    Prediction predict(const MixedPoint& z) const {
        double m1 = 0.0, m2 = 0.0, v = 0.0;
        for (const FittedGp& gp : gps) {
            const Prediction p = wegp::predict(gp, z);
            m1 += p.mean;
            m2 += p.mean * p.mean;
            v += p.var;
        }
        const double L = static_cast<double>(gps.size());
        m1 /= L;
        const double mix_var = v / L + std::max(0.0, m2 / L - m1 * m1);
        return Prediction{y_shift + y_scale * m1, y_scale * y_scale * mix_var};
    }
};

// Fit one GP per draw on the standardized responses. A positive
// `subsample` keeps that many draws, stride-sampled across the chain.
inline GpEnsemble fit_ensemble(const Dataset& data, const KernelSpec& spec,
                               const PosteriorDraws& post, int subsample = 0) {
    const int L = static_cast<int>(post.draws.size());
    if (L < 1) throw ValidationError("fit_ensemble: need at least one draw");
    std::vector<int> idx;
    if (subsample > 0 && subsample < L) {
        for (int i = 0; i < subsample; ++i) idx.push_back(i * L / subsample);
    } else {
        for (int i = 0; i < L; ++i) idx.push_back(i);
    }
    Dataset std_data = data;
    std_data.y = (data.y.array() - post.y_shift) / post.y_scale;
    GpEnsemble ens;
    ens.y_shift = post.y_shift;
    ens.y_scale = post.y_scale;
    ens.gps.reserve(idx.size());
    for (int i : idx) ens.gps.push_back(fit(std_data, spec, post.draws[static_cast<std::size_t>(i)]));
    return ens;
}

}  // namespace wegp
