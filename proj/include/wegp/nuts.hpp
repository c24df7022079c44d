#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "wegp/errors.hpp"
#include "wegp/rng.hpp"

// Self-contained No-U-Turn sampler with multinomial trajectory sampling,
// dual-averaging step-size adaptation and a diagonal mass matrix estimated
// from warmup second moments.
//
// REFERENCE: Hoffman & Gelman (2014), "The No-U-Turn Sampler: adaptively
// setting path lengths in Hamiltonian Monte Carlo", JMLR 15. Trajectory
// sampling follows the multinomial scheme of Betancourt (2017).

namespace wegp {

struct NutsConfig {
    int warmup = 500;
    int draws = 256;
    double target_accept = 0.8;
    int max_tree_depth = 10;
    std::uint64_t seed = 0;
};

struct NutsDiagnostics {
    long long divergences = 0;       // post-warmup
    double step_size = 0.0;          // final adapted step size
    double mean_accept = 0.0;        // post-warmup mean Metropolis statistic
    std::vector<long long> depth_hist;

    static std::string csv_header(int max_depth) {
        std::ostringstream os;
        os << "divergences,step_size,mean_accept";
        for (int i = 0; i <= max_depth; ++i) os << ",depth" << i;
        return os.str();
    }

    std::string csv_row() const {
        std::ostringstream os;
        os << divergences << ',' << step_size << ',' << mean_accept;
        for (long long c : depth_hist) os << ',' << c;
        return os.str();
    }
};

struct NutsResult {
    Eigen::MatrixXd draws;  // rows are post-warmup states
    NutsDiagnostics diag;
};

// Log density with gradient: returns log p(q) and fills grad. A return of
// -inf (with any grad) marks an untraversable point and becomes a
// divergence.
using LogDensityGrad = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

namespace detail {

inline double log_add_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Dual averaging per Hoffman & Gelman, Algorithm 6 defaults.
class DualAverage {
public:
    void restart(double eps0, double delta) {
        mu_ = std::log(10.0 * eps0);
        log_eps_ = std::log(eps0);
        log_eps_bar_ = std::log(eps0);
        h_bar_ = 0.0;
        m_ = 1.0;
        delta_ = delta;
    }

    void update(double alpha) {
        if (std::isnan(alpha)) alpha = 0.0;
        const double frac = 1.0 / (m_ + t0_);
        h_bar_ = (1.0 - frac) * h_bar_ + frac * (delta_ - alpha);
        log_eps_ = mu_ - std::sqrt(m_) / gamma_ * h_bar_;
        const double eta = std::pow(m_, -kappa_);
        log_eps_bar_ = eta * log_eps_ + (1.0 - eta) * log_eps_bar_;
        m_ += 1.0;
    }

    double current() const { return std::exp(log_eps_); }
    double averaged() const { return std::exp(log_eps_bar_); }

private:
    double mu_ = 0.0, log_eps_ = 0.0, log_eps_bar_ = 0.0, h_bar_ = 0.0, m_ = 1.0;
    double delta_ = 0.8;
    static constexpr double t0_ = 10.0;
    static constexpr double gamma_ = 0.05;
    static constexpr double kappa_ = 0.75;
};

// Running mean/variance accumulator.
class Welford {
public:
    void reset(int dim) {
        n_ = 0;
        mean_ = Eigen::VectorXd::Zero(dim);
        m2_ = Eigen::VectorXd::Zero(dim);
    }
    void add(const Eigen::VectorXd& x) {
        ++n_;
        const Eigen::VectorXd delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_.array() += delta.array() * (x - mean_).array();
    }
    long count() const { return n_; }
    Eigen::VectorXd variance() const {
        if (n_ < 2) return Eigen::VectorXd::Ones(mean_.size());
        return m2_ / static_cast<double>(n_ - 1);
    }

private:
    long n_ = 0;
    Eigen::VectorXd mean_, m2_;
};

class NutsChain {
public:
    NutsChain(const LogDensityGrad& target, int dim, const NutsConfig& cfg, Rng& rng)
        : target_(target), rng_(rng), cfg_(cfg), dim_(dim),
          inv_metric_(Eigen::VectorXd::Ones(dim)) {}

    static constexpr double kMaxEnergyError = 1000.0;

    struct Phase {
        Eigen::VectorXd q, p, grad;
        double logp = 0.0;
    };

    struct TransitionStats {
        int depth = 0;
        bool divergent = false;
        double accept = 0.0;
        long n_leapfrog = 0;
    };

    NutsResult run(const Eigen::VectorXd& init) {
        Eigen::VectorXd q = init, grad(dim_);
        double logp = target_(q, grad);
        if (!std::isfinite(logp))
            throw OptimizationError("nuts: initial point has non-finite log density");

        eps_ = find_reasonable_epsilon(q, logp, grad);
        da_.restart(eps_, cfg_.target_accept);

        // Warmup schedule: step-size-only buffers around expanding
        // metric-estimation windows (skipped entirely for tiny warmups).
        const int W = cfg_.warmup;
        const bool adapt_metric = W >= 40;
        const int init_buf = adapt_metric ? std::max(10, W * 15 / 100) : W;
        const int term_buf = adapt_metric ? std::max(10, W / 10) : 0;
        int window_end = adapt_metric ? init_buf + std::min(25, W - init_buf - term_buf) : -1;
        int window_size = 25;
        welford_.reset(dim_);

        for (int it = 0; it < W; ++it) {
            TransitionStats st = transition(q, logp, grad);
            da_.update(st.accept);
            eps_ = da_.current();
            if (adapt_metric && it >= init_buf && it < W - term_buf) {
                welford_.add(q);
                const bool last_window = window_end + 2 * window_size > W - term_buf;
                if (it + 1 == window_end || it + 1 == W - term_buf) {
                    if (welford_.count() >= 10) {
                        const double n = static_cast<double>(welford_.count());
                        inv_metric_ = (welford_.variance() * (n / (n + 5.0))).array() +
                                      1e-3 * (5.0 / (n + 5.0));
                        eps_ = find_reasonable_epsilon(q, logp, grad);
                        da_.restart(eps_, cfg_.target_accept);
                    }
                    welford_.reset(dim_);
                    window_size *= 2;
                    window_end = last_window ? (W - term_buf)
                                             : std::min(window_end + window_size, W - term_buf);
                }
            }
        }
        eps_ = da_.averaged();

        NutsResult out;
        out.draws.resize(cfg_.draws, dim_);
        out.diag.depth_hist.assign(static_cast<std::size_t>(cfg_.max_tree_depth) + 1, 0);
        double accept_sum = 0.0;
        for (int it = 0; it < cfg_.draws; ++it) {
            TransitionStats st = transition(q, logp, grad);
            out.draws.row(it) = q.transpose();
            accept_sum += st.accept;
            if (st.divergent) ++out.diag.divergences;
            ++out.diag.depth_hist[static_cast<std::size_t>(
                std::min(st.depth, cfg_.max_tree_depth))];
        }
        out.diag.step_size = eps_;
        out.diag.mean_accept = cfg_.draws > 0 ? accept_sum / cfg_.draws : 0.0;
        return out;
    }

private:
    struct Tree {
        Eigen::VectorXd q_prop, grad_prop;
        double logp_prop = 0.0;
        Eigen::VectorXd p_beg, p_end, rho;
        double lsw = -std::numeric_limits<double>::infinity();
        double sum_alpha = 0.0;
        long n_alpha = 0;
        bool ok = false;
        bool divergent = false;
    };

    double kinetic(const Eigen::VectorXd& p) const {
        return 0.5 * (inv_metric_.array() * p.array() * p.array()).sum();
    }

    void leapfrog(Phase& z, double step) const {
        z.p += 0.5 * step * z.grad;
        z.q += step * (inv_metric_.array() * z.p.array()).matrix();
        z.logp = target_(z.q, z.grad);
        if (!std::isfinite(z.logp)) {
            z.logp = -std::numeric_limits<double>::infinity();
            z.grad.setZero();
        }
        z.p += 0.5 * step * z.grad;
    }

    bool no_uturn(const Eigen::VectorXd& pa, const Eigen::VectorXd& pb,
                  const Eigen::VectorXd& rho) const {
        return (inv_metric_.array() * pa.array()).matrix().dot(rho) > 0.0 &&
               (inv_metric_.array() * pb.array()).matrix().dot(rho) > 0.0;
    }

    Tree build_tree(int depth, Phase& edge, double step, double h0) {
        if (depth == 0) {
            leapfrog(edge, step);
            const double h = -edge.logp + kinetic(edge.p);
            double dh = h - h0;
            if (std::isnan(dh)) dh = std::numeric_limits<double>::infinity();
            Tree t;
            t.divergent = dh > kMaxEnergyError;
            t.ok = !t.divergent;
            t.lsw = -dh;
            t.sum_alpha = dh > 0.0 ? std::exp(-dh) : 1.0;
            t.n_alpha = 1;
            t.q_prop = edge.q;
            t.grad_prop = edge.grad;
            t.logp_prop = edge.logp;
            t.p_beg = edge.p;
            t.p_end = edge.p;
            t.rho = edge.p;
            return t;
        }
        Tree first = build_tree(depth - 1, edge, step, h0);
        if (!first.ok) return first;
        Tree second = build_tree(depth - 1, edge, step, h0);
        first.sum_alpha += second.sum_alpha;
        first.n_alpha += second.n_alpha;
        first.divergent = first.divergent || second.divergent;
        if (!second.ok) {
            first.ok = false;
            return first;
        }
        const double merged = log_add_exp(first.lsw, second.lsw);
        if (std::log(rng_.uniform01_open()) < second.lsw - merged) {
            first.q_prop = std::move(second.q_prop);
            first.grad_prop = std::move(second.grad_prop);
            first.logp_prop = second.logp_prop;
        }
        const Eigen::VectorXd rho = first.rho + second.rho;
        first.ok = no_uturn(first.p_beg, second.p_end, rho) &&
                   no_uturn(first.p_beg, second.p_beg, first.rho + second.p_beg) &&
                   no_uturn(first.p_end, second.p_end, first.p_end + second.rho);
        first.lsw = merged;
        first.rho = rho;
        first.p_end = second.p_end;
        return first;
    }

    TransitionStats transition(Eigen::VectorXd& q, double& logp, Eigen::VectorXd& grad) {
        Phase plus{q, Eigen::VectorXd(dim_), grad, logp};
        for (int i = 0; i < dim_; ++i) plus.p[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
        Phase minus = plus;
        const double h0 = -logp + kinetic(plus.p);

        Eigen::VectorXd prop_q = q, prop_grad = grad;
        double prop_logp = logp;
        Eigen::VectorXd rho = plus.p, p_minus = plus.p, p_plus = plus.p;
        double lsw = 0.0;
        TransitionStats st;
        double sum_alpha = 0.0;
        long n_alpha = 0;

        for (int depth = 0; depth < cfg_.max_tree_depth; ++depth) {
            const bool forward = rng_.coin();
            Tree t = build_tree(depth, forward ? plus : minus, forward ? eps_ : -eps_, h0);
            sum_alpha += t.sum_alpha;
            n_alpha += t.n_alpha;
            st.n_leapfrog += t.n_alpha;
            if (t.divergent) {
                st.divergent = true;
                break;
            }
            if (!t.ok) break;
            st.depth = depth + 1;
            if (std::log(rng_.uniform01_open()) < t.lsw - lsw) {
                prop_q = t.q_prop;
                prop_grad = t.grad_prop;
                prop_logp = t.logp_prop;
            }
            lsw = log_add_exp(lsw, t.lsw);
            const Eigen::VectorXd rho_new = rho + t.rho;
            bool keep;
            if (forward) {
                keep = no_uturn(p_minus, t.p_end, rho_new) &&
                       no_uturn(p_minus, t.p_beg, rho + t.p_beg) &&
                       no_uturn(p_plus, t.p_end, p_plus + t.rho);
                p_plus = t.p_end;
            } else {
                keep = no_uturn(t.p_end, p_plus, rho_new) &&
                       no_uturn(t.p_beg, p_plus, rho + t.p_beg) &&
                       no_uturn(t.p_end, p_minus, p_minus + t.rho);
                p_minus = t.p_end;
            }
            rho = rho_new;
            if (!keep) break;
        }
        q = std::move(prop_q);
        grad = std::move(prop_grad);
        logp = prop_logp;
        st.accept = n_alpha > 0 ? sum_alpha / static_cast<double>(n_alpha) : 0.0;
        return st;
    }

    // Hoffman & Gelman Algorithm 4: double or halve until the one-step
    // acceptance probability crosses 1/2.
    double find_reasonable_epsilon(const Eigen::VectorXd& q, double logp,
                                   const Eigen::VectorXd& grad) {
        double eps = 1.0;
        Phase z0{q, Eigen::VectorXd(dim_), grad, logp};
        for (int i = 0; i < dim_; ++i) z0.p[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
        const double h0 = -logp + kinetic(z0.p);

        auto ratio = [&](double e) {
            Phase z = z0;
            leapfrog(z, e);
            const double h = -z.logp + kinetic(z.p);
            const double r = std::exp(h0 - h);
            return std::isnan(r) ? 0.0 : r;
        };
        double r = ratio(eps);
        const double dir = r > 0.5 ? 1.0 : -1.0;
        for (int it = 0; it < 100; ++it) {
            if (dir > 0.0 && !(r > 0.5)) break;
            if (dir < 0.0 && !(r < 0.5)) break;
            eps *= dir > 0.0 ? 2.0 : 0.5;
            if (eps > 1e7 || eps < 1e-16) break;
            r = ratio(eps);
        }
        return eps;
    }

    const LogDensityGrad& target_;
    Rng& rng_;
    NutsConfig cfg_;
    int dim_;
    Eigen::VectorXd inv_metric_;
    double eps_ = 1.0;
    DualAverage da_;
    Welford welford_;
};

}  // namespace detail

// Run a single NUTS chain on an arbitrary target. Deterministic given the
// seed; multi-chain use is by calling again with distinct seeds.
inline NutsResult nuts_run(const LogDensityGrad& target, const Eigen::VectorXd& init,
                           const NutsConfig& cfg, Rng& rng) {
    if (cfg.draws < 1) throw ValidationError("nuts_run: need draws >= 1");
    detail::NutsChain chain(target, static_cast<int>(init.size()), cfg, rng);
    return chain.run(init);
}

}  // namespace wegp
