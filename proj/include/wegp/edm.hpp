#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "wegp/errors.hpp"
#include "wegp/nnls.hpp"
#include "wegp/rng.hpp"

namespace wegp {

inline constexpr double kPsdTol = 1e-8;    // Gram PSD slack, relative to max(1, trace)
inline constexpr double kNullTol = 1e-10;  // zero-sum tolerance for extreme generators
inline constexpr double kNnlsTol = 1e-10;  // dual optimality tolerance for cone fits
inline constexpr double kRankTol = 1e-9;   // singular-value cutoff, relative to sigma_max

// Matrix of squared pairwise distances among the levels of one categorical
// variable. The upper triangle is the single source of truth; construction
// mirrors it so symmetry is exact by definition.
struct Edm {
    Eigen::MatrixXd d2;

    Edm() = default;

    explicit Edm(const Eigen::MatrixXd& m) {
        if (m.rows() != m.cols()) throw DimensionError("Edm: matrix must be square");
        if (m.rows() < 2) throw DimensionError("Edm: need at least 2 levels");
        const int nn = static_cast<int>(m.rows());
        d2.resize(nn, nn);
        for (int i = 0; i < nn; ++i) {
            if (m(i, i) != 0.0) throw ValidationError("Edm: diagonal must be exactly zero");
            d2(i, i) = 0.0;
            for (int j = i + 1; j < nn; ++j) {
                if (!(m(i, j) >= 0.0)) throw ValidationError("Edm: entries must be non-negative");
                d2(i, j) = m(i, j);
                d2(j, i) = m(i, j);
            }
        }
    }

    int n() const { return static_cast<int>(d2.rows()); }
};

struct ValidityReport {
    bool is_edm = false;
    double min_gram_eigenvalue = 0.0;
};

// Vectorize the strict upper triangle, row-major: (0,1),(0,2),...,(n-2,n-1).
inline Eigen::VectorXd upper_tri(const Eigen::MatrixXd& m) {
    const int nn = static_cast<int>(m.rows());
    Eigen::VectorXd v(nn * (nn - 1) / 2);
    int k = 0;
    for (int i = 0; i < nn; ++i)
        for (int j = i + 1; j < nn; ++j) v[k++] = m(i, j);
    return v;
}

// Schoenberg test: D is an EDM iff G = -1/2 H D H is PSD, with H the
// centering matrix. Reports the minimum Gram eigenvalue either way.
inline ValidityReport validate_edm(const Eigen::MatrixXd& d2) {
    if (d2.rows() != d2.cols()) throw DimensionError("validate_edm: matrix must be square");
    const int nn = static_cast<int>(d2.rows());
    if (nn < 2) throw DimensionError("validate_edm: need n >= 2");

    bool structural = true;
    for (int i = 0; i < nn && structural; ++i) {
        if (d2(i, i) != 0.0) structural = false;
        for (int j = 0; j < nn; ++j) {
            if (d2(i, j) != d2(j, i) || !(d2(i, j) >= 0.0) || !std::isfinite(d2(i, j))) {
                structural = false;
                break;
            }
        }
    }

    const Eigen::MatrixXd H =
        Eigen::MatrixXd::Identity(nn, nn) - Eigen::MatrixXd::Constant(nn, nn, 1.0 / nn);
    const Eigen::MatrixXd G = -0.5 * H * d2 * H;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (G + G.transpose()),
                                                       Eigen::EigenvaluesOnly);
    ValidityReport rep;
    rep.min_gram_eigenvalue = eig.eigenvalues().minCoeff();
    rep.is_edm = structural &&
                 rep.min_gram_eigenvalue >= -kPsdTol * std::max(1.0, G.trace());
    return rep;
}

// Zero-sum generator vector for an extreme direction of the EDM cone.
struct ExtremeGenerator {
    Eigen::VectorXd z;

    explicit ExtremeGenerator(Eigen::VectorXd v) : z(std::move(v)) {
        if (z.size() < 2) throw DimensionError("ExtremeGenerator: need length >= 2");
        if (z.norm() == 0.0) throw ValidationError("ExtremeGenerator: z must be nonzero");
        if (std::abs(z.sum()) > kNullTol * std::max(1.0, z.norm()))
            throw ValidationError("ExtremeGenerator: z must sum to zero");
    }
};

enum class BasisOrigin { Ordinal, Extreme, External };

struct BasisProvenance {
    BasisOrigin origin = BasisOrigin::External;
    std::vector<int> permutation;  // set when origin == Ordinal
    Eigen::VectorXd generator;     // set when origin == Extreme
};

// Ordered, linearly independent base EDMs for one categorical variable.
struct BaseEdmSet {
    int n = 0;
    std::vector<Edm> bases;
    std::vector<BasisProvenance> provenance;

    int size() const { return static_cast<int>(bases.size()); }

    bool mixed_origin() const {
        for (std::size_t i = 1; i < provenance.size(); ++i)
            if (provenance[i].origin != provenance[0].origin) return true;
        return false;
    }
};

namespace detail {

// Incremental rank test over vectorized upper triangles: a candidate is
// accepted iff appending it increases the rank, judged by singular values
// above kRankTol * sigma_max.
class RankAccumulator {
public:
    explicit RankAccumulator(int dim) : dim_(dim) {}

    bool try_add(const Eigen::VectorXd& v) {
        Eigen::MatrixXd stacked(rows_.size() + 1, dim_);
        for (std::size_t r = 0; r < rows_.size(); ++r) stacked.row(static_cast<Eigen::Index>(r)) = rows_[r];
        stacked.row(static_cast<Eigen::Index>(rows_.size())) = v.transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked);
        const Eigen::VectorXd sv = svd.singularValues();
        const double cut = kRankTol * sv[0];
        int rank = 0;
        for (int i = 0; i < sv.size(); ++i)
            if (sv[i] > cut) ++rank;
        if (rank == static_cast<int>(rows_.size()) + 1) {
            rows_.push_back(v);
            return true;
        }
        return false;
    }

    int rank() const { return static_cast<int>(rows_.size()); }

private:
    int dim_;
    std::vector<Eigen::VectorXd> rows_;
};

}  // namespace detail

// EDM induced by assigning the integers 1..n to levels in permuted order:
// d2[i][j] = (perm[i] - perm[j])^2.
inline Edm ordinal_base_edm(const std::vector<int>& perm) {
    const int nn = static_cast<int>(perm.size());
    if (nn < 2) throw ValidationError("ordinal_base_edm: need n >= 2");
    std::vector<bool> seen(static_cast<std::size_t>(nn), false);
    for (int p : perm) {
        if (p < 1 || p > nn || seen[static_cast<std::size_t>(p - 1)])
            throw ValidationError("ordinal_base_edm: input is not a permutation of 1..n");
        seen[static_cast<std::size_t>(p - 1)] = true;
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nn, nn);
    for (int i = 0; i < nn; ++i)
        for (int j = i + 1; j < nn; ++j) {
            const double diff = static_cast<double>(perm[static_cast<std::size_t>(i)] -
                                                    perm[static_cast<std::size_t>(j)]);
            m(i, j) = m(j, i) = diff * diff;
        }
    return Edm(m);
}

// Randomly permuted ordinal encoders, kept only when linearly independent
// of the bases collected so far. Exhaustive enumeration shows the ordinal
// family spans the full n(n-1)/2-dimensional space for n <= 6, but the
// attempt budget still guards the general case.
inline BaseEdmSet build_ordinal_basis(int n, int m, Rng& rng, int max_attempts = 0) {
    if (n < 2) throw ValidationError("build_ordinal_basis: need n >= 2");
    const int cone_dim = n * (n - 1) / 2;
    if (m < 1 || m > cone_dim)
        throw ValidationError("build_ordinal_basis: m must be in [1, n(n-1)/2]");
    if (max_attempts <= 0) max_attempts = 50 * m;

    double n_fact = 1.0;
    for (int i = 2; i <= n; ++i) n_fact *= i;

    BaseEdmSet out;
    out.n = n;
    detail::RankAccumulator rank(cone_dim);
    std::set<std::vector<int>> tried;
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i + 1;

    while (out.size() < m) {
        rng.shuffle(perm);
        if (!tried.insert(perm).second) {
            if (static_cast<double>(tried.size()) >= n_fact) break;  // family exhausted
            continue;
        }
        if (static_cast<int>(tried.size()) > max_attempts) break;
        Edm cand = ordinal_base_edm(perm);
        if (rank.try_add(upper_tri(cand.d2))) {
            out.bases.push_back(std::move(cand));
            BasisProvenance prov;
            prov.origin = BasisOrigin::Ordinal;
            prov.permutation = perm;
            out.provenance.push_back(std::move(prov));
        }
    }
    if (out.size() < m)
        throw BasisExhaustionError(
            "build_ordinal_basis: reached rank " + std::to_string(out.size()) +
                " of requested " + std::to_string(m),
            out.size());
    return out;
}

// Rank-one face of the EDM cone: Gamma = (z o z)1^T + 1(z o z)^T - 2 z z^T,
// i.e. Gamma[i][j] = (z_i - z_j)^2.
inline Edm extreme_direction(const ExtremeGenerator& gen) {
    const int nn = static_cast<int>(gen.z.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nn, nn);
    for (int i = 0; i < nn; ++i)
        for (int j = i + 1; j < nn; ++j) {
            const double diff = gen.z[i] - gen.z[j];
            m(i, j) = m(j, i) = diff * diff;
        }
    return Edm(m);
}

namespace detail {

inline Eigen::VectorXd random_null_unit(int n, Rng& rng) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = rng.normal();
    z.array() -= z.mean();  // project onto null(1^T)
    const double nrm = z.norm();
    if (nrm > 0.0) z /= nrm;
    return z;
}

}  // namespace detail

// n(n-1)/2 linearly independent extreme directions from random unit
// generators in null(1^T). Failure has probability zero for continuous
// draws; the attempt budget is only a guard.
inline BaseEdmSet build_extreme_basis(int n, Rng& rng) {
    if (n < 2) throw ValidationError("build_extreme_basis: need n >= 2");
    const int m = n * (n - 1) / 2;
    const int budget = 100 * m + 100;

    BaseEdmSet out;
    out.n = n;
    detail::RankAccumulator rank(m);
    for (int attempt = 0; attempt < budget && out.size() < m; ++attempt) {
        Eigen::VectorXd z = detail::random_null_unit(n, rng);
        if (z.norm() == 0.0) continue;
        Edm cand = extreme_direction(ExtremeGenerator(z));
        if (rank.try_add(upper_tri(cand.d2))) {
            out.bases.push_back(std::move(cand));
            BasisProvenance prov;
            prov.origin = BasisOrigin::Extreme;
            prov.generator = z;
            out.provenance.push_back(std::move(prov));
        }
    }
    if (out.size() < m)
        throw BasisExhaustionError("build_extreme_basis: rank deficit", out.size());
    return out;
}

// Extreme-direction basis adapted to a target EDM. The eigendecomposition
// of the Gram matrix G = sum_i lambda_i u_i u_i^T yields zero-sum vectors
// z_i = sqrt(lambda_i) u_i with target = sum_i Gamma(z_i) exactly, so the
// returned basis (completed to full rank with random directions) contains
// the target in its conic hull. This is the executable form of the
// Caratheodory decomposition for the EDM cone.
inline BaseEdmSet extreme_basis_for(const Edm& target, Rng& rng) {
    const int nn = target.n();
    const int m = nn * (nn - 1) / 2;
    const Eigen::MatrixXd H =
        Eigen::MatrixXd::Identity(nn, nn) - Eigen::MatrixXd::Constant(nn, nn, 1.0 / nn);
    const Eigen::MatrixXd G = -0.5 * H * target.d2 * H;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (G + G.transpose()));

    BaseEdmSet out;
    out.n = nn;
    detail::RankAccumulator rank(m);
    const double lam_max = eig.eigenvalues().cwiseAbs().maxCoeff();
    for (int i = 0; i < nn; ++i) {
        const double lam = eig.eigenvalues()[i];
        if (lam <= kRankTol * std::max(1.0, lam_max)) continue;
        Eigen::VectorXd z = eig.eigenvectors().col(i);
        z.array() -= z.mean();  // eigenvectors of G with lambda > 0 are already zero-sum
        if (z.norm() == 0.0) continue;
        Edm cand = extreme_direction(ExtremeGenerator(z));
        if (rank.try_add(upper_tri(cand.d2))) {
            out.bases.push_back(std::move(cand));
            BasisProvenance prov;
            prov.origin = BasisOrigin::Extreme;
            prov.generator = z;
            out.provenance.push_back(std::move(prov));
        }
    }
    const int budget = 100 * m + 100;
    for (int attempt = 0; attempt < budget && out.size() < m; ++attempt) {
        Eigen::VectorXd z = detail::random_null_unit(nn, rng);
        if (z.norm() == 0.0) continue;
        Edm cand = extreme_direction(ExtremeGenerator(z));
        if (rank.try_add(upper_tri(cand.d2))) {
            out.bases.push_back(std::move(cand));
            BasisProvenance prov;
            prov.origin = BasisOrigin::Extreme;
            prov.generator = z;
            out.provenance.push_back(std::move(prov));
        }
    }
    if (out.size() < m)
        throw BasisExhaustionError("extreme_basis_for: rank deficit", out.size());
    return out;
}

// Single one-hot-induced base: every pair of distinct levels at squared
// distance 2, the EDM of the standard one-hot embedding.
inline Edm one_hot_edm(int n) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, 2.0);
    m.diagonal().setZero();
    return Edm(m);
}

// Non-negatively weighted sum of base EDMs; a valid EDM whenever the bases
// are (closure of the cone under positive combination).
inline Edm weighted_edm(const BaseEdmSet& basis, const Eigen::VectorXd& w) {
    if (w.size() != basis.size())
        throw DimensionError("weighted_edm: weight count must match basis size");
    for (int i = 0; i < w.size(); ++i)
        if (!(w[i] >= 0.0)) throw DomainError("weighted_edm: weights must be non-negative");
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(basis.n, basis.n);
    for (int i = 0; i < w.size(); ++i) acc += w[i] * basis.bases[static_cast<std::size_t>(i)].d2;
    return Edm(acc);
}

struct ConeFit {
    Eigen::VectorXd weights;
    double residual = 0.0;
};

// Best non-negative combination of the basis approximating the target,
// solved as NNLS over upper-triangle vectorizations. A strictly positive
// residual is a valid answer: the target lies outside the conic hull.
inline ConeFit reconstruct_in_cone(const Edm& target, const BaseEdmSet& basis) {
    if (target.n() != basis.n)
        throw DimensionError("reconstruct_in_cone: level count mismatch");
    const Eigen::VectorXd b = upper_tri(target.d2);
    Eigen::MatrixXd A(b.size(), basis.size());
    for (int i = 0; i < basis.size(); ++i)
        A.col(i) = upper_tri(basis.bases[static_cast<std::size_t>(i)].d2);
    NnlsResult r = nnls(A, b, kNnlsTol);
    return ConeFit{r.x, r.residual};
}

// ---- plain-text fixture format: header "n m", then m blocks of n rows ----

inline void write_basis(std::ostream& os, const BaseEdmSet& basis) {
    os << basis.n << ' ' << basis.size() << '\n';
    os.precision(17);
    for (const Edm& e : basis.bases) {
        for (int i = 0; i < basis.n; ++i) {
            for (int j = 0; j < basis.n; ++j) {
                if (j) os << ' ';
                os << e.d2(i, j);
            }
            os << '\n';
        }
    }
}

inline void write_edm(std::ostream& os, const Edm& e) {
    BaseEdmSet single;
    single.n = e.n();
    single.bases.push_back(e);
    single.provenance.push_back(BasisProvenance{});
    write_basis(os, single);
}

inline BaseEdmSet read_basis(std::istream& is) {
    int n = 0, m = 0;
    if (!(is >> n >> m) || n < 2 || m < 0)
        throw ValidationError("read_basis: malformed header");
    BaseEdmSet out;
    out.n = n;
    for (int b = 0; b < m; ++b) {
        Eigen::MatrixXd mat(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (!(is >> mat(i, j))) throw ValidationError("read_basis: truncated matrix body");
        out.bases.emplace_back(mat);
        out.provenance.push_back(BasisProvenance{});
    }
    return out;
}

inline Edm read_edm(std::istream& is) {
    BaseEdmSet set = read_basis(is);
    if (set.size() != 1) throw ValidationError("read_edm: expected exactly one matrix");
    return set.bases.front();
}

}  // namespace wegp
