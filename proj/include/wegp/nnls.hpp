#pragma once

#include <Eigen/Dense>
#include <vector>

#include "wegp/errors.hpp"

namespace wegp {

struct NnlsResult {
    Eigen::VectorXd x;
    double residual = 0.0;  // ||A x - b||_2 at the solution
    int iterations = 0;
};

// Non-negative least squares, min_{x >= 0} ||A x - b||_2, by the active-set
// method of Lawson & Hanson (1974). Terminates when every inactive dual
// coordinate satisfies optimality within `tol` (scaled by ||A^T b||_inf).
inline NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                       double tol = 1e-10, int max_iter = 0) {
    const int m = static_cast<int>(A.cols());
    if (A.rows() != b.size()) throw DimensionError("nnls: A rows must match b length");
    if (max_iter <= 0) max_iter = 3 * m + 30;

    NnlsResult out;
    out.x = Eigen::VectorXd::Zero(m);
    std::vector<bool> passive(static_cast<std::size_t>(m), false);
    const double scale = std::max(1.0, (A.transpose() * b).cwiseAbs().maxCoeff());

    Eigen::VectorXd resid = b;
    auto solve_passive = [&](const std::vector<int>& idx) {
        Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t c = 0; c < idx.size(); ++c) Ap.col(static_cast<Eigen::Index>(c)) = A.col(idx[c]);
        return Ap.colPivHouseholderQr().solve(b).eval();
    };

    for (int outer = 0; outer < max_iter; ++outer) {
        out.iterations = outer;
        // Dual vector on the active (zero) set.
        Eigen::VectorXd w = A.transpose() * resid;
        int best = -1;
        double best_w = tol * scale;
        for (int j = 0; j < m; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
                best_w = w[j];
                best = j;
            }
        }
        if (best < 0) break;  // dual optimality holds
        passive[static_cast<std::size_t>(best)] = true;

        for (int inner = 0; inner < max_iter; ++inner) {
            std::vector<int> idx;
            for (int j = 0; j < m; ++j)
                if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
            Eigen::VectorXd z = solve_passive(idx);

            double alpha = 1.0;
            int blocker = -1;
            for (std::size_t c = 0; c < idx.size(); ++c) {
                const double zc = z[static_cast<Eigen::Index>(c)];
                if (zc <= 0.0) {
                    const double xc = out.x[idx[c]];
                    const double a = xc / (xc - zc);
                    if (a < alpha) {
                        alpha = a;
                        blocker = idx[c];
                    }
                }
            }
            if (blocker < 0) {
                out.x.setZero();
                for (std::size_t c = 0; c < idx.size(); ++c) out.x[idx[c]] = z[static_cast<Eigen::Index>(c)];
                break;
            }
            // Step to the boundary and drop variables pinned at zero.
            for (std::size_t c = 0; c < idx.size(); ++c) {
                const int j = idx[c];
                out.x[j] += alpha * (z[static_cast<Eigen::Index>(c)] - out.x[j]);
            }
            for (int j = 0; j < m; ++j) {
                if (passive[static_cast<std::size_t>(j)] && (out.x[j] <= 0.0 || j == blocker)) {
                    out.x[j] = 0.0;
                    passive[static_cast<std::size_t>(j)] = false;
                }
            }
        }
        resid = b - A * out.x;
    }
    resid = b - A * out.x;
    out.residual = resid.norm();
    return out;
}

}  // namespace wegp
