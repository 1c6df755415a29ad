// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "rlrtr/errors.hpp"
#include "rlrtr/tensor.hpp"

namespace rlrtr {

struct SvdRankD {
    Matrix U;   // rows x d, orthonormal columns
    Vector S;   // d singular values, non-increasing
    Matrix V;   // cols x d, orthonormal columns
};

namespace detail {

inline Eigen::BDCSVD<Eigen::MatrixXd> full_svd(const Matrix& M, unsigned options) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M, options);
    if (svd.info() != Eigen::Success)
        throw NumericError("svd: decomposition did not converge");
    return svd;
}

}  // namespace detail

/// Top-d singular triplets of M. Singular values come out non-increasing and
/// U, V have orthonormal columns.
inline SvdRankD svd_rank_d(const Matrix& M, int d) {
    const int kmax = static_cast<int>(std::min(M.rows(), M.cols()));
    if (d < 1 || d > kmax)
        throw ArgumentError("svd_rank_d: d=" + std::to_string(d) + " out of range [1, " +
                            std::to_string(kmax) + "]");
    auto svd = detail::full_svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdRankD out;
    out.U = svd.matrixU().leftCols(d);
    out.S = svd.singularValues().head(d);
    out.V = svd.matrixV().leftCols(d);
    return out;
}

/// All singular values of M, non-increasing.
inline Vector singular_values(const Matrix& M) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
    if (svd.info() != Eigen::Success)
        throw NumericError("svd: decomposition did not converge");
    return svd.singularValues();
}

inline double nuclear_norm(const Matrix& M) { return singular_values(M).sum(); }

/// Singular value thresholding: U * max(S - tau, 0) * V^T, the proximal
/// operator of tau * ||.||_* at M.
inline Matrix svt_matrix(const Matrix& M, double tau) {
    if (tau < 0.0) throw ArgumentError("svt_matrix: tau must be nonnegative");
    auto svd = detail::full_svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        s[i] = std::max(s[i] - tau, 0.0);
        if (s[i] > 0.0) rank = static_cast<int>(i) + 1;
    }
    if (rank == 0) return Matrix::Zero(M.rows(), M.cols());
    return svd.matrixU().leftCols(rank) * s.head(rank).asDiagonal() *
           svd.matrixV().leftCols(rank).transpose();
}

}  // namespace rlrtr
