// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "rlrtr/errors.hpp"
#include "rlrtr/tensor.hpp"

namespace rlrtr {

namespace detail {

using CMatrix = Eigen::MatrixXcd;

/// Unnormalized DFT matrix F(j,k) = exp(-2*pi*i*j*k/n). The temporal
/// dimension is small here, so an explicit matrix product stands in for an
/// FFT; the inverse transform is conj(F)/n.
inline CMatrix dft_matrix(int n) {
    CMatrix F(n, n);
    const double w = -2.0 * 3.141592653589793238462643383279502884 / n;
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            const long long m = (1LL * j * k) % n;
            const double a = w * static_cast<double>(m);
            F(j, k) = std::complex<double>(std::cos(a), std::sin(a));
        }
    return F;
}

/// Frequency-domain frontal slices: slice j is the h x w complex matrix of
/// the j-th DFT coefficient of every temporal tube.
template <class T>
std::vector<CMatrix> mode3_dft_slices(const Tensor3<T>& X) {
    const int h = X.height(), w = X.width(), t = X.frames();
    std::vector<CMatrix> slices(t, CMatrix(h, w));
    const CMatrix F = dft_matrix(t);
    for (int j = 0; j < t; ++j) {
        CMatrix& S = slices[j];
        S.setZero();
        for (int f = 0; f < t; ++f) {
            const std::complex<double> c = F(j, f);
            const T* src = X.frame_data(f);
            for (int r = 0; r < h; ++r)
                for (int cc = 0; cc < w; ++cc)
                    S(r, cc) += c * static_cast<double>(src[static_cast<size_t>(r) * w + cc]);
        }
    }
    return slices;
}

/// Per-frequency SVT of the spectrum, in place. Slices 0..t/2 are
/// decomposed; the remainder follow by conjugate symmetry (real input).
/// Returns the tnn value of the thresholded tensor.
inline double svt_spectrum(std::vector<CMatrix>& slices, double tau) {
    const int t = static_cast<int>(slices.size());
    const int half = t / 2;
    double nuc_sum = 0.0;
    for (int j = 0; j <= half; ++j) {
        Eigen::JacobiSVD<CMatrix> svd(slices[j], Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::VectorXd s = svd.singularValues();
        int rank = 0;
        double nuc = 0.0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            s[i] = std::max(s[i] - tau, 0.0);
            nuc += s[i];
            if (s[i] > 0.0) rank = static_cast<int>(i) + 1;
        }
        if (rank == 0)
            slices[j].setZero();
        else
            slices[j] = svd.matrixU().leftCols(rank) * s.head(rank).asDiagonal() *
                        svd.matrixV().leftCols(rank).adjoint();
        const int mirror = (t - j) % t;
        nuc_sum += nuc;
        if (mirror != j) {
            slices[mirror] = slices[j].conjugate();
            nuc_sum += nuc;
        }
    }
    return nuc_sum / t;
}

}  // namespace detail

/// Tubal tensor nuclear norm: the mean over the temporal-DFT frontal slices
/// of their matrix nuclear norms. For a single-frame tensor this reduces to
/// the matrix nuclear norm of that frame.
template <class T>
double tnn(const Tensor3<T>& X) {
    const auto slices = detail::mode3_dft_slices(X);
    double s = 0.0;
    for (const auto& sl : slices) {
        Eigen::JacobiSVD<detail::CMatrix> svd(sl);
        s += svd.singularValues().sum();
    }
    return s / static_cast<double>(X.frames());
}

/// Proximal operator of tau * tnn: per-frequency singular value
/// thresholding with threshold tau, inverse-transformed back to a real
/// tensor. Conjugate symmetry is preserved by the thresholding, so the
/// imaginary residue is numerical noise; it is checked against 1e-8 and
/// discarded. If tnn_out is non-null it receives tnn of the result.
template <class T>
Tensor3<T> svt_tnn(const Tensor3<T>& X, double tau, double* tnn_out = nullptr) {
    if (tau < 0.0) throw ArgumentError("svt_tnn: tau must be nonnegative");
    using detail::CMatrix;
    const int h = X.height(), w = X.width(), t = X.frames();
    auto slices = detail::mode3_dft_slices(X);
    const double nuc = detail::svt_spectrum(slices, tau);
    if (tnn_out) *tnn_out = nuc;

    const CMatrix F = detail::dft_matrix(t);
    Tensor3<T> Y(h, w, t);
    double max_imag = 0.0;
    std::vector<std::complex<double>> acc(static_cast<size_t>(h) * w);
    for (int f = 0; f < t; ++f) {
        std::fill(acc.begin(), acc.end(), std::complex<double>(0.0, 0.0));
        for (int j = 0; j < t; ++j) {
            const std::complex<double> c = std::conj(F(f, j));
            const CMatrix& S = slices[j];
            for (int r = 0; r < h; ++r)
                for (int cc = 0; cc < w; ++cc)
                    acc[static_cast<size_t>(r) * w + cc] += c * S(r, cc);
        }
        T* dst = Y.frame_data(f);
        const double inv = 1.0 / t;
        for (size_t i = 0; i < acc.size(); ++i) {
            const std::complex<double> v = acc[i] * inv;
            max_imag = std::max(max_imag, std::abs(v.imag()));
            dst[i] = static_cast<T>(v.real());
        }
    }
    if (max_imag > 1e-8)
        throw NumericError("svt_tnn: imaginary residue " + std::to_string(max_imag) +
                           " exceeds 1e-8");
    return Y;
}

}  // namespace rlrtr
