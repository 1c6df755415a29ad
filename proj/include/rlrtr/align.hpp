// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0
//
// Per-frame affine alignment: bilinear warping, the parameter Jacobian of
// the warp, and one damped Gauss-Newton update of the alignment parameters
// against a background-plus-rain target.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "rlrtr/errors.hpp"
#include "rlrtr/tensor.hpp"

namespace rlrtr {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// Affine map taking an output pixel (x, y) = (column, row) to the source
// location (a*x + b*y + tx, c*x + d*y + ty). Default-constructed as identity.
struct AffineFrame {
    double a = 1.0, b = 0.0, tx = 0.0;
    double c = 0.0, d = 1.0, ty = 0.0;

    double det() const { return a * d - b * c; }
};

// One parameter set per video frame.
using AffineParams = std::vector<AffineFrame>;

inline AffineParams identity_params(int frames) {
    if (frames < 1) throw ArgumentError("identity_params: frames must be positive");
    return AffineParams(static_cast<size_t>(frames));
}

namespace detail {

// The linear part must stay comfortably invertible; reject collapse early.
inline void check_affine(const AffineFrame& p) {
    const double det = p.det();
    if (!(det >= 0.5 && det <= 2.0)) {
        std::ostringstream os;
        os << "affine determinant " << det << " outside [0.5, 2.0]";
        throw ArgumentError(os.str());
    }
}

}  // namespace detail

// Exact inverse map (the determinant bound keeps this well posed).
inline AffineFrame inverse(const AffineFrame& p) {
    detail::check_affine(p);
    const double det = p.det();
    AffineFrame q;
    q.a = p.d / det;
    q.b = -p.b / det;
    q.c = -p.c / det;
    q.d = p.a / det;
    q.tx = -(q.a * p.tx + q.b * p.ty);
    q.ty = -(q.c * p.tx + q.d * p.ty);
    return q;
}

// Mean distance between the two maps' source points over an h x w pixel grid.
inline double mean_endpoint_error(const AffineFrame& p, const AffineFrame& q, int h, int w) {
    if (h < 1 || w < 1) throw ArgumentError("mean_endpoint_error: empty grid");
    double acc = 0.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double x = c, y = r;
            const double dx = (p.a - q.a) * x + (p.b - q.b) * y + (p.tx - q.tx);
            const double dy = (p.c - q.c) * x + (p.d - q.d) * y + (p.ty - q.ty);
            acc += std::sqrt(dx * dx + dy * dy);
        }
    return acc / (static_cast<double>(h) * w);
}

// ---------------------------------------------------------------------------
// Warping
// ---------------------------------------------------------------------------

// Bilinear resampling at the mapped source coordinates with replicate
// boundary (coordinates clamp to the frame). Identity parameters reproduce
// the input bit-exactly because every source coordinate lands on a grid
// point with zero fractional part.
inline Matrix warp_affine(const Matrix& frame, const AffineFrame& p) {
    detail::check_affine(p);
    const Eigen::Index h = frame.rows(), w = frame.cols();
    Matrix out(h, w);
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index cc = 0; cc < w; ++cc) {
            const double x = static_cast<double>(cc), y = static_cast<double>(r);
            double sx = p.a * x + p.b * y + p.tx;
            double sy = p.c * x + p.d * y + p.ty;
            sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
            sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
            const Eigen::Index x0 = static_cast<Eigen::Index>(std::floor(sx));
            const Eigen::Index y0 = static_cast<Eigen::Index>(std::floor(sy));
            const Eigen::Index x1 = std::min(x0 + 1, w - 1);
            const Eigen::Index y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - static_cast<double>(x0);
            const double fy = sy - static_cast<double>(y0);
            const double top = frame(y0, x0) * (1.0 - fx) + frame(y0, x1) * fx;
            const double bot = frame(y1, x0) * (1.0 - fx) + frame(y1, x1) * fx;
            out(r, cc) = top * (1.0 - fy) + bot * fy;
        }
    return out;
}

// Warp every frame of a video by its own parameter set.
template <class T>
Tensor3<T> warp_video(const Tensor3<T>& video, const AffineParams& tau) {
    if (static_cast<int>(tau.size()) != video.frames())
        throw ArgumentError("warp_video: one parameter set per frame required");
    Tensor3<T> out(video.height(), video.width(), video.frames());
    for (int f = 0; f < video.frames(); ++f)
        set_frame(out, f, warp_affine(frame_as_matrix(video, f), tau[static_cast<size_t>(f)]));
    return out;
}

// ---------------------------------------------------------------------------
// Parameter Jacobian
// ---------------------------------------------------------------------------

// Derivative images of the warped frame with respect to each of the six
// parameters, in field order (a, b, tx, c, d, ty). Spatial gradients of the
// warped frame are taken by central differences with replicate boundary and
// mapped back through the linear part by the chain rule.
inline std::array<Matrix, 6> warp_jacobian(const Matrix& frame, const AffineFrame& p) {
    detail::check_affine(p);
    const Matrix warped = warp_affine(frame, p);
    const Eigen::Index h = frame.rows(), w = frame.cols();
    const double det = p.det();
    std::array<Matrix, 6> jac;
    for (auto& m : jac) m.resize(h, w);
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index cc = 0; cc < w; ++cc) {
            const Eigen::Index cl = std::max<Eigen::Index>(cc - 1, 0);
            const Eigen::Index cr = std::min<Eigen::Index>(cc + 1, w - 1);
            const Eigen::Index ru = std::max<Eigen::Index>(r - 1, 0);
            const Eigen::Index rd = std::min<Eigen::Index>(r + 1, h - 1);
            const double wu = (warped(r, cr) - warped(r, cl)) / 2.0;  // d/dx
            const double wv = (warped(rd, cc) - warped(ru, cc)) / 2.0;  // d/dy
            // Invert the chain rule dW/d(x,y) = [a c; b d] * dI/d(sx,sy).
            const double isx = (p.d * wu - p.c * wv) / det;
            const double isy = (-p.b * wu + p.a * wv) / det;
            const double x = static_cast<double>(cc), y = static_cast<double>(r);
            jac[0](r, cc) = isx * x;  // d/da
            jac[1](r, cc) = isx * y;  // d/db
            jac[2](r, cc) = isx;      // d/dtx
            jac[3](r, cc) = isy * x;  // d/dc
            jac[4](r, cc) = isy * y;  // d/dd
            jac[5](r, cc) = isy;      // d/dty
        }
    return jac;
}

// ---------------------------------------------------------------------------
// Gauss-Newton parameter update
// ---------------------------------------------------------------------------

namespace detail {

// Nearest-rank 90th percentile of |values|; pixels above it are treated as
// rain-contaminated and excluded from the alignment normal equations.
inline double percentile90_abs(const Matrix& m) {
    std::vector<double> v(static_cast<size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<size_t>(i)] = std::abs(m.data()[i]);
    const size_t idx = (v.size() * 9 + 9) / 10 - 1;  // ceil(0.9 n) - 1
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
    return v[idx];
}

}  // namespace detail

// One linearized alignment step: solves the damped 6x6 normal equations of
// min over dp of |warp(observed, p) + J dp - (b + r)|^2 restricted to pixels
// not dominated by rain, then backtracks (up to 5 halvings) until the full
// warp residual does not increase. Returns the accepted parameters; if no
// candidate step helps, the input parameters are returned unchanged.
//
// Pixels with |r| above the 90th percentile violate brightness constancy and
// are excluded from the normal equations, as is the entire support of the
// rain layer: a pixel the rain estimate already claims contributes only its
// shrinkage corner (residual pinned at the threshold with the sign of r),
// which points wherever the previous warp was, not where the motion is. A
// thin border band is excluded too, since the replicate-boundary clamp
// makes the warp insensitive to the parameters there. Finally, a pixel only
// enters the fit when its residual is explainable as motion of the target's
// local structure: |residual| must not exceed what a displacement of a few
// pixels could produce given the target's spatial gradient. Unmodeled rain
// fails that test (large residual over weak target gradients) — and because
// rain spots carry strong gradients of their own in the warped observation,
// gating on the observation's Jacobian instead would hand exactly those
// pixels the most leverage.
inline AffineFrame update_tau(const Matrix& observed, const Matrix& b, const Matrix& r,
                              const AffineFrame& params) {
    if (observed.rows() != b.rows() || observed.cols() != b.cols() || observed.rows() != r.rows() ||
        observed.cols() != r.cols())
        throw ArgumentError("update_tau: frame shapes differ");
    detail::check_affine(params);

    const Matrix warped = warp_affine(observed, params);
    const Matrix target = b + r;
    const std::array<Matrix, 6> jac = warp_jacobian(observed, params);
    const double rain_cut = detail::percentile90_abs(r);
    const Eigen::Index min_dim = std::min(observed.rows(), observed.cols());
    const Eigen::Index margin = std::min<Eigen::Index>(4, std::max<Eigen::Index>(0, (min_dim - 8) / 4));
    constexpr double kResidualFloor = 0.05;  // intensity slack below any gate
    constexpr double kMaxMotionPx = 4.0;     // largest displacement explained

    // The rain-support cut only applies while it leaves a healthy number of
    // pixels; with a dense r (every pixel claimed) it would starve the fit.
    Eigen::Index rain_free = 0;
    for (Eigen::Index rr = margin; rr < observed.rows() - margin; ++rr)
        for (Eigen::Index cc = margin; cc < observed.cols() - margin; ++cc)
            if (std::abs(r(rr, cc)) <= 1e-12) ++rain_free;
    const bool cut_rain_support = rain_free >= 100;

    Eigen::Matrix<double, 6, 6> hess = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> grad = Eigen::Matrix<double, 6, 1>::Zero();
    for (Eigen::Index rr = margin; rr < observed.rows() - margin; ++rr)
        for (Eigen::Index cc = margin; cc < observed.cols() - margin; ++cc) {
            if (std::abs(r(rr, cc)) > rain_cut) continue;
            if (cut_rain_support && std::abs(r(rr, cc)) > 1e-12) continue;  // rain-claimed pixel: no motion signal
            const double res = target(rr, cc) - warped(rr, cc);
            const double tgx =
                (target(rr, cc + 1 < target.cols() ? cc + 1 : cc) -
                 target(rr, cc > 0 ? cc - 1 : cc)) / 2.0;
            const double tgy =
                (target(rr + 1 < target.rows() ? rr + 1 : rr, cc) -
                 target(rr > 0 ? rr - 1 : rr, cc)) / 2.0;
            if (std::abs(res) > kResidualFloor + kMaxMotionPx * std::hypot(tgx, tgy))
                continue;
            Eigen::Matrix<double, 6, 1> j;
            for (int k = 0; k < 6; ++k) j(k) = jac[static_cast<size_t>(k)](rr, cc);
            hess.noalias() += j * j.transpose();
            grad.noalias() += j * (target(rr, cc) - warped(rr, cc));
        }
    hess.diagonal().array() += 1e-6 * hess.trace() / 6.0;

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(hess);
    if (eig.info() != Eigen::Success) throw NumericError("update_tau: eigen decomposition failed");
    const double emin = eig.eigenvalues().minCoeff(), emax = eig.eigenvalues().maxCoeff();
    if (!(emin > 0.0) || emax / emin > 1e15) {
        std::ostringstream os;
        os << "update_tau: normal matrix singular after damping (condition number "
           << (emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity()) << ")";
        throw NumericError(os.str());
    }
    const Eigen::Matrix<double, 6, 1> delta = eig.eigenvectors() *
        (eig.eigenvectors().transpose() * grad).cwiseQuotient(eig.eigenvalues());

    // Try the full step and up to 5 halvings; keep the candidate with the
    // lowest full-frame residual, falling back to the current parameters if
    // nothing at least matches them (so the residual never increases).
    AffineFrame best = params;
    double best_residual = (warped - target).squaredNorm();
    double step = 1.0;
    for (int attempt = 0; attempt <= 5; ++attempt, step *= 0.5) {
        AffineFrame cand = params;
        cand.a += step * delta(0);
        cand.b += step * delta(1);
        cand.tx += step * delta(2);
        cand.c += step * delta(3);
        cand.d += step * delta(4);
        cand.ty += step * delta(5);
        const double det = cand.det();
        if (!(det >= 0.5 && det <= 2.0)) continue;
        const double res = (warp_affine(observed, cand) - target).squaredNorm();
        if (res < best_residual) {
            best_residual = res;
            best = cand;
        }
    }
    return best;
}

}  // namespace rlrtr
