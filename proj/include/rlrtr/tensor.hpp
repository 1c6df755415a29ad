// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "rlrtr/errors.hpp"

namespace rlrtr {

/// Row-major dense matrix of doubles. Carrier for tensor unfoldings,
/// subspace bases and 2-D frames.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Dense height x width x frames volume, frame-major layout (frame slowest,
/// then row, then column). Image-valued tensors hold intensities in [0,1];
/// residual-valued tensors are unbounded.
///
/// All operations on Tensor3 are pure: inputs are never mutated and there is
/// no global state, so tensors are safe to share read-only across threads.
template <class T>
class Tensor3 {
    static_assert(std::is_floating_point_v<T>);

public:
    Tensor3() = default;

    Tensor3(int height, int width, int frames, T fill = T(0))
        : h_(height), w_(width), t_(frames) {
        if (height < 1 || width < 1 || frames < 1)
            throw ArgumentError("Tensor3: dimensions must be >= 1, got " +
                                std::to_string(height) + "x" + std::to_string(width) + "x" +
                                std::to_string(frames));
        data_.assign(static_cast<size_t>(h_) * w_ * t_, fill);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int frames() const { return t_; }
    size_t size() const { return data_.size(); }
    bool same_shape(const Tensor3& o) const {
        return h_ == o.h_ && w_ == o.w_ && t_ == o.t_;
    }

    T& operator()(int r, int c, int f) {
        return data_[static_cast<size_t>(f) * h_ * w_ + static_cast<size_t>(r) * w_ + c];
    }
    T operator()(int r, int c, int f) const {
        return data_[static_cast<size_t>(f) * h_ * w_ + static_cast<size_t>(r) * w_ + c];
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    /// Pointer to the contiguous h*w block of frame f.
    T* frame_data(int f) { return data_.data() + static_cast<size_t>(f) * h_ * w_; }
    const T* frame_data(int f) const { return data_.data() + static_cast<size_t>(f) * h_ * w_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    int h_ = 0, w_ = 0, t_ = 0;
    std::vector<T> data_;
};

using VideoTensor = Tensor3<float>;

struct Dims3 {
    int height = 0, width = 0, frames = 0;
};

namespace detail {

inline void check_mode(int mode) {
    if (mode < 1 || mode > 3)
        throw ArgumentError("unfold/fold: mode must be 1, 2 or 3, got " + std::to_string(mode));
}

}  // namespace detail

/// Mode-m matricization. Mode-m fibers become columns, ordered so that the
/// first remaining index varies fastest (Kolda-Bader convention):
///   mode 1: h x (w*t), column j = c + f*w
///   mode 2: w x (h*t), column j = r + f*h
///   mode 3: t x (h*w), column j = r + c*h
template <class T>
Matrix unfold(const Tensor3<T>& X, int mode) {
    detail::check_mode(mode);
    const int h = X.height(), w = X.width(), t = X.frames();
    Matrix M;
    switch (mode) {
        case 1:
            M.resize(h, static_cast<Eigen::Index>(w) * t);
            for (int f = 0; f < t; ++f)
                for (int c = 0; c < w; ++c)
                    for (int r = 0; r < h; ++r)
                        M(r, c + static_cast<Eigen::Index>(f) * w) = X(r, c, f);
            break;
        case 2:
            M.resize(w, static_cast<Eigen::Index>(h) * t);
            for (int f = 0; f < t; ++f)
                for (int c = 0; c < w; ++c)
                    for (int r = 0; r < h; ++r)
                        M(c, r + static_cast<Eigen::Index>(f) * h) = X(r, c, f);
            break;
        default:
            M.resize(t, static_cast<Eigen::Index>(h) * w);
            for (int f = 0; f < t; ++f)
                for (int c = 0; c < w; ++c)
                    for (int r = 0; r < h; ++r)
                        M(f, r + static_cast<Eigen::Index>(c) * h) = X(r, c, f);
            break;
    }
    return M;
}

/// Exact inverse of unfold for the given mode and original dimensions.
template <class T = double>
Tensor3<T> fold(const Matrix& M, int mode, Dims3 dims) {
    detail::check_mode(mode);
    const int h = dims.height, w = dims.width, t = dims.frames;
    Eigen::Index want_rows = 0, want_cols = 0;
    switch (mode) {
        case 1: want_rows = h; want_cols = static_cast<Eigen::Index>(w) * t; break;
        case 2: want_rows = w; want_cols = static_cast<Eigen::Index>(h) * t; break;
        default: want_rows = t; want_cols = static_cast<Eigen::Index>(h) * w; break;
    }
    if (M.rows() != want_rows || M.cols() != want_cols)
        throw ArgumentError("fold: matrix shape " + std::to_string(M.rows()) + "x" +
                            std::to_string(M.cols()) + " inconsistent with mode " +
                            std::to_string(mode) + " dims " + std::to_string(h) + "x" +
                            std::to_string(w) + "x" + std::to_string(t));
    Tensor3<T> X(h, w, t);
    switch (mode) {
        case 1:
            for (int f = 0; f < t; ++f)
                for (int c = 0; c < w; ++c)
                    for (int r = 0; r < h; ++r)
                        X(r, c, f) = static_cast<T>(M(r, c + static_cast<Eigen::Index>(f) * w));
            break;
        case 2:
            for (int f = 0; f < t; ++f)
                for (int c = 0; c < w; ++c)
                    for (int r = 0; r < h; ++r)
                        X(r, c, f) = static_cast<T>(M(c, r + static_cast<Eigen::Index>(f) * h));
            break;
        default:
            for (int f = 0; f < t; ++f)
                for (int c = 0; c < w; ++c)
                    for (int r = 0; r < h; ++r)
                        X(r, c, f) = static_cast<T>(M(f, r + static_cast<Eigen::Index>(c) * h));
            break;
    }
    return X;
}

/// Temporal-mode product: fold(Q * unfold(X,3), 3). Q has shape d x t with
/// t equal to the tensor's frame count; the result is h x w x d.
template <class T>
Tensor3<T> mode3_product(const Tensor3<T>& X, const Matrix& Q) {
    if (Q.cols() != X.frames())
        throw ArgumentError("mode3_product: Q has " + std::to_string(Q.cols()) +
                            " columns, tensor has " + std::to_string(X.frames()) + " frames");
    const int h = X.height(), w = X.width(), t = X.frames();
    const int d = static_cast<int>(Q.rows());
    Tensor3<T> Y(h, w, d);
    const size_t n = static_cast<size_t>(h) * w;
    std::vector<double> acc(n);
    for (int k = 0; k < d; ++k) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int f = 0; f < t; ++f) {
            const double q = Q(k, f);
            if (q == 0.0) continue;
            const T* src = X.frame_data(f);
            for (size_t i = 0; i < n; ++i) acc[i] += q * static_cast<double>(src[i]);
        }
        T* dst = Y.frame_data(k);
        for (size_t i = 0; i < n; ++i) dst[i] = static_cast<T>(acc[i]);
    }
    return Y;
}

/// Elementwise sign(x) * max(|x| - tau, 0); the proximal operator of tau*|.|.
inline double soft_threshold(double x, double tau) {
    if (tau < 0.0) throw ArgumentError("soft_threshold: tau must be nonnegative");
    const double m = std::abs(x) - tau;
    return m > 0.0 ? (x < 0.0 ? -m : m) : 0.0;
}

template <class T>
Tensor3<T> soft_threshold(const Tensor3<T>& X, double tau) {
    if (tau < 0.0) throw ArgumentError("soft_threshold: tau must be nonnegative");
    Tensor3<T> Y(X.height(), X.width(), X.frames());
    const T* src = X.data();
    T* dst = Y.data();
    for (size_t i = 0; i < X.size(); ++i) {
        const double m = std::abs(static_cast<double>(src[i])) - tau;
        dst[i] = m > 0.0 ? static_cast<T>(src[i] < 0 ? -m : m) : T(0);
    }
    return Y;
}

inline Matrix soft_threshold(const Matrix& X, double tau) {
    if (tau < 0.0) throw ArgumentError("soft_threshold: tau must be nonnegative");
    return X.unaryExpr([tau](double v) {
        const double m = std::abs(v) - tau;
        return m > 0.0 ? (v < 0.0 ? -m : m) : 0.0;
    });
}

/// Forward circular temporal difference: G[.,.,f] = X[.,.,(f+1) mod t] - X[.,.,f].
template <class T>
Tensor3<T> temporal_gradient(const Tensor3<T>& X) {
    const int t = X.frames();
    if (t < 2) throw ArgumentError("temporal_gradient: needs at least 2 frames");
    const int h = X.height(), w = X.width();
    Tensor3<T> G(h, w, t);
    const size_t n = static_cast<size_t>(h) * w;
    for (int f = 0; f < t; ++f) {
        const T* cur = X.frame_data(f);
        const T* nxt = X.frame_data((f + 1) % t);
        T* dst = G.frame_data(f);
        for (size_t i = 0; i < n; ++i) dst[i] = nxt[i] - cur[i];
    }
    return G;
}

/// Adjoint of temporal_gradient under the Euclidean inner product:
/// (adj G)[.,.,f] = G[.,.,(f-1) mod t] - G[.,.,f].
template <class T>
Tensor3<T> temporal_gradient_adjoint(const Tensor3<T>& G) {
    const int t = G.frames();
    if (t < 2) throw ArgumentError("temporal_gradient_adjoint: needs at least 2 frames");
    const int h = G.height(), w = G.width();
    Tensor3<T> X(h, w, t);
    const size_t n = static_cast<size_t>(h) * w;
    for (int f = 0; f < t; ++f) {
        const T* prv = G.frame_data((f + t - 1) % t);
        const T* cur = G.frame_data(f);
        T* dst = X.frame_data(f);
        for (size_t i = 0; i < n; ++i) dst[i] = prv[i] - cur[i];
    }
    return X;
}

/// Inner product with 64-bit accumulation.
template <class T>
double dot(const Tensor3<T>& a, const Tensor3<T>& b) {
    if (!a.same_shape(b)) throw ArgumentError("dot: shape mismatch");
    double s = 0.0;
    const T* pa = a.data();
    const T* pb = b.data();
    for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(pa[i]) * static_cast<double>(pb[i]);
    return s;
}

template <class T>
double squared_norm(const Tensor3<T>& a) {
    double s = 0.0;
    const T* p = a.data();
    for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(p[i]) * static_cast<double>(p[i]);
    return s;
}

template <class T>
double norm(const Tensor3<T>& a) {
    return std::sqrt(squared_norm(a));
}

template <class T>
double abs_sum(const Tensor3<T>& a) {
    double s = 0.0;
    const T* p = a.data();
    for (size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(p[i]));
    return s;
}

template <class T, class U>
Tensor3<T> tensor_cast(const Tensor3<U>& a) {
    Tensor3<T> out(a.height(), a.width(), a.frames());
    const U* src = a.data();
    T* dst = out.data();
    for (size_t i = 0; i < a.size(); ++i) dst[i] = static_cast<T>(src[i]);
    return out;
}

template <class T>
Tensor3<T> operator+(const Tensor3<T>& a, const Tensor3<T>& b) {
    if (!a.same_shape(b)) throw ArgumentError("tensor +: shape mismatch");
    Tensor3<T> out(a.height(), a.width(), a.frames());
    for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

template <class T>
Tensor3<T> operator-(const Tensor3<T>& a, const Tensor3<T>& b) {
    if (!a.same_shape(b)) throw ArgumentError("tensor -: shape mismatch");
    Tensor3<T> out(a.height(), a.width(), a.frames());
    for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    return out;
}

/// Per-pixel median over frames. Even frame counts average the two middle
/// order statistics. The result replicates the median image across `frames`
/// output frames when replicate=true, else is a single-frame tensor.
template <class T>
Tensor3<T> temporal_median(const Tensor3<T>& X, bool replicate = false) {
    const int h = X.height(), w = X.width(), t = X.frames();
    Tensor3<T> out(h, w, replicate ? t : 1);
    std::vector<T> tube(static_cast<size_t>(t));
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            for (int f = 0; f < t; ++f) tube[f] = X(r, c, f);
            const int mid = t / 2;
            std::nth_element(tube.begin(), tube.begin() + mid, tube.end());
            double med = tube[mid];
            if (t % 2 == 0) {
                // lower middle = max of the left partition
                T lo = *std::max_element(tube.begin(), tube.begin() + mid);
                med = 0.5 * (static_cast<double>(lo) + med);
            }
            const T v = static_cast<T>(med);
            for (int f = 0; f < out.frames(); ++f) out(r, c, f) = v;
        }
    return out;
}

/// Frame f as a dense double matrix.
template <class T>
Matrix frame_as_matrix(const Tensor3<T>& X, int f) {
    if (f < 0 || f >= X.frames())
        throw ArgumentError("frame_as_matrix: frame index " + std::to_string(f) + " out of range");
    Matrix M(X.height(), X.width());
    for (int r = 0; r < X.height(); ++r)
        for (int c = 0; c < X.width(); ++c) M(r, c) = X(r, c, f);
    return M;
}

template <class T>
void set_frame(Tensor3<T>& X, int f, const Matrix& M) {
    if (f < 0 || f >= X.frames())
        throw ArgumentError("set_frame: frame index out of range");
    if (M.rows() != X.height() || M.cols() != X.width())
        throw ArgumentError("set_frame: frame shape mismatch");
    for (int r = 0; r < X.height(); ++r)
        for (int c = 0; c < X.width(); ++c) X(r, c, f) = static_cast<T>(M(r, c));
}

}  // namespace rlrtr
