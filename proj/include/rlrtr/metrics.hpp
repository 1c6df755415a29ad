// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0
//
// Quality metrics and diagnostic statistics for derained video: PSNR, SSIM,
// directional gradient histograms, section-line roughness, and rain-support
// F1. All functions are pure and deterministic.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "rlrtr/errors.hpp"
#include "rlrtr/tensor.hpp"

namespace rlrtr {

// ---------------------------------------------------------------------------
// Peak signal-to-noise ratio
// ---------------------------------------------------------------------------

// 10*log10(peak^2 / MSE) in decibels; identical inputs yield +infinity.
template <class T>
double psnr(const Tensor3<T>& x, const Tensor3<T>& y, double peak = 1.0) {
    if (!x.same_shape(y)) throw ArgumentError("psnr: shape mismatch");
    if (!(peak > 0)) throw ArgumentError("psnr: peak must be positive");
    double se = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x.data()[i]) - static_cast<double>(y.data()[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(x.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

inline double psnr(const Matrix& x, const Matrix& y, double peak = 1.0) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw ArgumentError("psnr: shape mismatch");
    if (!(peak > 0)) throw ArgumentError("psnr: peak must be positive");
    const double mse = (x - y).squaredNorm() / static_cast<double>(x.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

// ---------------------------------------------------------------------------
// Structural similarity
// ---------------------------------------------------------------------------

namespace detail {

// 11x11 Gaussian window, sigma 1.5, normalized to unit sum.
inline const std::array<double, 11>& ssim_window_1d() {
    static const std::array<double, 11> w = [] {
        std::array<double, 11> g{};
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5.0;
            g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += g[i];
        }
        for (double& v : g) v /= sum;
        return g;
    }();
    return w;
}

// Separable valid-region Gaussian filter: output is (rows-10) x (cols-10).
inline Matrix ssim_filter(const Matrix& x) {
    const auto& w = ssim_window_1d();
    const Eigen::Index h = x.rows(), cw = x.cols();
    Matrix tmp(h, cw - 10);
    for (Eigen::Index r = 0; r < h; ++r)
        for (Eigen::Index c = 0; c + 10 < cw; ++c) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += w[static_cast<size_t>(i)] * x(r, c + i);
            tmp(r, c) = s;
        }
    Matrix out(h - 10, cw - 10);
    for (Eigen::Index r = 0; r + 10 < h; ++r)
        for (Eigen::Index c = 0; c < tmp.cols(); ++c) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += w[static_cast<size_t>(i)] * tmp(r + i, c);
            out(r, c) = s;
        }
    return out;
}

}  // namespace detail

// Mean local SSIM over the valid interior (11x11 Gaussian window, sigma 1.5,
// K1 = 0.01, K2 = 0.03, dynamic range 1.0).
inline double ssim(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw ArgumentError("ssim: shape mismatch");
    if (x.rows() < 11 || x.cols() < 11)
        throw ArgumentError("ssim: image smaller than the 11x11 window");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const Matrix mu_x = detail::ssim_filter(x);
    const Matrix mu_y = detail::ssim_filter(y);
    const Matrix xx = detail::ssim_filter(Matrix(x.cwiseProduct(x)));
    const Matrix yy = detail::ssim_filter(Matrix(y.cwiseProduct(y)));
    const Matrix xy = detail::ssim_filter(Matrix(x.cwiseProduct(y)));
    double acc = 0.0;
    for (Eigen::Index r = 0; r < mu_x.rows(); ++r)
        for (Eigen::Index c = 0; c < mu_x.cols(); ++c) {
            const double mx = mu_x(r, c), my = mu_y(r, c);
            const double vx = xx(r, c) - mx * mx;
            const double vy = yy(r, c) - my * my;
            const double cv = xy(r, c) - mx * my;
            const double num = (2.0 * mx * my + c1) * (2.0 * cv + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            acc += num / den;
        }
    return acc / static_cast<double>(mu_x.size());
}

// ---------------------------------------------------------------------------
// Directional gradient histograms
// ---------------------------------------------------------------------------

// Normalized frequency histograms of horizontal (along width) and vertical
// (along height) forward differences, over 64 fixed bins spanning
// [-0.5, 0.5]; out-of-range values land in the end bins.
struct GradientHistogramPair {
    static constexpr int kBins = 64;
    std::array<double, kBins + 1> bin_edges{};
    std::array<double, kBins> h_counts{};
    std::array<double, kBins> v_counts{};
};

namespace detail {

inline int gradient_bin(double g) {
    constexpr int n = GradientHistogramPair::kBins;
    const int b = static_cast<int>(std::floor((g + 0.5) / (1.0 / n)));
    return std::clamp(b, 0, n - 1);
}

// Jensen-Shannon divergence between two normalized histograms (natural log).
template <size_t N>
double js_divergence(const std::array<double, N>& p, const std::array<double, N>& q) {
    auto kl = [](double a, double m) { return a > 0.0 ? a * std::log(a / m) : 0.0; };
    double d = 0.0;
    for (size_t i = 0; i < N; ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (m > 0.0) d += 0.5 * kl(p[i], m) + 0.5 * kl(q[i], m);
    }
    return std::max(d, 0.0);
}

}  // namespace detail

inline std::pair<GradientHistogramPair, double> gradient_isotropy(const Matrix& frame) {
    if (frame.rows() < 2 || frame.cols() < 2)
        throw ArgumentError("gradient_isotropy: image must be at least 2x2");
    GradientHistogramPair hist;
    constexpr int n = GradientHistogramPair::kBins;
    for (int i = 0; i <= n; ++i) hist.bin_edges[static_cast<size_t>(i)] = -0.5 + i * (1.0 / n);
    double hn = 0.0, vn = 0.0;
    for (Eigen::Index r = 0; r < frame.rows(); ++r)
        for (Eigen::Index c = 0; c + 1 < frame.cols(); ++c) {
            hist.h_counts[static_cast<size_t>(detail::gradient_bin(frame(r, c + 1) - frame(r, c)))] += 1.0;
            hn += 1.0;
        }
    for (Eigen::Index r = 0; r + 1 < frame.rows(); ++r)
        for (Eigen::Index c = 0; c < frame.cols(); ++c) {
            hist.v_counts[static_cast<size_t>(detail::gradient_bin(frame(r + 1, c) - frame(r, c)))] += 1.0;
            vn += 1.0;
        }
    for (double& v : hist.h_counts) v /= hn;
    for (double& v : hist.v_counts) v /= vn;
    return {hist, detail::js_divergence(hist.h_counts, hist.v_counts)};
}

// ---------------------------------------------------------------------------
// Section lines
// ---------------------------------------------------------------------------

// The raw pixel values of one image row.
inline std::vector<double> section_line(const Matrix& frame, int row) {
    if (row < 0 || row >= frame.rows()) throw ArgumentError("section_line: row out of range");
    std::vector<double> p(static_cast<size_t>(frame.cols()));
    for (Eigen::Index c = 0; c < frame.cols(); ++c) p[static_cast<size_t>(c)] = frame(row, c);
    return p;
}

// Mean absolute second difference of a profile; 0 for fewer than 3 samples.
inline double roughness(const std::vector<double>& profile) {
    if (profile.size() < 3) return 0.0;
    double acc = 0.0;
    for (size_t i = 1; i + 1 < profile.size(); ++i)
        acc += std::abs(profile[i + 1] - 2.0 * profile[i] + profile[i - 1]);
    return acc / static_cast<double>(profile.size() - 2);
}

// ---------------------------------------------------------------------------
// Rain-support agreement
// ---------------------------------------------------------------------------

// F1 score of the binary supports {|R| > threshold}; 1.0 when both supports
// are empty (perfect agreement on "no rain anywhere").
template <class T>
double rain_support_f1(const Tensor3<T>& r_hat, const Tensor3<T>& r_true, double threshold) {
    if (!r_hat.same_shape(r_true)) throw ArgumentError("rain_support_f1: shape mismatch");
    if (!(threshold > 0)) throw ArgumentError("rain_support_f1: threshold must be positive");
    long long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < r_hat.size(); ++i) {
        const bool a = std::abs(static_cast<double>(r_hat.data()[i])) > threshold;
        const bool b = std::abs(static_cast<double>(r_true.data()[i])) > threshold;
        tp += (a && b);
        fp += (a && !b);
        fn += (!a && b);
    }
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace rlrtr
