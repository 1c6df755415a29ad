// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <complex>

#include "rlrtr/rng.hpp"
#include "rlrtr/tensor.hpp"

using namespace rlrtr;

namespace {

Tensor3<double> random_tensor(int h, int w, int t, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor3<double> X(h, w, t);
    for (int f = 0; f < t; ++f)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) X(r, c, f) = rng.uniform(lo, hi);
    return X;
}

// Index-mapping oracle written directly from the ordering rule: mode-m fibers
// as columns, first remaining index fastest.
double unfold_oracle(const Tensor3<double>& X, int mode, int row, Eigen::Index col) {
    const int h = X.height(), w = X.width();
    switch (mode) {
        case 1: {
            const int c = static_cast<int>(col % w);
            const int f = static_cast<int>(col / w);
            return X(row, c, f);
        }
        case 2: {
            const int r = static_cast<int>(col % h);
            const int f = static_cast<int>(col / h);
            return X(r, row, f);
        }
        default: {
            const int r = static_cast<int>(col % h);
            const int c = static_cast<int>(col / h);
            return X(r, c, row);
        }
    }
}

}  // namespace

TEST_CASE("unfold shapes and round-trips", "[tensor]") {
    Rng rng(11);
    Tensor3<double> X = random_tensor(2, 2, 2, rng);

    SECTION("2x2x2 mode-3 unfolding is 2x4") {
        Matrix M = unfold(X, 3);
        REQUIRE(M.rows() == 2);
        REQUIRE(M.cols() == 4);
    }

    SECTION("fold(unfold(T,m),m) is the identity, bit-exact") {
        Tensor3<double> T = random_tensor(3, 5, 4, rng);
        for (int mode : {1, 2, 3}) {
            auto back = fold<double>(unfold(T, mode), mode, {3, 5, 4});
            for (int f = 0; f < 4; ++f)
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 5; ++c) REQUIRE(back(r, c, f) == T(r, c, f));
        }
        // float tensors round-trip bit-exactly through the double matrix
        VideoTensor V(3, 4, 2);
        for (int f = 0; f < 2; ++f)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 4; ++c) V(r, c, f) = static_cast<float>(rng.uniform01());
        auto vb = fold<float>(unfold(V, 3), 3, {3, 4, 2});
        for (int f = 0; f < 2; ++f)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 4; ++c) REQUIRE(vb(r, c, f) == V(r, c, f));
    }

    SECTION("mode-1 unfolding of a random 3x4x5 matches the index-mapping oracle") {
        Tensor3<double> T = random_tensor(3, 4, 5, rng);
        Matrix M = unfold(T, 1);
        REQUIRE(M.rows() == 3);
        REQUIRE(M.cols() == 20);
        for (int r = 0; r < M.rows(); ++r)
            for (Eigen::Index c = 0; c < M.cols(); ++c)
                REQUIRE(M(r, c) == unfold_oracle(T, 1, r, c));
    }

    SECTION("all modes match the oracle") {
        Tensor3<double> T = random_tensor(4, 3, 6, rng);
        for (int mode : {1, 2, 3}) {
            Matrix M = unfold(T, mode);
            for (int r = 0; r < M.rows(); ++r)
                for (Eigen::Index c = 0; c < M.cols(); ++c)
                    REQUIRE(M(r, c) == unfold_oracle(T, mode, r, c));
        }
    }

    SECTION("invalid mode and shape mismatches throw") {
        REQUIRE_THROWS_AS(unfold(X, 0), ArgumentError);
        REQUIRE_THROWS_AS(unfold(X, 4), ArgumentError);
        Matrix M = unfold(X, 3);
        REQUIRE_THROWS_AS(fold<double>(M, 3, {3, 2, 2}), ArgumentError);
        REQUIRE_THROWS_AS(fold<double>(M, 0, {2, 2, 2}), ArgumentError);
    }

    SECTION("1x1x1 fold preserves the scalar") {
        Matrix M(1, 1);
        M(0, 0) = 0.625;
        auto T = fold<double>(M, 2, {1, 1, 1});
        REQUIRE(T(0, 0, 0) == 0.625);
    }
}

TEST_CASE("mode3_product", "[tensor]") {
    Rng rng(12);
    Tensor3<double> T = random_tensor(3, 3, 4, rng);

    SECTION("identity Q returns the tensor") {
        Matrix Q = Matrix::Identity(4, 4);
        auto Y = mode3_product(T, Q);
        for (int f = 0; f < 4; ++f)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) REQUIRE(Y(r, c, f) == Catch::Approx(T(r, c, f)));
    }

    SECTION("constant row 1/sqrt(t) collapses tubes to sqrt(t) * temporal mean") {
        const int t = 4;
        Matrix Q(1, t);
        Q.setConstant(1.0 / std::sqrt(static_cast<double>(t)));
        auto Y = mode3_product(T, Q);
        REQUIRE(Y.frames() == 1);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double mean = 0;
                for (int f = 0; f < t; ++f) mean += T(r, c, f);
                mean /= t;
                REQUIRE(Y(r, c, 0) == Catch::Approx(std::sqrt(static_cast<double>(t)) * mean));
            }
    }

    SECTION("random orthonormal 2x4 Q matches the triple-loop oracle") {
        Matrix A(2, 4);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 4; ++j) A(i, j) = rng.normal();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(A.transpose());
        Matrix Q = Eigen::MatrixXd(qr.householderQ()).leftCols(2).transpose();
        auto Y = mode3_product(T, Q);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                for (int k = 0; k < 2; ++k) {
                    double s = 0;
                    for (int f = 0; f < 4; ++f) s += Q(k, f) * T(r, c, f);
                    REQUIRE(Y(r, c, k) == Catch::Approx(s).margin(1e-12));
                }
    }

    SECTION("associativity: (T x3 Q) x3 P == T x3 (PQ)") {
        Matrix Q(3, 4), P(2, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) Q(i, j) = rng.normal();
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) P(i, j) = rng.normal();
        auto lhs = mode3_product(mode3_product(T, Q), P);
        Matrix PQ = P * Q;
        auto rhs = mode3_product(T, PQ);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                for (int k = 0; k < 2; ++k)
                    REQUIRE(std::abs(lhs(r, c, k) - rhs(r, c, k)) < 1e-10);
    }

    SECTION("dimension mismatch throws") {
        Matrix Q = Matrix::Identity(3, 3);
        REQUIRE_THROWS_AS(mode3_product(T, Q), ArgumentError);
    }
}

TEST_CASE("soft_threshold", "[tensor]") {
    SECTION("analytic values") {
        REQUIRE(soft_threshold(0.5, 0.2) == Catch::Approx(0.3));
        REQUIRE(soft_threshold(-0.1, 0.2) == 0.0);
        REQUIRE(soft_threshold(0.7, 0.0) == 0.7);
        REQUIRE(soft_threshold(-0.9, 0.4) == Catch::Approx(-0.5));
    }

    SECTION("negative tau throws") {
        REQUIRE_THROWS_AS(soft_threshold(1.0, -0.1), ArgumentError);
        Tensor3<double> X(2, 2, 2, 1.0);
        REQUIRE_THROWS_AS(soft_threshold(X, -1.0), ArgumentError);
    }

    SECTION("exact minimizer of the scalar prox objective") {
        Rng rng(5);
        for (int i = 0; i < 50; ++i) {
            const double x = rng.uniform(-2, 2), tau = rng.uniform(0, 1);
            const double y = soft_threshold(x, tau);
            const double fy = 0.5 * (y - x) * (y - x) + tau * std::abs(y);
            for (int j = 0; j < 20; ++j) {
                const double z = y + rng.uniform(-0.5, 0.5);
                const double fz = 0.5 * (z - x) * (z - x) + tau * std::abs(z);
                REQUIRE(fy <= fz + 1e-12);
            }
        }
    }

    SECTION("non-expansive on random pairs") {
        Rng rng(6);
        for (int i = 0; i < 30; ++i) {
            Tensor3<double> X = random_tensor(4, 3, 3, rng);
            Tensor3<double> Y = random_tensor(4, 3, 3, rng);
            const double tau = rng.uniform(0, 0.5);
            auto px = soft_threshold(X, tau);
            auto py = soft_threshold(Y, tau);
            REQUIRE(norm(px - py) <= norm(X - Y) + 1e-12);
        }
    }
}

TEST_CASE("temporal gradient and adjoint", "[tensor]") {
    Rng rng(7);

    SECTION("static video has zero gradient") {
        Tensor3<double> X(4, 5, 6);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 5; ++c) {
                const double v = rng.uniform01();
                for (int f = 0; f < 6; ++f) X(r, c, f) = v;
            }
        auto G = temporal_gradient(X);
        for (size_t i = 0; i < G.size(); ++i) REQUIRE(G.data()[i] == 0.0);
    }

    SECTION("single nonzero voxel yields exactly two nonzero entries of +-value") {
        Tensor3<double> X(3, 3, 5);
        X(1, 2, 2) = 0.8;
        auto G = temporal_gradient(X);
        int nonzeros = 0;
        for (size_t i = 0; i < G.size(); ++i)
            if (G.data()[i] != 0.0) ++nonzeros;
        REQUIRE(nonzeros == 2);
        REQUIRE(G(1, 2, 1) == Catch::Approx(0.8));
        REQUIRE(G(1, 2, 2) == Catch::Approx(-0.8));
    }

    SECTION("adjoint identity <grad x, y> == <x, adj y> within 1e-10") {
        for (int i = 0; i < 20; ++i) {
            Tensor3<double> X = random_tensor(5, 4, 6, rng);
            Tensor3<double> Y = random_tensor(5, 4, 6, rng);
            const double lhs = dot(temporal_gradient(X), Y);
            const double rhs = dot(X, temporal_gradient_adjoint(Y));
            REQUIRE(std::abs(lhs - rhs) < 1e-10);
        }
    }

    SECTION("adj(grad) is diagonalized by the temporal DFT") {
        // Circular Laplacian eigenvalues 2 - 2cos(2 pi k / t) per frequency.
        const int h = 2, w = 2, t = 6;
        Tensor3<double> X = random_tensor(h, w, t, rng);
        auto L = temporal_gradient_adjoint(temporal_gradient(X));
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                std::vector<std::complex<double>> spec(t), lspec(t);
                for (int k = 0; k < t; ++k) {
                    std::complex<double> sx(0, 0), sl(0, 0);
                    for (int f = 0; f < t; ++f) {
                        const double a = -2.0 * M_PI * k * f / t;
                        const std::complex<double> e(std::cos(a), std::sin(a));
                        sx += e * X(r, c, f);
                        sl += e * L(r, c, f);
                    }
                    const double lam = 2.0 - 2.0 * std::cos(2.0 * M_PI * k / t);
                    REQUIRE(std::abs(sl - lam * sx) < 1e-8);
                }
            }
    }

    SECTION("fewer than two frames throws") {
        Tensor3<double> X(2, 2, 1);
        REQUIRE_THROWS_AS(temporal_gradient(X), ArgumentError);
        REQUIRE_THROWS_AS(temporal_gradient_adjoint(X), ArgumentError);
    }
}

TEST_CASE("temporal median", "[tensor]") {
    SECTION("odd count picks the middle value") {
        Tensor3<double> X(1, 1, 3);
        X(0, 0, 0) = 5.0;
        X(0, 0, 1) = 1.0;
        X(0, 0, 2) = 3.0;
        REQUIRE(temporal_median(X)(0, 0, 0) == 3.0);
    }
    SECTION("even count averages the two middle values") {
        Tensor3<double> X(1, 1, 4);
        X(0, 0, 0) = 4.0;
        X(0, 0, 1) = 1.0;
        X(0, 0, 2) = 2.0;
        X(0, 0, 3) = 9.0;
        REQUIRE(temporal_median(X)(0, 0, 0) == 3.0);
    }
}

TEST_CASE("tensor invariants", "[tensor]") {
    SECTION("constructor rejects degenerate dimensions") {
        REQUIRE_THROWS_AS(Tensor3<double>(0, 2, 2), ArgumentError);
        REQUIRE_THROWS_AS(Tensor3<double>(2, -1, 2), ArgumentError);
    }
    SECTION("rng determinism") {
        Rng a(99), b(99);
        for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    }
}
