// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rlrtr/align.hpp"
#include "rlrtr/rng.hpp"

using namespace rlrtr;

namespace {

// Smooth aperiodic calibration image: a mixture of Gaussian bumps sampled
// from a closed form, so observations under known jitter can be generated
// analytically (no resampling error in the fixture itself).
struct BumpImage {
    struct Bump {
        double cx, cy, amp, two_s2;
    };
    std::vector<Bump> bumps;

    explicit BumpImage(uint64_t seed, int extent = 128, int count = 18) {
        Rng rng(seed);
        for (int i = 0; i < count; ++i) {
            const double s = rng.uniform(10.0, 22.0);
            const double amp = (rng.uniform01() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.12, 0.28);
            bumps.push_back({rng.uniform(8.0, extent - 8.0), rng.uniform(8.0, extent - 8.0), amp,
                             2.0 * s * s});
        }
    }

    double operator()(double x, double y) const {
        double v = 0.5;
        for (const auto& b : bumps) {
            const double dx = x - b.cx, dy = y - b.cy;
            v += b.amp * std::exp(-(dx * dx + dy * dy) / b.two_s2);
        }
        return v;
    }

    Matrix sample(int h, int w, const AffineFrame& p = AffineFrame{}) const {
        Matrix m(h, w);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                m(r, c) = (*this)(p.a * c + p.b * r + p.tx, p.c * c + p.d * r + p.ty);
        return m;
    }
};

AffineFrame rotation_translation(double degrees, double tx, double ty) {
    const double rad = degrees * M_PI / 180.0;
    AffineFrame p;
    p.a = std::cos(rad);
    p.b = -std::sin(rad);
    p.c = std::sin(rad);
    p.d = std::cos(rad);
    p.tx = tx;
    p.ty = ty;
    return p;
}

}  // namespace

TEST_CASE("warp_affine", "[align]") {
    Rng rng(51);
    const BumpImage scene(7);

    SECTION("identity returns the input bit-exactly") {
        Matrix x = scene.sample(17, 23);
        Matrix y = warp_affine(x, AffineFrame{});
        for (int r = 0; r < 17; ++r)
            for (int c = 0; c < 23; ++c) REQUIRE(y(r, c) == x(r, c));
    }

    SECTION("unit translation shifts one column with a replicated edge") {
        Matrix x(3, 4);
        x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
        AffineFrame p;
        p.tx = 1.0;  // source = x + 1: pulls the image one column leftward
        Matrix y = warp_affine(x, p);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) REQUIRE(y(r, c) == x(r, c + 1));
            REQUIRE(y(r, 3) == x(r, 3));  // replicate boundary
        }
    }

    SECTION("half-pixel translation on a ramp shifts values by half an increment") {
        const double slope = 0.01;
        Matrix x(5, 8);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 8; ++c) x(r, c) = slope * c;
        AffineFrame p;
        p.tx = 0.5;
        Matrix y = warp_affine(x, p);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c + 1 < 8; ++c)
                REQUIRE(y(r, c) == Catch::Approx(slope * (c + 0.5)).margin(1e-12));
    }

    SECTION("determinant bound enforced") {
        Matrix x = Matrix::Zero(4, 4);
        AffineFrame p;
        p.a = 0.4;  // det 0.4
        REQUIRE_THROWS_AS(warp_affine(x, p), ArgumentError);
        p.a = 2.5;  // det 2.5
        REQUIRE_THROWS_AS(warp_affine(x, p), ArgumentError);
    }

    SECTION("warp then inverse warp restores smooth images away from the border") {
        Matrix x = scene.sample(64, 64);
        for (int trial = 0; trial < 4; ++trial) {
            AffineFrame s = rotation_translation(rng.uniform(-0.6, 0.6), rng.uniform(-1.2, 1.2),
                                                 rng.uniform(-1.2, 1.2));
            Matrix y = warp_affine(warp_affine(x, s), inverse(s));
            double worst = 0.0;
            for (int r = 2; r < 62; ++r)
                for (int c = 2; c < 62; ++c) worst = std::max(worst, std::abs(y(r, c) - x(r, c)));
            REQUIRE(worst <= 1e-2);
        }
    }

    SECTION("inverse composes to the identity map") {
        Rng prng(52);
        for (int trial = 0; trial < 20; ++trial) {
            AffineFrame p = rotation_translation(prng.uniform(-3, 3), prng.uniform(-2, 2),
                                                 prng.uniform(-2, 2));
            p.a *= prng.uniform(0.9, 1.1);
            AffineFrame q = inverse(p);
            for (int i = 0; i < 10; ++i) {
                const double x = prng.uniform(0, 64), y = prng.uniform(0, 64);
                const double mx = p.a * x + p.b * y + p.tx, my = p.c * x + p.d * y + p.ty;
                const double bx = q.a * mx + q.b * my + q.tx, by = q.c * mx + q.d * my + q.ty;
                REQUIRE(bx == Catch::Approx(x).margin(1e-10));
                REQUIRE(by == Catch::Approx(y).margin(1e-10));
            }
        }
    }
}

TEST_CASE("warp_jacobian", "[align]") {
    SECTION("constant image has an all-zero Jacobian") {
        Matrix x = Matrix::Constant(9, 9, 0.7);
        auto jac = warp_jacobian(x, AffineFrame{});
        for (const auto& m : jac) REQUIRE(m.cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("ramp image: translation column equals the slope in the interior") {
        const double slope = 0.02;
        Matrix x(7, 9);
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 9; ++c) x(r, c) = slope * c;
        auto jac = warp_jacobian(x, AffineFrame{});
        for (int r = 0; r < 7; ++r)
            for (int c = 1; c + 1 < 9; ++c)
                REQUIRE(jac[2](r, c) == Catch::Approx(slope).margin(1e-12));
        // the vertical-translation column is identically zero for an x-ramp
        REQUIRE(jac[5].cwiseAbs().maxCoeff() == Catch::Approx(0.0).margin(1e-15));
    }

    SECTION("matches central finite differences of the warp at identity") {
        const BumpImage scene(9, 32);
        Matrix x = scene.sample(32, 30);
        const AffineFrame p{};
        auto jac = warp_jacobian(x, p);
        const double eps = 1e-4;
        double* fields[6];
        AffineFrame q;
        fields[0] = &q.a;
        fields[1] = &q.b;
        fields[2] = &q.tx;
        fields[3] = &q.c;
        fields[4] = &q.d;
        fields[5] = &q.ty;
        for (int k = 0; k < 6; ++k) {
            q = p;
            *fields[k] += eps;
            Matrix plus = warp_affine(x, q);
            q = p;
            *fields[k] -= eps;
            Matrix minus = warp_affine(x, q);
            Matrix fd = (plus - minus) / (2.0 * eps);
            const double rel = (jac[static_cast<size_t>(k)] - fd).norm() / (fd.norm() + 1e-30);
            REQUIRE(rel < 1e-3);
        }
    }
}

TEST_CASE("update_tau", "[align]") {
    SECTION("already aligned input yields a zero step") {
        const BumpImage scene(11);
        Matrix o = scene.sample(40, 40);
        Matrix r = Matrix::Zero(40, 40);
        AffineFrame start = rotation_translation(0.2, 0.5, -0.3);
        Matrix target = warp_affine(o, start);  // O warped by `start` IS the target
        AffineFrame out = update_tau(o, target, r, start);
        REQUIRE(std::abs(out.a - start.a) < 1e-8);
        REQUIRE(std::abs(out.b - start.b) < 1e-8);
        REQUIRE(std::abs(out.tx - start.tx) < 1e-8);
        REQUIRE(std::abs(out.c - start.c) < 1e-8);
        REQUIRE(std::abs(out.d - start.d) < 1e-8);
        REQUIRE(std::abs(out.ty - start.ty) < 1e-8);
    }

    SECTION("recovers a 1.5 px translation within 1e-2 px in five iterations") {
        const BumpImage scene(3);
        Matrix b = scene.sample(128, 128);
        AffineFrame jitter;
        jitter.tx = 1.5;
        jitter.ty = -0.8;
        Matrix o = scene.sample(128, 128, jitter);  // analytic observation
        const AffineFrame truth = inverse(jitter);
        Matrix r = Matrix::Zero(128, 128);
        AffineFrame p;
        for (int it = 0; it < 5; ++it) p = update_tau(o, b, r, p);
        REQUIRE(mean_endpoint_error(p, truth, 128, 128) < 1e-2);
    }

    SECTION("recovers rotation 0.5 degrees plus 1 px translation") {
        const BumpImage scene(4);
        Matrix b = scene.sample(128, 128);
        AffineFrame jitter = rotation_translation(0.5, 1.0, 0.4);
        Matrix o = scene.sample(128, 128, jitter);
        const AffineFrame truth = inverse(jitter);
        Matrix r = Matrix::Zero(128, 128);
        AffineFrame p;
        for (int it = 0; it < 5; ++it) p = update_tau(o, b, r, p);
        REQUIRE(mean_endpoint_error(p, truth, 128, 128) < 1e-2);
    }

    SECTION("never increases the warp residual") {
        Rng rng(53);
        const BumpImage scene(5, 48);
        Matrix b = scene.sample(48, 48);
        for (int trial = 0; trial < 6; ++trial) {
            AffineFrame jitter = rotation_translation(rng.uniform(-0.5, 0.5), rng.uniform(-1, 1),
                                                      rng.uniform(-1, 1));
            Matrix o = scene.sample(48, 48, jitter);
            Matrix r(48, 48);
            for (int i = 0; i < 48 * 48; ++i)
                r.data()[i] = rng.uniform01() < 0.05 ? rng.uniform(0, 0.4) : 0.0;
            AffineFrame p = rotation_translation(rng.uniform(-0.3, 0.3), rng.uniform(-0.5, 0.5),
                                                 rng.uniform(-0.5, 0.5));
            const double before = (warp_affine(o, p) - b - r).squaredNorm();
            AffineFrame p2 = update_tau(o, b, r, p);
            const double after = (warp_affine(o, p2) - b - r).squaredNorm();
            REQUIRE(after <= before + 1e-12);
        }
    }

    SECTION("rain masking improves alignment under contamination") {
        Rng rng(54);
        const BumpImage scene(6, 96);
        Matrix b = scene.sample(96, 96);
        AffineFrame jitter;
        jitter.tx = 1.0;
        jitter.ty = 0.6;
        const AffineFrame truth = inverse(jitter);
        // sparse rain rides in the observation; the aligned rain layer is the
        // caller's current estimate, so its support drives the mask
        Matrix rain_obs = Matrix::Zero(96, 96);
        for (int i = 0; i < 96 * 96; ++i)
            if (rng.uniform01() < 0.02) rain_obs.data()[i] = rng.uniform(0.18, 0.3);
        Matrix o = scene.sample(96, 96, jitter) + rain_obs;
        Matrix r_known = warp_affine(rain_obs, truth);
        Matrix r_none = Matrix::Zero(96, 96);
        AffineFrame with_mask, without_mask;
        for (int it = 0; it < 5; ++it) {
            with_mask = update_tau(o, b, r_known, with_mask);
            without_mask = update_tau(o, b, r_none, without_mask);
        }
        const double masked = mean_endpoint_error(with_mask, truth, 96, 96);
        const double unmasked = mean_endpoint_error(without_mask, truth, 96, 96);
        REQUIRE(masked < unmasked);  // excluding rain pixels helps, strictly
        REQUIRE(masked < 0.3);       // and the rain does not derail the fit
    }

    SECTION("shape mismatch throws") {
        Matrix o(4, 4), b(4, 5), r(4, 4);
        o.setZero();
        b.setZero();
        r.setZero();
        REQUIRE_THROWS_AS(update_tau(o, b, r, AffineFrame{}), ArgumentError);
    }
}

TEST_CASE("warp_video and identity_params", "[align]") {
    SECTION("per-frame parameters apply independently") {
        VideoTensor v(4, 4, 2);
        for (int f = 0; f < 2; ++f)
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) v(r, c, f) = static_cast<float>(f + 0.1 * c);
        AffineParams tau = identity_params(2);
        tau[1].tx = 1.0;
        VideoTensor w = warp_video(v, tau);
        REQUIRE(w(0, 0, 0) == v(0, 0, 0));
        REQUIRE(w(0, 0, 1) == Catch::Approx(v(0, 1, 1)));
    }
    SECTION("parameter count must match frames") {
        VideoTensor v(2, 2, 3);
        REQUIRE_THROWS_AS(warp_video(v, identity_params(2)), ArgumentError);
    }
}
