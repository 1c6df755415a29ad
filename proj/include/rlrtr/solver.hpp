#pragma once
// Alternating robust low-rank tensor recovery: decomposes a rainy video into
// a static background and a sparse rain layer under per-frame affine camera
// correction. One outer iteration updates, in order: the affine parameters
// (one damped Gauss-Newton step per frame), the rain layer (soft
// thresholding), each patch group's temporal subspace and low-rank surrogate,
// and the background (ADMM with a PCG inner solve). Every step is safeguarded
// so the composite objective never increases.

#include <rlrtr/align.hpp>
#include <rlrtr/errors.hpp>
#include <rlrtr/linalg.hpp>
#include <rlrtr/nonlocal.hpp>
#include <rlrtr/tensor.hpp>
#include <rlrtr/tnn.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace rlrtr {

struct SolverConfig {
    double omega = 0.5;           // weight of the non-local low-rank term
    double mu = -1.0;             // sparsity weight; negative = auto (robust noise rule)
    double gamma = 0.05;          // temporal total-variation weight
    double lambda_global = 1.0;   // per-group weight lambda_i, set globally
    int d_max = 3;                // temporal subspace rank cap (1..3)
    int patch = 8;                // patch edge length
    int group = 32;               // patches per group
    int stride = 4;               // exemplar grid stride
    int search_radius = 20;       // match window half-size
    int outer_max = 30;
    double outer_tol = 1e-3;      // relative background change to declare convergence
    double admm_rho = 1.0;
    int admm_max = 12;
    double cg_tol = 1e-8;         // relative residual target of the inner solve
    int cg_max = 200;
    bool enable_subspace = true;
    bool enable_affine = true;
    int recluster_every = 5;
};

struct HistoryEntry {
    double objective = 0.0;
    double rel_b_change = 0.0;
    double rain_sparsity = 0.0;  // fraction of nonzero rain voxels
};

struct DecompositionResult {
    Tensor3<double> background;  // clamped to [0,1] on export
    Tensor3<double> rain;        // aligned observation minus background
    AffineParams tau;
    Tensor3<double> residual;    // raw fit residual before export clamping
    std::vector<HistoryEntry> history;
    bool converged = false;
};

// Optional per-step hook: called with the stage name, outer iteration, and
// the exact objective value after that stage. Evaluating the objective per
// stage is costly, so the hook is intended for small diagnostic instances.
using StepObserver =
    std::function<void(const std::string& stage, int outer, double objective)>;

namespace detail {

inline void check_solver_config(const SolverConfig& cfg) {
    if (cfg.omega < 0.0) throw ArgumentError("solver: omega must be >= 0");
    if (cfg.gamma < 0.0) throw ArgumentError("solver: gamma must be >= 0");
    if (cfg.lambda_global <= 0.0)
        throw ArgumentError("solver: lambda must be positive");
    if (cfg.d_max < 1 || cfg.d_max > 3)
        throw ArgumentError("solver: subspace rank cap must be 1, 2, or 3, got " +
                            std::to_string(cfg.d_max));
    if (cfg.patch < 1 || cfg.group < 1 || cfg.stride < 1)
        throw ArgumentError("solver: patch, group, and stride must be >= 1");
    if (cfg.search_radius < 0)
        throw ArgumentError("solver: search radius must be >= 0");
    if (cfg.outer_max < 1 || cfg.admm_max < 1 || cfg.cg_max < 1 ||
        cfg.recluster_every < 1)
        throw ArgumentError("solver: iteration counts must be >= 1");
    if (cfg.outer_tol <= 0.0 || cfg.cg_tol <= 0.0)
        throw ArgumentError("solver: tolerances must be positive");
    if (cfg.admm_rho <= 0.0)
        throw ArgumentError("solver: admm step weight rho must be positive");
}

// Robust automatic sparsity weight: three sigma with sigma estimated from
// the median absolute deviation of the temporal gradient, floored so a
// noiseless input still thresholds meaningfully.
inline double auto_mu(const Tensor3<double>& O) {
    Tensor3<double> g = temporal_gradient(O);
    std::vector<double> a(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) a[i] = g.data()[i];
    const auto mid = a.begin() + a.size() / 2;
    std::nth_element(a.begin(), mid, a.end());
    const double med = *mid;
    for (double& v : a) v = std::abs(v - med);
    std::nth_element(a.begin(), mid, a.end());
    const double mad = *mid;
    return std::max(3.0 * 1.4826 * mad, 0.01);
}

inline double resolve_mu(const Tensor3<double>& O, const SolverConfig& cfg) {
    return cfg.mu < 0.0 ? auto_mu(O) : cfg.mu;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Subproblem solvers
// --------------------------------------------------------------------------

// Sparse rain layer for fixed background: exact proximal step of the L1 term
// against the quadratic fit of the aligned observation.
inline Tensor3<double> solve_R(const Tensor3<double>& o_warped,
                               const Tensor3<double>& b, double mu) {
    if (!o_warped.same_shape(b))
        throw ArgumentError("solve_R: observation and background shapes differ");
    if (mu < 0.0) throw ArgumentError("solve_R: mu must be nonnegative");
    Tensor3<double> r(o_warped.height(), o_warped.width(), o_warped.frames());
    for (std::size_t i = 0; i < r.size(); ++i)
        r.data()[i] = soft_threshold(o_warped.data()[i] - b.data()[i], mu);
    return r;
}

namespace detail {

struct TemporalBasis {
    Matrix Q;                // d x t, orthonormal rows
    Eigen::VectorXd sigma;   // all t singular values, descending
};

// Top-d temporal directions of a group tensor via the t x t Gram matrix of
// its temporal unfolding (t is small, so this is exact and cheap).
inline TemporalBasis temporal_basis(const Tensor3<double>& gathered, int d) {
    const int t = gathered.frames();
    const Matrix g3 = unfold(gathered, 3);  // t x (p^2 k)
    Matrix gram = g3 * g3.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success)
        throw NumericError("temporal_basis: eigen decomposition failed");
    TemporalBasis out;
    out.sigma.resize(t);
    out.Q = Matrix::Zero(d, t);
    for (int j = 0; j < t; ++j) {
        const double ev = std::max(0.0, eig.eigenvalues()(t - 1 - j));
        out.sigma(j) = std::sqrt(ev);
    }
    for (int j = 0; j < d; ++j) {
        Eigen::VectorXd v = eig.eigenvectors().col(t - 1 - j);
        // deterministic sign: largest-magnitude entry positive
        int arg = 0;
        for (int i = 1; i < t; ++i)
            if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
        if (v(arg) < 0.0) v = -v;
        out.Q.row(j) = v.transpose();
    }
    return out;
}

}  // namespace detail

// Temporal subspace of one patch group: rows are the top-d temporal singular
// directions of the gathered tensor's mode-3 unfolding.
inline Matrix solve_Q(const Tensor3<double>& gathered, int d) {
    const int t = gathered.frames();
    if (d < 1 || d > t)
        throw ArgumentError("solve_Q: subspace rank " + std::to_string(d) +
                            " must be within [1, " + std::to_string(t) + "]");
    return detail::temporal_basis(gathered, d).Q;
}

// Low-rank surrogate for one group: proximal step of the tensor nuclear norm
// on the subspace-projected patches.
inline Tensor3<double> solve_J(const Tensor3<double>& projected,
                               double lambda) {
    if (lambda <= 0.0) throw ArgumentError("solve_J: lambda must be positive");
    return svt_tnn(projected, lambda * lambda / 2.0);
}

// --------------------------------------------------------------------------
// Objective
// --------------------------------------------------------------------------

// Exact composite objective:
//   1/2 ||B + R - O_warped||^2 + mu ||R||_1
//   + omega * sum_i ( lambda_i^-2 ||gather(B,i) x3 Q_i - J_i||^2 + tnn(J_i) )
//   + gamma ||grad_t B||_1
inline double objective_warped(const Tensor3<double>& o_warped,
                               const Tensor3<double>& b,
                               const Tensor3<double>& r,
                               const std::vector<PatchGroup>& groups,
                               const std::vector<GroupState>& states,
                               const SolverConfig& cfg, double mu) {
    if (!o_warped.same_shape(b) || !o_warped.same_shape(r))
        throw ArgumentError("objective: tensor shapes differ");
    if (groups.size() != states.size())
        throw ArgumentError("objective: group/state count mismatch");
    if (mu < 0.0) throw ArgumentError("objective: mu must be nonnegative");

    double fit = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double d = b.data()[i] + r.data()[i] - o_warped.data()[i];
        fit += d * d;
    }
    double l1 = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) l1 += std::abs(r.data()[i]);

    double group_term = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const GroupState& s = states[i];
        const Tensor3<double> g = gather(b, groups[i]);
        const Tensor3<double> p = mode3_product(g, s.Q);
        if (!p.same_shape(s.J))
            throw ArgumentError("objective: group " + std::to_string(i) +
                                " surrogate shape mismatch");
        double quad = 0.0;
        for (std::size_t v = 0; v < p.size(); ++v) {
            const double d = p.data()[v] - s.J.data()[v];
            quad += d * d;
        }
        group_term += quad / (s.lambda * s.lambda) + tnn(s.J);
    }

    double tv = 0.0;
    const Tensor3<double> g = temporal_gradient(b);
    for (std::size_t i = 0; i < g.size(); ++i) tv += std::abs(g.data()[i]);

    return 0.5 * fit + mu * l1 + cfg.omega * group_term + cfg.gamma * tv;
}

inline double objective(const Tensor3<double>& observed,
                        const Tensor3<double>& b, const Tensor3<double>& r,
                        const AffineParams& tau,
                        const std::vector<PatchGroup>& groups,
                        const std::vector<GroupState>& states,
                        const SolverConfig& cfg, double mu) {
    return objective_warped(warp_video(observed, tau), b, r, groups, states,
                            cfg, mu);
}

// --------------------------------------------------------------------------
// Background subproblem (ADMM + per-pixel PCG)
// --------------------------------------------------------------------------

namespace detail {

// The quadratic part of the background subproblem is block-diagonal over
// pixels: gathering duplicates a pixel's temporal tube once per covering
// patch slot, the subspace projector mixes only frames, and scattering adds
// the result back to the same pixel. The full normal operator is therefore
//   A = I + (2 omega / lambda^2) * sum_i counts_i(r,c) P_i + rho * D^T D
// with P_i = Q_i^T Q_i and D the circular temporal difference — one t x t
// system per pixel, assembled once per outer iteration.
struct PixelOperator {
    int h = 0, w = 0, t = 0;
    std::vector<double> blocks;  // h*w dense t x t matrices, row-major
    std::vector<double> diag;    // exact operator diagonal per voxel (pixel-major)

    const double* block(int pix) const {
        return blocks.data() + static_cast<std::size_t>(pix) * t * t;
    }
    double* block(int pix) {
        return blocks.data() + static_cast<std::size_t>(pix) * t * t;
    }
};

inline Matrix temporal_difference_gram(int t) {
    Matrix d = Matrix::Zero(t, t);
    for (int f = 0; f < t; ++f) {
        d(f, f) = -1.0;
        d(f, (f + 1) % t) = 1.0;
    }
    return d.transpose() * d;
}

inline PixelOperator build_pixel_operator(
    int h, int w, int t, const std::vector<PatchGroup>& groups,
    const std::vector<GroupState>& states, double omega, double rho) {
    PixelOperator op;
    op.h = h;
    op.w = w;
    op.t = t;
    op.blocks.assign(static_cast<std::size_t>(h) * w * t * t, 0.0);
    const Matrix base =
        Matrix::Identity(t, t) + rho * temporal_difference_gram(t);
    for (int pix = 0; pix < h * w; ++pix) {
        double* blk = op.block(pix);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j) blk[i * t + j] = base(i, j);
    }

    std::vector<int> count(static_cast<std::size_t>(h) * w);
    std::vector<int> touched;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const PatchGroup& g = groups[gi];
        const GroupState& s = states[gi];
        const double scale = 2.0 * omega / (s.lambda * s.lambda);
        if (scale == 0.0) continue;
        const Matrix proj = scale * (s.Q.transpose() * s.Q);
        touched.clear();
        const int p = g.patch_size;
        for (const auto& [mr, mc] : g.members)
            for (int pr = 0; pr < p; ++pr)
                for (int pc = 0; pc < p; ++pc) {
                    const int pix = (mr + pr) * w + (mc + pc);
                    if (count[pix]++ == 0) touched.push_back(pix);
                }
        for (int pix : touched) {
            const double c = count[pix];
            double* blk = op.block(pix);
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < t; ++j) blk[i * t + j] += c * proj(i, j);
            count[pix] = 0;
        }
    }

    op.diag.resize(static_cast<std::size_t>(h) * w * t);
    for (int pix = 0; pix < h * w; ++pix)
        for (int f = 0; f < t; ++f)
            op.diag[static_cast<std::size_t>(pix) * t + f] =
                op.block(pix)[f * t + f];
    return op;
}

// y = A x with x, y in pixel-major tube layout (h*w tubes of length t).
inline void apply_pixel_operator(const PixelOperator& op,
                                 const std::vector<double>& x,
                                 std::vector<double>& y) {
    const int t = op.t;
    for (int pix = 0; pix < op.h * op.w; ++pix) {
        const double* blk = op.block(pix);
        const double* xp = x.data() + static_cast<std::size_t>(pix) * t;
        double* yp = y.data() + static_cast<std::size_t>(pix) * t;
        for (int i = 0; i < t; ++i) {
            double acc = 0.0;
            const double* row = blk + i * t;
            for (int j = 0; j < t; ++j) acc += row[j] * xp[j];
            yp[i] = acc;
        }
    }
}

inline std::vector<double> to_tubes(const Tensor3<double>& x) {
    const int h = x.height(), w = x.width(), t = x.frames();
    std::vector<double> out(static_cast<std::size_t>(h) * w * t);
    for (int f = 0; f < t; ++f) {
        const double* fd = x.frame_data(f);
        for (int pix = 0; pix < h * w; ++pix)
            out[static_cast<std::size_t>(pix) * t + f] = fd[pix];
    }
    return out;
}

inline Tensor3<double> from_tubes(const std::vector<double>& tubes, int h,
                                  int w, int t) {
    Tensor3<double> x(h, w, t);
    for (int f = 0; f < t; ++f) {
        double* fd = x.frame_data(f);
        for (int pix = 0; pix < h * w; ++pix)
            fd[pix] = tubes[static_cast<std::size_t>(pix) * t + f];
    }
    return x;
}

// Jacobi-preconditioned conjugate gradient on the pixel-block system.
inline std::vector<double> pcg(const PixelOperator& op,
                               const std::vector<double>& rhs,
                               std::vector<double> x, double tol, int max_iter) {
    const std::size_t n = rhs.size();
    const double rhs_norm = std::sqrt(
        std::inner_product(rhs.begin(), rhs.end(), rhs.begin(), 0.0));
    if (rhs_norm == 0.0) return std::vector<double>(n, 0.0);

    std::vector<double> r(n), z(n), p(n), ap(n);
    apply_pixel_operator(op, x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - ap[i];
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / op.diag[i];
    p = z;
    double rz = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
    double rnorm = std::sqrt(
        std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
    for (int it = 0; it < max_iter && rnorm > tol * rhs_norm; ++it) {
        apply_pixel_operator(op, p, ap);
        const double pap =
            std::inner_product(p.begin(), p.end(), ap.begin(), 0.0);
        if (pap <= 0.0)
            throw NumericError(
                "conjugate gradient: operator lost positive definiteness");
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
        for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * ap[i];
        rnorm = std::sqrt(
            std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
        if (rnorm <= tol * rhs_norm) break;
        for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / op.diag[i];
        const double rz_new =
            std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    if (rnorm > tol * rhs_norm)
        throw NumericError(
            "conjugate gradient did not reach tolerance: relative residual " +
            std::to_string(rnorm / rhs_norm) + " after " +
            std::to_string(max_iter) + " iterations");
    return x;
}

// The part of the objective that depends on B alone (fidelity, group
// quadratic, temporal TV) — used to keep the ADMM's best iterate.
inline double background_cost(const Tensor3<double>& b,
                              const Tensor3<double>& o_warped,
                              const Tensor3<double>& r,
                              const std::vector<PatchGroup>& groups,
                              const std::vector<GroupState>& states,
                              double omega, double gamma) {
    double fit = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const double d = b.data()[i] + r.data()[i] - o_warped.data()[i];
        fit += d * d;
    }
    double quad = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const Tensor3<double> p =
            mode3_product(gather(b, groups[i]), states[i].Q);
        double q = 0.0;
        for (std::size_t v = 0; v < p.size(); ++v) {
            const double d = p.data()[v] - states[i].J.data()[v];
            q += d * d;
        }
        quad += q / (states[i].lambda * states[i].lambda);
    }
    double tv = 0.0;
    const Tensor3<double> g = temporal_gradient(b);
    for (std::size_t i = 0; i < g.size(); ++i) tv += std::abs(g.data()[i]);
    return 0.5 * fit + omega * quad + gamma * tv;
}

}  // namespace detail

// Optional ADMM carry-over: passing the same state to consecutive solve_B
// calls warm-starts the split variable and the scaled dual, which avoids the
// cold-start transient (a dual at zero lets the first inner step overshoot
// the nonsmooth temporal term, wasting most of a small admm_max budget).
struct AdmmState {
    Tensor3<double> z;
    Tensor3<double> u;
    bool valid = false;
};

// Background update: ADMM splitting Z = grad_t B with scaled dual U. The
// B-step solves the per-pixel normal equations by diagonal-preconditioned
// conjugate gradient; the Z-step is soft thresholding; the returned tensor is
// the best iterate, so the subproblem objective never exceeds its value at
// B_init.
inline Tensor3<double> solve_B(const Tensor3<double>& o_warped,
                               const Tensor3<double>& r,
                               const std::vector<PatchGroup>& groups,
                               const std::vector<GroupState>& states,
                               const SolverConfig& cfg,
                               const Tensor3<double>& b_init,
                               AdmmState* carry = nullptr) {
    detail::check_solver_config(cfg);
    if (!o_warped.same_shape(r) || !o_warped.same_shape(b_init))
        throw ArgumentError("solve_B: tensor shapes differ");
    if (groups.size() != states.size())
        throw ArgumentError("solve_B: group/state count mismatch");
    const int h = o_warped.height(), w = o_warped.width(), t = o_warped.frames();
    // With no temporal-TV weight the subproblem is a smooth quadratic: skip
    // the splitting and solve the normal equations once.
    const double rho = cfg.gamma > 0.0 ? cfg.admm_rho : 0.0;

    const detail::PixelOperator op = detail::build_pixel_operator(
        h, w, t, groups, states, cfg.omega, rho);

    // constant right-hand part: (O_warped - R) + (2 omega / lambda^2) S^T(J x3 Q^T)
    Tensor3<double> rhs_fixed(h, w, t);
    for (std::size_t i = 0; i < rhs_fixed.size(); ++i)
        rhs_fixed.data()[i] = o_warped.data()[i] - r.data()[i];
    if (cfg.omega > 0.0 && !groups.empty()) {
        std::vector<std::pair<PatchGroup, Tensor3<double>>> back;
        back.reserve(groups.size());
        for (std::size_t i = 0; i < groups.size(); ++i) {
            const double scale =
                2.0 * cfg.omega / (states[i].lambda * states[i].lambda);
            Tensor3<double> lifted =
                mode3_product(states[i].J, states[i].Q.transpose());
            for (std::size_t v = 0; v < lifted.size(); ++v)
                lifted.data()[v] *= scale;
            back.emplace_back(groups[i], std::move(lifted));
        }
        const Tensor3<double> sum = scatter_accumulate(back, h, w, t).first;
        for (std::size_t i = 0; i < rhs_fixed.size(); ++i)
            rhs_fixed.data()[i] += sum.data()[i];
    }

    Tensor3<double> b = b_init;

    if (cfg.gamma == 0.0) {
        std::vector<double> x0 =
            detail::pcg(op, detail::to_tubes(rhs_fixed), detail::to_tubes(b),
                        cfg.cg_tol, cfg.cg_max);
        Tensor3<double> sol = detail::from_tubes(x0, h, w, t);
        const double init_cost = detail::background_cost(
            b_init, o_warped, r, groups, states, cfg.omega, cfg.gamma);
        const double sol_cost = detail::background_cost(
            sol, o_warped, r, groups, states, cfg.omega, cfg.gamma);
        return sol_cost <= init_cost ? sol : b_init;
    }

    // A zero dual cannot represent the temporal-TV subgradient that holds the
    // solution at a kink, so a cold start spends several iterations building
    // it up before any iterate can improve on B_init; give cold starts a
    // larger budget than dual-carrying warm starts.
    Tensor3<double> z, u;
    int budget = cfg.admm_max;
    if (carry && carry->valid && carry->z.same_shape(b_init)) {
        z = carry->z;
        u = carry->u;
    } else {
        z = temporal_gradient(b);
        u = Tensor3<double>(h, w, t);
        budget = 3 * cfg.admm_max;
    }

    Tensor3<double> best_b = b_init;
    double best_cost = detail::background_cost(b_init, o_warped, r, groups,
                                               states, cfg.omega, cfg.gamma);

    std::vector<double> x = detail::to_tubes(b);
    for (int it = 0; it < budget; ++it) {
        // B-step
        Tensor3<double> zu(h, w, t);
        for (std::size_t i = 0; i < zu.size(); ++i)
            zu.data()[i] = z.data()[i] - u.data()[i];
        Tensor3<double> rhs_t = temporal_gradient_adjoint(zu);
        for (std::size_t i = 0; i < rhs_t.size(); ++i)
            rhs_t.data()[i] = rhs_fixed.data()[i] + rho * rhs_t.data()[i];
        x = detail::pcg(op, detail::to_tubes(rhs_t), std::move(x), cfg.cg_tol,
                        cfg.cg_max);
        b = detail::from_tubes(x, h, w, t);

        const double cost = detail::background_cost(b, o_warped, r, groups,
                                                    states, cfg.omega, cfg.gamma);
        if (cost < best_cost) {
            best_cost = cost;
            best_b = b;
        }

        // Z-step and dual ascent
        const Tensor3<double> gb = temporal_gradient(b);
        Tensor3<double> z_prev = std::move(z);
        Tensor3<double> gu(h, w, t);
        for (std::size_t i = 0; i < gu.size(); ++i)
            gu.data()[i] = gb.data()[i] + u.data()[i];
        z = soft_threshold(gu, cfg.gamma / rho);
        double primal = 0.0, dz = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double pr = gb.data()[i] - z.data()[i];
            u.data()[i] += pr;
            primal += pr * pr;
            const double d = z.data()[i] - z_prev.data()[i];
            dz += d * d;
        }
        // dual residual rho * ||grad^T (z - z_prev)||; the adjoint is an
        // isometry-bounded map, cheap to evaluate exactly
        Tensor3<double> zd(h, w, t);
        for (std::size_t i = 0; i < zd.size(); ++i)
            zd.data()[i] = z.data()[i] - z_prev.data()[i];
        const Tensor3<double> dual_t = temporal_gradient_adjoint(zd);
        double dual = 0.0;
        for (std::size_t i = 0; i < dual_t.size(); ++i)
            dual += dual_t.data()[i] * dual_t.data()[i];
        if (std::sqrt(primal) < 1e-5 && rho * std::sqrt(dual) < 1e-5) break;
    }
    if (carry) {
        carry->z = std::move(z);
        carry->u = std::move(u);
        carry->valid = true;
    }
    return best_b;
}

// --------------------------------------------------------------------------
// Full alternating solver
// --------------------------------------------------------------------------

namespace detail {

// Adaptive subspace rank: singular directions carrying at least 1e-3 of the
// leading temporal energy, capped by the configured maximum.
inline int choose_rank(const Eigen::VectorXd& sigma, int d_max) {
    if (sigma(0) <= 0.0) return 1;
    int d = 0;
    for (int j = 0; j < sigma.size(); ++j)
        if (sigma(j) > 1e-3 * sigma(0)) ++d;
    return std::max(1, std::min(d_max, d));
}

// Group-term value omega * sum_i (quad/lambda^2 + tnn(J)) for given states.
inline double group_objective(const Tensor3<double>& b,
                              const std::vector<PatchGroup>& groups,
                              const std::vector<GroupState>& states,
                              double omega) {
    double total = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const Tensor3<double> p =
            mode3_product(gather(b, groups[i]), states[i].Q);
        double quad = 0.0;
        for (std::size_t v = 0; v < p.size(); ++v) {
            const double d = p.data()[v] - states[i].J.data()[v];
            quad += d * d;
        }
        total +=
            quad / (states[i].lambda * states[i].lambda) + tnn(states[i].J);
    }
    return omega * total;
}

// Fresh (Q, J) for every group on the current background. When the subspace
// stage is disabled, Q is pinned to the identity embedding and only J is
// solved, which reproduces the no-projection ablation.
inline std::vector<GroupState> fresh_states(
    const Tensor3<double>& b, const std::vector<PatchGroup>& groups,
    const SolverConfig& cfg) {
    std::vector<GroupState> states;
    states.reserve(groups.size());
    for (const PatchGroup& g : groups) {
        GroupState s;
        s.lambda = cfg.lambda_global;
        s.gathered = gather(b, g);
        if (cfg.enable_subspace) {
            const TemporalBasis basis =
                temporal_basis(s.gathered, s.gathered.frames());
            const int d = choose_rank(basis.sigma, cfg.d_max);
            s.Q = basis.Q.topRows(d);
        } else {
            s.Q = Matrix::Identity(s.gathered.frames(), s.gathered.frames());
        }
        s.J = solve_J(mode3_product(s.gathered, s.Q), s.lambda);
        states.push_back(std::move(s));
    }
    return states;
}

// (Q, J) refresh for a fixed clustering that never increases the objective:
// candidate A re-solves both from the current background, candidate B keeps
// the previous subspace and re-solves only J (an exact proximal step, so it
// cannot increase the objective); the better one wins per group.
inline void update_states(const Tensor3<double>& b,
                          const std::vector<PatchGroup>& groups,
                          std::vector<GroupState>& states,
                          const SolverConfig& cfg) {
    const auto term_value = [](const Tensor3<double>& projected,
                               const Tensor3<double>& j, double inv_l2) {
        double quad = 0.0;
        for (std::size_t v = 0; v < projected.size(); ++v) {
            const double d = projected.data()[v] - j.data()[v];
            quad += d * d;
        }
        return quad * inv_l2 + tnn(j);
    };
    for (std::size_t i = 0; i < groups.size(); ++i) {
        GroupState& s = states[i];
        s.gathered = gather(b, groups[i]);
        const double inv_l2 = 1.0 / (s.lambda * s.lambda);

        const Tensor3<double> p_keep = mode3_product(s.gathered, s.Q);
        Tensor3<double> j_keep = solve_J(p_keep, s.lambda);
        const double keep_val = term_value(p_keep, j_keep, inv_l2);

        if (cfg.enable_subspace) {
            const TemporalBasis basis =
                temporal_basis(s.gathered, s.gathered.frames());
            const int d = choose_rank(basis.sigma, cfg.d_max);
            Matrix q_new = basis.Q.topRows(d);
            const Tensor3<double> p_new = mode3_product(s.gathered, q_new);
            Tensor3<double> j_new = solve_J(p_new, s.lambda);
            if (term_value(p_new, j_new, inv_l2) < keep_val) {
                s.Q = std::move(q_new);
                s.J = std::move(j_new);
                continue;
            }
        }
        s.J = std::move(j_keep);
    }
}

}  // namespace detail

inline DecompositionResult derain(const Tensor3<double>& observed,
                                  SolverConfig cfg,
                                  const StepObserver& observe = {}) {
    detail::check_solver_config(cfg);
    const int h = observed.height(), w = observed.width(),
              t = observed.frames();
    if (t < 2) throw ArgumentError("derain: need at least 2 frames");
    if (cfg.patch > std::min(h, w))
        throw ArgumentError("derain: patch size exceeds frame size");
    const double mu = detail::resolve_mu(observed, cfg);

    AffineParams tau = identity_params(t);
    Tensor3<double> o_warped = observed;  // identity warp
    Tensor3<double> b = temporal_median(observed, /*replicate=*/true);
    Tensor3<double> r = solve_R(o_warped, b, mu);

    std::vector<PatchGroup> groups =
        cluster_groups(frame_as_matrix(b, 0), cfg.patch, cfg.group,
                       cfg.stride, cfg.search_radius);
    std::vector<GroupState> states = detail::fresh_states(b, groups, cfg);

    const auto eval_objective = [&]() {
        return objective_warped(o_warped, b, r, groups, states, cfg, mu);
    };
    const auto guard_finite = [&](double v, const char* stage) {
        if (!std::isfinite(v))
            throw NumericError(std::string("derain: objective became "
                                           "non-finite after the ") +
                               stage + " step");
        return v;
    };
    if (observe) observe("init", 0, guard_finite(eval_objective(), "init"));

    DecompositionResult result;
    AdmmState admm_carry;
    int small_change_streak = 0;

    for (int outer = 1; outer <= cfg.outer_max; ++outer) {
        const Tensor3<double> b_before = b;

        // affine step: one damped Gauss-Newton update per frame
        if (cfg.enable_affine) {
            for (int f = 0; f < t; ++f)
                tau[f] = update_tau(frame_as_matrix(observed, f),
                                    frame_as_matrix(b, f),
                                    frame_as_matrix(r, f), tau[f]);
            o_warped = warp_video(observed, tau);
            if (!o_warped.all_finite())
                throw NumericError("derain: warped observation became "
                                   "non-finite after the affine step");
            if (observe)
                observe("tau", outer, guard_finite(eval_objective(), "tau"));
        }

        // rain step: exact proximal update
        r = solve_R(o_warped, b, mu);
        if (observe)
            observe("rain", outer, guard_finite(eval_objective(), "rain"));

        // subspace step, with an optional safeguarded re-clustering
        detail::update_states(b, groups, states, cfg);
        if (outer % cfg.recluster_every == 0) {
            const Tensor3<double> med = temporal_median(b);
            std::vector<PatchGroup> regrouped =
                cluster_groups(frame_as_matrix(med, 0), cfg.patch, cfg.group,
                               cfg.stride, cfg.search_radius);
            std::vector<GroupState> restates =
                detail::fresh_states(b, regrouped, cfg);
            const double current =
                detail::group_objective(b, groups, states, cfg.omega);
            const double candidate =
                detail::group_objective(b, regrouped, restates, cfg.omega);
            if (candidate < current) {
                groups = std::move(regrouped);
                states = std::move(restates);
            }
        }
        if (observe)
            observe("subspace", outer,
                    guard_finite(eval_objective(), "subspace"));

        // background step
        b = solve_B(o_warped, r, groups, states, cfg, b, &admm_carry);
        if (!b.all_finite())
            throw NumericError(
                "derain: background became non-finite after the "
                "background step");
        if (observe)
            observe("background", outer,
                    guard_finite(eval_objective(), "background"));

        // bookkeeping
        HistoryEntry entry;
        entry.objective = guard_finite(eval_objective(), "background");
        double diff = 0.0, base = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double d = b.data()[i] - b_before.data()[i];
            diff += d * d;
            base += b_before.data()[i] * b_before.data()[i];
        }
        entry.rel_b_change =
            std::sqrt(diff) / std::max(std::sqrt(base), 1e-30);
        std::size_t nz = 0;
        for (std::size_t i = 0; i < r.size(); ++i)
            if (r.data()[i] != 0.0) ++nz;
        entry.rain_sparsity = static_cast<double>(nz) / r.size();
        result.history.push_back(entry);

        // Two consecutive small-change outers are required: the inner ADMM
        // resumes from carried state, so a single stalled outer (for example
        // one still rebuilding its dual) does not mean stationarity.
        small_change_streak =
            entry.rel_b_change < cfg.outer_tol ? small_change_streak + 1 : 0;
        if (small_change_streak >= 2) {
            result.converged = true;
            break;
        }
    }

    // export: clamp the background, fold the fit residual into the reported
    // rain layer so observed == warp^-1(background + rain) holds exactly,
    // and keep the raw residual for diagnostics
    result.residual = Tensor3<double>(h, w, t);
    for (std::size_t i = 0; i < result.residual.size(); ++i)
        result.residual.data()[i] =
            o_warped.data()[i] - b.data()[i] - r.data()[i];
    result.background = std::move(b);
    for (std::size_t i = 0; i < result.background.size(); ++i)
        result.background.data()[i] =
            std::clamp(result.background.data()[i], 0.0, 1.0);
    result.rain = Tensor3<double>(h, w, t);
    for (std::size_t i = 0; i < result.rain.size(); ++i)
        result.rain.data()[i] =
            o_warped.data()[i] - result.background.data()[i];
    result.tau = std::move(tau);
    return result;
}

}  // namespace rlrtr
