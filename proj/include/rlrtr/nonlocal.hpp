#pragma once
// Non-local patch grouping: clusters mutually similar patches around a stride
// grid of exemplars, gathers each cluster into a small tensor (one vectorized
// patch per column, one slice per frame), and scatters per-group results back
// onto the video with per-voxel contribution counts.

#include <rlrtr/errors.hpp>
#include <rlrtr/tensor.hpp>

#include <algorithm>
#include <utility>
#include <vector>

namespace rlrtr {

// A cluster of k same-size patches identified by their top-left corners.
// members are sorted by ascending match distance to the exemplar, with the
// exemplar itself always first.
struct PatchGroup {
    std::pair<int, int> exemplar;              // (row, col) top-left corner
    std::vector<std::pair<int, int>> members;  // k corners, exemplar first
    int patch_size = 0;
};

// Per-group solver state: the gathered patch tensor (p^2 x k x t), a temporal
// subspace basis Q (d x t, orthonormal rows), the low-rank surrogate J
// (p^2 x k x d), and the group's weight.
struct GroupState {
    Tensor3<double> gathered;
    Matrix Q;
    Tensor3<double> J;
    double lambda = 1.0;
};

namespace detail {

// Grid coordinates 0, stride, 2*stride, ... with the last one snapped to the
// final valid corner so patches always reach the image boundary.
inline std::vector<int> corner_grid(int extent, int patch, int stride) {
    const int last = extent - patch;
    std::vector<int> coords;
    for (int x = 0;; x += stride) {
        if (x >= last) {
            coords.push_back(last);
            break;
        }
        coords.push_back(x);
    }
    return coords;
}

inline double patch_distance_sq(const Matrix& image, int p, int r0, int c0,
                                int r1, int c1) {
    double acc = 0.0;
    for (int pr = 0; pr < p; ++pr)
        for (int pc = 0; pc < p; ++pc) {
            const double d = image(r0 + pr, c0 + pc) - image(r1 + pr, c1 + pc);
            acc += d * d;
        }
    return acc;
}

}  // namespace detail

// Builds one PatchGroup per grid exemplar on `reference`. For each exemplar,
// the k candidates with smallest L2 patch distance inside the search window
// are kept (exemplar always first; distance ties broken by row-major corner
// order), so the result is deterministic for identical inputs.
inline std::vector<PatchGroup> cluster_groups(const Matrix& reference, int p,
                                              int k, int stride,
                                              int search_radius) {
    const int h = static_cast<int>(reference.rows());
    const int w = static_cast<int>(reference.cols());
    if (p < 1 || p > std::min(h, w))
        throw ArgumentError("cluster_groups: patch size " + std::to_string(p) +
                            " does not fit a " + std::to_string(h) + "x" +
                            std::to_string(w) + " image");
    if (k < 1) throw ArgumentError("cluster_groups: group size must be >= 1");
    if (stride < 1) throw ArgumentError("cluster_groups: stride must be >= 1");
    if (search_radius < 0)
        throw ArgumentError("cluster_groups: search radius must be >= 0");

    const std::vector<int> rows = detail::corner_grid(h, p, stride);
    const std::vector<int> cols = detail::corner_grid(w, p, stride);

    struct Candidate {
        double dist2;
        int order;  // row-major corner index, the deterministic tie-break
        int row, col;
    };

    std::vector<PatchGroup> groups;
    groups.reserve(rows.size() * cols.size());
    std::vector<Candidate> cand;
    for (int er : rows)
        for (int ec : cols) {
            const int r_lo = std::max(0, er - search_radius);
            const int r_hi = std::min(h - p, er + search_radius);
            const int c_lo = std::max(0, ec - search_radius);
            const int c_hi = std::min(w - p, ec + search_radius);
            cand.clear();
            for (int r = r_lo; r <= r_hi; ++r)
                for (int c = c_lo; c <= c_hi; ++c) {
                    if (r == er && c == ec) continue;  // exemplar goes first
                    cand.push_back(
                        {detail::patch_distance_sq(reference, p, er, ec, r, c),
                         r * w + c, r, c});
                }
            if (static_cast<int>(cand.size()) + 1 < k)
                throw ArgumentError(
                    "cluster_groups: group size " + std::to_string(k) +
                    " exceeds the " + std::to_string(cand.size() + 1) +
                    " candidates in the search window around (" +
                    std::to_string(er) + ", " + std::to_string(ec) + ")");
            const auto better = [](const Candidate& a, const Candidate& b) {
                if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
                return a.order < b.order;
            };
            if (static_cast<int>(cand.size()) > k - 1)
                std::partial_sort(cand.begin(), cand.begin() + (k - 1),
                                  cand.end(), better);
            else
                std::sort(cand.begin(), cand.end(), better);

            PatchGroup g;
            g.exemplar = {er, ec};
            g.patch_size = p;
            g.members.reserve(k);
            g.members.emplace_back(er, ec);
            for (int j = 0; j < k - 1; ++j)
                g.members.emplace_back(cand[j].row, cand[j].col);
            groups.push_back(std::move(g));
        }
    return groups;
}

// Extracts the group's patches from every frame: the result is p^2 x k x t,
// and column j of frame f is the row-major vectorization of member j's
// p x p patch in frame f.
inline Tensor3<double> gather(const Tensor3<double>& video,
                              const PatchGroup& group) {
    const int p = group.patch_size;
    const int k = static_cast<int>(group.members.size());
    if (p < 1 || k < 1)
        throw ArgumentError("gather: group has no patches");
    for (const auto& [r, c] : group.members)
        if (r < 0 || c < 0 || r + p > video.height() || c + p > video.width())
            throw ArgumentError(
                "gather: member patch at (" + std::to_string(r) + ", " +
                std::to_string(c) + ") falls outside the " +
                std::to_string(video.height()) + "x" +
                std::to_string(video.width()) + " frame");
    Tensor3<double> out(p * p, k, video.frames());
    for (int f = 0; f < video.frames(); ++f)
        for (int j = 0; j < k; ++j) {
            const auto [r, c] = group.members[j];
            for (int pr = 0; pr < p; ++pr)
                for (int pc = 0; pc < p; ++pc)
                    out(pr * p + pc, j, f) = video(r + pr, c + pc, f);
        }
    return out;
}

// Adjoint of gather over a collection of groups: accumulates every patch
// entry back onto its source voxel and counts contributions per voxel, so
// <gather(x, g), y> == <x, scatter of y via g> exactly.
inline std::pair<Tensor3<double>, Tensor3<double>> scatter_accumulate(
    const std::vector<std::pair<PatchGroup, Tensor3<double>>>& groups,
    int height, int width, int frames) {
    Tensor3<double> sum(height, width, frames);
    Tensor3<double> counts(height, width, frames);
    for (const auto& [group, tens] : groups) {
        const int p = group.patch_size;
        const int k = static_cast<int>(group.members.size());
        if (tens.frames() != frames || tens.height() != p * p ||
            tens.width() != k)
            throw ArgumentError(
                "scatter_accumulate: group tensor is " +
                std::to_string(tens.height()) + "x" +
                std::to_string(tens.width()) + "x" +
                std::to_string(tens.frames()) + ", expected " +
                std::to_string(p * p) + "x" + std::to_string(k) + "x" +
                std::to_string(frames));
        for (int j = 0; j < k; ++j) {
            const auto [r, c] = group.members[j];
            if (r < 0 || c < 0 || r + p > height || c + p > width)
                throw ArgumentError(
                    "scatter_accumulate: member patch at (" +
                    std::to_string(r) + ", " + std::to_string(c) +
                    ") falls outside the " + std::to_string(height) + "x" +
                    std::to_string(width) + " frame");
            for (int f = 0; f < frames; ++f)
                for (int pr = 0; pr < p; ++pr)
                    for (int pc = 0; pc < p; ++pc) {
                        sum(r + pr, c + pc, f) += tens(pr * p + pc, j, f);
                        counts(r + pr, c + pc, f) += 1.0;
                    }
        }
    }
    return {std::move(sum), std::move(counts)};
}

}  // namespace rlrtr
