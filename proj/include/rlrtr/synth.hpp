#pragma once
// Synthetic rainy-video generator with exact ground truth: a static
// background, additive anti-aliased rain streaks plus ground-splash speckle,
// per-frame affine camera jitter, and Gaussian sensor noise. Every layer is
// reproducible bit-exactly from the config and seed.

#include <rlrtr/align.hpp>
#include <rlrtr/errors.hpp>
#include <rlrtr/png_io.hpp>
#include <rlrtr/rng.hpp>
#include <rlrtr/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace rlrtr {

enum class BackgroundKind { checkerboard, smooth_gradient, natural_image_file };

inline BackgroundKind background_kind_from_string(const std::string& s) {
    if (s == "checkerboard") return BackgroundKind::checkerboard;
    if (s == "smooth-gradient") return BackgroundKind::smooth_gradient;
    if (s == "natural-image-file") return BackgroundKind::natural_image_file;
    throw ArgumentError("unknown background kind: \"" + s +
                        "\" (expected checkerboard, smooth-gradient, or "
                        "natural-image-file)");
}

inline std::string to_string(BackgroundKind k) {
    switch (k) {
        case BackgroundKind::checkerboard: return "checkerboard";
        case BackgroundKind::smooth_gradient: return "smooth-gradient";
        default: return "natural-image-file";
    }
}

struct SynthConfig {
    int height = 64;
    int width = 64;
    int frames = 24;
    BackgroundKind background_kind = BackgroundKind::checkerboard;
    std::string background_file;  // used by natural_image_file
    double streak_density = 0.05;  // fraction of pixels per frame
    std::pair<double, double> streak_angle_range = {0.0, 15.0};  // deg from vertical
    std::pair<double, double> streak_length_range = {8.0, 14.0};  // pixels
    double streak_width = 1.0;  // pixels
    std::pair<double, double> streak_intensity_range = {0.2, 0.4};
    double splash_density = 0.0;  // fraction of the bottom-quarter rows
    double jitter_max = 0.0;      // px of per-frame translation/rotation reach
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

// The generated layers. `observed` is warp(clean + rain, jitter) + noise
// clipped to [0,1]; the stored truth layers are never clipped.
struct SynthTruth {
    Tensor3<double> clean;
    Tensor3<double> rain;
    AffineParams jitter;
    Tensor3<double> observed;
};

namespace detail {

inline void check_synth(const SynthConfig& cfg) {
    if (cfg.height < 1 || cfg.width < 1)
        throw ArgumentError("synth: frame size must be positive, got " +
                            std::to_string(cfg.height) + "x" +
                            std::to_string(cfg.width));
    if (cfg.frames < 2)
        throw ArgumentError("synth: need at least 2 frames, got " +
                            std::to_string(cfg.frames));
    auto density_ok = [](double d) { return d >= 0.0 && d <= 1.0; };
    if (!density_ok(cfg.streak_density))
        throw ArgumentError("synth: streak density must be in [0,1], got " +
                            std::to_string(cfg.streak_density));
    if (!density_ok(cfg.splash_density))
        throw ArgumentError("synth: splash density must be in [0,1], got " +
                            std::to_string(cfg.splash_density));
    const auto [alo, ahi] = cfg.streak_angle_range;
    if (alo < 0.0 || ahi < alo || ahi > 90.0)
        throw ArgumentError("synth: streak angle range must satisfy "
                            "0 <= min <= max <= 90 degrees");
    const auto [llo, lhi] = cfg.streak_length_range;
    if (llo <= 0.0 || lhi < llo)
        throw ArgumentError("synth: streak length range must satisfy "
                            "0 < min <= max");
    if (cfg.streak_width <= 0.0)
        throw ArgumentError("synth: streak width must be positive");
    const auto [ilo, ihi] = cfg.streak_intensity_range;
    if (ilo <= 0.0 || ihi < ilo || ihi > 1.0)
        throw ArgumentError("synth: streak intensity range must be within "
                            "(0,1] with min <= max");
    if (cfg.jitter_max < 0.0)
        throw ArgumentError("synth: jitter magnitude must be nonnegative");
    if (cfg.noise_sigma < 0.0)
        throw ArgumentError("synth: noise sigma must be nonnegative");
}

inline double point_segment_distance(double px, double py, double x0,
                                     double y0, double x1, double y1) {
    const double vx = x1 - x0, vy = y1 - y0;
    const double len2 = vx * vx + vy * vy;
    double s = 0.0;
    if (len2 > 0.0)
        s = std::clamp(((px - x0) * vx + (py - y0) * vy) / len2, 0.0, 1.0);
    const double dx = px - (x0 + s * vx), dy = py - (y0 + s * vy);
    return std::hypot(dx, dy);
}

// Renders one anti-aliased streak into `frame` with max-compositing and
// returns the number of previously-zero pixels it touched.
inline int render_streak(Matrix& frame, double cx, double cy,
                         double angle_rad, double length, double width,
                         double intensity) {
    const int h = static_cast<int>(frame.rows());
    const int w = static_cast<int>(frame.cols());
    // angle measured from vertical; screen y grows downward
    const double dx = std::sin(angle_rad), dy = std::cos(angle_rad);
    const double x0 = cx - 0.5 * length * dx, y0 = cy - 0.5 * length * dy;
    const double x1 = cx + 0.5 * length * dx, y1 = cy + 0.5 * length * dy;
    const double reach = 0.5 * width + 1.0;
    const int rlo = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - reach)));
    const int rhi = std::min(h - 1, static_cast<int>(std::ceil(std::max(y0, y1) + reach)));
    const int clo = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - reach)));
    const int chi = std::min(w - 1, static_cast<int>(std::ceil(std::max(x0, x1) + reach)));
    int fresh = 0;
    for (int r = rlo; r <= rhi; ++r)
        for (int c = clo; c <= chi; ++c) {
            const double d =
                point_segment_distance(c, r, x0, y0, x1, y1);
            const double cov = std::clamp(0.5 * width + 0.5 - d, 0.0, 1.0);
            if (cov <= 0.0) continue;
            const double v = intensity * cov;
            if (v > frame(r, c)) {
                if (frame(r, c) == 0.0) ++fresh;
                frame(r, c) = v;
            }
        }
    return fresh;
}

}  // namespace detail

// Static background video: every frame is the same image, so the temporal
// unfolding is exactly rank one.
inline Tensor3<double> make_background(const SynthConfig& cfg) {
    detail::check_synth(cfg);
    const int h = cfg.height, w = cfg.width;
    Matrix frame(h, w);
    switch (cfg.background_kind) {
        case BackgroundKind::checkerboard: {
            const int cell = std::max(1, std::min(h, w) / 8);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c)
                    frame(r, c) = ((r / cell + c / cell) % 2) ? 0.8 : 0.2;
            break;
        }
        case BackgroundKind::smooth_gradient: {
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c)
                    frame(r, c) = w > 1 ? static_cast<double>(c) / (w - 1) : 0.0;
            break;
        }
        case BackgroundKind::natural_image_file: {
            if (cfg.background_file.empty())
                throw IoError("synth: no background image file configured");
            const PngImage img = read_png(cfg.background_file);
            Matrix y = luminance_of(img);
            if (y.rows() != h || y.cols() != w)
                throw ArgumentError(
                    "synth: background image " + cfg.background_file + " is " +
                    std::to_string(y.rows()) + "x" + std::to_string(y.cols()) +
                    ", config wants " + std::to_string(h) + "x" +
                    std::to_string(w));
            frame = y;
            break;
        }
    }
    Tensor3<double> video(h, w, cfg.frames);
    for (int f = 0; f < cfg.frames; ++f) set_frame(video, f, frame);
    return video;
}

// Per-frame rain: independent anti-aliased streaks (angle sampled as a
// magnitude in the configured range with a random sign) plus point-splash
// speckle confined to the bottom quarter of the frame. Streaks are added
// until their fresh-pixel coverage reaches 90% of the configured density,
// which keeps the realized support within the +-20% band for ordinary
// streak footprints.
inline Tensor3<double> make_rain(const SynthConfig& cfg) {
    detail::check_synth(cfg);
    const int h = cfg.height, w = cfg.width, t = cfg.frames;
    Tensor3<double> rain(h, w, t);
    if (cfg.streak_density == 0.0 && cfg.splash_density == 0.0) return rain;

    Rng rng(cfg.seed + 0x5261494eull);  // distinct stream per layer
    const double deg2rad = std::acos(-1.0) / 180.0;
    for (int f = 0; f < t; ++f) {
        Matrix frame = Matrix::Zero(h, w);
        if (cfg.streak_density > 0.0) {
            const double target = 0.9 * cfg.streak_density * h * w;
            int covered = 0;
            for (int guard = 0; covered < target && guard < 100000; ++guard) {
                const double cx = rng.uniform(0.0, w);
                const double cy = rng.uniform(0.0, h);
                const double mag = rng.uniform(cfg.streak_angle_range.first,
                                               cfg.streak_angle_range.second);
                const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
                const double len = rng.uniform(cfg.streak_length_range.first,
                                               cfg.streak_length_range.second);
                const double inten =
                    rng.uniform(cfg.streak_intensity_range.first,
                                cfg.streak_intensity_range.second);
                covered += detail::render_streak(frame, cx, cy,
                                                 sign * mag * deg2rad, len,
                                                 cfg.streak_width, inten);
            }
        }
        if (cfg.splash_density > 0.0 && h / 4 > 0) {
            const int top = h - h / 4;  // bottom-quarter rows [top, h)
            const int region = (h - top) * w;
            const int n = static_cast<int>(
                std::lround(cfg.splash_density * region));
            std::vector<int> idx(region);
            for (int i = 0; i < region; ++i) idx[i] = i;
            for (int i = 0; i < n; ++i) {
                const int j =
                    i + static_cast<int>(rng.uniform_int(region - i));
                std::swap(idx[i], idx[j]);
                const int r = top + idx[i] / w, c = idx[i] % w;
                const double inten =
                    rng.uniform(cfg.streak_intensity_range.first,
                                cfg.streak_intensity_range.second);
                frame(r, c) = std::max(frame(r, c), inten);
            }
        }
        set_frame(rain, f, frame);
    }
    return rain;
}

// Per-frame camera jitter: uniform translations up to jitter_max pixels and
// a rotation about the frame center whose corner displacement stays within
// the same budget. Frame 0 is the identity anchor.
inline AffineParams make_jitter(const SynthConfig& cfg) {
    detail::check_synth(cfg);
    AffineParams params = identity_params(cfg.frames);
    if (cfg.jitter_max == 0.0) return params;
    Rng rng(cfg.seed + 0x4a495454ull);
    const double cx = 0.5 * (cfg.width - 1), cy = 0.5 * (cfg.height - 1);
    const double halfdiag = std::max(1.0, std::hypot(cx, cy));
    const double theta_max = cfg.jitter_max / halfdiag;
    for (int f = 1; f < cfg.frames; ++f) {
        const double tx = rng.uniform(-cfg.jitter_max, cfg.jitter_max);
        const double ty = rng.uniform(-cfg.jitter_max, cfg.jitter_max);
        const double th = rng.uniform(-theta_max, theta_max);
        AffineFrame p;
        p.a = std::cos(th);
        p.b = -std::sin(th);
        p.c = std::sin(th);
        p.d = std::cos(th);
        // rotate about the frame center, then translate
        p.tx = cx - p.a * cx - p.b * cy + tx;
        p.ty = cy - p.c * cx - p.d * cy + ty;
        params[f] = p;
    }
    return params;
}

// observed = warp(clean + rain, jitter) + noise, clipped to [0,1]. The truth
// layers are stored unclipped.
inline SynthTruth compose(Tensor3<double> clean, Tensor3<double> rain,
                          AffineParams jitter, double noise_sigma,
                          std::uint64_t seed) {
    if (!clean.same_shape(rain))
        throw ArgumentError("compose: clean and rain shapes differ");
    if (static_cast<int>(jitter.size()) != clean.frames())
        throw ArgumentError("compose: need one jitter entry per frame, got " +
                            std::to_string(jitter.size()) + " for " +
                            std::to_string(clean.frames()) + " frames");
    if (noise_sigma < 0.0)
        throw ArgumentError("compose: noise sigma must be nonnegative");

    Tensor3<double> observed(clean.height(), clean.width(), clean.frames());
    for (int f = 0; f < clean.frames(); ++f) {
        Matrix s = frame_as_matrix(clean, f) + frame_as_matrix(rain, f);
        set_frame(observed, f, warp_affine(s, jitter[f]));
    }
    if (noise_sigma > 0.0) {
        Rng rng(seed);
        for (std::size_t i = 0; i < observed.size(); ++i)
            observed.data()[i] += noise_sigma * rng.normal();
    }
    for (std::size_t i = 0; i < observed.size(); ++i)
        observed.data()[i] = std::clamp(observed.data()[i], 0.0, 1.0);

    SynthTruth truth;
    truth.clean = std::move(clean);
    truth.rain = std::move(rain);
    truth.jitter = std::move(jitter);
    truth.observed = std::move(observed);
    return truth;
}

inline SynthTruth make_synth(const SynthConfig& cfg) {
    return compose(make_background(cfg), make_rain(cfg), make_jitter(cfg),
                   cfg.noise_sigma, cfg.seed + 0x4e4f4953ull);
}

}  // namespace rlrtr
