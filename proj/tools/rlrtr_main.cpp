// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: synthesize rainy clips, run the decomposition,
// evaluate results, and export gradient histograms. Subcommand wiring lives
// here; all numerics live in the headers under include/rlrtr.
//
// Exit codes: 0 success (derain: converged), 2 derain stopped at the
// iteration cap, 3 bad arguments, 4 bad configuration, 5 I/O failure,
// 6 numeric failure, 7 anything else. Every failure prints one line to
// standard error in the form "error: <class>: <detail>".

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rlrtr/config_io.hpp"
#include "rlrtr/metrics.hpp"
#include "rlrtr/png_io.hpp"
#include "rlrtr/rlrt_io.hpp"
#include "rlrtr/solver.hpp"
#include "rlrtr/synth.hpp"

namespace {

using namespace rlrtr;

// ---------------------------------------------------------------------------
// shared helpers

std::string fmt(double v, const char* spec = "%.10g") {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[48];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

Tensor3<double> luminance_video(const std::vector<Tensor3<double>>& channels) {
    if (channels.size() == 1) return channels[0];
    Tensor3<double> y(channels[0].height(), channels[0].width(),
                      channels[0].frames());
    for (std::size_t i = 0; i < y.size(); ++i)
        y.data()[i] = luminance(channels[0].data()[i], channels[1].data()[i],
                                channels[2].data()[i]);
    return y;
}

std::ofstream open_text_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // '\n' only, byte-stable
    if (!out) throw IoError("cannot open output file for writing: " + path);
    return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string config;
    std::string out;
};

int run_synth(const SynthArgs& args) {
    const RunConfig rc = load_run_config(args.config);
    const SynthTruth truth = make_synth(rc.synth);

    namespace fs = std::filesystem;
    write_frames({truth.observed}, (fs::path(args.out) / "observed").string(),
                 16);
    write_frames({truth.clean}, (fs::path(args.out) / "clean").string(), 16);
    write_frames({truth.rain}, (fs::path(args.out) / "rain").string(), 16);

    std::ofstream side =
        open_text_output((fs::path(args.out) / "jitter.txt").string());
    side << "# per-frame affine parameters: frame a b tx c d ty\n";
    for (std::size_t f = 0; f < truth.jitter.size(); ++f) {
        const AffineFrame& j = truth.jitter[f];
        side << f << ' ' << fmt(j.a, "%.17g") << ' ' << fmt(j.b, "%.17g")
             << ' ' << fmt(j.tx, "%.17g") << ' ' << fmt(j.c, "%.17g") << ' '
             << fmt(j.d, "%.17g") << ' ' << fmt(j.ty, "%.17g") << '\n';
    }
    if (!side.good())
        throw IoError("cannot write jitter sidecar in " + args.out);

    std::printf("wrote %dx%dx%d observed/clean/rain frames to %s\n",
                rc.synth.height, rc.synth.width, rc.synth.frames,
                args.out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// derain

struct DerainArgs {
    std::string in;
    std::string config;
    std::string out_bg;
    std::string out_rain;
    std::string dump_history;
    bool no_affine = false;
    bool no_subspace = false;
};

void append_history(std::ofstream& csv, const std::string& run,
                    const std::vector<HistoryEntry>& history) {
    for (std::size_t i = 0; i < history.size(); ++i)
        csv << run << ',' << i + 1 << ',' << fmt(history[i].objective, "%.17g")
            << ',' << fmt(history[i].rel_b_change, "%.17g") << ','
            << fmt(history[i].rain_sparsity, "%.17g") << '\n';
}

int run_derain(const DerainArgs& args) {
    const RunConfig rc = load_run_config(args.config);
    SolverConfig cfg = rc.solver;
    if (args.no_affine) cfg.enable_affine = false;
    if (args.no_subspace) cfg.enable_subspace = false;

    const FrameSequence seq = read_frames(args.in);
    std::vector<Tensor3<double>> backgrounds, rains;
    bool converged = true;

    std::ofstream history_csv;
    if (!args.dump_history.empty()) {
        history_csv = open_text_output(args.dump_history);
        history_csv << "run,outer,objective,rel_b_change,rain_sparsity\n";
    }

    if (seq.channels.size() == 1) {
        const DecompositionResult res = derain(seq.channels[0], cfg);
        converged = res.converged;
        backgrounds.push_back(res.background);
        rains.push_back(res.rain);
        if (history_csv.is_open()) append_history(history_csv, "gray", res.history);
        std::printf("gray: %s after %zu outer iterations\n",
                    res.converged ? "converged" : "stopped at iteration cap",
                    res.history.size());
    } else {
        // Alignment is geometric and channel-agnostic: estimate the per-frame
        // warps once on the luminance channel, then decompose each color
        // channel independently on the already-aligned frames.
        const DecompositionResult luma = derain(luminance_video(seq.channels), cfg);
        converged = luma.converged;
        if (history_csv.is_open()) append_history(history_csv, "luma", luma.history);
        std::printf("luma: %s after %zu outer iterations\n",
                    luma.converged ? "converged" : "stopped at iteration cap",
                    luma.history.size());

        SolverConfig channel_cfg = cfg;
        channel_cfg.enable_affine = false;
        for (std::size_t ch = 0; ch < seq.channels.size(); ++ch) {
            const Tensor3<double> aligned =
                cfg.enable_affine ? warp_video(seq.channels[ch], luma.tau)
                                  : seq.channels[ch];
            const DecompositionResult res = derain(aligned, channel_cfg);
            converged = converged && res.converged;
            backgrounds.push_back(res.background);
            rains.push_back(res.rain);
            if (history_csv.is_open())
                append_history(history_csv, "ch" + std::to_string(ch), res.history);
            std::printf("channel %zu: %s after %zu outer iterations\n", ch,
                        res.converged ? "converged" : "stopped at iteration cap",
                        res.history.size());
        }
    }

    if (history_csv.is_open() && !history_csv.good())
        throw IoError("cannot write history file: " + args.dump_history);

    write_frames(backgrounds, args.out_bg, seq.bit_depth);
    write_frames(rains, args.out_rain, seq.bit_depth);
    return converged ? 0 : 2;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string rain_pred;
    std::string rain_gt;
    double support_threshold = 0.1;
    bool csv = false;
};

int run_eval(const EvalArgs& args) {
    const FrameSequence pred = read_frames(args.pred);
    const FrameSequence gt = read_frames(args.gt);
    if (pred.channels.size() != gt.channels.size())
        throw ArgumentError("eval: prediction has " +
                            std::to_string(pred.channels.size()) +
                            " channels, ground truth has " +
                            std::to_string(gt.channels.size()));
    if (!pred.channels[0].same_shape(gt.channels[0]))
        throw ArgumentError("eval: prediction and ground truth sizes differ");

    const int t = pred.channels[0].frames();
    const std::size_t nch = pred.channels.size();

    // whole-video PSNR per channel
    std::vector<double> channel_psnr(nch);
    for (std::size_t ch = 0; ch < nch; ++ch)
        channel_psnr[ch] = psnr(pred.channels[ch], gt.channels[ch], 1.0);
    double psnr_mean = 0.0;
    for (double v : channel_psnr) psnr_mean += v;
    psnr_mean /= static_cast<double>(nch);

    // per-frame PSNR (error pooled over channels) and SSIM (on luminance)
    const Tensor3<double> pred_luma = luminance_video(pred.channels);
    const Tensor3<double> gt_luma = luminance_video(gt.channels);
    std::vector<double> frame_psnr(t), frame_ssim(t);
    for (int f = 0; f < t; ++f) {
        double mse = 0.0;
        std::size_t count = 0;
        for (std::size_t ch = 0; ch < nch; ++ch) {
            const Matrix a = frame_as_matrix(pred.channels[ch], f);
            const Matrix b = frame_as_matrix(gt.channels[ch], f);
            mse += (a - b).squaredNorm();
            count += static_cast<std::size_t>(a.size());
        }
        mse /= static_cast<double>(count);
        frame_psnr[f] = mse == 0.0 ? std::numeric_limits<double>::infinity()
                                   : 10.0 * std::log10(1.0 / mse);
        frame_ssim[f] = ssim(frame_as_matrix(pred_luma, f),
                             frame_as_matrix(gt_luma, f));
    }
    double frame_psnr_mean = 0.0, ssim_mean = 0.0;
    for (int f = 0; f < t; ++f) {
        frame_psnr_mean += frame_psnr[f];
        ssim_mean += frame_ssim[f];
    }
    frame_psnr_mean /= t;
    ssim_mean /= t;

    // optional rain-support agreement
    bool have_f1 = false;
    double f1 = 0.0;
    if (!args.rain_pred.empty() || !args.rain_gt.empty()) {
        if (args.rain_pred.empty() || args.rain_gt.empty())
            throw ArgumentError(
                "eval: --rain-pred and --rain-gt must be given together");
        const FrameSequence rp = read_frames(args.rain_pred);
        const FrameSequence rg = read_frames(args.rain_gt);
        f1 = rain_support_f1(luminance_video(rp.channels),
                             luminance_video(rg.channels),
                             args.support_threshold);
        have_f1 = true;
    }

    if (args.csv) {
        std::printf("frame,psnr,ssim\n");
        for (int f = 0; f < t; ++f)
            std::printf("%d,%s,%s\n", f, fmt(frame_psnr[f]).c_str(),
                        fmt(frame_ssim[f]).c_str());
        std::printf("mean,%s,%s\n", fmt(frame_psnr_mean).c_str(),
                    fmt(ssim_mean).c_str());
        if (have_f1) std::printf("f1,%s,\n", fmt(f1).c_str());
    } else {
        for (std::size_t ch = 0; ch < nch; ++ch)
            std::printf("psnr channel %zu: %s dB\n", ch,
                        fmt(channel_psnr[ch]).c_str());
        std::printf("psnr mean: %s dB\n", fmt(psnr_mean).c_str());
        for (int f = 0; f < t; ++f)
            std::printf("ssim frame %d: %s\n", f, fmt(frame_ssim[f]).c_str());
        std::printf("ssim mean: %s\n", fmt(ssim_mean).c_str());
        if (have_f1)
            std::printf("rain support f1 (threshold %s): %s\n",
                        fmt(args.support_threshold).c_str(), fmt(f1).c_str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// grad-hist

struct GradHistArgs {
    std::string in;
    int frame = 0;
    std::string out;
};

int run_grad_hist(const GradHistArgs& args) {
    const FrameSequence seq = read_frames(args.in);
    if (args.frame < 0 || args.frame >= seq.channels[0].frames())
        throw ArgumentError(
            "grad-hist: frame " + std::to_string(args.frame) +
            " out of range [0, " +
            std::to_string(seq.channels[0].frames()) + ")");
    const Matrix frame =
        frame_as_matrix(luminance_video(seq.channels), args.frame);
    const auto [hist, divergence] = gradient_isotropy(frame);

    std::ofstream csv = open_text_output(args.out);
    csv << "bin_edge,h_count,v_count\n";
    for (int i = 0; i < GradientHistogramPair::kBins; ++i)
        csv << fmt(hist.bin_edges[static_cast<std::size_t>(i)], "%.17g") << ','
            << fmt(hist.h_counts[static_cast<std::size_t>(i)], "%.17g") << ','
            << fmt(hist.v_counts[static_cast<std::size_t>(i)], "%.17g")
            << '\n';
    csv << "divergence," << fmt(divergence, "%.17g") << '\n';
    if (!csv.good()) throw IoError("cannot write histogram file: " + args.out);

    std::printf("divergence: %s\n", fmt(divergence).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "video deraining: low-rank background / sparse rain decomposition"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    CLI::App* synth_cmd =
        app.add_subcommand("synth", "generate a synthetic rainy clip");
    synth_cmd->add_option("--config", synth_args.config, "run configuration file")
        ->required();
    synth_cmd->add_option("--out", synth_args.out, "output directory")
        ->required();

    DerainArgs derain_args;
    CLI::App* derain_cmd = app.add_subcommand(
        "derain", "split a rainy clip into background and rain layers");
    derain_cmd->add_option("--in", derain_args.in, "input frame directory")
        ->required();
    derain_cmd
        ->add_option("--config", derain_args.config, "run configuration file")
        ->required();
    derain_cmd
        ->add_option("--out-bg", derain_args.out_bg,
                     "background frame output directory")
        ->required();
    derain_cmd
        ->add_option("--out-rain", derain_args.out_rain,
                     "rain frame output directory")
        ->required();
    derain_cmd->add_option("--dump-history", derain_args.dump_history,
                           "write per-iteration solver records to this CSV");
    derain_cmd->add_flag("--no-affine", derain_args.no_affine,
                         "disable per-frame alignment");
    derain_cmd->add_flag("--no-subspace", derain_args.no_subspace,
                         "disable the temporal subspace projection");

    EvalArgs eval_args;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "score a prediction against ground truth");
    eval_cmd->add_option("--pred", eval_args.pred, "predicted frame directory")
        ->required();
    eval_cmd->add_option("--gt", eval_args.gt, "ground-truth frame directory")
        ->required();
    eval_cmd->add_option("--rain-pred", eval_args.rain_pred,
                         "predicted rain-layer directory");
    eval_cmd->add_option("--rain-gt", eval_args.rain_gt,
                         "ground-truth rain-layer directory");
    eval_cmd->add_option("--support-threshold", eval_args.support_threshold,
                         "rain-support magnitude threshold (default 0.1)");
    eval_cmd->add_flag("--csv", eval_args.csv,
                       "machine output: frame,psnr,ssim rows");

    GradHistArgs grad_args;
    CLI::App* grad_cmd = app.add_subcommand(
        "grad-hist", "export horizontal/vertical gradient histograms");
    grad_cmd->add_option("--in", grad_args.in, "input frame directory")
        ->required();
    grad_cmd->add_option("--frame", grad_args.frame,
                         "frame index (default 0)");
    grad_cmd->add_option("--out", grad_args.out, "output CSV file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::fprintf(stderr, "error: argument: %s\n", e.what());
        return 3;
    }

    try {
        if (synth_cmd->parsed()) return run_synth(synth_args);
        if (derain_cmd->parsed()) return run_derain(derain_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        return run_grad_hist(grad_args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 4;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: io: %s\n", e.what());
        return 5;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: numeric: %s\n", e.what());
        return 6;
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "error: argument: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 7;
    }
}
