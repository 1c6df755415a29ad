// Copyright (c) 2026 the rlrtr authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "rlrtr/config_io.hpp"
#include "rlrtr/png_io.hpp"
#include "rlrtr/rlrt_io.hpp"
#include "rlrtr/rng.hpp"

using namespace rlrtr;

namespace {

namespace fs = std::filesystem;

// Fresh per-test scratch directory.
fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "rlrtr_io_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& b) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()),
              static_cast<std::streamsize>(b.size()));
    REQUIRE(out.good());
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("png values map exactly onto the unit interval", "[io]") {
    const fs::path dir = scratch_dir("png_values");

    SECTION("an all-black frame decodes to zeros") {
        write_png((dir / "black.png").string(), {Matrix::Zero(5, 7)}, 8);
        const PngImage img = read_png((dir / "black.png").string());
        REQUIRE(img.bit_depth == 8);
        REQUIRE(img.channels.size() == 1);
        REQUIRE(img.channels[0].rows() == 5);
        REQUIRE(img.channels[0].cols() == 7);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 7; ++c) REQUIRE(img.channels[0](r, c) == 0.0);
    }
    SECTION("full-scale codes decode to exactly one at both depths") {
        for (int depth : {8, 16}) {
            const fs::path p = dir / ("white" + std::to_string(depth) + ".png");
            write_png(p.string(), {Matrix::Constant(3, 3, 1.0)}, depth);
            const PngImage img = read_png(p.string());
            REQUIRE(img.bit_depth == depth);
            REQUIRE(img.channels[0](1, 1) == 1.0);
        }
    }
    SECTION("8-bit quantization is round-half-to-even") {
        // 0.5/255 sits exactly between codes 0 and 1; ties go to the even code
        Matrix m(1, 2);
        m(0, 0) = 0.5 / 255.0;  // tie between 0 and 1 -> 0
        m(0, 1) = 1.5 / 255.0;  // tie between 1 and 2 -> 2
        write_png((dir / "ties.png").string(), {m}, 8);
        const PngImage img = read_png((dir / "ties.png").string());
        REQUIRE(img.channels[0](0, 0) == 0.0);
        REQUIRE(img.channels[0](0, 1) == 2.0 / 255.0);
    }
    SECTION("color images yield three channels") {
        Matrix r = Matrix::Constant(4, 4, 1.0);
        Matrix g = Matrix::Constant(4, 4, 0.0);
        Matrix b = Matrix::Constant(4, 4, 1.0);
        write_png((dir / "rgb.png").string(), {r, g, b}, 8);
        const PngImage img = read_png((dir / "rgb.png").string());
        REQUIRE(img.channels.size() == 3);
        REQUIRE(img.channels[0](0, 0) == 1.0);
        REQUIRE(img.channels[1](0, 0) == 0.0);
        REQUIRE(img.channels[2](0, 0) == 1.0);
    }
}

TEST_CASE("png write-read-write reproduces the file byte for byte", "[io]") {
    const fs::path dir = scratch_dir("png_roundtrip");
    Rng rng(314);
    for (int depth : {8, 16}) {
        Matrix m(16, 12);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 12; ++c) m(r, c) = rng.uniform01();
        const fs::path first = dir / ("a" + std::to_string(depth) + ".png");
        const fs::path second = dir / ("b" + std::to_string(depth) + ".png");
        write_png(first.string(), {m}, depth);
        const PngImage img = read_png(first.string());
        write_png(second.string(), img.channels, depth);
        REQUIRE(read_bytes(first) == read_bytes(second));
    }
}

TEST_CASE("frame sequences read back in lexicographic order", "[io]") {
    const fs::path dir = scratch_dir("frames");
    Tensor3<double> v(6, 5, 4);
    Rng rng(99);
    for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform01();
    write_frames({v}, dir.string(), 16);

    SECTION("written names sort into frame order") {
        const auto names = list_png_files(dir.string());
        REQUIRE(names.size() == 4);
        REQUIRE(names.front() == "frame_00000.png");
        REQUIRE(names.back() == "frame_00003.png");
    }
    SECTION("a 16-bit round trip is exact after one quantization") {
        const FrameSequence seq = read_frames(dir.string());
        REQUIRE(seq.bit_depth == 16);
        REQUIRE(seq.channels.size() == 1);
        const fs::path again = scratch_dir("frames_again");
        write_frames(seq.channels, again.string(), 16);
        for (const auto& name : list_png_files(dir.string()))
            REQUIRE(read_bytes(dir / name) == read_bytes(again / name));
    }
    SECTION("size mismatches name the offending file") {
        write_png((dir / "frame_00004.png").string(), {Matrix::Zero(3, 3)}, 16);
        const std::string msg =
            message_of([&] { (void)read_frames(dir.string()); });
        REQUIRE(msg.find("frame_00004.png") != std::string::npos);
        REQUIRE(msg.find("size mismatch") != std::string::npos);
    }
    SECTION("an empty directory is an error") {
        const fs::path empty = scratch_dir("frames_empty");
        REQUIRE_THROWS_AS(read_frames(empty.string()), IoError);
        REQUIRE_THROWS_AS(read_frames((empty / "missing").string()), IoError);
    }
}

TEST_CASE("tensor files have the documented fixed layout", "[io]") {
    const fs::path dir = scratch_dir("rlrt_layout");
    const fs::path p = dir / "half.rlrt";
    Tensor3<float> one(1, 1, 1);
    one(0, 0, 0) = 0.5f;
    write_rlrt(one, p.string());

    const std::vector<unsigned char> bytes = read_bytes(p);
    REQUIRE(bytes.size() == 36);
    REQUIRE(bytes[0] == 'R');
    REQUIRE(bytes[1] == 'L');
    REQUIRE(bytes[2] == 'R');
    REQUIRE(bytes[3] == 'T');
    REQUIRE(bytes[4] == 1);  // version
    REQUIRE(bytes[5] == 1);  // dtype: 32-bit float
    REQUIRE(bytes[6] == 0);
    REQUIRE(bytes[7] == 0);
    // three u64 little-endian dims, all 1
    for (int d = 0; d < 3; ++d)
        for (int i = 0; i < 8; ++i)
            REQUIRE(bytes[8 + 8 * d + i] == (i == 0 ? 1 : 0));
    // payload: 0.5f little-endian = 00 00 00 3F
    REQUIRE(bytes[32] == 0x00);
    REQUIRE(bytes[33] == 0x00);
    REQUIRE(bytes[34] == 0x00);
    REQUIRE(bytes[35] == 0x3F);
}

TEST_CASE("tensor files round-trip bit for bit", "[io]") {
    const fs::path dir = scratch_dir("rlrt_roundtrip");
    Rng rng(2718);
    for (int trial = 0; trial < 5; ++trial) {
        const int h = 1 + int(rng.uniform_int(6));
        const int w = 1 + int(rng.uniform_int(6));
        const int t = 1 + int(rng.uniform_int(4));
        Tensor3<float> x(h, w, t);
        for (std::size_t i = 0; i < x.size(); ++i)
            x.data()[i] = static_cast<float>(rng.normal());
        const fs::path p = dir / ("t" + std::to_string(trial) + ".rlrt");
        write_rlrt(x, p.string());
        const Tensor3<float> y = read_rlrt(p.string());
        REQUIRE(y.height() == h);
        REQUIRE(y.width() == w);
        REQUIRE(y.frames() == t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const std::uint32_t a = std::bit_cast<std::uint32_t>(x.data()[i]);
            const std::uint32_t b = std::bit_cast<std::uint32_t>(y.data()[i]);
            REQUIRE(a == b);
        }
    }
}

TEST_CASE("corrupt tensor files are rejected with precise reasons", "[io]") {
    const fs::path dir = scratch_dir("rlrt_corrupt");
    Tensor3<float> x(2, 3, 2);
    for (std::size_t i = 0; i < x.size(); ++i)
        x.data()[i] = static_cast<float>(i);
    const fs::path good = dir / "good.rlrt";
    write_rlrt(x, good.string());
    const std::vector<unsigned char> bytes = read_bytes(good);

    SECTION("wrong magic") {
        auto bad = bytes;
        bad[0] = 'X';
        write_bytes(dir / "magic.rlrt", bad);
        const std::string msg = message_of(
            [&] { (void)read_rlrt((dir / "magic.rlrt").string()); });
        REQUIRE(msg.find("bad magic") != std::string::npos);
    }
    SECTION("wrong version") {
        auto bad = bytes;
        bad[4] = 2;
        write_bytes(dir / "version.rlrt", bad);
        const std::string msg = message_of(
            [&] { (void)read_rlrt((dir / "version.rlrt").string()); });
        REQUIRE(msg.find("unsupported version 2") != std::string::npos);
    }
    SECTION("wrong dtype") {
        auto bad = bytes;
        bad[5] = 7;
        write_bytes(dir / "dtype.rlrt", bad);
        const std::string msg = message_of(
            [&] { (void)read_rlrt((dir / "dtype.rlrt").string()); });
        REQUIRE(msg.find("unsupported dtype 7") != std::string::npos);
    }
    SECTION("truncated payload reports expected and actual byte counts") {
        auto bad = bytes;
        bad.resize(bytes.size() - 5);  // 48-byte payload cut to 43
        write_bytes(dir / "short.rlrt", bad);
        const std::string msg = message_of(
            [&] { (void)read_rlrt((dir / "short.rlrt").string()); });
        REQUIRE(msg.find("truncated tensor payload") != std::string::npos);
        REQUIRE(msg.find("expected 48 bytes, got 43") != std::string::npos);
    }
    SECTION("truncated header") {
        std::vector<unsigned char> bad(bytes.begin(), bytes.begin() + 10);
        write_bytes(dir / "header.rlrt", bad);
        const std::string msg = message_of(
            [&] { (void)read_rlrt((dir / "header.rlrt").string()); });
        REQUIRE(msg.find("truncated tensor header") != std::string::npos);
    }
    SECTION("missing file") {
        REQUIRE_THROWS_AS(read_rlrt((dir / "nope.rlrt").string()), IoError);
    }
}

TEST_CASE("run configuration files parse into both structs", "[io]") {
    const std::string text =
        "# decomposition settings\n"
        "[solver]\n"
        "mu = auto\n"
        "omega = 0.25\n"
        "lambda_global = 0.3\n"
        "enable_affine = false\n"
        "patch = 6\n"
        "\n"
        "; generator settings\n"
        "[synth]\n"
        "height = 48\n"
        "width = 40\n"
        "frames = 10\n"
        "background_kind = smooth-gradient\n"
        "streak_angle_min = 2\n"
        "streak_angle_max = 9\n"
        "splash_density = 0.25\n"
        "seed = 1234\n";
    const RunConfig rc = parse_run_config(text);
    REQUIRE(rc.solver.mu == -1.0);
    REQUIRE(rc.solver.omega == 0.25);
    REQUIRE(rc.solver.lambda_global == 0.3);
    REQUIRE(rc.solver.enable_affine == false);
    REQUIRE(rc.solver.enable_subspace == true);  // untouched default
    REQUIRE(rc.solver.patch == 6);
    REQUIRE(rc.synth.height == 48);
    REQUIRE(rc.synth.width == 40);
    REQUIRE(rc.synth.frames == 10);
    REQUIRE(rc.synth.background_kind == BackgroundKind::smooth_gradient);
    REQUIRE(rc.synth.streak_angle_range.first == 2.0);
    REQUIRE(rc.synth.streak_angle_range.second == 9.0);
    REQUIRE(rc.synth.splash_density == 0.25);
    REQUIRE(rc.synth.seed == 1234);
}

TEST_CASE("malformed configuration is rejected with the offender named",
          "[io]") {
    const auto reject = [](const std::string& text) {
        return message_of([&] { (void)parse_run_config(text); });
    };
    SECTION("unknown key") {
        const std::string msg = reject("[solver]\nomga = 0.5\n");
        REQUIRE(msg.find("unknown key \"omga\"") != std::string::npos);
        REQUIRE(msg.find("[solver]") != std::string::npos);
        REQUIRE(msg.find("line 2") != std::string::npos);
    }
    SECTION("unknown section") {
        const std::string msg = reject("[sovler]\n");
        REQUIRE(msg.find("unknown section \"[sovler]\"") != std::string::npos);
    }
    SECTION("key before any section") {
        const std::string msg = reject("omega = 0.5\n");
        REQUIRE(msg.find("before any") != std::string::npos);
    }
    SECTION("duplicate key") {
        const std::string msg = reject("[solver]\nomega = 1\nomega = 2\n");
        REQUIRE(msg.find("duplicate key \"omega\"") != std::string::npos);
    }
    SECTION("bad numeric value") {
        const std::string msg = reject("[solver]\nomega = fast\n");
        REQUIRE(msg.find("bad numeric value for \"omega\"") !=
                std::string::npos);
    }
    SECTION("bad boolean value") {
        const std::string msg = reject("[solver]\nenable_affine = yes\n");
        REQUIRE(msg.find("bad boolean value for \"enable_affine\"") !=
                std::string::npos);
    }
    SECTION("bad special value") {
        const std::string msg = reject("[solver]\nmu = -0.5\n");
        REQUIRE(msg.find("\"mu\"") != std::string::npos);
    }
    SECTION("missing equals sign") {
        REQUIRE_THROWS_AS(parse_run_config("[solver]\nomega 0.5\n"),
                          ConfigError);
    }
    SECTION("semantically invalid values fail at parse time") {
        const std::string msg = reject("[solver]\nomega = -0.25\n");
        REQUIRE(msg.find("omega") != std::string::npos);
        REQUIRE_THROWS_AS(parse_run_config("[synth]\nframes = 1\n"),
                          ConfigError);
    }
    SECTION("missing file is an i/o error, not a config error") {
        REQUIRE_THROWS_AS(load_run_config("/nonexistent/run.ini"), IoError);
    }
}

TEST_CASE("configuration serialization round-trips every field", "[io]") {
    RunConfig rc;
    rc.solver.mu = 0.0625;
    rc.solver.omega = 0.3;
    rc.solver.gamma = 0.07;
    rc.solver.lambda_global = 0.45;
    rc.solver.d_max = 2;
    rc.solver.patch = 7;
    rc.solver.group = 9;
    rc.solver.stride = 5;
    rc.solver.search_radius = 11;
    rc.solver.outer_max = 17;
    rc.solver.outer_tol = 3e-4;
    rc.solver.admm_rho = 2.5;
    rc.solver.admm_max = 8;
    rc.solver.cg_tol = 1e-9;
    rc.solver.cg_max = 150;
    rc.solver.enable_subspace = false;
    rc.solver.enable_affine = false;
    rc.solver.recluster_every = 3;
    rc.synth.height = 33;
    rc.synth.width = 31;
    rc.synth.frames = 7;
    rc.synth.background_kind = BackgroundKind::natural_image_file;
    rc.synth.background_file = "/tmp/texture.png";
    rc.synth.streak_density = 0.037;
    rc.synth.streak_angle_range = {3.0, 12.5};
    rc.synth.streak_length_range = {6.0, 19.0};
    rc.synth.streak_width = 1.25;
    rc.synth.streak_intensity_range = {0.31, 0.62};
    rc.synth.splash_density = 0.21;
    rc.synth.jitter_max = 0.75;
    rc.synth.noise_sigma = 0.013;
    rc.synth.seed = 987654321;

    const std::string text = format_run_config(rc);
    const RunConfig back = parse_run_config(text);

    REQUIRE(back.solver.mu == rc.solver.mu);
    REQUIRE(back.solver.omega == rc.solver.omega);
    REQUIRE(back.solver.gamma == rc.solver.gamma);
    REQUIRE(back.solver.lambda_global == rc.solver.lambda_global);
    REQUIRE(back.solver.d_max == rc.solver.d_max);
    REQUIRE(back.solver.patch == rc.solver.patch);
    REQUIRE(back.solver.group == rc.solver.group);
    REQUIRE(back.solver.stride == rc.solver.stride);
    REQUIRE(back.solver.search_radius == rc.solver.search_radius);
    REQUIRE(back.solver.outer_max == rc.solver.outer_max);
    REQUIRE(back.solver.outer_tol == rc.solver.outer_tol);
    REQUIRE(back.solver.admm_rho == rc.solver.admm_rho);
    REQUIRE(back.solver.admm_max == rc.solver.admm_max);
    REQUIRE(back.solver.cg_tol == rc.solver.cg_tol);
    REQUIRE(back.solver.cg_max == rc.solver.cg_max);
    REQUIRE(back.solver.enable_subspace == rc.solver.enable_subspace);
    REQUIRE(back.solver.enable_affine == rc.solver.enable_affine);
    REQUIRE(back.solver.recluster_every == rc.solver.recluster_every);
    REQUIRE(back.synth.height == rc.synth.height);
    REQUIRE(back.synth.width == rc.synth.width);
    REQUIRE(back.synth.frames == rc.synth.frames);
    REQUIRE(back.synth.background_kind == rc.synth.background_kind);
    REQUIRE(back.synth.background_file == rc.synth.background_file);
    REQUIRE(back.synth.streak_density == rc.synth.streak_density);
    REQUIRE(back.synth.streak_angle_range == rc.synth.streak_angle_range);
    REQUIRE(back.synth.streak_length_range == rc.synth.streak_length_range);
    REQUIRE(back.synth.streak_width == rc.synth.streak_width);
    REQUIRE(back.synth.streak_intensity_range ==
            rc.synth.streak_intensity_range);
    REQUIRE(back.synth.splash_density == rc.synth.splash_density);
    REQUIRE(back.synth.jitter_max == rc.synth.jitter_max);
    REQUIRE(back.synth.noise_sigma == rc.synth.noise_sigma);
    REQUIRE(back.synth.seed == rc.synth.seed);

    // serialize -> parse -> serialize is a fixed point
    REQUIRE(format_run_config(back) == text);

    // the auto marker survives a round trip too
    RunConfig auto_mu;
    auto_mu.solver.mu = -1.0;
    const RunConfig back2 = parse_run_config(format_run_config(auto_mu));
    REQUIRE(back2.solver.mu == -1.0);
}
