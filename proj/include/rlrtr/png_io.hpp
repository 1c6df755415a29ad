#pragma once
// PNG image and frame-sequence I/O. Reads 8- and 16-bit grayscale or RGB
// images into [0,1]-normalized channel matrices, writes them back with
// round-half-to-even quantization, and handles frame_%05d.png sequences in
// strict lexicographic filename order.

#include <rlrtr/errors.hpp>
#include <rlrtr/file_util.hpp>
#include <rlrtr/tensor.hpp>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace rlrtr {

// One decoded image: 1 (gray) or 3 (RGB) channels, each normalized to [0,1]
// by the source bit depth (255 or 65535 maps to exactly 1.0).
struct PngImage {
    int bit_depth = 8;  // 8 or 16
    std::vector<Matrix> channels;
};

namespace detail {

[[noreturn]] inline void png_error_thrower(png_structp png, png_const_charp msg) {
    // recover the path stashed in the error pointer for a useful message
    const char* path = static_cast<const char*>(png_get_error_ptr(png));
    throw IoError(std::string("png: ") + (msg ? msg : "unknown failure") +
                  " (" + (path ? path : "?") + ")");
}

inline void png_warning_sink(png_structp, png_const_charp) {}

}  // namespace detail

inline PngImage read_png(const std::string& path) {
    detail::FileCloser file{std::fopen(path.c_str(), "rb")};
    if (!file.f) throw IoError("cannot open PNG file: " + path);

    png_byte header[8] = {};
    if (std::fread(header, 1, 8, file.f) != 8 || png_sig_cmp(header, 0, 8))
        throw IoError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(
        PNG_LIBPNG_VER_STRING, const_cast<char*>(path.c_str()),
        detail::png_error_thrower, detail::png_warning_sink);
    if (!png) throw IoError("png: cannot allocate read state (" + path + ")");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: cannot allocate info state (" + path + ")");
    }

    std::vector<png_byte> raw;
    std::vector<png_bytep> rows;
    int h = 0, w = 0, channels = 0, depth = 8;
    try {
        png_init_io(png, file.f);
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);

        const png_byte color_type = png_get_color_type(png, info);
        depth = png_get_bit_depth(png, info);
        // normalize exotic layouts to plain gray / RGB at 8 or 16 bits
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8)
            png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (color_type & PNG_COLOR_MASK_ALPHA)
            png_set_strip_alpha(png);
        if (depth == 16) png_set_swap(png);  // file is big-endian
        png_read_update_info(png, info);

        h = static_cast<int>(png_get_image_height(png, info));
        w = static_cast<int>(png_get_image_width(png, info));
        depth = png_get_bit_depth(png, info);
        channels = png_get_channels(png, info);
        if (h < 1 || w < 1) throw IoError("png: empty image (" + path + ")");
        if (depth != 8 && depth != 16)
            throw IoError("png: unsupported bit depth " +
                          std::to_string(depth) + " (" + path + ")");
        if (channels != 1 && channels != 3)
            throw IoError("png: unsupported channel count " +
                          std::to_string(channels) + " (" + path + ")");

        const std::size_t stride = png_get_rowbytes(png, info);
        raw.assign(stride * static_cast<std::size_t>(h), 0);
        rows.resize(h);
        for (int r = 0; r < h; ++r) rows[r] = raw.data() + stride * r;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);

    PngImage out;
    out.bit_depth = depth;
    out.channels.assign(channels, Matrix::Zero(h, w));
    const double scale = depth == 8 ? 1.0 / 255.0 : 1.0 / 65535.0;
    for (int r = 0; r < h; ++r) {
        if (depth == 8) {
            const png_byte* row = rows[r];
            for (int c = 0; c < w; ++c)
                for (int ch = 0; ch < channels; ++ch)
                    out.channels[ch](r, c) = row[c * channels + ch] * scale;
        } else {
            const auto* row = reinterpret_cast<const std::uint16_t*>(rows[r]);
            for (int c = 0; c < w; ++c)
                for (int ch = 0; ch < channels; ++ch)
                    out.channels[ch](r, c) = row[c * channels + ch] * scale;
        }
    }
    return out;
}

// Writes 1 (gray) or 3 (RGB) channels at the requested bit depth. Values are
// clamped to [0,1] and quantized with round-half-to-even.
inline void write_png(const std::string& path,
                      const std::vector<Matrix>& channels, int bit_depth = 8) {
    if (channels.size() != 1 && channels.size() != 3)
        throw ArgumentError("write_png: need 1 or 3 channels, got " +
                            std::to_string(channels.size()));
    if (bit_depth != 8 && bit_depth != 16)
        throw ArgumentError("write_png: bit depth must be 8 or 16, got " +
                            std::to_string(bit_depth));
    const int h = static_cast<int>(channels[0].rows());
    const int w = static_cast<int>(channels[0].cols());
    for (const Matrix& ch : channels)
        if (ch.rows() != h || ch.cols() != w)
            throw ArgumentError("write_png: channel size mismatch");

    const int nch = static_cast<int>(channels.size());
    const double maxv = bit_depth == 8 ? 255.0 : 65535.0;
    const std::size_t stride =
        static_cast<std::size_t>(w) * nch * (bit_depth / 8);
    std::vector<png_byte> raw(stride * static_cast<std::size_t>(h));
    std::vector<png_bytep> rows(h);
    for (int r = 0; r < h; ++r) {
        rows[r] = raw.data() + stride * r;
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < nch; ++ch) {
                const double v = std::clamp(channels[ch](r, c), 0.0, 1.0);
                const auto q =
                    static_cast<std::uint16_t>(std::nearbyint(v * maxv));
                if (bit_depth == 8)
                    rows[r][c * nch + ch] = static_cast<png_byte>(q);
                else
                    reinterpret_cast<std::uint16_t*>(rows[r])[c * nch + ch] = q;
            }
    }

    detail::FileCloser file{std::fopen(path.c_str(), "wb")};
    if (!file.f) throw IoError("cannot open PNG file for writing: " + path);
    png_structp png = png_create_write_struct(
        PNG_LIBPNG_VER_STRING, const_cast<char*>(path.c_str()),
        detail::png_error_thrower, detail::png_warning_sink);
    if (!png) throw IoError("png: cannot allocate write state (" + path + ")");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: cannot allocate info state (" + path + ")");
    }
    try {
        png_init_io(png, file.f);
        png_set_IHDR(png, info, w, h, bit_depth,
                     nch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        if (bit_depth == 16) png_set_swap(png);
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

inline double luminance(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline Matrix luminance_of(const PngImage& img) {
    if (img.channels.size() == 1) return img.channels[0];
    Matrix y = 0.299 * img.channels[0] + 0.587 * img.channels[1] +
               0.114 * img.channels[2];
    return y;
}

// A frame sequence decoded into per-channel video tensors (1 or 3 entries),
// all frames normalized by the common source bit depth.
struct FrameSequence {
    int bit_depth = 8;
    std::vector<Tensor3<double>> channels;
};

inline std::vector<std::string> list_png_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw IoError("not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

inline FrameSequence read_frames(const std::string& dir) {
    const std::vector<std::string> names = list_png_files(dir);
    if (names.empty()) throw IoError("no PNG frames in directory: " + dir);

    FrameSequence seq;
    const int t = static_cast<int>(names.size());
    int h = 0, w = 0;
    for (int f = 0; f < t; ++f) {
        const std::string path =
            (std::filesystem::path(dir) / names[f]).string();
        PngImage img = read_png(path);
        const int ih = static_cast<int>(img.channels[0].rows());
        const int iw = static_cast<int>(img.channels[0].cols());
        if (f == 0) {
            h = ih;
            w = iw;
            seq.bit_depth = img.bit_depth;
            seq.channels.assign(img.channels.size(), Tensor3<double>(h, w, t));
        } else {
            if (ih != h || iw != w)
                throw IoError("frame size mismatch: " + path + " is " +
                              std::to_string(ih) + "x" + std::to_string(iw) +
                              ", expected " + std::to_string(h) + "x" +
                              std::to_string(w));
            if (img.channels.size() != seq.channels.size())
                throw IoError("frame channel-count mismatch: " + path);
            if (img.bit_depth != seq.bit_depth)
                throw IoError("frame bit-depth mismatch: " + path);
        }
        for (std::size_t ch = 0; ch < img.channels.size(); ++ch)
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c)
                    seq.channels[ch](r, c, f) = img.channels[ch](r, c);
    }
    return seq;
}

inline std::string frame_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.png", index);
    return buf;
}

inline void write_frames(const std::vector<Tensor3<double>>& channels,
                         const std::string& dir, int bit_depth = 8) {
    if (channels.empty())
        throw ArgumentError("write_frames: no channels given");
    for (const auto& ch : channels)
        if (!ch.same_shape(channels[0]))
            throw ArgumentError("write_frames: channel shape mismatch");
    std::filesystem::create_directories(dir);
    const int t = channels[0].frames();
    for (int f = 0; f < t; ++f) {
        std::vector<Matrix> frame;
        frame.reserve(channels.size());
        for (const auto& ch : channels) frame.push_back(frame_as_matrix(ch, f));
        write_png((std::filesystem::path(dir) / frame_name(f)).string(), frame,
                  bit_depth);
    }
}

}  // namespace rlrtr
