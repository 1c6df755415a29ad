#pragma once
// Self-describing binary tensor format: a 32-byte header (magic "RLRT",
// version, dtype, reserved padding, three u64 little-endian dims) followed by
// the payload as 32-bit little-endian IEEE-754 floats, frame-major then
// row-major. Round-trips are bit-identical.

#include <rlrtr/errors.hpp>
#include <rlrtr/file_util.hpp>
#include <rlrtr/tensor.hpp>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

namespace rlrtr {

namespace detail {

inline void put_u64_le(unsigned char* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

inline void put_f32_le(unsigned char* p, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i)
        p[i] = static_cast<unsigned char>(bits >> (8 * i));
}

inline float get_f32_le(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i)
        bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace detail

inline constexpr std::size_t kRlrtHeaderBytes = 32;

inline void write_rlrt(const Tensor3<float>& tensor, const std::string& path) {
    detail::FileCloser file{std::fopen(path.c_str(), "wb")};
    if (!file.f)
        throw IoError("cannot open tensor file for writing: " + path);

    unsigned char header[kRlrtHeaderBytes] = {};
    std::memcpy(header, "RLRT", 4);
    header[4] = 1;  // version
    header[5] = 1;  // dtype: f32 little-endian
    // header[6], header[7] reserved, zero
    detail::put_u64_le(header + 8, static_cast<std::uint64_t>(tensor.height()));
    detail::put_u64_le(header + 16, static_cast<std::uint64_t>(tensor.width()));
    detail::put_u64_le(header + 24, static_cast<std::uint64_t>(tensor.frames()));
    if (std::fwrite(header, 1, kRlrtHeaderBytes, file.f) != kRlrtHeaderBytes)
        throw IoError("short write on tensor header: " + path);

    std::vector<unsigned char> buf(tensor.size() * 4);
    for (std::size_t i = 0; i < tensor.size(); ++i)
        detail::put_f32_le(buf.data() + 4 * i, tensor.data()[i]);
    if (std::fwrite(buf.data(), 1, buf.size(), file.f) != buf.size())
        throw IoError("short write on tensor payload: " + path);
    if (std::fflush(file.f) != 0)
        throw IoError("cannot flush tensor file: " + path);
}

inline Tensor3<float> read_rlrt(const std::string& path) {
    detail::FileCloser file{std::fopen(path.c_str(), "rb")};
    if (!file.f) throw IoError("cannot open tensor file: " + path);

    unsigned char header[kRlrtHeaderBytes];
    const std::size_t got = std::fread(header, 1, kRlrtHeaderBytes, file.f);
    if (got != kRlrtHeaderBytes)
        throw IoError("truncated tensor header in " + path + ": expected " +
                      std::to_string(kRlrtHeaderBytes) + " bytes, got " +
                      std::to_string(got));
    if (std::memcmp(header, "RLRT", 4) != 0)
        throw IoError("bad magic in " + path + ": expected \"RLRT\"");
    if (header[4] != 1)
        throw IoError("unsupported version " + std::to_string(header[4]) +
                      " in " + path + ": expected 1");
    if (header[5] != 1)
        throw IoError("unsupported dtype " + std::to_string(header[5]) +
                      " in " + path + ": expected 1 (32-bit float)");

    const std::uint64_t h = detail::get_u64_le(header + 8);
    const std::uint64_t w = detail::get_u64_le(header + 16);
    const std::uint64_t t = detail::get_u64_le(header + 24);
    if (h < 1 || w < 1 || t < 1)
        throw IoError("bad dimensions " + std::to_string(h) + "x" +
                      std::to_string(w) + "x" + std::to_string(t) + " in " +
                      path);
    constexpr std::uint64_t dim_cap = 1ull << 20;
    if (h > dim_cap || w > dim_cap || t > dim_cap || h * w > (1ull << 34) ||
        h * w * t > (1ull << 34))
        throw IoError("implausibly large dimensions " + std::to_string(h) +
                      "x" + std::to_string(w) + "x" + std::to_string(t) +
                      " in " + path);

    Tensor3<float> tensor(static_cast<int>(h), static_cast<int>(w),
                          static_cast<int>(t));
    const std::size_t payload = tensor.size() * 4;
    std::vector<unsigned char> buf(payload);
    const std::size_t read = std::fread(buf.data(), 1, payload, file.f);
    if (read != payload)
        throw IoError("truncated tensor payload in " + path + ": expected " +
                      std::to_string(payload) + " bytes, got " +
                      std::to_string(read));
    for (std::size_t i = 0; i < tensor.size(); ++i)
        tensor.data()[i] = detail::get_f32_le(buf.data() + 4 * i);
    return tensor;
}

// double <-> float convenience: the file format stores 32-bit floats, so the
// narrowing direction rounds.
inline Tensor3<float> to_f32(const Tensor3<double>& x) {
    Tensor3<float> y(x.height(), x.width(), x.frames());
    for (std::size_t i = 0; i < x.size(); ++i)
        y.data()[i] = static_cast<float>(x.data()[i]);
    return y;
}

inline Tensor3<double> to_f64(const Tensor3<float>& x) {
    Tensor3<double> y(x.height(), x.width(), x.frames());
    for (std::size_t i = 0; i < x.size(); ++i)
        y.data()[i] = static_cast<double>(x.data()[i]);
    return y;
}

}  // namespace rlrtr
