#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "posekit/error.hpp"

namespace posekit {

struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    int64_t numel() const { return int64_t(n) * c * h * w; }
    bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," +
           std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

/// Dense 4-D array in row-major n->c->h->w order, 32-bit floats.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, float fill = 0.0f) : shape_(shape) {
        if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
            throw ConfigError("tensor shape has negative dimension " + to_string(shape));
        data_.assign(size_t(shape.numel()), fill);
    }

    Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
        if (int64_t(data_.size()) != shape_.numel())
            throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + to_string(shape_));
    }

    const Shape& shape() const { return shape_; }
    int64_t numel() const { return shape_.numel(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    size_t index(int n, int c, int y, int x) const {
        return ((size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    // Pointer to the start of one (n, c) plane.
    float* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
    const float* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Tensor dump format: magic "TNSR", u32 version=1, u32 dims n,c,h,w,
// then n*c*h*w little-endian f32.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace detail

inline void save_tensor(const Tensor& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write("TNSR", 4);
    detail::put_u32(os, 1);
    detail::put_u32(os, uint32_t(t.shape().n));
    detail::put_u32(os, uint32_t(t.shape().c));
    detail::put_u32(os, uint32_t(t.shape().h));
    detail::put_u32(os, uint32_t(t.shape().w));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
    if (!os) throw IoError("write failed: " + path);
}

inline Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TNSR", 4) != 0)
        throw IoError("not a TNSR file: " + path);
    uint32_t version = detail::get_u32(is);
    if (version != 1)
        throw IoError("unsupported TNSR version " + std::to_string(version) + ": " + path);
    Shape s;
    s.n = int(detail::get_u32(is));
    s.c = int(detail::get_u32(is));
    s.h = int(detail::get_u32(is));
    s.w = int(detail::get_u32(is));
    if (!is || s.numel() < 0) throw IoError("bad TNSR header: " + path);
    std::vector<float> data(size_t(s.numel()));
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * 4));
    if (!is) throw IoError("truncated TNSR payload: " + path);
    Tensor t(s, std::move(data));
    if (!t.all_finite()) throw IoError("TNSR payload contains NaN/Inf: " + path);
    return t;
}

}  // namespace posekit
