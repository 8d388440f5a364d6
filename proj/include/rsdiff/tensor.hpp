#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "rsdiff/errors.hpp"
#include "rsdiff/rng.hpp"

namespace rsdiff {

struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;

    bool operator==(const Shape&) const = default;
    std::int64_t numel() const {
        return static_cast<std::int64_t>(c) * h * w;
    }
    std::string str() const {
        return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Dense rank-3 array [channels, height, width], row-major. Value-semantic;
// safe to share read-only across threads. No implicit broadcasting: binary
// ops require equal shapes, scalar ops excepted.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape_(s) {
        if (s.c < 0 || s.h < 0 || s.w < 0)
            throw std::invalid_argument("Tensor: negative shape " + s.str());
        data_.assign(static_cast<std::size_t>(s.numel()), fill);
    }

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& at(int c, int y, int x) {
        return data_[static_cast<std::size_t>((static_cast<std::int64_t>(c) * shape_.h + y) * shape_.w + x)];
    }
    T at(int c, int y, int x) const {
        return data_[static_cast<std::size_t>((static_cast<std::int64_t>(c) * shape_.h + y) * shape_.w + x)];
    }
    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.h * shape_.w; }
    const T* channel(int c) const {
        return data_.data() + static_cast<std::size_t>(c) * shape_.h * shape_.w;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void require_shape(const Tensor& o, const char* who) const {
        if (!same_shape(o))
            throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_.str() +
                                        " vs " + o.shape_.str());
    }

    Tensor& operator+=(const Tensor& o) {
        require_shape(o, "Tensor::operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_shape(o, "Tensor::operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    // this += a * o
    Tensor& add_scaled(const Tensor& o, T a) {
        require_shape(o, "Tensor::add_scaled");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * o.data_[i];
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, T s) { return a *= s; }
    friend Tensor operator*(T s, Tensor a) { return a *= s; }

    friend Tensor hadamard(Tensor a, const Tensor& b) {
        a.require_shape(b, "hadamard");
        for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] *= b.data_[i];
        return a;
    }

    double sum() const {
        double acc = 0.0;
        for (T v : data_) acc += static_cast<double>(v);
        return acc;
    }
    double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

    double min() const {
        double m = std::numeric_limits<double>::infinity();
        for (T v : data_) m = std::min(m, static_cast<double>(v));
        return m;
    }
    double max() const {
        double m = -std::numeric_limits<double>::infinity();
        for (T v : data_) m = std::max(m, static_cast<double>(v));
        return m;
    }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void require_finite(const char* who) const {
        if (!all_finite()) throw NumericError(std::string(who) + ": non-finite value in tensor");
    }

    void clamp(T lo, T hi) {
        for (auto& v : data_) v = std::clamp(v, lo, hi);
    }

    bool bitwise_equal(const Tensor& o) const {
        if (!same_shape(o)) return false;
        return std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(T)) == 0;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i)
            out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    Shape shape_{};
    std::vector<T> data_;
};

using Tensorf = Tensor<float>;

// Mean over all entries of (a-b)^2, accumulated in double.
template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
    a.require_shape(b, "mse");
    double acc = 0.0;
    const T* pa = a.data();
    const T* pb = b.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        acc += d * d;
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    a.require_shape(b, "max_abs_diff");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

// I.i.d. Gaussian entries; advances the rng stream by 2*numel draws.
template <typename T = float>
Tensor<T> normal_sample(RngState& rng, Shape shape, double mean = 0.0, double std = 1.0) {
    if (std < 0.0) throw std::invalid_argument("normal_sample: std must be >= 0");
    Tensor<T> out(shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<T>(mean + std * next_normal(rng));
    return out;
}

// ---------------------------------------------------------------------------
// CTNS raw tensor file: magic "CTNS", version u32 LE, shape 3xu32 LE (c,h,w),
// then float32 LE payload in row-major order.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCtnsVersion = 1;

namespace iodetail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw ParseError(path + ": truncated while reading " + what + " at byte offset " +
                         std::to_string(static_cast<long long>(is.tellg())));
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace iodetail

inline void save_ctns(const std::filesystem::path& path, const Tensorf& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_ctns: cannot open " + path.string());
    os.write("CTNS", 4);
    iodetail::put_u32(os, kCtnsVersion);
    iodetail::put_u32(os, static_cast<std::uint32_t>(t.shape().c));
    iodetail::put_u32(os, static_cast<std::uint32_t>(t.shape().h));
    iodetail::put_u32(os, static_cast<std::uint32_t>(t.shape().w));
    // Little-endian host assumed for the payload blit; static_assert guards it.
    static_assert(std::endian::native == std::endian::little);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!os) throw IoError("save_ctns: write failed for " + path.string());
}

inline Tensorf load_ctns(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_ctns: cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "CTNS", 4) != 0)
        throw ParseError(path.string() + ": bad CTNS magic at byte offset 0");
    const std::uint32_t version = iodetail::get_u32(is, path.string(), "version");
    if (version != kCtnsVersion)
        throw ParseError(path.string() + ": unsupported CTNS version " + std::to_string(version));
    const std::uint32_t c = iodetail::get_u32(is, path.string(), "channels");
    const std::uint32_t h = iodetail::get_u32(is, path.string(), "height");
    const std::uint32_t w = iodetail::get_u32(is, path.string(), "width");
    Tensorf t(Shape{static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)});
    static_assert(std::endian::native == std::endian::little);
    if (!is.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(float))))
        throw ParseError(path.string() + ": truncated payload at byte offset " +
                         std::to_string(20 + static_cast<long long>(is.gcount())));
    return t;
}

}  // namespace rsdiff
