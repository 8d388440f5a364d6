#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rsdiff/diffusion.hpp"
#include "rsdiff/errors.hpp"
#include "rsdiff/tensor.hpp"

namespace rsdiff {

enum class TaskKind { Denoise, SISR4x, Blur };
enum class PatternKind { Blobs, Gradient, Checker, Mix };

inline std::string to_string(TaskKind k) {
    switch (k) {
        case TaskKind::Denoise: return "denoise";
        case TaskKind::SISR4x: return "sisr4x";
        case TaskKind::Blur: return "blur";
    }
    return "?";
}

inline TaskKind parse_task_kind(const std::string& s) {
    if (s == "denoise") return TaskKind::Denoise;
    if (s == "sisr4x") return TaskKind::SISR4x;
    if (s == "blur") return TaskKind::Blur;
    throw ConfigError("unknown task kind '" + s + "' (expected denoise|sisr4x|blur)");
}

inline std::string to_string(PatternKind k) {
    switch (k) {
        case PatternKind::Blobs: return "blobs";
        case PatternKind::Gradient: return "gradient";
        case PatternKind::Checker: return "checker";
        case PatternKind::Mix: return "mix";
    }
    return "?";
}

inline PatternKind parse_pattern_kind(const std::string& s) {
    if (s == "blobs") return PatternKind::Blobs;
    if (s == "gradient") return PatternKind::Gradient;
    if (s == "checker") return PatternKind::Checker;
    if (s == "mix") return PatternKind::Mix;
    throw ConfigError("unknown pattern '" + s + "' (expected blobs|gradient|checker|mix)");
}

struct TaskSpec {
    TaskKind kind = TaskKind::Denoise;
    double noise_sigma = 50.0;  // on the 0..255 scale, divided by 255 internally
    double blur_sigma = 1.5;
    int image_size = 32;
    int channels = 1;
    int count = 8;
    std::uint64_t seed = 0;
    PatternKind pattern = PatternKind::Blobs;

    void validate() const {
        if (image_size < 8) throw std::invalid_argument("TaskSpec: image_size must be >= 8");
        if (count < 1) throw std::invalid_argument("TaskSpec: count must be >= 1");
        if (channels < 1) throw std::invalid_argument("TaskSpec: channels must be >= 1");
        if (kind == TaskKind::Denoise && noise_sigma <= 0.0)
            throw std::invalid_argument("TaskSpec: noise_sigma must be > 0");
        if (kind == TaskKind::Blur && blur_sigma <= 0.0)
            throw std::invalid_argument("TaskSpec: blur_sigma must be > 0");
        if (kind == TaskKind::SISR4x && image_size % 4 != 0)
            throw std::invalid_argument("TaskSpec: image_size must be divisible by 4 for sisr4x");
    }
};

// ---------------------------------------------------------------------------
// Synthetic ground-truth images, clamped to [0,1].
// ---------------------------------------------------------------------------

namespace synth {

// Full pattern repeats every `period` pixels (cell edge = period/2).
inline Tensorf checkerboard(int size, int period, int phase_x, int phase_y, float lo, float hi,
                            int channels = 1) {
    if (period < 2 || period % 2 != 0)
        throw std::invalid_argument("checkerboard: period must be even and >= 2");
    const int cell = period / 2;
    Tensorf img(Shape{channels, size, size});
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const int par = ((x + phase_x) / cell + (y + phase_y) / cell) % 2;
                img.at(c, y, x) = par ? hi : lo;
            }
    return img;
}

inline Tensorf blobs(RngState& rng, int size, int channels) {
    Tensorf img(Shape{channels, size, size});
    for (int c = 0; c < channels; ++c) {
        const float base = static_cast<float>(0.2 + 0.6 * next_uniform(rng));
        float* plane = img.channel(c);
        for (int i = 0; i < size * size; ++i) plane[i] = base;
        const int nblob = static_cast<int>(next_int(rng, 4, 8));
        for (int b = 0; b < nblob; ++b) {
            const double cx = next_uniform(rng) * size;
            const double cy = next_uniform(rng) * size;
            const double amp = (next_uniform(rng) * 1.2 - 0.6);
            const double sg = size / 16.0 + next_uniform(rng) * (size / 4.0 - size / 16.0);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    plane[y * size + x] +=
                        static_cast<float>(amp * std::exp(-d2 / (2.0 * sg * sg)));
                }
        }
    }
    img.clamp(0.0f, 1.0f);
    return img;
}

inline Tensorf gradient(RngState& rng, int size, int channels) {
    Tensorf img(Shape{channels, size, size});
    for (int c = 0; c < channels; ++c) {
        const double a = next_uniform(rng);
        const double gx = next_uniform(rng) * 2.0 - 1.0;
        const double gy = next_uniform(rng) * 2.0 - 1.0;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                img.at(c, y, x) = static_cast<float>(
                    a + gx * x / std::max(1, size - 1) + gy * y / std::max(1, size - 1));
    }
    img.clamp(0.0f, 1.0f);
    return img;
}

}  // namespace synth

inline Tensorf synth_image(RngState& rng, PatternKind kind, int size, int channels = 1) {
    if (size < 8) throw std::invalid_argument("synth_image: size must be >= 8");
    switch (kind) {
        case PatternKind::Blobs: return synth::blobs(rng, size, channels);
        case PatternKind::Gradient: return synth::gradient(rng, size, channels);
        case PatternKind::Checker: {
            const int period = 2 * static_cast<int>(next_int(rng, 2, 8));
            const int px = static_cast<int>(next_int(rng, 0, period - 1));
            const int py = static_cast<int>(next_int(rng, 0, period - 1));
            const float lo = static_cast<float>(0.35 * next_uniform(rng));
            const float hi = static_cast<float>(0.65 + 0.35 * next_uniform(rng));
            return synth::checkerboard(size, period, px, py, lo, hi, channels);
        }
        case PatternKind::Mix: {
            Tensorf a = synth::blobs(rng, size, channels);
            Tensorf b = synth_image(rng, PatternKind::Checker, size, channels);
            Tensorf c = synth::gradient(rng, size, channels);
            const float wa = static_cast<float>(next_uniform(rng));
            const float wb = static_cast<float>(next_uniform(rng) * (1.0 - wa));
            const float wc = 1.0f - wa - wb;
            Tensorf out = a * wa + b * wb + c * wc;
            out.clamp(0.0f, 1.0f);
            return out;
        }
    }
    throw std::invalid_argument("synth_image: bad kind");
}

// ---------------------------------------------------------------------------
// Separable Catmull-Rom bicubic resampling (a = -0.5), reflect boundary,
// double-precision tap accumulation. Exact on constant images.
// ---------------------------------------------------------------------------

namespace taskdetail {

inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

struct TapRow {
    int idx[4];
    double w[4];
};

inline std::vector<TapRow> bicubic_taps(int in_n, int out_n) {
    std::vector<TapRow> taps(static_cast<std::size_t>(out_n));
    const double scale = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
        const double src = (o + 0.5) * scale - 0.5;
        const double fl = std::floor(src);
        const double s = src - fl;
        const int base = static_cast<int>(fl);
        const double s2 = s * s, s3 = s2 * s;
        TapRow r;
        r.w[0] = -0.5 * s3 + s2 - 0.5 * s;
        r.w[1] = 1.5 * s3 - 2.5 * s2 + 1.0;
        r.w[2] = -1.5 * s3 + 2.0 * s2 + 0.5 * s;
        r.w[3] = 0.5 * s3 - 0.5 * s2;
        for (int j = 0; j < 4; ++j) r.idx[j] = reflect_index(base - 1 + j, in_n);
        taps[static_cast<std::size_t>(o)] = r;
    }
    return taps;
}

}  // namespace taskdetail

inline Tensorf bicubic_resize(const Tensorf& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bicubic_resize: target dims must be positive");
    const Shape s = img.shape();
    const auto col_taps = taskdetail::bicubic_taps(s.h, out_h);
    const auto row_taps = taskdetail::bicubic_taps(s.w, out_w);

    // Horizontal pass into a double buffer, then vertical.
    std::vector<double> tmp(static_cast<std::size_t>(s.c) * s.h * out_w);
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y) {
            const float* irow = img.channel(c) + static_cast<std::int64_t>(y) * s.w;
            double* trow = tmp.data() + (static_cast<std::size_t>(c) * s.h + y) * out_w;
            for (int x = 0; x < out_w; ++x) {
                const auto& t = row_taps[static_cast<std::size_t>(x)];
                trow[x] = t.w[0] * irow[t.idx[0]] + t.w[1] * irow[t.idx[1]] +
                          t.w[2] * irow[t.idx[2]] + t.w[3] * irow[t.idx[3]];
            }
        }
    Tensorf out(Shape{s.c, out_h, out_w});
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < out_h; ++y) {
            const auto& t = col_taps[static_cast<std::size_t>(y)];
            const double* r0 = tmp.data() + (static_cast<std::size_t>(c) * s.h + t.idx[0]) * out_w;
            const double* r1 = tmp.data() + (static_cast<std::size_t>(c) * s.h + t.idx[1]) * out_w;
            const double* r2 = tmp.data() + (static_cast<std::size_t>(c) * s.h + t.idx[2]) * out_w;
            const double* r3 = tmp.data() + (static_cast<std::size_t>(c) * s.h + t.idx[3]) * out_w;
            float* orow = out.channel(c) + static_cast<std::int64_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x)
                orow[x] = static_cast<float>(t.w[0] * r0[x] + t.w[1] * r1[x] + t.w[2] * r2[x] +
                                             t.w[3] * r3[x]);
        }
    return out;
}

inline Tensorf gaussian_blur(const Tensorf& img, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kern(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kern[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        norm += kern[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kern) k /= norm;

    const Shape s = img.shape();
    Tensorf mid(s), out(s);
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kern[static_cast<std::size_t>(i + radius)] *
                           img.at(c, y, taskdetail::reflect_index(x + i, s.w));
                mid.at(c, y, x) = static_cast<float>(acc);
            }
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kern[static_cast<std::size_t>(i + radius)] *
                           mid.at(c, taskdetail::reflect_index(y + i, s.h), x);
                out.at(c, y, x) = static_cast<float>(acc);
            }
    return out;
}

// Degraded observation for a clean image. Denoise output is deliberately not
// clamped so the Gaussian noise model stays exact; clamping happens only at
// image export.
inline Tensorf degrade(const TaskSpec& task, const Tensorf& x0, RngState& rng) {
    switch (task.kind) {
        case TaskKind::Denoise: {
            Tensorf y = x0;
            const double sigma = task.noise_sigma / 255.0;
            if (sigma > 0.0) y += normal_sample<float>(rng, x0.shape(), 0.0, sigma);
            return y;
        }
        case TaskKind::SISR4x: {
            const Shape s = x0.shape();
            if (s.h % 4 != 0 || s.w % 4 != 0)
                throw std::invalid_argument("degrade: sisr4x needs dims divisible by 4, got " +
                                            s.str());
            Tensorf small = bicubic_resize(x0, s.h / 4, s.w / 4);
            return bicubic_resize(small, s.h, s.w);
        }
        case TaskKind::Blur:
            return gaussian_blur(x0, task.blur_sigma);
    }
    throw std::invalid_argument("degrade: bad task kind");
}

// Deterministic under spec.seed: item i draws from streams derived as
// (seed, "synth", i) and (seed, "degrade", i).
inline std::vector<RestorationPair> make_dataset(const TaskSpec& spec) {
    spec.validate();
    std::vector<RestorationPair> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        RngState srng = seeded_rng(derive_seed(spec.seed, "synth", static_cast<std::uint64_t>(i)));
        Tensorf x0 = synth_image(srng, spec.pattern, spec.image_size, spec.channels);
        RngState drng =
            seeded_rng(derive_seed(spec.seed, "degrade", static_cast<std::uint64_t>(i)));
        Tensorf y0 = degrade(spec, x0, drng);
        out.push_back(RestorationPair{std::move(x0), std::move(y0), to_string(spec.kind)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, 1 channel) / PPM (P6, 3 channels), maxval 255, mapped
// linearly to [0,1]. CTNS files pass through tensor.hpp.
// ---------------------------------------------------------------------------

namespace taskdetail {

inline int pnm_token(std::istream& is, const std::string& path) {
    // Skips whitespace and '#' comments, then reads one unsigned decimal.
    int ch = is.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = is.get();
        } else if (std::isspace(ch)) {
            ch = is.get();
        } else {
            break;
        }
    }
    if (ch == EOF || !std::isdigit(ch))
        throw ParseError(path + ": expected integer in header at byte offset " +
                         std::to_string(static_cast<long long>(is.tellg()) - 1));
    long v = 0;
    while (ch != EOF && std::isdigit(ch)) {
        v = v * 10 + (ch - '0');
        if (v > 1 << 30) throw ParseError(path + ": header value out of range");
        ch = is.get();
    }
    return static_cast<int>(v);
}

}  // namespace taskdetail

inline Tensorf load_image(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".ctns") return load_ctns(path);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_image: cannot open " + path.string());
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw ParseError(path.string() + ": not a binary PGM/PPM (bad magic at byte offset 0)");
    const int channels = (m1 == '5') ? 1 : 3;
    const int w = taskdetail::pnm_token(is, path.string());
    const int h = taskdetail::pnm_token(is, path.string());
    const int maxval = taskdetail::pnm_token(is, path.string());
    if (maxval != 255)
        throw ParseError(path.string() + ": unsupported maxval " + std::to_string(maxval));
    // The single whitespace after maxval was consumed by pnm_token's digit loop.
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw ParseError(path.string() + ": truncated pixel payload at byte offset " +
                         std::to_string(static_cast<long long>(is.tellg())));
    Tensorf img(Shape{channels, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) =
                    static_cast<float>(raw[(static_cast<std::size_t>(y) * w + x) * channels + c]) /
                    255.0f;
    return img;
}

inline void save_image(const std::filesystem::path& path, const Tensorf& img) {
    const std::string ext = path.extension().string();
    if (ext == ".ctns") {
        save_ctns(path, img);
        return;
    }
    const Shape s = img.shape();
    if (s.c != 1 && s.c != 3)
        throw std::invalid_argument("save_image: PGM/PPM need 1 or 3 channels, got " + s.str());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_image: cannot open " + path.string());
    os << (s.c == 1 ? "P5" : "P6") << "\n" << s.w << " " << s.h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(s.w) * s.h * s.c);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
            for (int c = 0; c < s.c; ++c) {
                const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                raw[(static_cast<std::size_t>(y) * s.w + x) * s.c + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw IoError("save_image: write failed for " + path.string());
}

}  // namespace rsdiff
