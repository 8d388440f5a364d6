#pragma once

#include <cmath>
#include <vector>

#include "rsdiff/errors.hpp"
#include "rsdiff/tensor.hpp"

namespace rsdiff {

inline constexpr double kPsnrCap = 99.0;

// 10*log10(peak^2 / MSE), capped at 99 dB for (near-)identical images.
inline double psnr(const Tensorf& a, const Tensorf& b, double peak = 1.0) {
    a.require_shape(b, "psnr");
    const double m = mse(a, b);
    if (m < peak * peak * std::pow(10.0, -kPsnrCap / 10.0)) return kPsnrCap;
    return 10.0 * std::log10(peak * peak / m);
}

namespace metricdetail {

inline const std::vector<double>& ssim_window() {
    // 11x11 Gaussian, sigma 1.5, normalized.
    static const std::vector<double> win = [] {
        std::vector<double> w(121);
        double norm = 0.0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5, dx = x - 5;
                w[static_cast<std::size_t>(y * 11 + x)] =
                    std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
                norm += w[static_cast<std::size_t>(y * 11 + x)];
            }
        for (auto& v : w) v /= norm;
        return w;
    }();
    return win;
}

}  // namespace metricdetail

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1.0, averaged over valid window positions and channels.
inline double ssim(const Tensorf& a, const Tensorf& b) {
    a.require_shape(b, "ssim");
    const Shape s = a.shape();
    constexpr int win = 11;
    if (s.h < win || s.w < win)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window: " + s.str());
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const auto& w = metricdetail::ssim_window();

    double acc = 0.0;
    std::int64_t count = 0;
    for (int ch = 0; ch < s.c; ++ch) {
        const float* pa = a.channel(ch);
        const float* pb = b.channel(ch);
        for (int y = 0; y + win <= s.h; ++y)
            for (int x = 0; x + win <= s.w; ++x) {
                double ma = 0.0, mb = 0.0, va = 0.0, vb = 0.0, cov = 0.0;
                for (int wy = 0; wy < win; ++wy)
                    for (int wx = 0; wx < win; ++wx) {
                        const double wv = w[static_cast<std::size_t>(wy * win + wx)];
                        const double xa = pa[static_cast<std::int64_t>(y + wy) * s.w + (x + wx)];
                        const double xb = pb[static_cast<std::int64_t>(y + wy) * s.w + (x + wx)];
                        ma += wv * xa;
                        mb += wv * xb;
                        va += wv * xa * xa;
                        vb += wv * xb * xb;
                        cov += wv * xa * xb;
                    }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
                const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                acc += num / den;
                ++count;
            }
    }
    return acc / static_cast<double>(count);
}

struct MetricResult {
    double psnr_mean = 0.0;
    double ssim_mean = 0.0;
    std::vector<double> per_image_psnr;
    std::vector<double> per_image_ssim;
};

}  // namespace rsdiff
