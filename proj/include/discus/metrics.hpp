#pragma once

#include "discus/core.hpp"
#include "discus/data_model.hpp"

namespace discus::metrics {

struct MetricReport {
    double nmse_db = 0.0;
    double ssim = 0.0;
    std::vector<std::pair<double, double>> per_frame;  // (nmse_db, ssim)
};

namespace detail {

inline void check_same_shape(const ImageSeries& a, const ImageSeries& b) {
    if (a.frames != b.frames || a.height != b.height || a.width != b.width)
        throw ConfigError("metrics: series shapes differ");
}

inline double nmse_db_from_sums(double err, double ref) {
    if (err == 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(err / ref);
}

// Mean SSIM of one pair of magnitude frames sharing the dynamic range `range`.
// 7x7 Gaussian window (sigma 1.5), valid positions only (no padding),
// K1 = 0.01, K2 = 0.03.
inline double ssim_frame(std::span<const double> x, std::span<const double> y,
                         int h, int w, double range) {
    constexpr int kWin = 7, kHalf = 3;
    constexpr double kSigma = 1.5;
    static const std::vector<double> weights = [] {
        std::vector<double> wgt(kWin * kWin);
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) {
                const double d2 = sq(i - kHalf) + sq(j - kHalf);
                wgt[i * kWin + j] = std::exp(-d2 / (2.0 * kSigma * kSigma));
                sum += wgt[i * kWin + j];
            }
        for (double& v : wgt) v /= sum;
        return wgt;
    }();

    const double c1 = sq(0.01 * range), c2 = sq(0.03 * range);
    double total = 0.0;
    std::size_t count = 0;
    for (int cy = kHalf; cy < h - kHalf; ++cy) {
        for (int cx = kHalf; cx < w - kHalf; ++cx) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wgt = weights[i * kWin + j];
                    const double xv = x[static_cast<std::size_t>(cy + i - kHalf) * w + cx + j - kHalf];
                    const double yv = y[static_cast<std::size_t>(cy + i - kHalf) * w + cx + j - kHalf];
                    mx += wgt * xv;
                    my += wgt * yv;
                    sxx += wgt * xv * xv;
                    syy += wgt * yv * yv;
                    sxy += wgt * xv * yv;
                }
            const double vx = sxx - mx * mx;
            const double vy = syy - my * my;
            const double cxy = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    if (count == 0) throw ConfigError("ssim: frame too small for the 7x7 window");
    return total / static_cast<double>(count);
}

}  // namespace detail

// 10 log10(||est - ref||^2 / ||ref||^2) over the whole complex series.
// Returns -inf when est == ref exactly.
inline double nmse_db(const ImageSeries& est, const ImageSeries& ref) {
    detail::check_same_shape(est, ref);
    double err = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.data.size(); ++i) {
        err += std::norm(est.data[i] - ref.data[i]);
        den += std::norm(ref.data[i]);
    }
    if (den == 0.0) throw ConfigError("nmse_db: reference is identically zero");
    return detail::nmse_db_from_sums(err, den);
}

// Mean over frames of SSIM between magnitude images, both normalized by the
// reference series' maximum magnitude (dynamic range 1 after normalization).
inline double ssim(const ImageSeries& est, const ImageSeries& ref) {
    detail::check_same_shape(est, ref);
    double ref_max = 0.0;
    for (const cd& v : ref.data) ref_max = std::max(ref_max, std::abs(v));
    if (ref_max == 0.0) throw ConfigError("ssim: reference is identically zero");

    const std::size_t fs = ref.frame_size();
    std::vector<double> a(fs), b(fs);
    double total = 0.0;
    for (int t = 0; t < ref.frames; ++t) {
        const auto fe = est.frame(t), fr = ref.frame(t);
        for (std::size_t i = 0; i < fs; ++i) {
            a[i] = std::abs(fe[i]) / ref_max;
            b[i] = std::abs(fr[i]) / ref_max;
        }
        total += detail::ssim_frame(a, b, ref.height, ref.width, 1.0);
    }
    return total / ref.frames;
}

inline MetricReport evaluate(const ImageSeries& est, const ImageSeries& ref) {
    detail::check_same_shape(est, ref);
    MetricReport rep;
    rep.nmse_db = nmse_db(est, ref);
    rep.ssim = ssim(est, ref);

    double ref_max = 0.0;
    for (const cd& v : ref.data) ref_max = std::max(ref_max, std::abs(v));
    const std::size_t fs = ref.frame_size();
    std::vector<double> a(fs), b(fs);
    for (int t = 0; t < ref.frames; ++t) {
        const auto fe = est.frame(t), fr = ref.frame(t);
        double err = 0.0, den = 0.0;
        for (std::size_t i = 0; i < fs; ++i) {
            err += std::norm(fe[i] - fr[i]);
            den += std::norm(fr[i]);
            a[i] = std::abs(fe[i]) / ref_max;
            b[i] = std::abs(fr[i]) / ref_max;
        }
        rep.per_frame.emplace_back(
            detail::nmse_db_from_sums(err, den),
            detail::ssim_frame(a, b, ref.height, ref.width, 1.0));
    }
    return rep;
}

}  // namespace discus::metrics
