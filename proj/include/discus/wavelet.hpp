#pragma once

#include "discus/core.hpp"

namespace discus::wavelet {

// Orthonormal Daubechies-4 (four-tap) DWT with periodic boundary, applied
// separably in 2D. The multi-level layout is the usual Mallat arrangement:
// after each level the low-low band occupies the top-left quadrant and is the
// input of the next level. The transform is unitary, so it preserves l2 norm
// and inverts exactly.

namespace detail {

// Analysis low-pass taps; high-pass is the quadrature mirror g[m] = (-1)^m h[3-m].
inline constexpr double kH[4] = {
    0.48296291314469025,  // (1 + sqrt(3)) / (4 sqrt(2))
    0.83651630373746899,  // (3 + sqrt(3)) / (4 sqrt(2))
    0.22414386804185735,  // (3 - sqrt(3)) / (4 sqrt(2))
    -0.12940952255092145, // (1 - sqrt(3)) / (4 sqrt(2))
};

inline constexpr double kG[4] = {kH[3], -kH[2], kH[1], -kH[0]};

// One periodic analysis step along a strided 1D signal of even length n:
// first n/2 outputs are approximation, last n/2 detail. Output is contiguous.
inline void analyze_1d(const cd* in, int in_stride, cd* out, int n) {
    const int half = n / 2;
    for (int k = 0; k < half; ++k) {
        cd lo(0.0, 0.0), hi(0.0, 0.0);
        for (int m = 0; m < 4; ++m) {
            const cd v = in[((2 * k + m) % n) * in_stride];
            lo += kH[m] * v;
            hi += kG[m] * v;
        }
        out[k] = lo;
        out[half + k] = hi;
    }
}

// Exact transpose of analyze_1d (synthesis). Output is contiguous.
inline void synthesize_1d(const cd* in, int in_stride, cd* out, int n) {
    const int half = n / 2;
    for (int i = 0; i < n; ++i) out[i] = cd(0.0, 0.0);
    for (int k = 0; k < half; ++k) {
        const cd lo = in[k * in_stride];
        const cd hi = in[(half + k) * in_stride];
        for (int m = 0; m < 4; ++m) {
            const int idx = (2 * k + m) % n;
            out[idx] += kH[m] * lo + kG[m] * hi;
        }
    }
}

}  // namespace detail

inline void check_dims(int h, int w, int levels) {
    if (levels < 1) throw ConfigError("wavelet: levels must be >= 1");
    const int div = 1 << levels;
    if (h % div != 0 || w % div != 0 || h / div < 1 || w / div < 1)
        throw ConfigError("wavelet: H and W must be divisible by 2^levels");
}

// In-place multi-level 2D analysis of an h x w grid.
inline void forward(std::span<cd> img, int h, int w, int levels) {
    check_dims(h, w, levels);
    thread_local std::vector<cd> tmp;
    tmp.resize(std::max(h, w));
    int ch = h, cw = w;
    for (int lvl = 0; lvl < levels; ++lvl) {
        for (int y = 0; y < ch; ++y) {
            detail::analyze_1d(img.data() + static_cast<std::size_t>(y) * w, 1, tmp.data(), cw);
            std::copy_n(tmp.data(), cw, img.data() + static_cast<std::size_t>(y) * w);
        }
        for (int x = 0; x < cw; ++x) {
            detail::analyze_1d(img.data() + x, w, tmp.data(), ch);
            for (int y = 0; y < ch; ++y)
                img[static_cast<std::size_t>(y) * w + x] = tmp[y];
        }
        ch /= 2;
        cw /= 2;
    }
}

// In-place multi-level 2D synthesis; exact inverse of forward.
inline void inverse(std::span<cd> img, int h, int w, int levels) {
    check_dims(h, w, levels);
    thread_local std::vector<cd> tmp;
    tmp.resize(std::max(h, w));
    for (int lvl = levels - 1; lvl >= 0; --lvl) {
        const int ch = h >> lvl, cw = w >> lvl;
        for (int x = 0; x < cw; ++x) {
            detail::synthesize_1d(img.data() + x, w, tmp.data(), ch);
            for (int y = 0; y < ch; ++y)
                img[static_cast<std::size_t>(y) * w + x] = tmp[y];
        }
        for (int y = 0; y < ch; ++y) {
            detail::synthesize_1d(img.data() + static_cast<std::size_t>(y) * w, 1, tmp.data(), cw);
            std::copy_n(tmp.data(), cw, img.data() + static_cast<std::size_t>(y) * w);
        }
    }
}

// True for coefficients of the final approximation (low-low) band, which the
// l1 penalty leaves untouched.
inline bool in_approx_band(int y, int x, int h, int w, int levels) {
    return y < (h >> levels) && x < (w >> levels);
}

// l1 norm of the detail coefficients of an analyzed grid.
inline double detail_l1(std::span<const cd> coef, int h, int w, int levels) {
    double s = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (!in_approx_band(y, x, h, w, levels))
                s += std::abs(coef[static_cast<std::size_t>(y) * w + x]);
    return s;
}

}  // namespace discus::wavelet
