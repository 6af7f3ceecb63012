#pragma once

#include <map>
#include <mutex>
#include <tuple>

#include <fftw3.h>

#include "discus/core.hpp"

namespace discus::fft {

// Centered orthonormal 2D DFT used by every operator in this project:
//
//   fft2c  = fftshift o FFT o ifftshift, scaled by 1/sqrt(H*W)
//   ifft2c = its inverse (also unitary)
//
// For even H, W this equals the centered kernel
//   X[k] = (1/sqrt(HW)) sum_j x[j] exp(-2*pi*i*(k - c)·(j - c)/n)
// per dimension with c = n/2, which is what the dense-operator tests assert.
//
// FFTW plans are cached per (h, w, direction). Plan creation is serialized
// behind a mutex; fftw_execute_dft on distinct buffers is thread-safe.

namespace detail {

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(int h, int w, int sign) {
        std::lock_guard<std::mutex> lock(mu_);
        const auto key = std::make_tuple(h, w, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<cd> in(static_cast<std::size_t>(h) * w);
        std::vector<cd> out(in.size());
        // FFTW_UNALIGNED lets the plan execute on any caller buffer.
        fftw_plan p = fftw_plan_dft_2d(
            h, w, reinterpret_cast<fftw_complex*>(in.data()),
            reinterpret_cast<fftw_complex*>(out.data()), sign,
            FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
        if (!p) throw std::runtime_error("fftw plan creation failed");
        plans_.emplace(key, p);
        return p;
    }

private:
    PlanCache() = default;
    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline void shifted_transform(std::span<const cd> in, std::span<cd> out,
                              int h, int w, int sign) {
    const std::size_t n = static_cast<std::size_t>(h) * w;
    if (in.size() != n || out.size() != n)
        throw ConfigError("fft2c: buffer size does not match H*W");

    thread_local std::vector<cd> a, b;
    a.resize(n);
    b.resize(n);

    // ifftshift on input: a[i] = in[(i + floor(n/2)) mod n] per axis
    const int hy = h / 2, hx = w / 2;
    for (int y = 0; y < h; ++y) {
        const int sy = (y + hy) % h;
        for (int x = 0; x < w; ++x)
            a[static_cast<std::size_t>(y) * w + x] =
                in[static_cast<std::size_t>(sy) * w + (x + hx) % w];
    }

    fftw_plan p = PlanCache::instance().get(h, w, sign);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(a.data()),
                     reinterpret_cast<fftw_complex*>(b.data()));

    // fftshift on output: out[k] = b[(k + ceil(n/2)) mod n] per axis
    const int sy2 = (h + 1) / 2, sx2 = (w + 1) / 2;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (int y = 0; y < h; ++y) {
        const int by = (y + sy2) % h;
        for (int x = 0; x < w; ++x)
            out[static_cast<std::size_t>(y) * w + x] =
                b[static_cast<std::size_t>(by) * w + (x + sx2) % w] * scale;
    }
}

}  // namespace detail

inline void fft2c(std::span<const cd> in, std::span<cd> out, int h, int w) {
    detail::shifted_transform(in, out, h, w, FFTW_FORWARD);
}

inline void ifft2c(std::span<const cd> in, std::span<cd> out, int h, int w) {
    detail::shifted_transform(in, out, h, w, FFTW_BACKWARD);
}

}  // namespace discus::fft
