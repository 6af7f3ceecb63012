#pragma once

#include "discus/core.hpp"
#include "discus/data_model.hpp"
#include "discus/fft.hpp"

namespace discus::mri {

// Per-frame forward model A_t: coil weighting, centered orthonormal 2D DFT,
// then Cartesian line selection. With normalized coils and a binary mask,
// ||A_t^H A_t||_2 <= 1.
class FrameOperator {
public:
    FrameOperator(const SensMaps& sens, std::span<const std::uint8_t> mask_lines)
        : sens_(&sens), mask_(mask_lines.begin(), mask_lines.end()) {
        if (mask_.size() != static_cast<std::size_t>(sens.height))
            throw ConfigError("FrameOperator: mask length must equal image height");
    }

    int coils() const { return sens_->coils; }
    int height() const { return sens_->height; }
    int width() const { return sens_->width; }
    bool line_on(int y) const { return mask_[y] != 0; }

    // y_c = M (.) F(S_c (.) x); unsampled rows are exact zeros.
    void forward(std::span<const cd> x, std::span<cd> y) const {
        const int h = height(), w = width(), nc = coils();
        const std::size_t npix = static_cast<std::size_t>(h) * w;
        if (x.size() != npix || y.size() != npix * nc)
            throw ConfigError("FrameOperator::forward: shape mismatch");
        thread_local std::vector<cd> weighted, k;
        weighted.resize(npix);
        k.resize(npix);
        for (int c = 0; c < nc; ++c) {
            const auto s = sens_->map(c);
            for (std::size_t p = 0; p < npix; ++p) weighted[p] = s[p] * x[p];
            fft::fft2c(weighted, k, h, w);
            cd* yc = y.data() + static_cast<std::size_t>(c) * npix;
            for (int yy = 0; yy < h; ++yy) {
                const bool on = line_on(yy);
                for (int xx = 0; xx < w; ++xx)
                    yc[static_cast<std::size_t>(yy) * w + xx] =
                        on ? k[static_cast<std::size_t>(yy) * w + xx] : cd(0.0, 0.0);
            }
        }
    }

    // x = sum_c conj(S_c) (.) F^-1(M (.) y_c)
    void adjoint(std::span<const cd> y, std::span<cd> x) const {
        const int h = height(), w = width(), nc = coils();
        const std::size_t npix = static_cast<std::size_t>(h) * w;
        if (y.size() != npix * nc || x.size() != npix)
            throw ConfigError("FrameOperator::adjoint: shape mismatch");
        thread_local std::vector<cd> masked, img;
        masked.resize(npix);
        img.resize(npix);
        std::fill(x.begin(), x.end(), cd(0.0, 0.0));
        for (int c = 0; c < nc; ++c) {
            const cd* yc = y.data() + static_cast<std::size_t>(c) * npix;
            for (int yy = 0; yy < h; ++yy) {
                const bool on = line_on(yy);
                for (int xx = 0; xx < w; ++xx)
                    masked[static_cast<std::size_t>(yy) * w + xx] =
                        on ? yc[static_cast<std::size_t>(yy) * w + xx] : cd(0.0, 0.0);
            }
            fft::ifft2c(masked, img, h, w);
            const auto s = sens_->map(c);
            for (std::size_t p = 0; p < npix; ++p) x[p] += std::conj(s[p]) * img[p];
        }
    }

private:
    const SensMaps* sens_;
    std::vector<std::uint8_t> mask_;
};

inline FrameOperator frame_operator(const KSpaceDataset& data, int t) {
    return FrameOperator(data.sens, data.mask.frame(t));
}

// Full-mask operator (every phase-encode line on), used for coil combination
// of fully sampled data.
inline FrameOperator full_operator(const SensMaps& sens) {
    static thread_local std::vector<std::uint8_t> ones;
    ones.assign(sens.height, 1);
    return FrameOperator(sens, ones);
}

// A_t applied to a whole series, frame by frame.
inline KSpaceDataset simulate_kspace(const ImageSeries& truth, MaskSeries mask,
                                     SensMaps sens) {
    truth.validate();
    KSpaceDataset out(truth.frames, sens.coils, truth.height, truth.width,
                      std::move(mask), std::move(sens));
    for (int t = 0; t < truth.frames; ++t) {
        FrameOperator op(out.sens, out.mask.frame(t));
        op.forward(truth.frame(t), out.frame(t));
    }
    out.validate();
    return out;
}

// Adds i.i.d. complex Gaussian noise on the sampled entries only, with
// variance sigma^2 = P_sig * 10^(-snr_db/10) where P_sig is the mean |y|^2
// over sampled entries. Noise draws follow the documented Rng stream in
// (t, c, y, x) order over sampled positions.
inline KSpaceDataset add_noise(const KSpaceDataset& data, double snr_db,
                               std::uint64_t seed) {
    double psig = 0.0;
    std::size_t count = 0;
    for (int t = 0; t < data.frames; ++t)
        for (int c = 0; c < data.coils; ++c)
            for (int y = 0; y < data.height; ++y) {
                if (!data.mask.at(t, y)) continue;
                for (int x = 0; x < data.width; ++x) {
                    psig += std::norm(data.at(t, c, y, x));
                    ++count;
                }
            }
    if (count == 0) throw ConfigError("add_noise: no sampled entries");
    psig /= static_cast<double>(count);

    const double sigma = std::sqrt(psig * std::pow(10.0, -snr_db / 10.0));
    const double s = sigma / std::sqrt(2.0);
    KSpaceDataset out = data;
    Rng rng(seed);
    for (int t = 0; t < out.frames; ++t)
        for (int c = 0; c < out.coils; ++c)
            for (int y = 0; y < out.height; ++y) {
                if (!out.mask.at(t, y)) continue;
                for (int x = 0; x < out.width; ++x)
                    out.at(t, c, y, x) += cd(s * rng.normal(), s * rng.normal());
            }
    out.snr_db = snr_db;
    out.seed = static_cast<std::int64_t>(seed);
    return out;
}

// Power-method estimate of ||A^H A||_2 via the Rayleigh quotient
// ||A x_k||^2 / ||x_k||^2, which converges at twice the rate of the plain
// norm ratio. Deterministic: the start vector comes from a fixed internal seed.
inline double lipschitz_estimate(const FrameOperator& op, int iters) {
    if (iters < 10) throw ConfigError("lipschitz_estimate: iters must be >= 10");
    const std::size_t npix = static_cast<std::size_t>(op.height()) * op.width();
    std::vector<cd> x(npix), y(npix * op.coils()), z(npix);
    Rng rng(0x5eed);
    for (auto& v : x) v = cd(rng.normal(), rng.normal());

    double est = 0.0;
    for (int it = 0; it < iters; ++it) {
        const double nx = std::sqrt(norm_sq(std::span<const cd>(x)));
        if (nx == 0.0) return 0.0;
        for (auto& v : x) v /= nx;
        op.forward(x, y);
        est = norm_sq(std::span<const cd>(y));  // x^H A^H A x with ||x|| = 1
        op.adjoint(y, z);
        x.swap(z);
    }
    return est;
}

}  // namespace discus::mri
