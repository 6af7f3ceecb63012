#pragma once

#include "discus/core.hpp"
#include "discus/data_model.hpp"

namespace discus::phantom {

// One ellipse of the analytic head phantom: additive intensity, semi-axes,
// center and tilt in the [-1, 1]^2 phantom coordinate frame.
struct Ellipse {
    double intensity, a, b, x0, y0, phi_deg;
};

// The standard ten-ellipse Shepp-Logan parameter table (Shepp & Logan 1974,
// as tabulated in the classic head-phantom references). The summed image
// already lies in [0, 1], so no rescaling is applied.
inline const std::vector<Ellipse>& shepp_logan_table() {
    static const std::vector<Ellipse> table = {
        {1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
        {-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
        {-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
        {-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
        {0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
        {0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
        {0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
        {0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
        {0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
        {0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
    };
    return table;
}

// Sum of ellipse intensities at a point of the [-1, 1]^2 phantom frame.
inline double ellipse_sum(double x, double y) {
    double v = 0.0;
    for (const Ellipse& e : shepp_logan_table()) {
        const double phi = e.phi_deg * kPi / 180.0;
        const double c = std::cos(phi), s = std::sin(phi);
        const double dx = x - e.x0, dy = y - e.y0;
        const double xr = c * dx + s * dy;
        const double yr = -s * dx + c * dy;
        if (sq(xr / e.a) + sq(yr / e.b) <= 1.0) v += e.intensity;
    }
    return v;
}

// Rasterizes the phantom onto a size x size grid. Pixel (iy, ix) samples the
// phantom frame at x = (ix - (W-1)/2) / ((W-1)/2), y = ((H-1)/2 - iy) / ((H-1)/2)
// (y axis points up). Real-valued output, T = 1.
inline ImageSeries shepp_logan(int size) {
    if (size < 16) throw ConfigError("shepp_logan: size must be >= 16");
    ImageSeries img(1, size, size);
    const double half = (size - 1) / 2.0;
    for (int iy = 0; iy < size; ++iy) {
        const double y = (half - iy) / half;
        for (int ix = 0; ix < size; ++ix) {
            const double x = (ix - half) / half;
            img.at(0, iy, ix) = cd(ellipse_sum(x, y), 0.0);
        }
    }
    return img;
}

// Rotates a frame about the pixel center ((H-1)/2, (W-1)/2) by angle_deg
// (counterclockwise with the y axis pointing up, i.e. clockwise in row
// coordinates), then translates by (dx, dy) pixels. Bilinear interpolation,
// zero outside the source grid.
inline std::vector<cd> apply_rigid(std::span<const cd> frame, int h, int w,
                                   double angle_deg, double dx, double dy) {
    if (!std::isfinite(angle_deg) || !std::isfinite(dx) || !std::isfinite(dy))
        throw ConfigError("apply_rigid: non-finite transform parameters");
    if (frame.size() != static_cast<std::size_t>(h) * w)
        throw ConfigError("apply_rigid: frame size mismatch");

    std::vector<cd> out(frame.size());
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double th = angle_deg * kPi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
            // inverse map: undo translation, then rotate by -angle about center
            const double px = ix - dx - cx;
            const double py = iy - dy - cy;
            const double sx = c * px - s * py + cx;
            const double sy = s * px + c * py + cy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            cd v(0.0, 0.0);
            for (int oy = 0; oy <= 1; ++oy) {
                for (int ox = 0; ox <= 1; ++ox) {
                    const int xx = x0 + ox, yy = y0 + oy;
                    if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
                    const double wgt = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
                    if (wgt != 0.0)
                        v += frame[static_cast<std::size_t>(yy) * w + xx] * wgt;
                }
            }
            out[static_cast<std::size_t>(iy) * w + ix] = v;
        }
    }
    return out;
}

// Motion ranges for a simulated series: rotation within +-rotation_deg_max
// and horizontal translation within +-shift_px_max, both uniform.
struct MotionSpec {
    double rotation_deg_max = 0.0;
    double shift_px_max = 0.0;
    std::uint64_t seed = 0;
};

struct MotionParams {
    double angle_deg, dx;
};

// The documented draw stream behind make_motion_series: one Rng seeded with
// spec.seed, then per frame (in order) one uniform for the angle followed by
// one uniform for the horizontal shift. Exposed so replays can be tested.
inline std::vector<MotionParams> draw_motion_params(int t, const MotionSpec& spec) {
    if (spec.rotation_deg_max < 0 || spec.shift_px_max < 0)
        throw ConfigError("MotionSpec: maxima must be >= 0");
    Rng rng(spec.seed);
    std::vector<MotionParams> params(t);
    for (int i = 0; i < t; ++i) {
        params[i].angle_deg = rng.uniform(-spec.rotation_deg_max, spec.rotation_deg_max);
        params[i].dx = rng.uniform(-spec.shift_px_max, spec.shift_px_max);
    }
    return params;
}

// Every frame, including the first, applies an independent draw relative to
// the base image.
inline ImageSeries make_motion_series(const ImageSeries& base, int t,
                                      const MotionSpec& spec) {
    if (t < 1) throw ConfigError("make_motion_series: T must be >= 1");
    if (base.frames != 1) throw ConfigError("make_motion_series: base must be a single frame");
    const auto params = draw_motion_params(t, spec);
    ImageSeries out(t, base.height, base.width);
    for (int i = 0; i < t; ++i) {
        const auto f = apply_rigid(base.frame(0), base.height, base.width,
                                   params[i].angle_deg, params[i].dx, 0.0);
        std::copy(f.begin(), f.end(), out.frame(i).begin());
    }
    return out;
}

// Anchor of coil c on the circle used by synth_coil_maps (exposed for tests).
inline std::pair<double, double> coil_anchor(int c, int n_coils, int h, int w) {
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double radius = 0.45 * std::min(h, w);
    const double ang = 2.0 * kPi * c / n_coils;
    return {cy - radius * std::sin(ang), cx + radius * std::cos(ang)};
}

// Synthetic sensitivities with one smooth magnitude lobe per coil, peaked at
// n_coils anchors equally spaced on a circle inside the FOV, plus a per-coil
// linear phase ramp (coil 0 is the phase reference with zero phase).
//
// Squared magnitudes are built as  floor + radial_gaussian(rho) * (1 + cos(theta
// - theta_c)); the angular factors sum to a constant over coils, so the
// pixel-wise normalization sum_c |S_c|^2 = 1 is a pure angle-independent
// rescale and each coil's normalized peak stays exactly at its anchor. A
// naive isotropic-Gaussian lobe would not survive normalization: its
// normalized argmax migrates to the image boundary.
inline SensMaps synth_coil_maps(int n_coils, int h, int w) {
    if (n_coils < 1) throw ConfigError("synth_coil_maps: need at least one coil");
    SensMaps maps(n_coils, h, w);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double radius = 0.45 * std::min(h, w);
    const double sigma_r = 0.25 * radius;  // radial width of the lobe shell
    const double floor_sq = 0.1;           // keeps magnitudes nonzero everywhere
    for (int c = 0; c < n_coils; ++c) {
        const double ang = 2.0 * kPi * c / n_coils;
        const double phase_scale = kPi * static_cast<double>(c) / n_coils;
        for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
                const double py = cy - iy, px = ix - cx;  // y axis up
                const double rho = std::sqrt(px * px + py * py);
                const double theta = std::atan2(py, px);
                const double shell = std::exp(-0.5 * sq((rho - radius) / sigma_r));
                const double mag_sq = floor_sq + shell * (1.0 + std::cos(theta - ang));
                const double phase = phase_scale * (std::cos(ang) * px / w +
                                                    std::sin(ang) * py / h);
                maps.at(c, iy, ix) = std::polar(std::sqrt(mag_sq), phase);
            }
        }
    }
    for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
            double ssq = 0.0;
            for (int c = 0; c < n_coils; ++c) ssq += std::norm(maps.at(c, iy, ix));
            const double inv = 1.0 / std::sqrt(ssq);
            for (int c = 0; c < n_coils; ++c) maps.at(c, iy, ix) *= inv;
        }
    }
    return maps;
}

}  // namespace discus::phantom
