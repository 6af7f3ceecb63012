#pragma once

#include <numeric>

#include "discus/core.hpp"
#include "discus/data_model.hpp"

namespace discus::sampling {

// Parameters shared by both Cartesian mask generators.
struct MaskParams {
    int n_pe = 0;               // phase-encode line count (image height)
    int frames = 0;             // T
    double acceleration = 1.0;  // R > 1
    int acs = 4;                // always-sampled center lines
    std::uint64_t seed = 0;     // random variant only
    double density_power = 1.5; // center weighting exponent
};

namespace detail {

inline int lines_per_frame(const MaskParams& p) {
    return static_cast<int>(std::lround(p.n_pe / p.acceleration));
}

inline void check_params(const MaskParams& p) {
    if (p.n_pe < 8) throw ConfigError("MaskParams: n_pe must be >= 8");
    if (p.frames < 1) throw ConfigError("MaskParams: frame count must be >= 1");
    if (p.acceleration <= 1.0) throw ConfigError("MaskParams: acceleration must be > 1");
    if (p.acs < 0) throw ConfigError("MaskParams: acs must be >= 0");
    if (p.density_power < 0) throw ConfigError("MaskParams: density_power must be >= 0");
    if (lines_per_frame(p) < std::max(p.acs, 1))
        throw ConfigError("MaskParams: round(n_pe/R) must cover the ACS block");
}

inline int center_line(int n_pe) { return n_pe / 2; }

// First line of the always-on ACS block.
inline int acs_start(int n_pe, int acs) { return center_line(n_pe) - acs / 2; }

inline bool in_acs(int pe, int n_pe, int acs) {
    const int s = acs_start(n_pe, acs);
    return pe >= s && pe < s + acs;
}

// Center-weighted line density (1 - |k|/k_max)^p with k the signed distance
// from the center line.
inline std::vector<double> line_density(int n_pe, double power) {
    const int c = center_line(n_pe);
    const int kmax = std::max(c, n_pe - 1 - c);
    std::vector<double> d(n_pe);
    for (int pe = 0; pe < n_pe; ++pe)
        d[pe] = std::pow(1.0 - static_cast<double>(std::abs(pe - c)) / kmax, power);
    return d;
}

}  // namespace detail

// Seeded variable-density random mask: per frame the ACS block is on and the
// remaining lines are drawn without replacement with probability proportional
// to the center-weighted density, independently across frames.
inline MaskSeries vd_random_mask(const MaskParams& p) {
    detail::check_params(p);
    const int target = detail::lines_per_frame(p);
    MaskSeries m(p.frames, p.n_pe, p.acceleration);
    const auto density = detail::line_density(p.n_pe, p.density_power);
    Rng rng(p.seed);
    for (int t = 0; t < p.frames; ++t) {
        std::vector<double> weight = density;
        for (int pe = 0; pe < p.n_pe; ++pe)
            if (detail::in_acs(pe, p.n_pe, p.acs)) {
                m.at(t, pe) = 1;
                weight[pe] = 0.0;
            }
        for (int drawn = p.acs; drawn < target; ++drawn) {
            double total = std::accumulate(weight.begin(), weight.end(), 0.0);
            if (total <= 0.0) throw ConfigError("vd_random_mask: infeasible parameters");
            double u = rng.uniform() * total;
            int pick = -1;
            for (int pe = 0; pe < p.n_pe; ++pe) {
                u -= weight[pe];
                if (u < 0.0) {
                    pick = pe;
                    break;
                }
            }
            if (pick < 0) {  // guard against accumulated rounding at u ~ total
                for (int pe = p.n_pe - 1; pe >= 0; --pe)
                    if (weight[pe] > 0.0) {
                        pick = pe;
                        break;
                    }
            }
            m.at(t, pick) = 1;
            weight[pick] = 0.0;
        }
    }
    m.validate();
    return m;
}

// Deterministic golden-ratio-offset mask. One golden sequence is threaded
// across the whole series: frame t's j-th candidate position is
// u = frac((t*n + j) * phi) with phi = (sqrt(5)-1)/2 and n the per-frame line
// budget, mapped through the inverse CDF of the center-weighted density;
// collisions resolve to the nearest unused line with ties toward the center.
// The ACS block is always on and every frame has exactly round(n_pe/R)
// distinct lines. Successive frames are offset by frac(n*phi), so patterns
// never repeat within any practical series length.
//
// Two details differ from the naive construction on purpose. A per-frame
// restart of the form frac((j + t*phi)*phi) collapses to frac((j - t)*phi)
// because phi^2 = 1 - phi, leaving only ~n+T distinct positions over the whole
// series; threading one sequence avoids that. And the density blends a uniform
// floor (weight 1/3) into the center weighting: a pure (1-|k|/k_max)^p density
// gives edge lines a CDF interval far below the golden-sequence gap size, so
// they would never be reached; the floor keeps every line reachable while the
// pattern stays center-dense.
inline MaskSeries gro_mask(const MaskParams& p) {
    detail::check_params(p);
    const int target = detail::lines_per_frame(p);
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    MaskSeries m(p.frames, p.n_pe, p.acceleration);

    auto density = detail::line_density(p.n_pe, p.density_power);
    for (double& d : density) d = (1.0 + 2.0 * d) / 3.0;
    std::vector<double> cdf(p.n_pe);
    std::partial_sum(density.begin(), density.end(), cdf.begin());
    const double total = cdf.back();
    if (total <= 0.0) throw ConfigError("gro_mask: degenerate line density");

    const int center = detail::center_line(p.n_pe);
    for (int t = 0; t < p.frames; ++t) {
        for (int pe = 0; pe < p.n_pe; ++pe)
            if (detail::in_acs(pe, p.n_pe, p.acs)) m.at(t, pe) = 1;

        int on = p.acs;
        for (int j = 0; on < target; ++j) {
            const double u = std::fmod((static_cast<double>(t) * target + j) * phi, 1.0);
            const double level = u * total;
            int cand = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), level) -
                                        cdf.begin());
            cand = std::min(cand, p.n_pe - 1);
            if (m.at(t, cand)) {
                // nearest unused line, ties toward the center
                int best = -1;
                for (int d = 1; d < p.n_pe; ++d) {
                    const int lo = cand - d, hi = cand + d;
                    const bool lo_ok = lo >= 0 && !m.at(t, lo);
                    const bool hi_ok = hi < p.n_pe && !m.at(t, hi);
                    if (lo_ok && hi_ok)
                        best = std::abs(lo - center) <= std::abs(hi - center) ? lo : hi;
                    else if (lo_ok)
                        best = lo;
                    else if (hi_ok)
                        best = hi;
                    if (best >= 0) break;
                }
                if (best < 0) throw ConfigError("gro_mask: infeasible parameters");
                cand = best;
            }
            m.at(t, cand) = 1;
            ++on;
        }
    }
    m.validate();
    return m;
}

}  // namespace discus::sampling
