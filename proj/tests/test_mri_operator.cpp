#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "discus/mri_operator.hpp"
#include "discus/phantom.hpp"
#include "discus/sampling.hpp"

using namespace discus;
using namespace discus::mri;

namespace {

std::vector<cd> random_vec(std::size_t n, Rng& rng) {
    std::vector<cd> v(n);
    for (auto& x : v) x = cd(rng.normal(), rng.normal());
    return v;
}

cd dot(std::span<const cd> a, std::span<const cd> b) {
    cd s(0.0, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

// Dense matrix of the forward model assembled from first principles: for even
// n the centered orthonormal DFT kernel is exp(-2*pi*i*(k - n/2)(j - n/2)/n)/sqrt(n)
// per dimension, composed with coil weighting and line selection.
Eigen::MatrixXcd dense_forward(const SensMaps& sens,
                               const std::vector<std::uint8_t>& mask_lines) {
    const int h = sens.height, w = sens.width, nc = sens.coils;
    const int npix = h * w;
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nc) * npix, npix);
    for (int c = 0; c < nc; ++c)
        for (int ky = 0; ky < h; ++ky) {
            if (!mask_lines[ky]) continue;
            for (int kx = 0; kx < w; ++kx)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const double phase =
                            -2.0 * kPi *
                            ((ky - h / 2) * (y - h / 2) / static_cast<double>(h) +
                             (kx - w / 2) * (x - w / 2) / static_cast<double>(w));
                        const cd kernel = std::polar(1.0 / std::sqrt(static_cast<double>(npix)),
                                                     phase);
                        a(static_cast<Eigen::Index>(c) * npix + ky * w + kx,
                          y * w + x) = kernel * sens.at(c, y, x);
                    }
        }
    return a;
}

SensMaps unit_coil(int h, int w) {
    SensMaps s(1, h, w);
    std::fill(s.data.begin(), s.data.end(), cd(1.0, 0.0));
    return s;
}

}  // namespace

TEST_CASE("forward of a centered impulse is flat") {
    const int n = 16;
    const SensMaps sens = unit_coil(n, n);
    const std::vector<std::uint8_t> full(n, 1);
    FrameOperator op(sens, full);

    std::vector<cd> x(n * n, cd(0.0, 0.0));
    x[(n / 2) * n + n / 2] = cd(1.0, 0.0);
    std::vector<cd> y(n * n);
    op.forward(x, y);
    for (const cd& v : y) {
        REQUIRE(std::abs(v) == Catch::Approx(1.0 / n).margin(1e-12));
        REQUIRE(v.imag() == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("forward and adjoint of zero are zero") {
    const SensMaps sens = phantom::synth_coil_maps(3, 16, 16);
    std::vector<std::uint8_t> lines(16, 0);
    for (int i = 0; i < 16; i += 2) lines[i] = 1;
    FrameOperator op(sens, lines);

    std::vector<cd> x(256, cd(0.0, 0.0)), y(3 * 256, cd(0.0, 0.0));
    op.forward(x, y);
    for (const cd& v : y) REQUIRE(v == cd(0.0, 0.0));
    op.adjoint(y, x);
    for (const cd& v : x) REQUIRE(v == cd(0.0, 0.0));
}

TEST_CASE("forward matches the dense operator matrix") {
    const int h = 8, w = 8;
    const SensMaps sens = phantom::synth_coil_maps(2, h, w);
    std::vector<std::uint8_t> lines = {1, 0, 1, 1, 0, 1, 1, 0};
    FrameOperator op(sens, lines);
    const Eigen::MatrixXcd a = dense_forward(sens, lines);

    Rng rng(21);
    const auto x = random_vec(h * w, rng);
    std::vector<cd> y(2 * h * w);
    op.forward(x, y);

    Eigen::Map<const Eigen::VectorXcd> xv(x.data(), h * w);
    const Eigen::VectorXcd yd = a * xv;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < yd.size(); ++i) {
        num += std::norm(y[i] - yd[i]);
        den += std::norm(yd[i]);
    }
    REQUIRE(std::sqrt(num / den) < 1e-10);
}

TEST_CASE("unitary case: adjoint(forward(x)) = x") {
    const int n = 32;
    const SensMaps sens = unit_coil(n, n);
    const std::vector<std::uint8_t> full(n, 1);
    FrameOperator op(sens, full);

    Rng rng(5);
    const auto x = random_vec(n * n, rng);
    std::vector<cd> y(n * n), back(n * n);
    op.forward(x, y);
    op.adjoint(y, back);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += std::norm(back[i] - x[i]);
        den += std::norm(x[i]);
    }
    REQUIRE(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("adjoint dot-product identity over random pairs") {
    const int h = 16, w = 16, nc = 4;
    const SensMaps sens = phantom::synth_coil_maps(nc, h, w);
    sampling::MaskParams p;
    p.n_pe = h;
    p.frames = 1;
    p.acceleration = 2.0;
    p.acs = 2;
    p.seed = 13;
    const MaskSeries mask = sampling::vd_random_mask(p);
    FrameOperator op(sens, mask.frame(0));

    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_vec(h * w, rng);
        const auto y = random_vec(static_cast<std::size_t>(nc) * h * w, rng);
        std::vector<cd> ax(static_cast<std::size_t>(nc) * h * w), aty(h * w);
        op.forward(x, ax);
        op.adjoint(y, aty);
        const cd lhs = dot(ax, y);
        const cd rhs = dot(x, aty);
        REQUIRE(std::abs(lhs - rhs) / std::abs(rhs) < 1e-6);
    }
}

TEST_CASE("forward is linear to machine precision") {
    const int h = 8, w = 8;
    const SensMaps sens = phantom::synth_coil_maps(2, h, w);
    std::vector<std::uint8_t> lines = {1, 1, 0, 1, 0, 1, 1, 1};
    FrameOperator op(sens, lines);

    Rng rng(3);
    const auto x1 = random_vec(h * w, rng);
    const auto x2 = random_vec(h * w, rng);
    const cd alpha(0.7, -0.3), beta(-1.2, 0.4);
    std::vector<cd> mix(h * w);
    for (int i = 0; i < h * w; ++i) mix[i] = alpha * x1[i] + beta * x2[i];

    std::vector<cd> y1(2 * h * w), y2(2 * h * w), ym(2 * h * w);
    op.forward(x1, y1);
    op.forward(x2, y2);
    op.forward(mix, ym);
    for (int i = 0; i < 2 * h * w; ++i)
        REQUIRE(std::abs(ym[i] - (alpha * y1[i] + beta * y2[i])) < 1e-12);
}

TEST_CASE("noise injection hits the requested SNR") {
    const int t = 32, h = 128, w = 128, nc = 4;
    const SensMaps sens = phantom::synth_coil_maps(nc, h, w);
    sampling::MaskParams p;
    p.n_pe = h;
    p.frames = t;
    p.acceleration = 2.0;
    p.acs = 4;
    p.seed = 17;
    const MaskSeries mask = sampling::vd_random_mask(p);

    KSpaceDataset data(t, nc, h, w, mask, sens);
    Rng rng(1);
    for (int tt = 0; tt < t; ++tt)
        for (int c = 0; c < nc; ++c)
            for (int y = 0; y < h; ++y) {
                if (!mask.at(tt, y)) continue;
                for (int x = 0; x < w; ++x)
                    data.at(tt, c, y, x) = cd(rng.normal(), rng.normal());
            }

    const double snr_req = 25.0;
    const KSpaceDataset noisy = add_noise(data, snr_req, 42);

    double psig = 0.0, pnoise = 0.0;
    std::size_t count = 0;
    for (int tt = 0; tt < t; ++tt)
        for (int c = 0; c < nc; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (mask.at(tt, y)) {
                        psig += std::norm(data.at(tt, c, y, x));
                        pnoise += std::norm(noisy.at(tt, c, y, x) - data.at(tt, c, y, x));
                        ++count;
                    } else {
                        REQUIRE(noisy.at(tt, c, y, x) == cd(0.0, 0.0));
                    }
                }
    REQUIRE(count >= 1000000);  // enough samples for a tight estimate
    const double snr_emp = 10.0 * std::log10(psig / pnoise);
    REQUIRE(snr_emp == Catch::Approx(snr_req).margin(0.1));
    REQUIRE(noisy.snr_db == snr_req);
    REQUIRE_NOTHROW(noisy.validate());
}

TEST_CASE("lipschitz estimate") {
    SECTION("unitary operator has norm 1") {
        const SensMaps sens = unit_coil(16, 16);
        const std::vector<std::uint8_t> full(16, 1);
        FrameOperator op(sens, full);
        REQUIRE(lipschitz_estimate(op, 20) == Catch::Approx(1.0).margin(1e-6));
    }

    SECTION("masked operators stay within (0, 1]") {
        const SensMaps sens = phantom::synth_coil_maps(4, 24, 24);
        sampling::MaskParams p;
        p.n_pe = 24;
        p.frames = 3;
        p.acceleration = 3.0;
        p.acs = 2;
        p.seed = 23;
        const MaskSeries mask = sampling::vd_random_mask(p);
        for (int t = 0; t < 3; ++t) {
            FrameOperator op(sens, mask.frame(t));
            const double est = lipschitz_estimate(op, 30);
            REQUIRE(est > 0.0);
            REQUIRE(est <= 1.0 + 1e-6);
        }
    }

    SECTION("matches a dense eigendecomposition on 8x8") {
        const int h = 8, w = 8;
        const SensMaps sens = phantom::synth_coil_maps(2, h, w);
        std::vector<std::uint8_t> lines = {0, 1, 1, 0, 1, 1, 1, 0};
        FrameOperator op(sens, lines);
        const Eigen::MatrixXcd a = dense_forward(sens, lines);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(a.adjoint() * a);
        const double truth = eig.eigenvalues().maxCoeff();
        const double est = lipschitz_estimate(op, 20000);
        REQUIRE(std::abs(est - truth) / truth < 1e-6);
    }
}
