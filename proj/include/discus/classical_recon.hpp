#pragma once

#include <Eigen/Dense>

#include "discus/core.hpp"
#include "discus/data_model.hpp"
#include "discus/mri_operator.hpp"
#include "discus/prox.hpp"
#include "discus/wavelet.hpp"

namespace discus::classical {

// Frame-wise CS: min_x 0.5||A_t x - y_t||^2 + lambda_w * ||Psi_detail x||_1
// with Psi the orthonormal Daubechies-4 DWT (approximation band untouched).
struct CSParams {
    double lambda_w = 1e-3;
    int iters = 150;
    int wavelet_levels = 4;
};

// L+S decomposition: nuclear-norm threshold on the Casorati matrix plus l1
// threshold in the temporal Fourier domain, thresholds absolute (step 1).
struct LSParams {
    double lambda_l = 0.01;
    double lambda_s = 0.001;
    int iters = 50;
};

namespace detail {

// prox of step*lambda*||Psi_detail . ||_1 : analyze, magnitude-threshold the
// detail bands, synthesize
inline void wavelet_shrink(std::span<cd> x, int h, int w, int levels, double tau) {
    wavelet::forward(x, h, w, levels);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            if (!wavelet::in_approx_band(y, xx, h, w, levels)) {
                cd& v = x[static_cast<std::size_t>(y) * w + xx];
                v = prox::soft_threshold(v, tau);
            }
    wavelet::inverse(x, h, w, levels);
}

inline double cs_objective(const mri::FrameOperator& op, std::span<const cd> x,
                           std::span<const cd> y, int h, int w, int levels,
                           double lambda) {
    thread_local std::vector<cd> ax, coef;
    ax.resize(y.size());
    op.forward(x, ax);
    double data = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) data += std::norm(ax[i] - y[i]);
    coef.assign(x.begin(), x.end());
    wavelet::forward(coef, h, w, levels);
    return 0.5 * data + lambda * wavelet::detail_l1(coef, h, w, levels);
}

}  // namespace detail

// FISTA with function-value restart on one frame. Records the objective of
// every accepted iterate into `trace` when given.
inline std::vector<cd> cs_fista_frame(const mri::FrameOperator& op,
                                      std::span<const cd> y, const CSParams& p,
                                      std::vector<double>* trace = nullptr) {
    if (p.iters < 1) throw ConfigError("CSParams: iters must be >= 1");
    if (p.lambda_w < 0) throw ConfigError("CSParams: lambda_w must be >= 0");
    const int h = op.height(), w = op.width();
    wavelet::check_dims(h, w, p.wavelet_levels);
    const std::size_t npix = static_cast<std::size_t>(h) * w;

    const double lip = std::max(mri::lipschitz_estimate(op, 30), 1e-12);
    const double step = 1.0 / (1.05 * lip);  // margin keeps ISTA steps monotone
    const double tau = step * p.lambda_w;

    std::vector<cd> x(npix), x_prev(npix), v(npix), grad(npix), ax(y.size());
    op.adjoint(y, x);  // start from the zero-filled recon
    v = x;
    double theta = 1.0;
    double obj = detail::cs_objective(op, x, y, h, w, p.wavelet_levels, p.lambda_w);

    auto gradient_at = [&](const std::vector<cd>& pt) {
        op.forward(pt, ax);
        for (std::size_t i = 0; i < ax.size(); ++i) ax[i] -= y[i];
        op.adjoint(ax, grad);
    };

    for (int it = 0; it < p.iters; ++it) {
        gradient_at(v);
        std::vector<cd> cand(npix);
        for (std::size_t i = 0; i < npix; ++i) cand[i] = v[i] - step * grad[i];
        detail::wavelet_shrink(cand, h, w, p.wavelet_levels, tau);
        double cand_obj =
            detail::cs_objective(op, cand, y, h, w, p.wavelet_levels, p.lambda_w);

        if (cand_obj > obj) {
            // restart: plain ISTA step from the last accepted iterate
            gradient_at(x);
            for (std::size_t i = 0; i < npix; ++i) cand[i] = x[i] - step * grad[i];
            detail::wavelet_shrink(cand, h, w, p.wavelet_levels, tau);
            cand_obj =
                detail::cs_objective(op, cand, y, h, w, p.wavelet_levels, p.lambda_w);
            theta = 1.0;
        }

        x_prev.swap(x);
        x.swap(cand);
        obj = cand_obj;
        if (trace) trace->push_back(obj);

        const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
        const double momentum = (theta - 1.0) / theta_next;
        for (std::size_t i = 0; i < npix; ++i)
            v[i] = x[i] + momentum * (x[i] - x_prev[i]);
        theta = theta_next;
    }
    return x;
}

// Frames are independent problems; traces (when requested) hold one objective
// sequence per frame.
inline ImageSeries cs_wavelet_recon(const KSpaceDataset& data, const CSParams& p,
                                    std::vector<std::vector<double>>* traces = nullptr) {
    data.validate();
    ImageSeries out(data.frames, data.height, data.width);
    for (int t = 0; t < data.frames; ++t) {
        mri::FrameOperator op = mri::frame_operator(data, t);
        std::vector<double> trace;
        const auto x = cs_fista_frame(op, data.frame(t), p, traces ? &trace : nullptr);
        std::copy(x.begin(), x.end(), out.frame(t).begin());
        if (traces) traces->push_back(std::move(trace));
    }
    return out;
}

struct LSResult {
    ImageSeries m;  // L + S after the final data-consistency step
    ImageSeries l;
    ImageSeries s;
};

// Iterates
//   L_{k+1} = SVT_{lambda_l}(Casorati(M_k - S_k))
//   S_{k+1} = Phi^H soft(Phi(M_k - L_{k+1}), lambda_s)   (Phi = temporal DFT)
//   M_{k+1} = L_{k+1} + S_{k+1} - A^H(A(L_{k+1} + S_{k+1}) - y)
// starting from M_0 = A^H y, S_0 = 0.
inline LSResult ls_recon(const KSpaceDataset& data, const LSParams& p) {
    data.validate();
    if (data.frames < 2) throw ConfigError("ls_recon: needs at least two frames");
    if (p.iters < 1) throw ConfigError("LSParams: iters must be >= 1");
    const int t_frames = data.frames, h = data.height, w = data.width;
    const std::size_t npix = static_cast<std::size_t>(h) * w;

    // ImageSeries stores frames contiguously, so a column-major (HW x T) map
    // is exactly the Casorati matrix.
    ImageSeries m_series(t_frames, h, w), l_series(t_frames, h, w),
        s_series(t_frames, h, w);
    auto casorati = [&](ImageSeries& s) {
        return Eigen::Map<Eigen::MatrixXcd>(s.data.data(), npix, t_frames);
    };
    Eigen::Map<Eigen::MatrixXcd> m_mat = casorati(m_series);
    Eigen::Map<Eigen::MatrixXcd> l_mat = casorati(l_series);
    Eigen::Map<Eigen::MatrixXcd> s_mat = casorati(s_series);

    // orthonormal temporal DFT matrix (symmetric, unitary)
    Eigen::MatrixXcd tdft(t_frames, t_frames);
    for (int a = 0; a < t_frames; ++a)
        for (int b = 0; b < t_frames; ++b)
            tdft(a, b) = std::polar(1.0 / std::sqrt(static_cast<double>(t_frames)),
                                    -2.0 * kPi * a * b / t_frames);

    std::vector<mri::FrameOperator> ops;
    ops.reserve(t_frames);
    for (int t = 0; t < t_frames; ++t) ops.push_back(mri::frame_operator(data, t));

    for (int t = 0; t < t_frames; ++t)
        ops[t].adjoint(data.frame(t), m_series.frame(t));

    std::vector<cd> work(data.frame_size()), img(npix);
    for (int it = 0; it < p.iters; ++it) {
        // L := SVT(M - S)
        l_mat = prox::svt(m_mat - s_mat, p.lambda_l);

        // S := Phi^H soft(Phi(M - L))
        Eigen::MatrixXcd ts = (m_mat - l_mat) * tdft;
        for (Eigen::Index i = 0; i < ts.size(); ++i)
            ts.data()[i] = prox::soft_threshold(ts.data()[i], p.lambda_s);
        s_mat = ts * tdft.conjugate();

        // M := (L + S) - A^H(A(L + S) - y)
        m_mat = l_mat + s_mat;
        for (int t = 0; t < t_frames; ++t) {
            ops[t].forward(m_series.frame(t), work);
            const auto y = data.frame(t);
            for (std::size_t i = 0; i < work.size(); ++i) work[i] -= y[i];
            ops[t].adjoint(work, img);
            auto frame = m_series.frame(t);
            for (std::size_t i = 0; i < npix; ++i) frame[i] -= img[i];
        }
    }
    return {std::move(m_series), std::move(l_series), std::move(s_series)};
}

}  // namespace discus::classical
