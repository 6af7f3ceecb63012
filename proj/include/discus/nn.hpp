#pragma once

#include <Eigen/Dense>

#include "discus/core.hpp"

namespace discus::nn {

// Minimal dense-tensor autodiff tailored to the fixed encoder-decoder
// topology used by the generator. Everything is templated on the scalar so
// the same code runs in float for fitting and in double for finite-difference
// verification.

template <typename Real>
struct Tensor {
    int ch = 0, h = 0, w = 0;
    std::vector<Real> v;

    Tensor() = default;
    Tensor(int c, int hh, int ww)
        : ch(c), h(hh), w(ww), v(static_cast<std::size_t>(c) * hh * ww, Real(0)) {}

    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    Real* channel(int c) { return v.data() + static_cast<std::size_t>(c) * plane(); }
    const Real* channel(int c) const {
        return v.data() + static_cast<std::size_t>(c) * plane();
    }
};

enum class Activation { silu, leaky_relu };

inline Activation parse_activation(const std::string& name) {
    if (name == "silu") return Activation::silu;
    if (name == "leaky_relu") return Activation::leaky_relu;
    throw ConfigError("unknown activation: " + name);
}

namespace detail {

template <typename Real>
inline Real act_forward(Real x, Activation a) {
    if (a == Activation::silu) {
        const Real s = Real(1) / (Real(1) + std::exp(-x));
        return x * s;
    }
    return x > Real(0) ? x : Real(0.1) * x;
}

template <typename Real>
inline Real act_backward(Real x, Activation a) {
    if (a == Activation::silu) {
        const Real s = Real(1) / (Real(1) + std::exp(-x));
        return s * (Real(1) + x * (Real(1) - s));
    }
    return x > Real(0) ? Real(1) : Real(0.1);
}

template <typename Real>
using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// zero-padded im2col; pad = k/2, so spatial size maps h -> h/stride
template <typename Real>
void im2col(const Tensor<Real>& x, int k, int stride, std::vector<Real>& col,
            int hout, int wout) {
    const int pad = k / 2;
    const std::size_t ncols = static_cast<std::size_t>(hout) * wout;
    col.resize(static_cast<std::size_t>(x.ch) * k * k * ncols);
    std::size_t r = 0;
    for (int ci = 0; ci < x.ch; ++ci) {
        const Real* plane = x.channel(ci);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                Real* dst = col.data() + (r++) * ncols;
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= x.h) {
                        std::fill(dst + static_cast<std::size_t>(oy) * wout,
                                  dst + static_cast<std::size_t>(oy + 1) * wout, Real(0));
                        continue;
                    }
                    const Real* src = plane + static_cast<std::size_t>(iy) * x.w;
                    Real* row = dst + static_cast<std::size_t>(oy) * wout;
                    for (int ox = 0; ox < wout; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        row[ox] = (ix < 0 || ix >= x.w) ? Real(0) : src[ix];
                    }
                }
            }
    }
}

// transpose of im2col: scatter-add columns back into the input grid
template <typename Real>
void col2im(const std::vector<Real>& col, int k, int stride, Tensor<Real>& dx,
            int hout, int wout) {
    const int pad = k / 2;
    const std::size_t ncols = static_cast<std::size_t>(hout) * wout;
    std::fill(dx.v.begin(), dx.v.end(), Real(0));
    std::size_t r = 0;
    for (int ci = 0; ci < dx.ch; ++ci) {
        Real* plane = dx.channel(ci);
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const Real* src = col.data() + (r++) * ncols;
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= dx.h) continue;
                    Real* row = plane + static_cast<std::size_t>(iy) * dx.w;
                    const Real* srow = src + static_cast<std::size_t>(oy) * wout;
                    for (int ox = 0; ox < wout; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < dx.w) row[ix] += srow[ox];
                    }
                }
            }
    }
}

}  // namespace detail

struct ConvDesc {
    int cin = 0, cout = 0, k = 3, stride = 1;
    std::size_t w_off = 0, b_off = 0;
};

// Per-frame forward cache consumed by backward: one im2col buffer per conv
// plus the pre-activation values of every activated conv.
template <typename Real>
struct Tape {
    std::vector<std::vector<Real>> col;
    std::vector<std::vector<Real>> preact;
};

// Encoder-decoder generator: stem conv, `depth` encoder stages (body conv +
// strided downsampling conv), bottleneck conv, `depth` decoder stages
// (nearest-neighbor upsample, skip concat, two convs), linear 1x1 head.
// All 3x3 convs are zero-padded; channels double per stage from
// base_channels.
template <typename Real>
class UNet {
public:
    UNet(int in_ch, int out_ch, int depth, int base_channels, Activation act)
        : in_ch_(in_ch), out_ch_(out_ch), depth_(depth), base_(base_channels),
          act_(act) {
        if (in_ch < 1 || out_ch < 1 || depth < 1 || base_channels < 1)
            throw ConfigError("UNet: bad architecture parameters");
        auto add = [this](int cin, int cout, int k, int stride) {
            ConvDesc d{cin, cout, k, stride, n_params_, 0};
            n_params_ += static_cast<std::size_t>(cout) * cin * k * k;
            d.b_off = n_params_;
            n_params_ += static_cast<std::size_t>(cout);
            convs_.push_back(d);
            return static_cast<int>(convs_.size()) - 1;
        };
        const auto c = [this](int i) { return base_ << i; };

        stem_ = add(in_ch, c(0), 3, 1);
        for (int i = 0; i < depth; ++i) {
            enc_.push_back(add(c(i), c(i), 3, 1));
            down_.push_back(add(c(i), c(i + 1), 3, 2));
        }
        bottleneck_ = add(c(depth), c(depth), 3, 1);
        dec_a_.resize(depth);
        dec_b_.resize(depth);
        for (int i = depth - 1; i >= 0; --i) {
            dec_a_[i] = add(c(i + 1) + c(i), c(i), 3, 1);
            dec_b_[i] = add(c(i), c(i), 3, 1);
        }
        head_ = add(c(0), out_ch, 1, 1);
        params_.assign(n_params_, Real(0));
    }

    std::size_t n_params() const { return n_params_; }
    std::span<Real> params() { return params_; }
    std::span<const Real> params() const { return params_; }
    int in_channels() const { return in_ch_; }
    int depth() const { return depth_; }

    // He-normal weights, zero biases, drawn in conv order from the given stream
    void init_params(Rng& rng) {
        for (const ConvDesc& d : convs_) {
            const double std_dev = std::sqrt(2.0 / (d.cin * d.k * d.k));
            for (std::size_t i = 0; i < static_cast<std::size_t>(d.cout) * d.cin * d.k * d.k; ++i)
                params_[d.w_off + i] = static_cast<Real>(rng.normal() * std_dev);
            for (int i = 0; i < d.cout; ++i) params_[d.b_off + i] = Real(0);
        }
    }

    // input must be (in_ch, H, W) with H, W divisible by 2^depth
    Tensor<Real> forward(const Tensor<Real>& in, Tape<Real>* tape) const {
        if (in.ch != in_ch_) throw ConfigError("UNet: input channel mismatch");
        if (in.h % (1 << depth_) != 0 || in.w % (1 << depth_) != 0)
            throw ConfigError("UNet: spatial size must be divisible by 2^depth");
        if (tape) {
            tape->col.resize(convs_.size());
            tape->preact.resize(convs_.size());
        }

        Tensor<Real> x = conv_act(stem_, in, tape);
        std::vector<Tensor<Real>> skips(depth_);
        for (int i = 0; i < depth_; ++i) {
            x = conv_act(enc_[i], x, tape);
            skips[i] = x;
            x = conv_act(down_[i], x, tape);
        }
        x = conv_act(bottleneck_, x, tape);
        for (int i = depth_ - 1; i >= 0; --i) {
            x = upsample2(x);
            x = concat(x, skips[i]);
            x = conv_act(dec_a_[i], x, tape);
            x = conv_act(dec_b_[i], x, tape);
        }
        return conv(head_, x, tape, /*activated=*/false);
    }

    // accumulates parameter gradients into `grad` (same layout as params)
    // and returns the gradient w.r.t. the network input
    Tensor<Real> backward(const Tensor<Real>& dout, const Tape<Real>& tape,
                          std::span<Real> grad) const {
        if (grad.size() != n_params_) throw ConfigError("UNet: grad buffer size mismatch");
        Tensor<Real> dx = conv_backward(head_, dout, tape, grad, /*activated=*/false,
                                        dout.h, dout.w);
        std::vector<Tensor<Real>> dskips(depth_);
        for (int i = 0; i <= depth_ - 1; ++i) {
            const int res_h = dout.h >> i, res_w = dout.w >> i;
            dx = conv_backward(dec_b_[i], dx, tape, grad, true, res_h, res_w);
            dx = conv_backward(dec_a_[i], dx, tape, grad, true, res_h, res_w);
            auto [dup, dskip] = split(dx, base_ << (i + 1), base_ << i);
            dskips[i] = std::move(dskip);
            dx = upsample2_backward(dup);
        }
        dx = conv_backward(bottleneck_, dx, tape, grad, true, dout.h >> depth_,
                           dout.w >> depth_);
        for (int i = depth_ - 1; i >= 0; --i) {
            const int res_h = dout.h >> i, res_w = dout.w >> i;
            dx = conv_backward(down_[i], dx, tape, grad, true, res_h >> 1, res_w >> 1,
                               res_h, res_w);
            for (std::size_t j = 0; j < dx.v.size(); ++j) dx.v[j] += dskips[i].v[j];
            dx = conv_backward(enc_[i], dx, tape, grad, true, res_h, res_w);
        }
        return conv_backward(stem_, dx, tape, grad, true, dout.h, dout.w);
    }

private:
    Tensor<Real> conv(int idx, const Tensor<Real>& x, Tape<Real>* tape,
                      bool activated) const {
        const ConvDesc& d = convs_[idx];
        const int hout = x.h / d.stride, wout = x.w / d.stride;
        const std::size_t ncols = static_cast<std::size_t>(hout) * wout;

        thread_local std::vector<Real> scratch_col;
        std::vector<Real>& col = tape ? tape->col[idx] : scratch_col;
        detail::im2col(x, d.k, d.stride, col, hout, wout);

        Tensor<Real> out(d.cout, hout, wout);
        using Map = Eigen::Map<detail::MatR<Real>>;
        using CMap = Eigen::Map<const detail::MatR<Real>>;
        CMap wm(params_.data() + d.w_off, d.cout, static_cast<Eigen::Index>(d.cin) * d.k * d.k);
        CMap cm(col.data(), static_cast<Eigen::Index>(d.cin) * d.k * d.k, ncols);
        Map om(out.v.data(), d.cout, ncols);
        om.noalias() = wm * cm;
        for (int co = 0; co < d.cout; ++co)
            om.row(co).array() += params_[d.b_off + co];

        if (activated) {
            if (tape) tape->preact[idx] = out.v;
            for (Real& v : out.v) v = detail::act_forward(v, act_);
        }
        return out;
    }

    Tensor<Real> conv_act(int idx, const Tensor<Real>& x, Tape<Real>* tape) const {
        return conv(idx, x, tape, true);
    }

    // dout is the gradient at the conv output (post-activation when
    // activated); in_h/in_w give the conv's input resolution (defaults assume
    // stride 1)
    Tensor<Real> conv_backward(int idx, const Tensor<Real>& dout_in,
                               const Tape<Real>& tape, std::span<Real> grad,
                               bool activated, int out_h, int out_w, int in_h = -1,
                               int in_w = -1) const {
        const ConvDesc& d = convs_[idx];
        if (in_h < 0) in_h = out_h * d.stride;
        if (in_w < 0) in_w = out_w * d.stride;
        const std::size_t ncols = static_cast<std::size_t>(out_h) * out_w;

        Tensor<Real> dout = dout_in;  // owned copy: activation backward mutates
        if (activated) {
            const std::vector<Real>& pre = tape.preact[idx];
            for (std::size_t i = 0; i < dout.v.size(); ++i)
                dout.v[i] *= detail::act_backward(pre[i], act_);
        }

        using Map = Eigen::Map<detail::MatR<Real>>;
        using CMap = Eigen::Map<const detail::MatR<Real>>;
        const Eigen::Index rows = static_cast<Eigen::Index>(d.cin) * d.k * d.k;
        CMap dym(dout.v.data(), d.cout, ncols);
        CMap cm(tape.col[idx].data(), rows, ncols);
        Map dwm(grad.data() + d.w_off, d.cout, rows);
        dwm.noalias() += dym * cm.transpose();
        for (int co = 0; co < d.cout; ++co) {
            // ordered accumulation: Eigen's vectorized sum() picks its split
            // by pointer alignment, which breaks bitwise reproducibility
            Real s(0);
            const Real* row = dout.v.data() + static_cast<std::size_t>(co) * ncols;
            for (std::size_t i = 0; i < ncols; ++i) s += row[i];
            grad[d.b_off + co] += s;
        }

        CMap wm(params_.data() + d.w_off, d.cout, rows);
        thread_local std::vector<Real> dcol;
        dcol.resize(static_cast<std::size_t>(rows) * ncols);
        Map dcm(dcol.data(), rows, ncols);
        dcm.noalias() = wm.transpose() * dym;

        Tensor<Real> dx(d.cin, in_h, in_w);
        detail::col2im(dcol, d.k, d.stride, dx, out_h, out_w);
        return dx;
    }

    static Tensor<Real> upsample2(const Tensor<Real>& x) {
        Tensor<Real> out(x.ch, x.h * 2, x.w * 2);
        for (int c = 0; c < x.ch; ++c) {
            const Real* src = x.channel(c);
            Real* dst = out.channel(c);
            for (int y = 0; y < out.h; ++y) {
                const Real* srow = src + static_cast<std::size_t>(y / 2) * x.w;
                Real* drow = dst + static_cast<std::size_t>(y) * out.w;
                for (int xx = 0; xx < out.w; ++xx) drow[xx] = srow[xx / 2];
            }
        }
        return out;
    }

    static Tensor<Real> upsample2_backward(const Tensor<Real>& dout) {
        Tensor<Real> dx(dout.ch, dout.h / 2, dout.w / 2);
        for (int c = 0; c < dout.ch; ++c) {
            const Real* src = dout.channel(c);
            Real* dst = dx.channel(c);
            for (int y = 0; y < dout.h; ++y) {
                const Real* srow = src + static_cast<std::size_t>(y) * dout.w;
                Real* drow = dst + static_cast<std::size_t>(y / 2) * dx.w;
                for (int xx = 0; xx < dout.w; ++xx) drow[xx / 2] += srow[xx];
            }
        }
        return dx;
    }

    static Tensor<Real> concat(const Tensor<Real>& a, const Tensor<Real>& b) {
        Tensor<Real> out(a.ch + b.ch, a.h, a.w);
        std::copy(a.v.begin(), a.v.end(), out.v.begin());
        std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
        return out;
    }

    static std::pair<Tensor<Real>, Tensor<Real>> split(const Tensor<Real>& d,
                                                       int ch_a, int ch_b) {
        Tensor<Real> a(ch_a, d.h, d.w), b(ch_b, d.h, d.w);
        std::copy(d.v.begin(), d.v.begin() + a.v.size(), a.v.begin());
        std::copy(d.v.begin() + a.v.size(), d.v.end(), b.v.begin());
        return {std::move(a), std::move(b)};
    }

    int in_ch_, out_ch_, depth_, base_;
    Activation act_;
    std::vector<ConvDesc> convs_;
    std::size_t n_params_ = 0;
    std::vector<Real> params_;
    int stem_ = 0, bottleneck_ = 0, head_ = 0;
    std::vector<int> enc_, down_, dec_a_, dec_b_;
};

// Adam with bias correction; update math in double regardless of storage.
template <typename Real>
class Adam {
public:
    Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<Real> p, std::span<const Real> g) {
        if (p.size() != m_.size() || g.size() != m_.size())
            throw ConfigError("Adam: size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(kBeta1, t_);
        const double bc2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * gi;
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * gi * gi;
            const double mh = m_[i] / bc1, vh = v_[i] / bc2;
            p[i] -= static_cast<Real>(lr_ * mh / (std::sqrt(vh) + kEps));
        }
    }

private:
    static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    double lr_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

}  // namespace discus::nn
