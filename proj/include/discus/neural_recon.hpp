#pragma once

#include <functional>

#include "discus/core.hpp"
#include "discus/data_model.hpp"
#include "discus/mri_operator.hpp"
#include "discus/nn.hpp"
#include "discus/prox.hpp"

namespace discus::neural {

// Generator architecture. Input channels are k (static code) + 1 (dynamic
// code); dip mode feeds the dynamic code alone. Output is fixed at two
// channels combined as real + i*imag.
struct GeneratorConfig {
    int k = 1;
    int depth = 3;
    int base_channels = 8;
    std::string activation = "silu";
    std::string upsample = "nearest";  // the only implemented scheme

    void validate() const {
        if (k < 1) throw ConfigError("GeneratorConfig: k must be >= 1");
        if (depth < 1) throw ConfigError("GeneratorConfig: depth must be >= 1");
        if (base_channels < 1) throw ConfigError("GeneratorConfig: base_channels >= 1");
        nn::parse_activation(activation);
        if (upsample != "nearest")
            throw ConfigError("GeneratorConfig: unsupported upsample: " + upsample);
    }
};

struct CodeSet {
    int k = 0, frames = 0, height = 0, width = 0;
    std::vector<double> z0;     // k x H x W (empty in dip mode)
    std::vector<double> z_dyn;  // T x H x W

    std::size_t positions() const { return static_cast<std::size_t>(height) * width; }
};

enum class FitMode { dip, discus_gs, discus };

inline FitMode parse_fit_mode(const std::string& name) {
    if (name == "dip") return FitMode::dip;
    if (name == "discus_gs") return FitMode::discus_gs;
    if (name == "discus") return FitMode::discus;
    throw ConfigError("unknown fit mode: " + name);
}

inline std::string to_string(FitMode m) {
    switch (m) {
        case FitMode::dip: return "dip";
        case FitMode::discus_gs: return "discus_gs";
        default: return "discus";
    }
}

struct FitConfig {
    FitMode mode = FitMode::discus;
    double lambda = 0.0;       // group-sparsity weight
    int iters = 2000;
    double lr = 1e-4;          // generator weights
    double lr_codes = 1e-3;    // code vectors (separate Adam group)
    std::uint64_t seed = 0;
    double code_init_scale = 0.1;
    bool prox_on_codes = true;
    double epsilon_smooth = 1e-8;

    void validate() const {
        if (iters < 1) throw ConfigError("FitConfig: iters must be >= 1");
        if (lr <= 0 || lr_codes <= 0) throw ConfigError("FitConfig: learning rates must be > 0");
        if (code_init_scale <= 0) throw ConfigError("FitConfig: code_init_scale must be > 0");
        if (mode == FitMode::discus && lambda <= 0)
            throw ConfigError("FitConfig: discus mode requires lambda > 0");
        if (mode != FitMode::discus && lambda != 0)
            throw ConfigError("FitConfig: lambda must be 0 unless mode is discus");
        if (epsilon_smooth <= 0) throw ConfigError("FitConfig: epsilon_smooth must be > 0");
    }
};

// Support size of the dynamic codes: positions whose across-time l2 norm
// exceeds rel_threshold times the largest column norm. All-zero codes have
// dimensionality 0.
inline int manifold_dim(const CodeSet& codes, double rel_threshold = 0.05) {
    if (rel_threshold <= 0 || rel_threshold >= 1)
        throw ConfigError("manifold_dim: rel_threshold must be in (0, 1)");
    const std::size_t n = codes.positions();
    if (n == 0 || codes.frames == 0) return 0;
    std::vector<double> col(n, 0.0);
    for (int t = 0; t < codes.frames; ++t)
        for (std::size_t j = 0; j < n; ++j) col[j] += sq(codes.z_dyn[t * n + j]);
    double max_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) max_norm = std::max(max_norm, col[j]);
    if (max_norm == 0.0) return 0;
    int count = 0;
    const double thresh = sq(rel_threshold) * max_norm;  // compare squared norms
    for (std::size_t j = 0; j < n; ++j)
        if (col[j] > thresh) ++count;
    return count;
}

// The fitted generator: immutable after training, usable to re-synthesize
// frames from codes.
template <typename Real>
class GeneratorT {
public:
    GeneratorT(const GeneratorConfig& cfg, int in_ch)
        : cfg_(cfg), in_ch_(in_ch),
          net_(in_ch, 2, cfg.depth, cfg.base_channels,
               nn::parse_activation(cfg.activation)) {}

    const GeneratorConfig& config() const { return cfg_; }
    int in_channels() const { return in_ch_; }
    nn::UNet<Real>& net() { return net_; }
    const nn::UNet<Real>& net() const { return net_; }

    // z0 may be empty (dip mode); zt is one H x W channel
    std::vector<cd> generate(std::span<const double> z0, std::span<const double> zt,
                             int h, int w) const {
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        if (zt.size() != plane) throw ConfigError("generate: z_t size mismatch");
        const int k_ch = static_cast<int>(z0.size() / plane);
        if (z0.size() != static_cast<std::size_t>(k_ch) * plane || k_ch + 1 != in_ch_)
            throw ConfigError("generate: z_0 size mismatch");
        nn::Tensor<Real> in(in_ch_, h, w);
        for (std::size_t i = 0; i < z0.size(); ++i) in.v[i] = static_cast<Real>(z0[i]);
        for (std::size_t i = 0; i < plane; ++i)
            in.v[z0.size() + i] = static_cast<Real>(zt[i]);
        const nn::Tensor<Real> out = net_.forward(in, nullptr);
        std::vector<cd> frame(plane);
        for (std::size_t i = 0; i < plane; ++i)
            frame[i] = cd(static_cast<double>(out.v[i]),
                          static_cast<double>(out.v[plane + i]));
        return frame;
    }

private:
    GeneratorConfig cfg_;
    int in_ch_;
    nn::UNet<Real> net_;
};

using Generator = GeneratorT<float>;

struct FitResult {
    ImageSeries recon;
    CodeSet codes;
    std::vector<LossRecord> loss_trace;
    int manifold_dim = 0;  // populated for discus mode
    Generator generator;
};

// Optional periodic checkpointing (container kind "checkpoint").
struct CheckpointSpec {
    int every = 0;  // 0 disables
    std::filesystem::path dir;
};

namespace detail {

template <typename Real>
void write_checkpoint(const std::filesystem::path& dir, int iteration,
                      std::span<const Real> weights, std::span<const Real> z0,
                      std::span<const Real> z_dyn, int k, int frames, int h, int w,
                      const std::vector<LossRecord>& trace,
                      const nlohmann::json& config_echo) {
    io::RawContainer c;
    c.kind = "checkpoint";
    std::vector<double> wd(weights.begin(), weights.end());
    c.arrays["weights"] = {"f32le", {static_cast<std::int64_t>(wd.size())},
                           io::encode_f32(wd)};
    if (!z0.empty()) {
        std::vector<double> zd(z0.begin(), z0.end());
        c.arrays["z0"] = {"f32le", {k, h, w}, io::encode_f32(zd)};
    }
    std::vector<double> zd(z_dyn.begin(), z_dyn.end());
    c.arrays["z_dyn"] = {"f32le", {frames, h, w}, io::encode_f32(zd)};
    std::vector<double> tr;
    tr.reserve(trace.size() * 3);
    for (const LossRecord& r : trace) {
        tr.push_back(static_cast<double>(r.iteration));
        tr.push_back(r.data_term);
        tr.push_back(r.penalty_term);
    }
    if (!tr.empty())
        c.arrays["loss_trace"] = {"f32le", {static_cast<std::int64_t>(trace.size()), 3},
                                  io::encode_f32(tr)};
    c.attrs["iteration"] = iteration;
    c.attrs["config"] = config_echo;
    io::write_raw(c, dir);
}

}  // namespace detail

struct Checkpoint {
    int iteration = 0;
    std::vector<double> weights;
    CodeSet codes;
    std::vector<LossRecord> loss_trace;
    nlohmann::json config;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto c = io::read_raw(dir);
    if (c.kind != "checkpoint") throw IoError("container kind is not checkpoint");
    Checkpoint out;
    out.iteration = c.attrs.value("iteration", 0);
    out.config = c.attrs.value("config", nlohmann::json::object());
    out.weights = io::decode_f32(io::need(c, "weights", "f32le", 1).bytes);
    const auto& zdyn = io::need(c, "z_dyn", "f32le", 3);
    out.codes.frames = static_cast<int>(zdyn.shape[0]);
    out.codes.height = static_cast<int>(zdyn.shape[1]);
    out.codes.width = static_cast<int>(zdyn.shape[2]);
    out.codes.z_dyn = io::decode_f32(zdyn.bytes);
    if (c.arrays.count("z0")) {
        const auto& z0 = io::need(c, "z0", "f32le", 3);
        out.codes.k = static_cast<int>(z0.shape[0]);
        out.codes.z0 = io::decode_f32(z0.bytes);
    }
    if (c.arrays.count("loss_trace")) {
        const auto tr = io::decode_f32(c.arrays.at("loss_trace").bytes);
        for (std::size_t i = 0; i + 3 <= tr.size(); i += 3)
            out.loss_trace.push_back({static_cast<int>(tr[i]), tr[i + 1], tr[i + 2]});
    }
    return out;
}

// Joint fit of generator weights and code vectors by full-batch Adam over
// frames; Eq.-style data term sum_t ||A_t G(z0, z_t) - y_t||^2. In discus
// mode the group penalty acts either as an exact prox on the dynamic codes
// after each step (tau = lr_codes * lambda) or as a smoothed additive term.
template <typename Real>
FitResult discus_fit_impl(const KSpaceDataset& data, const GeneratorConfig& gcfg,
                          const FitConfig& fcfg,
                          const CheckpointSpec& ckpt = {}) {
    data.validate();
    gcfg.validate();
    fcfg.validate();
    const int t_frames = data.frames, h = data.height, w = data.width;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    if (h % (1 << gcfg.depth) != 0 || w % (1 << gcfg.depth) != 0)
        throw ConfigError("discus_fit: image size must be divisible by 2^depth");

    const bool dip = fcfg.mode == FitMode::dip;
    const bool penalized = fcfg.mode == FitMode::discus;
    const int in_ch = dip ? 1 : gcfg.k + 1;
    const std::size_t z0_size = dip ? 0 : static_cast<std::size_t>(gcfg.k) * plane;

    GeneratorT<Real> gen(gcfg, in_ch);
    Rng rng(fcfg.seed);
    gen.net().init_params(rng);

    // code draws follow the weight draws in the documented stream
    std::vector<Real> z0(z0_size), z_dyn(static_cast<std::size_t>(t_frames) * plane);
    for (auto& v : z0) v = static_cast<Real>(rng.normal() * fcfg.code_init_scale);
    for (auto& v : z_dyn) v = static_cast<Real>(rng.normal() * fcfg.code_init_scale);

    nn::UNet<Real>& net = gen.net();
    std::vector<Real> wgrad(net.n_params());
    std::vector<Real> z0_grad(z0.size()), zdyn_grad(z_dyn.size());
    nn::Adam<Real> adam_w(net.n_params(), fcfg.lr);
    nn::Adam<Real> adam_z0(z0.size(), fcfg.lr_codes);
    nn::Adam<Real> adam_zd(z_dyn.size(), fcfg.lr_codes);

    std::vector<mri::FrameOperator> ops;
    ops.reserve(t_frames);
    for (int t = 0; t < t_frames; ++t) ops.push_back(mri::frame_operator(data, t));

    nn::Tensor<Real> input(in_ch, h, w), dout(2, h, w);
    nn::Tape<Real> tape;
    std::vector<cd> x(plane), ax(data.frame_size()), g_img(plane);
    std::vector<LossRecord> trace;
    trace.reserve(fcfg.iters);

    nlohmann::json config_echo = {
        {"mode", to_string(fcfg.mode)}, {"lambda", fcfg.lambda},
        {"iters", fcfg.iters},          {"lr", fcfg.lr},
        {"lr_codes", fcfg.lr_codes},    {"seed", fcfg.seed},
        {"code_init_scale", fcfg.code_init_scale},
        {"prox_on_codes", fcfg.prox_on_codes},
        {"epsilon_smooth", fcfg.epsilon_smooth},
        {"k", gcfg.k},                  {"depth", gcfg.depth},
        {"base_channels", gcfg.base_channels},
        {"activation", gcfg.activation}};

    const auto fill_input = [&](int t) {
        for (std::size_t i = 0; i < z0.size(); ++i) input.v[i] = z0[i];
        const Real* zt = z_dyn.data() + static_cast<std::size_t>(t) * plane;
        std::copy(zt, zt + plane, input.v.begin() + z0.size());
    };

    for (int it = 0; it < fcfg.iters; ++it) {
        std::fill(wgrad.begin(), wgrad.end(), Real(0));
        std::fill(z0_grad.begin(), z0_grad.end(), Real(0));
        double data_term = 0.0;

        for (int t = 0; t < t_frames; ++t) {
            fill_input(t);
            const nn::Tensor<Real> out = net.forward(input, &tape);
            for (std::size_t i = 0; i < plane; ++i)
                x[i] = cd(static_cast<double>(out.v[i]),
                          static_cast<double>(out.v[plane + i]));

            ops[t].forward(x, ax);
            const auto y = data.frame(t);
            for (std::size_t i = 0; i < ax.size(); ++i) ax[i] -= y[i];
            data_term += norm_sq(std::span<const cd>(ax));
            ops[t].adjoint(ax, g_img);

            for (std::size_t i = 0; i < plane; ++i) {
                dout.v[i] = static_cast<Real>(2.0 * g_img[i].real());
                dout.v[plane + i] = static_cast<Real>(2.0 * g_img[i].imag());
            }
            const nn::Tensor<Real> din = net.backward(dout, tape, wgrad);
            for (std::size_t i = 0; i < z0.size(); ++i) z0_grad[i] += din.v[i];
            std::copy(din.v.begin() + z0.size(), din.v.end(),
                      zdyn_grad.begin() + static_cast<std::size_t>(t) * plane);
        }

        if (!std::isfinite(data_term))
            throw DivergenceError("discus_fit: non-finite data term at iteration " +
                                      std::to_string(it),
                                  trace);

        double penalty = 0.0;
        if (penalized && !fcfg.prox_on_codes) {
            thread_local std::vector<Real> pgrad;
            pgrad.resize(z_dyn.size());
            prox::smoothed_group_penalty_grad<Real>(z_dyn, t_frames, plane, fcfg.lambda,
                                                    fcfg.epsilon_smooth, pgrad);
            for (std::size_t i = 0; i < z_dyn.size(); ++i) zdyn_grad[i] += pgrad[i];
        }

        adam_w.step(net.params(), wgrad);
        if (!z0.empty()) adam_z0.step(z0, z0_grad);
        adam_zd.step(z_dyn, zdyn_grad);

        if (penalized) {
            if (fcfg.prox_on_codes) {
                prox::group_soft_threshold<Real>(z_dyn, t_frames, plane,
                                                 fcfg.lr_codes * fcfg.lambda);
                penalty = fcfg.lambda * prox::group_l21<Real>(z_dyn, t_frames, plane);
            } else {
                penalty = prox::smoothed_group_penalty<Real>(z_dyn, t_frames, plane,
                                                             fcfg.lambda,
                                                             fcfg.epsilon_smooth);
            }
        }

        trace.push_back({it, data_term, penalty});

        if (ckpt.every > 0 && (it + 1) % ckpt.every == 0)
            detail::write_checkpoint<Real>(
                ckpt.dir / ("iter_" + std::to_string(it + 1)), it + 1,
                net.params(), z0, z_dyn, gcfg.k, t_frames, h, w, trace, config_echo);
    }

    FitResult result{ImageSeries(t_frames, h, w), CodeSet{}, std::move(trace), 0,
                     Generator(gcfg, in_ch)};
    for (int t = 0; t < t_frames; ++t) {
        fill_input(t);
        const nn::Tensor<Real> out = net.forward(input, nullptr);
        auto frame = result.recon.frame(t);
        for (std::size_t i = 0; i < plane; ++i)
            frame[i] = cd(static_cast<double>(out.v[i]),
                          static_cast<double>(out.v[plane + i]));
    }

    result.codes.k = dip ? 0 : gcfg.k;
    result.codes.frames = t_frames;
    result.codes.height = h;
    result.codes.width = w;
    result.codes.z0.assign(z0.begin(), z0.end());
    result.codes.z_dyn.assign(z_dyn.begin(), z_dyn.end());
    if (penalized) result.manifold_dim = manifold_dim(result.codes);

    if constexpr (std::is_same_v<Real, float>) {
        std::copy(net.params().begin(), net.params().end(),
                  result.generator.net().params().begin());
    } else {
        for (std::size_t i = 0; i < net.n_params(); ++i)
            result.generator.net().params()[i] = static_cast<float>(net.params()[i]);
    }
    return result;
}

// Production entry point; fits in float32 (twice the GEMM throughput of
// double on one core, which dominates the runtime). The double instantiation
// stays available for gradient verification.
inline FitResult discus_fit(const KSpaceDataset& data, const GeneratorConfig& gcfg,
                            const FitConfig& fcfg, const CheckpointSpec& ckpt = {}) {
    return discus_fit_impl<float>(data, gcfg, fcfg, ckpt);
}

}  // namespace discus::neural
