#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>

#include "discus/classical_recon.hpp"
#include "discus/core.hpp"
#include "discus/data_model.hpp"
#include "discus/metrics.hpp"
#include "discus/neural_recon.hpp"
#include "discus/phantom.hpp"
#include "discus/sampling.hpp"

namespace discus::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

// One study per config. The master seed derives every sub-stream
// deterministically: motion 10s+1, mask 10s+2, fit 10s+3, noise 10s+4.
struct ExperimentConfig {
    std::string study = "shepp_rotation";
    int size = 64;
    int frames = 32;
    double acceleration = 3.0;
    std::optional<double> snr_db;
    std::uint64_t seed = 1;
    int n_coils = 1;
    std::string mask_type;  // resolved default: vd_random, or gro for external_lge
    int acs = 4;
    double density_power = 1.5;
    double rotation_deg = 3.0;
    double shift_px = 3.0;
    std::vector<std::string> methods = {"cs", "ls", "discus"};
    classical::CSParams cs;
    classical::LSParams ls;
    neural::GeneratorConfig generator;
    neural::FitConfig fit;
    std::optional<std::uint64_t> fit_seed;  // overrides the derived stream
    std::map<std::string, std::vector<double>> grid;
    std::string output_dir = "out";
    std::string input_container;
    double error_map_amplification = 5.0;
    int error_map_frame = 0;
    int checkpoint_every = 0;

    std::uint64_t motion_seed() const { return seed * 10 + 1; }
    std::uint64_t mask_seed() const { return seed * 10 + 2; }
    std::uint64_t resolved_fit_seed() const {
        return fit_seed ? *fit_seed : seed * 10 + 3;
    }
    std::uint64_t noise_seed() const { return seed * 10 + 4; }

    std::string resolved_mask_type() const {
        if (!mask_type.empty()) return mask_type;
        return study == "external_lge" ? "gro" : "vd_random";
    }

    void validate() const {
        static const std::vector<std::string> studies = {
            "shepp_rotation", "shepp_translation", "shepp_both", "external_lge"};
        if (std::find(studies.begin(), studies.end(), study) == studies.end())
            throw ConfigError("unknown study: " + study);
        if (study != "external_lge") {
            if (size < 16) throw ConfigError("size must be >= 16");
            if (frames < 1) throw ConfigError("frames must be >= 1");
        } else if (input_container.empty()) {
            throw ConfigError("external_lge requires input_container");
        }
        if (acceleration <= 1.0) throw ConfigError("acceleration must be > 1");
        static const std::vector<std::string> known = {"cs", "ls", "dip", "discus_gs",
                                                       "discus"};
        if (methods.empty()) throw ConfigError("methods must not be empty");
        for (const auto& m : methods)
            if (std::find(known.begin(), known.end(), m) == known.end())
                throw ConfigError("unknown method: " + m);
        const std::string mt = resolved_mask_type();
        if (mt != "vd_random" && mt != "gro")
            throw ConfigError("unknown mask_type: " + mt);
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
        generator.validate();
    }
};

namespace detail {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    try {
        detail::read_field(j, "study", c.study);
        detail::read_field(j, "size", c.size);
        detail::read_field(j, "frames", c.frames);
        detail::read_field(j, "acceleration", c.acceleration);
        if (j.contains("snr_db") && !j.at("snr_db").is_null())
            c.snr_db = j.at("snr_db").get<double>();
        detail::read_field(j, "seed", c.seed);
        detail::read_field(j, "n_coils", c.n_coils);
        detail::read_field(j, "mask_type", c.mask_type);
        detail::read_field(j, "acs", c.acs);
        detail::read_field(j, "density_power", c.density_power);
        detail::read_field(j, "rotation_deg", c.rotation_deg);
        detail::read_field(j, "shift_px", c.shift_px);
        detail::read_field(j, "methods", c.methods);
        if (j.contains("cs")) {
            const json& b = j.at("cs");
            detail::read_field(b, "lambda_w", c.cs.lambda_w);
            detail::read_field(b, "iters", c.cs.iters);
            detail::read_field(b, "wavelet_levels", c.cs.wavelet_levels);
        }
        if (j.contains("ls")) {
            const json& b = j.at("ls");
            detail::read_field(b, "lambda_l", c.ls.lambda_l);
            detail::read_field(b, "lambda_s", c.ls.lambda_s);
            detail::read_field(b, "iters", c.ls.iters);
        }
        if (j.contains("generator")) {
            const json& b = j.at("generator");
            detail::read_field(b, "k", c.generator.k);
            detail::read_field(b, "depth", c.generator.depth);
            detail::read_field(b, "base_channels", c.generator.base_channels);
            detail::read_field(b, "activation", c.generator.activation);
            detail::read_field(b, "upsample", c.generator.upsample);
        }
        if (j.contains("fit")) {
            const json& b = j.at("fit");
            detail::read_field(b, "lambda", c.fit.lambda);
            detail::read_field(b, "iters", c.fit.iters);
            detail::read_field(b, "lr", c.fit.lr);
            detail::read_field(b, "lr_codes", c.fit.lr_codes);
            detail::read_field(b, "code_init_scale", c.fit.code_init_scale);
            detail::read_field(b, "prox_on_codes", c.fit.prox_on_codes);
            detail::read_field(b, "epsilon_smooth", c.fit.epsilon_smooth);
            if (b.contains("seed")) c.fit_seed = b.at("seed").get<std::uint64_t>();
        }
        if (j.contains("grid"))
            c.grid = j.at("grid").get<std::map<std::string, std::vector<double>>>();
        detail::read_field(j, "output_dir", c.output_dir);
        detail::read_field(j, "input_container", c.input_container);
        detail::read_field(j, "error_map_amplification", c.error_map_amplification);
        detail::read_field(j, "error_map_frame", c.error_map_frame);
        detail::read_field(j, "checkpoint_every", c.checkpoint_every);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

// Resolved-config echo; this is what reports embed and reruns compare.
inline json config_echo(const ExperimentConfig& c) {
    json j;
    j["study"] = c.study;
    j["size"] = c.size;
    j["frames"] = c.frames;
    j["acceleration"] = c.acceleration;
    if (c.snr_db) j["snr_db"] = *c.snr_db;
    j["seed"] = c.seed;
    j["n_coils"] = c.n_coils;
    j["mask_type"] = c.resolved_mask_type();
    j["acs"] = c.acs;
    j["density_power"] = c.density_power;
    j["rotation_deg"] = c.rotation_deg;
    j["shift_px"] = c.shift_px;
    j["methods"] = c.methods;
    j["cs"] = {{"lambda_w", c.cs.lambda_w},
               {"iters", c.cs.iters},
               {"wavelet_levels", c.cs.wavelet_levels}};
    j["ls"] = {{"lambda_l", c.ls.lambda_l},
               {"lambda_s", c.ls.lambda_s},
               {"iters", c.ls.iters}};
    j["generator"] = {{"k", c.generator.k},
                      {"depth", c.generator.depth},
                      {"base_channels", c.generator.base_channels},
                      {"activation", c.generator.activation},
                      {"upsample", c.generator.upsample}};
    j["fit"] = {{"lambda", c.fit.lambda},
                {"iters", c.fit.iters},
                {"lr", c.fit.lr},
                {"lr_codes", c.fit.lr_codes},
                {"seed", c.resolved_fit_seed()},
                {"code_init_scale", c.fit.code_init_scale},
                {"prox_on_codes", c.fit.prox_on_codes},
                {"epsilon_smooth", c.fit.epsilon_smooth}};
    if (!c.grid.empty()) j["grid"] = c.grid;
    j["output_dir"] = c.output_dir;
    if (!c.input_container.empty()) j["input_container"] = c.input_container;
    j["error_map_amplification"] = c.error_map_amplification;
    j["error_map_frame"] = c.error_map_frame;
    j["checkpoint_every"] = c.checkpoint_every;
    return j;
}

// ---------------------------------------------------------------------------
// study construction
// ---------------------------------------------------------------------------

inline ImageSeries build_truth(const ExperimentConfig& c) {
    if (c.study == "external_lge")
        throw ConfigError("build_truth: external_lge has no simulated ground truth");
    const ImageSeries base = phantom::shepp_logan(c.size);
    phantom::MotionSpec spec;
    spec.seed = c.motion_seed();
    if (c.study == "shepp_rotation" || c.study == "shepp_both")
        spec.rotation_deg_max = c.rotation_deg;
    if (c.study == "shepp_translation" || c.study == "shepp_both")
        spec.shift_px_max = c.shift_px;
    return phantom::make_motion_series(base, c.frames, spec);
}

inline MaskSeries build_mask(const ExperimentConfig& c, int n_pe, int frames) {
    sampling::MaskParams p;
    p.n_pe = n_pe;
    p.frames = frames;
    p.acceleration = c.acceleration;
    p.acs = c.acs;
    p.density_power = c.density_power;
    p.seed = c.mask_seed();
    return c.resolved_mask_type() == "gro" ? sampling::gro_mask(p)
                                           : sampling::vd_random_mask(p);
}

struct StudyData {
    ImageSeries reference;  // simulated truth, or coil-combined full recon
    KSpaceDataset data;
};

// Retrospective undersampling of a fully sampled multicoil container: the
// coil-combined full recon becomes the reference and the samples are masked.
inline StudyData ingest_external(const ExperimentConfig& c) {
    const KSpaceDataset full = load_kspace(c.input_container);
    for (int t = 0; t < full.frames; ++t)
        if (full.mask.lines_on(t) != full.mask.n_pe)
            throw ConfigError("external_lge expects a fully sampled input container");

    StudyData s{ImageSeries(full.frames, full.height, full.width), KSpaceDataset{}};
    const mri::FrameOperator combine = mri::full_operator(full.sens);
    for (int t = 0; t < full.frames; ++t)
        combine.adjoint(full.frame(t), s.reference.frame(t));

    MaskSeries mask = build_mask(c, full.height, full.frames);
    KSpaceDataset masked(full.frames, full.coils, full.height, full.width,
                         std::move(mask), full.sens);
    masked.snr_db = full.snr_db;
    masked.seed = full.seed;
    for (int t = 0; t < masked.frames; ++t)
        for (int co = 0; co < masked.coils; ++co)
            for (int y = 0; y < masked.height; ++y) {
                if (!masked.mask.at(t, y)) continue;
                for (int x = 0; x < masked.width; ++x)
                    masked.at(t, co, y, x) = full.at(t, co, y, x);
            }
    s.data = std::move(masked);
    if (c.snr_db) s.data = mri::add_noise(s.data, *c.snr_db, c.noise_seed());
    s.data.validate();
    return s;
}

inline StudyData build_study_data(const ExperimentConfig& c) {
    if (c.study == "external_lge") return ingest_external(c);
    StudyData s{build_truth(c), KSpaceDataset{}};
    s.data = mri::simulate_kspace(s.reference, build_mask(c, c.size, c.frames),
                                  phantom::synth_coil_maps(c.n_coils, c.size, c.size));
    if (c.snr_db) s.data = mri::add_noise(s.data, *c.snr_db, c.noise_seed());
    return s;
}

// ---------------------------------------------------------------------------
// method execution
// ---------------------------------------------------------------------------

struct MethodResult {
    ImageSeries recon;
    std::optional<int> manifold_dim;
    std::vector<LossRecord> fit_trace;                 // neural methods
    std::vector<std::vector<double>> fista_traces;     // cs
};

inline neural::FitConfig fit_config_for(const ExperimentConfig& c,
                                        const std::string& method) {
    neural::FitConfig f = c.fit;
    f.seed = c.resolved_fit_seed();
    f.mode = neural::parse_fit_mode(method);
    if (f.mode != neural::FitMode::discus) f.lambda = 0.0;
    return f;
}

inline MethodResult run_method(const ExperimentConfig& c, const std::string& method,
                               const KSpaceDataset& data,
                               const fs::path& method_dir = {}) {
    MethodResult r;
    if (method == "cs") {
        r.recon = classical::cs_wavelet_recon(data, c.cs, &r.fista_traces);
    } else if (method == "ls") {
        r.recon = classical::ls_recon(data, c.ls).m;
    } else {
        neural::CheckpointSpec ckpt;
        if (c.checkpoint_every > 0 && !method_dir.empty()) {
            ckpt.every = c.checkpoint_every;
            ckpt.dir = method_dir / "checkpoints";
        }
        const neural::FitResult fit =
            neural::discus_fit(data, c.generator, fit_config_for(c, method), ckpt);
        r.recon = fit.recon;
        r.fit_trace = fit.loss_trace;
        if (fit_config_for(c, method).mode == neural::FitMode::discus)
            r.manifold_dim = fit.manifold_dim;
    }
    return r;
}

// ---------------------------------------------------------------------------
// artifacts
// ---------------------------------------------------------------------------

// |est - ref| of one frame, amplified and clipped at the reference maximum,
// rendered as an 8-bit binary PGM.
inline void write_error_map(const ImageSeries& est, const ImageSeries& ref, int frame,
                            double amplification, const fs::path& path) {
    if (frame < 0 || frame >= ref.frames) throw ConfigError("error map frame out of range");
    double ref_max = 0.0;
    for (const cd& v : ref.data) ref_max = std::max(ref_max, std::abs(v));
    if (ref_max == 0.0) throw ConfigError("error map: zero reference");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string());
    f << "P5\n" << ref.width << " " << ref.height << "\n255\n";
    const auto fe = est.frame(frame), fr = ref.frame(frame);
    for (std::size_t i = 0; i < fr.size(); ++i) {
        const double e = std::abs(fe[i] - fr[i]) * amplification / ref_max;
        const int px = static_cast<int>(std::lround(std::min(1.0, e) * 255.0));
        f.put(static_cast<char>(px));
    }
}

inline json json_finite(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? json("inf") : json("-inf");
}

inline json report_entry(const metrics::MetricReport& rep) {
    json j;
    j["nmse_db"] = json_finite(rep.nmse_db);
    j["ssim"] = rep.ssim;
    json pf = json::array();
    for (const auto& [n, s] : rep.per_frame) pf.push_back({json_finite(n), s});
    j["per_frame"] = pf;
    return j;
}

inline std::string format_table(const std::map<std::string, metrics::MetricReport>& reps,
                                const std::map<std::string, int>& dims) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "method" << std::right << std::setw(12)
       << "NMSE (dB)" << std::setw(10) << "SSIM" << std::setw(16) << "manifold_dim"
       << "\n";
    os << std::string(50, '-') << "\n";
    for (const auto& [name, rep] : reps) {
        os << std::left << std::setw(12) << name << std::right << std::setw(12)
           << std::fixed << std::setprecision(2) << rep.nmse_db << std::setw(10)
           << std::setprecision(4) << rep.ssim;
        auto it = dims.find(name);
        if (it != dims.end())
            os << std::setw(16) << it->second;
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// run_study / grid_search
// ---------------------------------------------------------------------------

inline std::map<std::string, metrics::MetricReport> run_study(
    const ExperimentConfig& c) {
    c.validate();
    const fs::path out(c.output_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output dir " + out.string());

    {
        std::ofstream f(out / "config.json", std::ios::trunc);
        f << config_echo(c).dump(2) << "\n";
    }

    const StudyData study = build_study_data(c);
    save_container(study.reference, out / "reference");
    save_container(study.data, out / "data");

    std::map<std::string, metrics::MetricReport> reports;
    std::map<std::string, int> dims;
    for (const std::string& method : c.methods) {
        const fs::path mdir = out / method;
        fs::create_directories(mdir);
        try {
            const MethodResult res = run_method(c, method, study.data, mdir);
            save_container(res.recon, mdir / "recon");
            write_error_map(res.recon, study.reference, c.error_map_frame,
                            c.error_map_amplification, mdir / "error_map.pgm");
            if (!res.fit_trace.empty()) {
                json tr = json::array();
                for (const LossRecord& r : res.fit_trace)
                    tr.push_back({r.iteration, r.data_term, r.penalty_term});
                std::ofstream f(mdir / "trace.json", std::ios::trunc);
                f << tr.dump() << "\n";
            }
            reports[method] = metrics::evaluate(res.recon, study.reference);
            if (res.manifold_dim) dims[method] = *res.manifold_dim;
        } catch (const DivergenceError& e) {
            // partial artifacts for post-mortem, then propagate
            json tr = json::array();
            for (const LossRecord& r : e.trace)
                tr.push_back({r.iteration, r.data_term, r.penalty_term});
            std::ofstream f(mdir / "trace_partial.json", std::ios::trunc);
            f << tr.dump() << "\n";
            throw;
        }
    }

    json report;
    report["config"] = config_echo(c);
    report["results"] = json::object();
    for (const auto& [name, rep] : reports) {
        report["results"][name] = report_entry(rep);
        if (dims.count(name)) report["results"][name]["manifold_dim"] = dims[name];
    }
    {
        std::ofstream f(out / "report.json", std::ios::trunc);
        f << report.dump(2) << "\n";
    }
    {
        std::ofstream f(out / "report.txt", std::ios::trunc);
        f << format_table(reports, dims);
    }
    return reports;
}

namespace detail {

inline void apply_grid_point(ExperimentConfig& c, const std::string& key, double value) {
    if (key == "cs.lambda_w") c.cs.lambda_w = value;
    else if (key == "cs.iters") c.cs.iters = static_cast<int>(value);
    else if (key == "cs.wavelet_levels") c.cs.wavelet_levels = static_cast<int>(value);
    else if (key == "ls.lambda_l") c.ls.lambda_l = value;
    else if (key == "ls.lambda_s") c.ls.lambda_s = value;
    else if (key == "ls.iters") c.ls.iters = static_cast<int>(value);
    else if (key == "fit.lambda") c.fit.lambda = value;
    else if (key == "fit.iters") c.fit.iters = static_cast<int>(value);
    else if (key == "fit.lr") c.fit.lr = value;
    else if (key == "fit.lr_codes") c.fit.lr_codes = value;
    else if (key == "fit.code_init_scale") c.fit.code_init_scale = value;
    else if (key == "generator.k") c.generator.k = static_cast<int>(value);
    else if (key == "generator.depth") c.generator.depth = static_cast<int>(value);
    else if (key == "generator.base_channels") c.generator.base_channels = static_cast<int>(value);
    else throw ConfigError("grid: unknown parameter " + key);
}

inline bool key_applies(const std::string& key, const std::string& method) {
    const bool neural = method == "dip" || method == "discus_gs" || method == "discus";
    if (key.rfind("cs.", 0) == 0) return method == "cs";
    if (key.rfind("ls.", 0) == 0) return method == "ls";
    if (key.rfind("fit.", 0) == 0 || key.rfind("generator.", 0) == 0) return neural;
    return false;
}

}  // namespace detail

struct GridPoint {
    std::map<std::string, double> values;
    double nmse_db = 0.0;
    double ssim = 0.0;
};

// Exhaustive Cartesian product over the method's grid keys, minimizing NMSE
// against the study reference. Returns the best point and writes a sorted
// leaderboard to <output_dir>/grid_<method>.json.
inline GridPoint grid_search(const ExperimentConfig& c, const std::string& method) {
    c.validate();
    std::vector<std::pair<std::string, std::vector<double>>> axes;
    for (const auto& [key, values] : c.grid) {
        if (!detail::key_applies(key, method)) continue;
        if (values.empty()) throw ConfigError("grid: empty value list for " + key);
        axes.emplace_back(key, values);
    }
    if (axes.empty()) throw ConfigError("grid: no parameters for method " + method);

    const StudyData study = build_study_data(c);

    std::vector<GridPoint> points;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
        ExperimentConfig point_cfg = c;
        GridPoint point;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            detail::apply_grid_point(point_cfg, axes[a].first, axes[a].second[idx[a]]);
            point.values[axes[a].first] = axes[a].second[idx[a]];
        }
        const MethodResult res = run_method(point_cfg, method, study.data);
        point.nmse_db = metrics::nmse_db(res.recon, study.reference);
        point.ssim = metrics::ssim(res.recon, study.reference);
        points.push_back(std::move(point));

        std::size_t a = 0;
        for (; a < axes.size(); ++a) {
            if (++idx[a] < axes[a].second.size()) break;
            idx[a] = 0;
        }
        if (a == axes.size()) break;
    }

    std::stable_sort(points.begin(), points.end(),
                     [](const GridPoint& a, const GridPoint& b) {
                         return a.nmse_db < b.nmse_db;
                     });

    const fs::path out(c.output_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    json leaderboard = json::array();
    for (const GridPoint& p : points)
        leaderboard.push_back({{"params", p.values},
                               {"nmse_db", json_finite(p.nmse_db)},
                               {"ssim", p.ssim}});
    std::ofstream f(out / ("grid_" + method + ".json"), std::ios::trunc);
    f << leaderboard.dump(2) << "\n";

    return points.front();
}

}  // namespace discus::experiments
