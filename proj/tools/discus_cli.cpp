// Command-line front end: phantom/mask/simulate generate containers, recon
// runs one method, eval compares containers, report runs a whole study, grid
// searches hyperparameters. Exit codes: 0 success, 1 config error, 2
// numerical divergence.

#include <CLI11.hpp>

#include <iostream>

#include "discus/experiments.hpp"

using namespace discus;
namespace fs = std::filesystem;

namespace {

experiments::ExperimentConfig make_config(const std::string& config_path,
                                          const std::uint64_t* seed_override,
                                          const std::string& out_override) {
    experiments::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = experiments::load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (!out_override.empty()) cfg.output_dir = out_override;
    cfg.validate();
    return cfg;
}

int run(int argc, char** argv) {
    CLI::App app{"self-supervised dynamic MRI reconstruction toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::uint64_t seed_value = 0;
    app.add_option("--config", config_path, "JSON experiment config");
    app.add_option("--out", out_override, "output directory override");
    auto* seed_opt = app.add_option("--seed", seed_value, "master seed override");

    auto* cmd_phantom =
        app.add_subcommand("phantom", "write the study ground-truth image container");
    auto* cmd_mask = app.add_subcommand("mask", "write the sampling mask container");
    auto* cmd_simulate =
        app.add_subcommand("simulate", "simulate k-space for the configured study");
    auto* cmd_recon = app.add_subcommand("recon", "reconstruct one method");
    std::string method = "cs";
    std::string data_path;
    cmd_recon->add_option("--method", method, "cs|ls|dip|discus_gs|discus")->required();
    cmd_recon->add_option("--data", data_path, "k-space container (default <out>/data)");
    auto* cmd_eval = app.add_subcommand("eval", "metrics between two image containers");
    std::string est_path, ref_path;
    cmd_eval->add_option("--est", est_path, "estimate container")->required();
    cmd_eval->add_option("--ref", ref_path, "reference container")->required();
    auto* cmd_report =
        app.add_subcommand("report", "run the full study and write reports");
    auto* cmd_grid = app.add_subcommand("grid", "hyperparameter grid search");
    std::string grid_method;
    cmd_grid->add_option("--method", grid_method, "method to tune")->required();

    CLI11_PARSE(app, argc, argv);

    const std::uint64_t* seed_override = seed_opt->count() ? &seed_value : nullptr;
    const auto cfg = make_config(config_path, seed_override, out_override);
    const fs::path out(cfg.output_dir);

    if (cmd_phantom->parsed()) {
        save_container(experiments::build_truth(cfg), out / "truth");
        std::cout << "wrote " << (out / "truth").string() << "\n";
    } else if (cmd_mask->parsed()) {
        int n_pe = cfg.size, frames = cfg.frames;
        if (cfg.study == "external_lge") {
            const KSpaceDataset full = load_kspace(cfg.input_container);
            n_pe = full.height;
            frames = full.frames;
        }
        save_container(experiments::build_mask(cfg, n_pe, frames), out / "mask");
        std::cout << "wrote " << (out / "mask").string() << "\n";
    } else if (cmd_simulate->parsed()) {
        const auto study = experiments::build_study_data(cfg);
        save_container(study.reference, out / "reference");
        save_container(study.data, out / "data");
        std::cout << "wrote " << (out / "reference").string() << " and "
                  << (out / "data").string() << "\n";
    } else if (cmd_recon->parsed()) {
        const fs::path data_dir = data_path.empty() ? out / "data" : fs::path(data_path);
        const KSpaceDataset data = load_kspace(data_dir);
        const fs::path mdir = out / method;
        fs::create_directories(mdir);
        const auto res = experiments::run_method(cfg, method, data, mdir);
        save_container(res.recon, mdir / "recon");
        if (res.manifold_dim)
            std::cout << "manifold_dim " << *res.manifold_dim << "\n";
        std::cout << "wrote " << (mdir / "recon").string() << "\n";
    } else if (cmd_eval->parsed()) {
        const ImageSeries est = load_image_series(est_path);
        const ImageSeries ref = load_image_series(ref_path);
        const auto rep = metrics::evaluate(est, ref);
        std::cout << experiments::report_entry(rep).dump(2) << "\n";
    } else if (cmd_report->parsed()) {
        experiments::run_study(cfg);
        std::ifstream table(out / "report.txt");
        std::cout << table.rdbuf();
        std::cout << "report written to " << (out / "report.json").string() << "\n";
    } else if (cmd_grid->parsed()) {
        const auto best = experiments::grid_search(cfg, grid_method);
        nlohmann::json j;
        j["params"] = best.values;
        j["nmse_db"] = experiments::json_finite(best.nmse_db);
        j["ssim"] = best.ssim;
        std::cout << j.dump(2) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
