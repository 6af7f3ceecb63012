#include <catch_amalgamated.hpp>

#include <filesystem>

#include "discus/neural_recon.hpp"
#include "discus/phantom.hpp"
#include "discus/sampling.hpp"

using namespace discus;
using namespace discus::neural;

namespace {

KSpaceDataset tiny_dataset(int size, int t, std::uint64_t seed,
                           double rot = 2.0, double shift = 0.0) {
    const ImageSeries base = phantom::shepp_logan(size);
    const ImageSeries truth = phantom::make_motion_series(base, t, {rot, shift, seed});
    sampling::MaskParams mp;
    mp.n_pe = size;
    mp.frames = t;
    mp.acceleration = 2.0;
    mp.acs = 2;
    mp.seed = seed + 1;
    return mri::simulate_kspace(truth, sampling::vd_random_mask(mp),
                                phantom::synth_coil_maps(1, size, size));
}

GeneratorConfig tiny_gen() {
    GeneratorConfig g;
    g.k = 1;
    g.depth = 2;
    g.base_channels = 4;
    return g;
}

}  // namespace

TEST_CASE("generate is deterministic and correctly shaped") {
    GeneratorConfig gcfg = tiny_gen();
    Generator gen(gcfg, gcfg.k + 1);
    Rng rng(3);
    gen.net().init_params(rng);

    std::vector<double> z0(64 * 64), zt(64 * 64);
    Rng crng(4);
    for (auto& v : z0) v = crng.normal(0.0, 0.1);
    for (auto& v : zt) v = crng.normal(0.0, 0.1);

    const auto a = gen.generate(z0, zt, 64, 64);
    const auto b = gen.generate(z0, zt, 64, 64);
    REQUIRE(a.size() == 64 * 64);
    REQUIRE(a == b);
}

TEST_CASE("manifold_dim counts dominant columns") {
    CodeSet codes;
    codes.frames = 3;
    codes.height = 8;
    codes.width = 8;
    codes.z_dyn.assign(3 * 64, 0.0);

    SECTION("all zero codes have dimensionality 0") {
        REQUIRE(manifold_dim(codes, 0.05) == 0);
    }

    SECTION("single nonzero column") {
        codes.z_dyn[0 * 64 + 5] = 0.3;
        codes.z_dyn[1 * 64 + 5] = -0.1;
        REQUIRE(manifold_dim(codes, 0.05) == 1);
    }

    SECTION("norms 1.0 and 0.02 at rel threshold 0.05") {
        codes.z_dyn[0 * 64 + 2] = 1.0;
        codes.z_dyn[0 * 64 + 7] = 0.02;
        REQUIRE(manifold_dim(codes, 0.05) == 1);
        // and the small column counts once the threshold drops below it
        REQUIRE(manifold_dim(codes, 0.01) == 2);
    }
}

TEST_CASE("fit config invariants") {
    const KSpaceDataset data = tiny_dataset(16, 2, 31);
    FitConfig f;
    f.iters = 1;

    f.mode = FitMode::discus;
    f.lambda = 0.0;
    REQUIRE_THROWS_AS(discus_fit(data, tiny_gen(), f), ConfigError);

    f.mode = FitMode::dip;
    f.lambda = 0.5;
    REQUIRE_THROWS_AS(discus_fit(data, tiny_gen(), f), ConfigError);
}

TEST_CASE("discus_fit reproducibility and trace length") {
    const KSpaceDataset data = tiny_dataset(16, 3, 41);
    FitConfig f;
    f.mode = FitMode::discus;
    f.lambda = 0.05;
    f.iters = 12;
    f.lr = 1e-3;
    f.lr_codes = 1e-2;
    f.seed = 7;

    const FitResult a = discus_fit(data, tiny_gen(), f);
    const FitResult b = discus_fit(data, tiny_gen(), f);
    REQUIRE(a.loss_trace.size() == 12);
    REQUIRE(b.loss_trace.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        REQUIRE(a.loss_trace[i].iteration == static_cast<int>(i));
        REQUIRE(a.loss_trace[i].data_term == b.loss_trace[i].data_term);
        REQUIRE(a.loss_trace[i].penalty_term == b.loss_trace[i].penalty_term);
    }
    REQUIRE(a.recon.data == b.recon.data);
    REQUIRE(a.codes.z_dyn == b.codes.z_dyn);
}

TEST_CASE("prox path produces exact zeros in the dynamic codes") {
    const KSpaceDataset data = tiny_dataset(16, 3, 43);
    FitConfig f;
    f.mode = FitMode::discus;
    f.lambda = 3.0;  // strong penalty so plenty of columns die
    f.iters = 60;
    f.lr = 1e-3;
    f.lr_codes = 1e-2;
    f.seed = 5;

    const FitResult res = discus_fit(data, tiny_gen(), f);
    const std::size_t n = res.codes.positions();
    int exact_zero_columns = 0;
    for (std::size_t j = 0; j < n; ++j) {
        bool all_zero = true;
        for (int t = 0; t < res.codes.frames; ++t)
            all_zero = all_zero && res.codes.z_dyn[t * n + j] == 0.0;
        exact_zero_columns += all_zero ? 1 : 0;
    }
    REQUIRE(exact_zero_columns > 0);
    // support count is consistent with the zero structure
    int nonzero_columns = static_cast<int>(n) - exact_zero_columns;
    REQUIRE(res.manifold_dim <= nonzero_columns);
}

TEST_CASE("gigantic lambda collapses the codes and freezes the frames") {
    const KSpaceDataset data = tiny_dataset(16, 3, 47);
    FitConfig f;
    f.mode = FitMode::discus;
    f.lambda = 1e6;
    f.iters = 10;
    f.lr = 1e-3;
    f.lr_codes = 1e-2;
    f.seed = 9;

    const FitResult res = discus_fit(data, tiny_gen(), f);
    for (double v : res.codes.z_dyn) REQUIRE(v == 0.0);
    REQUIRE(res.manifold_dim == 0);
    // identical inputs per frame mean identical outputs
    for (int t = 1; t < 3; ++t)
        REQUIRE(std::equal(res.recon.frame(t).begin(), res.recon.frame(t).end(),
                           res.recon.frame(0).begin()));
}

TEST_CASE("dip mode runs without a static code") {
    const KSpaceDataset data = tiny_dataset(16, 2, 53);
    FitConfig f;
    f.mode = FitMode::dip;
    f.lambda = 0.0;
    f.iters = 8;
    f.seed = 3;
    const FitResult res = discus_fit(data, tiny_gen(), f);
    REQUIRE(res.codes.z0.empty());
    REQUIRE(res.codes.k == 0);
    REQUIRE(res.loss_trace.size() == 8);
    REQUIRE(res.manifold_dim == 0);
}

TEST_CASE("discus objective at the discus solution beats the discus_gs solution") {
    const KSpaceDataset data = tiny_dataset(16, 3, 59);
    GeneratorConfig g = tiny_gen();

    FitConfig fd;
    fd.mode = FitMode::discus;
    fd.lambda = 0.5;
    fd.iters = 150;
    fd.lr = 2e-3;
    fd.lr_codes = 1e-2;
    fd.seed = 11;

    FitConfig fg = fd;
    fg.mode = FitMode::discus_gs;
    fg.lambda = 0.0;

    const FitResult rd = discus_fit(data, g, fd);
    const FitResult rg = discus_fit(data, g, fg);

    auto objective = [&](const FitResult& r) {
        return r.loss_trace.back().data_term +
               fd.lambda * prox::group_l21<double>(r.codes.z_dyn, r.codes.frames,
                                                   r.codes.positions());
    };
    REQUIRE(objective(rd) <= objective(rg));
}

TEST_CASE("smoothed penalty path runs and reports the smoothed value") {
    const KSpaceDataset data = tiny_dataset(16, 2, 61);
    FitConfig f;
    f.mode = FitMode::discus;
    f.lambda = 0.2;
    f.iters = 6;
    f.prox_on_codes = false;
    f.seed = 2;
    const FitResult res = discus_fit(data, tiny_gen(), f);
    for (const LossRecord& r : res.loss_trace) {
        REQUIRE(std::isfinite(r.data_term));
        REQUIRE(r.penalty_term > 0.0);
    }
}

TEST_CASE("checkpoints roundtrip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "discus_tests" / "ckpt";
    fs::remove_all(dir);

    const KSpaceDataset data = tiny_dataset(16, 2, 67);
    FitConfig f;
    f.mode = FitMode::discus;
    f.lambda = 0.1;
    f.iters = 9;
    f.seed = 13;
    CheckpointSpec ckpt{4, dir};
    const FitResult res = discus_fit(data, tiny_gen(), f, ckpt);

    REQUIRE(fs::exists(dir / "iter_4" / "meta.json"));
    REQUIRE(fs::exists(dir / "iter_8" / "meta.json"));
    const Checkpoint c = load_checkpoint(dir / "iter_8");
    REQUIRE(c.iteration == 8);
    REQUIRE(c.codes.frames == 2);
    REQUIRE(c.codes.k == 1);
    REQUIRE(c.codes.z_dyn.size() == 2 * 16 * 16);
    REQUIRE(c.loss_trace.size() == 8);
    REQUIRE(c.weights.size() == res.generator.net().n_params());
    REQUIRE(c.config["mode"] == "discus");
}

TEST_CASE("recon can be regenerated from the fitted weights and codes") {
    const KSpaceDataset data = tiny_dataset(16, 2, 71);
    FitConfig f;
    f.mode = FitMode::discus_gs;
    f.lambda = 0.0;
    f.iters = 5;
    f.seed = 17;
    const FitResult res = discus_fit(data, tiny_gen(), f);

    const std::size_t plane = res.codes.positions();
    for (int t = 0; t < 2; ++t) {
        const std::vector<double> zt(res.codes.z_dyn.begin() + t * plane,
                                     res.codes.z_dyn.begin() + (t + 1) * plane);
        const auto frame = res.generator.generate(res.codes.z0, zt, 16, 16);
        const auto want = res.recon.frame(t);
        for (std::size_t i = 0; i < plane; ++i)
            REQUIRE(std::abs(frame[i] - want[i]) < 1e-6);
    }
}
