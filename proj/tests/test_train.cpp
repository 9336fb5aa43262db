#include "cardiorecon/train.hpp"

#include <fstream>
#include <sstream>

#include "doctest.h"

#include "cardiorecon/losses.hpp"
#include "test_support.hpp"

using namespace cardiorecon;
using cardiorecon::testing::make_tiny_manifest;
using cardiorecon::testing::scratch_dir;
using cardiorecon::testing::slurp;

namespace {

ModelConfig tiny_model(Variant variant, std::vector<ViewLabel> views) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.views = std::move(views);
    cfg.latent_dim = 6;
    cfg.view_embed_dim = variant == Variant::TLNET ? 6 : 5;
    cfg.volume_dim = 16;
    cfg.volume_embed_dim = 24;
    cfg.channels = {8, 16};
    return cfg;
}

TrainConfig quick_train(int iters, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.learning_rate = 2e-3;
    cfg.batch_size = 2;
    cfg.max_iterations = iters;
    cfg.val_interval = 10;
    cfg.patience = 50;
    cfg.seed = seed;
    cfg.augment = false;
    return cfg;
}

std::vector<std::string> log_lines(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("train config validation and json roundtrip") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());

    auto bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.augmentation.morph_prob = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.augmentation.morph_radius_max = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    cfg.recon_loss = ReconLoss::CrossEntropy;
    cfg.seed = 99;
    const auto back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.recon_loss == ReconLoss::CrossEntropy);
    CHECK(back.seed == 99);
    CHECK(back.digest() == cfg.digest());
    CHECK(back.digest() != TrainConfig{}.digest());
}

TEST_CASE("augmentation is deterministic and honors the identity config") {
    const auto base =
        sample_phantom(11, ParamRanges{}, {48, 48, 48}, spacing_for_dim(48)).first;

    AugmentConfig cfg;
    Rng a(123), b(123);
    const auto va = augment(base, a, cfg);
    const auto vb = augment(base, b, cfg);
    CHECK(va == vb);

    AugmentConfig identity;
    identity.rotation_sigma_deg = 0.0;
    identity.morph_prob = 0.0;
    Rng c(5);
    CHECK(augment(base, c, identity) == base);
}

TEST_CASE("augmentation keeps phantoms binary and nonempty under fuzz") {
    ParamRanges ranges;
    AugmentConfig cfg;
    Rng rng(2024);
    int changed = 0;
    // ten base phantoms, one hundred augmentation draws each
    std::vector<Volume3D> bases;
    for (int p = 0; p < 10; ++p) {
        bases.push_back(
            sample_phantom(300 + p, ranges, {48, 48, 48}, spacing_for_dim(48)).first);
    }
    for (int i = 0; i < 1000; ++i) {
        Rng draw = rng.fork(static_cast<std::uint64_t>(i));
        const auto out = augment(bases[static_cast<std::size_t>(i) / 100], draw, cfg);
        REQUIRE(out.has_foreground());
        for (auto v : out.voxels()) REQUIRE(v <= 1);
        if (!(out == bases[static_cast<std::size_t>(i) / 100])) ++changed;
    }
    CHECK(changed > 900);  // rotations almost always move something
}

TEST_CASE("augmentation falls back to the input when morphology empties it") {
    Volume3D speck({16, 16, 16}, kDefaultSpacingMm);
    speck.set(8, 8, 8, 1);
    AugmentConfig cfg;
    cfg.rotation_sigma_deg = 0.0;
    cfg.morph_prob = 1.0;
    cfg.morph_radius_min = 3;
    cfg.morph_radius_max = 3;
    // opening with radius 3 erases a single voxel; fallback must kick in
    bool saw_open = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const auto out = augment(speck, rng, cfg);
        REQUIRE(out.has_foreground());
        if (out == speck) saw_open = true;
    }
    CHECK(saw_open);
}

TEST_CASE("mini training run learns and checkpoints") {
    const auto dir = scratch_dir("train_mini");
    const auto manifest = make_tiny_manifest(dir / "data", 16, 3, 1, 1);

    auto result = train(tiny_model(Variant::CVAE, {ViewLabel::LA1}), quick_train(60, 7),
                        manifest, dir / "run", {.quiet = true});

    CHECK(std::filesystem::exists(result.best_checkpoint));
    CHECK(std::filesystem::exists(result.latest_checkpoint));
    CHECK(std::filesystem::exists(result.log_path));
    CHECK(result.iterations_run == 60);

    const auto lines = log_lines(result.log_path);
    REQUIRE(lines.size() == 60);
    const auto first = nlohmann::json::parse(lines.front());
    const auto last = nlohmann::json::parse(lines.back());
    CHECK(first.at("iter").get<int>() == 0);
    CHECK(last.at("iter").get<int>() == 59);
    // learning happened
    CHECK(last.at("total").get<double>() < first.at("total").get<double>());
    // log record identity: total = -dice + alpha*kl + match
    const double recon = -last.at("dice_term").get<double>() + last.at("kl_term").get<double>() +
                         last.at("match_term").get<double>();
    CHECK(last.at("total").get<double>() == doctest::Approx(recon).epsilon(1e-12));

    // checkpoint sidecar records the config
    auto loaded = load_checkpoint(result.best_checkpoint);
    CHECK(loaded.config.display_name() == "CVAE_1");
    CHECK(loaded.meta.at("train_config_digest").get<std::string>() == quick_train(60, 7).digest());
}

TEST_CASE("validation loss is deterministic and improves with training") {
    const auto dir = scratch_dir("train_val");
    const auto manifest = make_tiny_manifest(dir / "data", 16, 3, 2, 1);
    const auto mcfg = tiny_model(Variant::CVAE, {ViewLabel::LA1, ViewLabel::SA});
    const auto tcfg = quick_train(50, 3);

    torch::manual_seed(tcfg.seed);
    ReconNet fresh(mcfg);
    const double v1 = validation_loss(fresh, tcfg, manifest, Split::Val);
    const double v2 = validation_loss(fresh, tcfg, manifest, Split::Val);
    CHECK(v1 == v2);
    CHECK(std::isfinite(v1));

    auto result = train(mcfg, tcfg, manifest, dir / "run", {.quiet = true});
    auto trained = load_checkpoint(result.best_checkpoint);
    const double after = validation_loss(trained.model, tcfg, manifest, Split::Val);
    CHECK(after < v1);
    CHECK(after == doctest::Approx(result.best_val_loss).epsilon(1e-9));
}

TEST_CASE("vae variant trains without views and validates finitely") {
    const auto dir = scratch_dir("train_vae");
    const auto manifest = make_tiny_manifest(dir / "data", 16, 2, 1, 1);
    auto result =
        train(tiny_model(Variant::VAE, {}), quick_train(20, 1), manifest, dir / "run", {.quiet = true});
    CHECK(std::isfinite(result.best_val_loss));
    auto loaded = load_checkpoint(result.best_checkpoint);
    CHECK(loaded.config.display_name() == "VAE_0");
}

TEST_CASE("tlnet training logs a match term") {
    const auto dir = scratch_dir("train_tl");
    const auto manifest = make_tiny_manifest(dir / "data", 16, 2, 1, 1);
    auto result = train(tiny_model(Variant::TLNET, {ViewLabel::LA1}), quick_train(15, 2), manifest,
                        dir / "run", {.quiet = true});
    const auto lines = log_lines(result.log_path);
    REQUIRE(!lines.empty());
    const auto rec = nlohmann::json::parse(lines.front());
    CHECK(rec.at("match_term").get<double>() > 0.0);
    CHECK(rec.at("kl_term").get<double>() == 0.0);
}

TEST_CASE("resuming replays the same training trajectory bitwise") {
    const auto data_dir = scratch_dir("train_resume_data");
    const auto manifest = make_tiny_manifest(data_dir, 16, 3, 1, 1);
    const auto mcfg = tiny_model(Variant::CVAE, {ViewLabel::LA1});
    const auto tcfg_full = quick_train(20, 13);
    auto tcfg_half = tcfg_full;
    tcfg_half.max_iterations = 10;

    // one uninterrupted run
    const auto run_a = scratch_dir("train_resume_a");
    train(mcfg, tcfg_full, manifest, run_a, {.quiet = true});
    const auto lines_a = log_lines(run_a / "train_log.jsonl");
    REQUIRE(lines_a.size() == 20);

    // the same run interrupted at iteration 10 and resumed to the full cap
    const auto run_b = scratch_dir("train_resume_b");
    train(mcfg, tcfg_half, manifest, run_b, {.quiet = true});
    REQUIRE(log_lines(run_b / "train_log.jsonl").size() == 10);
    auto resumed = train(mcfg, tcfg_full, manifest, run_b, {.resume = true, .quiet = true});
    CHECK(resumed.iterations_run == 20);

    const auto lines_b = log_lines(run_b / "train_log.jsonl");
    REQUIRE(lines_b.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) CHECK(lines_a[i] == lines_b[i]);

    // resuming a finished run is a no-op and appends nothing
    auto noop = train(mcfg, tcfg_full, manifest, run_b, {.resume = true, .quiet = true});
    CHECK(noop.iterations_run == 20);
    CHECK(log_lines(run_b / "train_log.jsonl").size() == 20);

    // resume requires matching trajectory parameters
    auto drifted = tcfg_full;
    drifted.learning_rate *= 2.0;
    CHECK_THROWS_AS(train(mcfg, drifted, manifest, run_b, {.resume = true, .quiet = true}),
                    ConfigError);
    // and refuses to start from nothing
    CHECK_THROWS_AS(train(mcfg, tcfg_full, manifest, scratch_dir("train_resume_empty"),
                          {.resume = true, .quiet = true}),
                    StateError);
}

TEST_CASE("non-finite loss aborts with a diagnostic dump") {
    const auto dir = scratch_dir("train_blowup");
    const auto manifest = make_tiny_manifest(dir / "data", 16, 2, 1, 1);
    auto tcfg = quick_train(40, 5);
    tcfg.learning_rate = 1e14;  // guaranteed overflow through exp(log_var)
    CHECK_THROWS_AS(train(tiny_model(Variant::VAE, {}), tcfg, manifest, dir / "run", {.quiet = true}),
                    StateError);
    CHECK(std::filesystem::exists(dir / "run" / "diagnostic_abort.json"));
}

TEST_CASE("dataset dims must match the model grid") {
    const auto dir = scratch_dir("train_dims");
    const auto manifest = make_tiny_manifest(dir / "data", 16, 2, 1, 1);
    auto mcfg = tiny_model(Variant::CVAE, {ViewLabel::LA1});
    mcfg.volume_dim = 32;
    CHECK_THROWS_AS(train(mcfg, quick_train(5, 1), manifest, dir / "run", {.quiet = true}),
                    ConfigError);
}

TEST_CASE("view autoencoder pretraining exports loadable weights") {
    const auto dir = scratch_dir("train_pretrain");
    const auto manifest = make_tiny_manifest(dir / "data", 16, 3, 1, 1);
    auto mcfg = tiny_model(Variant::PCVAE, {ViewLabel::LA1, ViewLabel::LA2, ViewLabel::SA});
    auto tcfg = quick_train(30, 4);

    const auto weights = pretrain_view_autoencoder(mcfg, tcfg, manifest, dir / "ae", true);
    CHECK(std::filesystem::exists(weights));
    CHECK(std::filesystem::exists(weights.string() + ".json"));

    torch::manual_seed(1);
    ReconNet model(mcfg);
    const auto before = model->view_encoder->parameters().front().clone();
    CHECK_NOTHROW(load_pretrained_view_encoder(model, weights));
    const auto after = model->view_encoder->parameters().front();
    CHECK_FALSE(torch::equal(before, after));

    // shape mismatch is rejected via the sidecar
    auto narrow = mcfg;
    narrow.views = {ViewLabel::LA1};
    torch::manual_seed(2);
    ReconNet other(narrow);
    CHECK_THROWS_AS(load_pretrained_view_encoder(other, weights), ConfigError);

    // training accepts the pretrained encoder
    auto result = train(mcfg, quick_train(10, 6), manifest, dir / "run",
                        {.pretrained_view_encoder = weights, .quiet = true});
    CHECK(std::filesystem::exists(result.best_checkpoint));
}
