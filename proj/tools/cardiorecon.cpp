// cardiorecon: command-line front end for phantom generation, training,
// evaluation, confidence mapping and pairwise model comparison.
//
// Exit codes: 0 success, 2 usage error, 3 configuration error, 1 anything
// else. All failures print exactly one line: "error: <category>: <message>".

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cardiorecon/evaluate.hpp"
#include "cardiorecon/geometry.hpp"
#include "cardiorecon/metrics.hpp"
#include "cardiorecon/models.hpp"
#include "cardiorecon/phantom.hpp"
#include "cardiorecon/train.hpp"
#include "cardiorecon/uncertainty.hpp"

namespace {

using namespace cardiorecon;

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
    try {
        std::size_t used = 0;
        const auto value = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return value;
    } catch (const std::exception&) {
        throw ConfigError("bad seed from " + source + ": '" + text + "'");
    }
}

/// --seed wins; CARDIORECON_SEED is the fallback; otherwise `fallback`.
std::uint64_t resolve_seed(const CLI::Option* seed_opt, std::uint64_t flag_value,
                           std::uint64_t fallback) {
    if (seed_opt->count() > 0) return flag_value;
    if (const char* env = std::getenv("CARDIORECON_SEED")) {
        return parse_seed(env, "CARDIORECON_SEED");
    }
    return fallback;
}

std::vector<ViewLabel> parse_views(const std::string& csv) {
    std::vector<ViewLabel> labels;
    std::stringstream ss(csv);
    std::string item;
    try {
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) labels.push_back(view_label_from_string(item));
        }
        if (labels.empty()) throw ConfigError("no views given");
        return canonical_view_labels(labels);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError("bad --views '" + csv + "': " + e.what());
    }
}

std::vector<int> parse_channels(const std::string& csv) {
    std::vector<int> channels;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            channels.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("bad channel list: '" + csv + "'");
        }
    }
    return channels;
}

nlohmann::json load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file: " + path);
    try {
        nlohmann::json j;
        f >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config file " + path + ": " + e.what());
    }
}

/// Shared --config/--seed plus every training hyperparameter flag.
struct TrainFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    int iters = 0;
    double lr = 0.0;
    int batch_size = 0;
    int val_interval = 0;
    int patience = 0;
    double alpha = -1.0;
    std::string loss;
    bool no_augment = false;
    std::string channels;
    int latent = 0;
    int view_embed = 0;
    int volume_embed = 0;
    int pretrain_iters = 2000;

    CLI::Option* iters_opt = nullptr;
    CLI::Option* lr_opt = nullptr;
    CLI::Option* batch_opt = nullptr;
    CLI::Option* val_opt = nullptr;
    CLI::Option* patience_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* loss_opt = nullptr;
    CLI::Option* channels_opt = nullptr;
    CLI::Option* latent_opt = nullptr;
    CLI::Option* view_embed_opt = nullptr;
    CLI::Option* volume_embed_opt = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path,
                        "JSON config file with optional \"model\" and \"train\" sections");
        seed_opt = cmd->add_option("--seed", seed, "training seed");
        iters_opt = cmd->add_option("--iters", iters, "max optimization iterations");
        lr_opt = cmd->add_option("--lr", lr, "Adam learning rate");
        batch_opt = cmd->add_option("--batch-size", batch_size, "minibatch size");
        val_opt = cmd->add_option("--val-interval", val_interval, "iterations between validations");
        patience_opt = cmd->add_option("--patience", patience,
                                       "validation checks without improvement before stopping");
        alpha_opt = cmd->add_option("--alpha", alpha, "KL weight");
        loss_opt = cmd->add_option("--loss", loss, "reconstruction loss: dice or ce");
        cmd->add_flag("--no-augment", no_augment, "disable training augmentation");
        channels_opt = cmd->add_option("--channels", channels,
                                       "comma-separated conv channel schedule");
        latent_opt = cmd->add_option("--latent", latent, "latent dimensionality");
        view_embed_opt = cmd->add_option("--view-embed", view_embed, "view embedding size");
        volume_embed_opt =
            cmd->add_option("--volume-embed", volume_embed, "volume embedding size");
        cmd->add_option("--pretrain-iters", pretrain_iters,
                        "2D view-autoencoder iterations for pCVAE initialization");
    }

    /// Base configs come from the config file (or defaults); explicit flags win.
    std::pair<ModelConfig, TrainConfig> resolve(const DatasetManifest& manifest) const {
        ModelConfig mcfg;
        TrainConfig tcfg;
        if (!config_path.empty()) {
            const auto j = load_config_file(config_path);
            if (j.contains("model")) mcfg = ModelConfig::from_json(j.at("model"));
            if (j.contains("train")) tcfg = TrainConfig::from_json(j.at("train"));
        }
        mcfg.volume_dim = manifest.dims[0];
        tcfg.seed = resolve_seed(seed_opt, seed, tcfg.seed);
        if (iters_opt->count()) tcfg.max_iterations = iters;
        if (lr_opt->count()) tcfg.learning_rate = lr;
        if (batch_opt->count()) tcfg.batch_size = batch_size;
        if (val_opt->count()) tcfg.val_interval = val_interval;
        if (patience_opt->count()) tcfg.patience = patience;
        if (alpha_opt->count()) tcfg.alpha = alpha;
        if (loss_opt->count()) tcfg.recon_loss = recon_loss_from_string(loss);
        if (no_augment) tcfg.augment = false;
        if (channels_opt->count()) mcfg.channels = parse_channels(channels);
        if (latent_opt->count()) mcfg.latent_dim = latent;
        if (view_embed_opt->count()) mcfg.view_embed_dim = view_embed;
        if (volume_embed_opt->count()) mcfg.volume_embed_dim = volume_embed;
        mcfg.alpha = tcfg.alpha;
        return {mcfg, tcfg};
    }
};

DatasetManifest load_manifest(const std::string& data) {
    auto path = std::filesystem::path(data);
    if (std::filesystem::is_directory(path)) path /= "manifest.json";
    return DatasetManifest::load(path);
}

void run_one_training(ModelConfig mcfg, const TrainConfig& tcfg, const DatasetManifest& manifest,
                      const std::filesystem::path& out_dir, bool resume,
                      const std::string& pretrained, int pretrain_iters, bool quiet) {
    mcfg.validate();
    tcfg.validate();
    TrainOptions options;
    options.resume = resume;
    options.quiet = quiet;
    if (mcfg.variant == Variant::PCVAE && pretrained.empty()) {
        // self-contained pCVAE: pretrain the 2D view autoencoder first
        auto pre_cfg = tcfg;
        pre_cfg.max_iterations = pretrain_iters;
        options.pretrained_view_encoder =
            pretrain_view_autoencoder(mcfg, pre_cfg, manifest, out_dir / "view_ae", quiet);
    } else if (!pretrained.empty()) {
        options.pretrained_view_encoder = pretrained;
    }
    const auto result = train(mcfg, tcfg, manifest, out_dir, options);
    std::cout << mcfg.display_name() << ": best val loss " << result.best_val_loss << " after "
              << result.iterations_run << " iterations -> " << result.best_checkpoint.string()
              << '\n';
}

int run(int argc, char** argv) {
    CLI::App app{"3D shape reconstruction from orthogonal 2D views"};
    app.require_subcommand(1);

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "generate a synthetic phantom dataset");
    std::string gen_out;
    int n_train = 300, n_val = 50, n_test = 100, gen_dim = 80;
    std::uint64_t gen_seed = 0;
    bool gen_overwrite = false;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n-train", n_train, "training subjects");
    gen->add_option("--n-val", n_val, "validation subjects");
    gen->add_option("--n-test", n_test, "test subjects");
    gen->add_option("--dim", gen_dim, "cubic grid edge length");
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_flag("--overwrite", gen_overwrite, "replace an existing dataset");
    gen->callback([&] {
        BuildDatasetOptions options;
        options.dim = gen_dim;
        options.overwrite = gen_overwrite;
        const auto seed = resolve_seed(gen_seed_opt, gen_seed, 0);
        const auto manifest = build_dataset(n_train, n_val, n_test, seed, gen_out, options);
        std::cout << "wrote " << manifest.entries.size() << " volumes under " << gen_out << '\n';
    });

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train one model variant");
    std::string tr_data, tr_out, tr_variant = "cvae", tr_views = "la1,la2,sa", tr_pretrained;
    bool tr_resume = false, tr_quiet = false;
    TrainFlags tr_flags;
    tr->add_option("--data", tr_data, "dataset directory or manifest path")->required();
    tr->add_option("--out", tr_out, "run output directory")->required();
    auto* tr_variant_opt = tr->add_option("--variant", tr_variant, "cvae | pcvae | tlnet | ae | vae");
    auto* tr_views_opt = tr->add_option("--views", tr_views, "comma-separated views, e.g. la1,la2,sa");
    tr->add_option("--pretrained-views", tr_pretrained, "pretrained 2D encoder parameters");
    tr->add_flag("--resume", tr_resume, "continue from the run directory's latest state");
    tr->add_flag("--quiet", tr_quiet, "suppress progress lines");
    tr_flags.attach(tr);
    tr->callback([&] {
        const auto manifest = load_manifest(tr_data);
        auto [mcfg, tcfg] = tr_flags.resolve(manifest);
        if (tr_variant_opt->count() || tr_flags.config_path.empty()) {
            mcfg.variant = variant_from_string(tr_variant);
        }
        if (mcfg.variant == Variant::AE || mcfg.variant == Variant::VAE) {
            // an explicit --views on an unconditioned variant is caught by validate()
            if (tr_views_opt->count()) mcfg.views = parse_views(tr_views);
            else mcfg.views.clear();
        } else if (tr_views_opt->count() || mcfg.views.empty()) {
            mcfg.views = parse_views(tr_views);
        }
        if (mcfg.variant == Variant::TLNET && !tr_flags.view_embed_opt->count()) {
            mcfg.view_embed_dim = mcfg.latent_dim;
        }
        run_one_training(mcfg, tcfg, manifest, tr_out, tr_resume, tr_pretrained,
                         tr_flags.pretrain_iters, tr_quiet);
    });

    // ---- train-all ----
    auto* ta = app.add_subcommand("train-all", "train the full ablation set");
    std::string ta_data, ta_out;
    bool ta_quiet = false;
    TrainFlags ta_flags;
    ta->add_option("--data", ta_data, "dataset directory or manifest path")->required();
    ta->add_option("--out", ta_out, "root output directory (one run per model)")->required();
    ta->add_flag("--quiet", ta_quiet, "suppress progress lines");
    ta_flags.attach(ta);
    ta->callback([&] {
        const auto manifest = load_manifest(ta_data);
        const auto [base_mcfg, tcfg] = ta_flags.resolve(manifest);
        struct Entry {
            Variant variant;
            std::vector<ViewLabel> views;
        };
        const std::vector<Entry> entries = {
            {Variant::VAE, {}},
            {Variant::CVAE, {ViewLabel::LA1}},
            {Variant::CVAE, {ViewLabel::LA1, ViewLabel::LA2}},
            {Variant::CVAE, {ViewLabel::LA1, ViewLabel::SA}},
            {Variant::CVAE, {ViewLabel::LA2, ViewLabel::SA}},
            {Variant::CVAE, {ViewLabel::LA1, ViewLabel::LA2, ViewLabel::SA}},
            {Variant::PCVAE, {ViewLabel::LA1, ViewLabel::LA2, ViewLabel::SA}},
            {Variant::TLNET, {ViewLabel::LA1, ViewLabel::LA2, ViewLabel::SA}},
            {Variant::AE, {}},
        };
        for (const auto& entry : entries) {
            auto mcfg = base_mcfg;
            mcfg.variant = entry.variant;
            mcfg.views = entry.views;
            if (mcfg.variant == Variant::TLNET && !ta_flags.view_embed_opt->count()) {
                mcfg.view_embed_dim = mcfg.latent_dim;
            }
            const auto out_dir = std::filesystem::path(ta_out) / mcfg.display_name();
            run_one_training(mcfg, tcfg, manifest, out_dir, false, "", ta_flags.pretrain_iters,
                             ta_quiet);
        }
    });

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "score checkpoints on a split and emit the report");
    std::string ev_data, ev_out, ev_split = "test", ev_metric = "dsc";
    std::vector<std::string> ev_checkpoints;
    ev->add_option("--data", ev_data, "dataset directory or manifest path")->required();
    ev->add_option("--out", ev_out, "report output directory")->required();
    ev->add_option("--split", ev_split, "train | val | test");
    ev->add_option("--metric", ev_metric, "metric used for pairwise comparisons");
    ev->add_option("checkpoints", ev_checkpoints, "checkpoint files to evaluate")->required();
    ev->callback([&] {
        const auto manifest = load_manifest(ev_data);
        Split split;
        if (ev_split == "train") {
            split = Split::Train;
        } else if (ev_split == "val") {
            split = Split::Val;
        } else if (ev_split == "test") {
            split = Split::Test;
        } else {
            throw ConfigError("unknown split: " + ev_split);
        }
        std::vector<SubjectMetrics> rows;
        for (const auto& ckpt : ev_checkpoints) {
            auto model_rows = evaluate_model(ckpt, manifest, split);
            rows.insert(rows.end(), model_rows.begin(), model_rows.end());
        }
        const auto report = build_report(rows, compare_models(rows, ev_metric));
        emit_report(report, ev_out);
        for (const auto& [model, metrics] : report.aggregate) {
            std::cout << model << ": dice " << metrics.at("dsc").mean * 100.0 << " +- "
                      << metrics.at("dsc").sem * 100.0 << '\n';
        }
    });

    // ---- uncertainty ----
    auto* un = app.add_subcommand("uncertainty",
                                  "confidence maps and overlay panels by prior sampling");
    std::string un_data, un_ckpt, un_out;
    std::vector<std::string> un_subjects;
    int un_n = 200;
    std::uint64_t un_seed = 0;
    bool un_all = false;
    un->add_option("--data", un_data, "dataset directory or manifest path")->required();
    un->add_option("--checkpoint", un_ckpt, "trained variational checkpoint")->required();
    un->add_option("--out", un_out, "output directory")->required();
    un->add_option("--subject", un_subjects, "subject id (repeatable; default: first test subject)");
    un->add_option("--n", un_n, "number of prior samples");
    auto* un_seed_opt = un->add_option("--seed", un_seed, "sampling seed");
    un->add_flag("--all-test", un_all, "process the whole test split");
    un->callback([&] {
        const auto manifest = load_manifest(un_data);
        auto ck = load_checkpoint(un_ckpt);
        const auto seed = resolve_seed(un_seed_opt, un_seed, 0);

        std::vector<std::string> subjects = un_subjects;
        if (un_all) {
            subjects = manifest.ids(Split::Test);
        } else if (subjects.empty()) {
            const auto& test_ids = manifest.ids(Split::Test);
            if (test_ids.empty()) throw ConfigError("test split is empty");
            subjects = {test_ids.front()};
        }

        nlohmann::ordered_json summary;
        summary["model"] = ck.config.display_name();
        summary["n_samples"] = un_n;
        summary["seed"] = seed;
        summary["subjects"] = nlohmann::ordered_json::array();
        for (const auto& id : subjects) {
            const auto gt = manifest.load_volume(id);
            const auto views = extract_views(gt);
            const auto map = confidence_map(ck.model, views, un_n, seed, manifest.spacing_mm);
            const auto recon = threshold(forward_test(ck.model, views, manifest.spacing_mm), 0.5);
            render_overlays(gt, recon, map, std::filesystem::path(un_out) / id);
            const auto planes = per_plane_uncertainty(map);
            summary["subjects"].push_back({{"subject_id", id},
                                           {"mean_voxel_variance", mean_voxel_variance(map)},
                                           {"plane_uncertainty",
                                            {{"la1", planes[0]}, {"la2", planes[1]},
                                             {"sa", planes[2]}}}});
        }
        std::filesystem::create_directories(un_out);
        std::ofstream(std::filesystem::path(un_out) / "uncertainty_summary.json", std::ios::trunc)
            << summary.dump(2) << '\n';
        std::cout << "wrote confidence panels for " << subjects.size() << " subject(s) under "
                  << un_out << '\n';
    });

    // ---- compare ----
    auto* cp = app.add_subcommand("compare", "pairwise signed-rank tests over a metrics file");
    std::string cp_csv, cp_out, cp_metric = "dsc";
    cp->add_option("--per-subject", cp_csv, "per_subject.csv from a previous evaluate run")
        ->required();
    cp->add_option("--out", cp_out, "output directory")->required();
    cp->add_option("--metric", cp_metric, "metric column to compare");
    cp->callback([&] {
        const auto rows = load_per_subject_csv(cp_csv);
        const auto report = build_report(rows, compare_models(rows, cp_metric));
        emit_report(report, cp_out);
        for (const auto& c : report.comparisons) {
            std::cout << c.model_a << " vs " << c.model_b << " (" << c.metric
                      << "): p = " << c.p_value << '\n';
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cardiorecon::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const cardiorecon::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
}
