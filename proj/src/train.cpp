#include "cardiorecon/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>

#include "cardiorecon/geometry.hpp"
#include "cardiorecon/losses.hpp"

namespace cardiorecon {

std::string to_string(ReconLoss l) {
    switch (l) {
        case ReconLoss::Dice: return "dice";
        case ReconLoss::CrossEntropy: return "cross_entropy";
    }
    throw ParamError("unknown recon loss");
}

ReconLoss recon_loss_from_string(const std::string& s) {
    if (s == "dice") return ReconLoss::Dice;
    if (s == "cross_entropy" || s == "ce") return ReconLoss::CrossEntropy;
    throw ParamError("unknown recon loss: " + s);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (val_interval < 1) throw ConfigError("val_interval must be >= 1");
    if (augmentation.rotation_sigma_deg < 0.0) throw ConfigError("rotation sigma must be >= 0");
    if (augmentation.morph_prob < 0.0 || augmentation.morph_prob > 1.0) {
        throw ConfigError("morph_prob must lie in [0,1]");
    }
    if (augmentation.morph_radius_min < 1 ||
        augmentation.morph_radius_max < augmentation.morph_radius_min) {
        throw ConfigError("morph radius range invalid");
    }
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["max_iterations"] = max_iterations;
    j["patience"] = patience;
    j["val_interval"] = val_interval;
    j["seed"] = seed;
    j["augment"] = augment;
    j["augmentation"]["rotation_sigma_deg"] = augmentation.rotation_sigma_deg;
    j["augmentation"]["morph_prob"] = augmentation.morph_prob;
    j["augmentation"]["morph_radius_min"] = augmentation.morph_radius_min;
    j["augmentation"]["morph_radius_max"] = augmentation.morph_radius_max;
    j["alpha"] = alpha;
    j["recon_loss"] = to_string(recon_loss);
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.patience = j.value("patience", c.patience);
        c.val_interval = j.value("val_interval", c.val_interval);
        c.seed = j.value("seed", c.seed);
        c.augment = j.value("augment", c.augment);
        if (j.contains("augmentation")) {
            const auto& a = j.at("augmentation");
            c.augmentation.rotation_sigma_deg =
                a.value("rotation_sigma_deg", c.augmentation.rotation_sigma_deg);
            c.augmentation.morph_prob = a.value("morph_prob", c.augmentation.morph_prob);
            c.augmentation.morph_radius_min =
                a.value("morph_radius_min", c.augmentation.morph_radius_min);
            c.augmentation.morph_radius_max =
                a.value("morph_radius_max", c.augmentation.morph_radius_max);
        }
        c.alpha = j.value("alpha", c.alpha);
        if (j.contains("recon_loss")) {
            c.recon_loss = recon_loss_from_string(j.at("recon_loss").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad train config json: " + std::string(e.what()));
    }
    c.validate();
    return c;
}

std::string TrainConfig::digest() const {
    // FNV-1a over the canonical JSON encoding. max_iterations is excluded:
    // it only caps the run, so resuming with a raised cap replays the same
    // trajectory and is allowed.
    auto j = to_json();
    j.erase("max_iterations");
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Volume3D augment(const Volume3D& v, Rng& rng, const AugmentConfig& cfg) {
    const Vec3 angles = {rng.normal(0.0, cfg.rotation_sigma_deg),
                         rng.normal(0.0, cfg.rotation_sigma_deg),
                         rng.normal(0.0, cfg.rotation_sigma_deg)};
    Volume3D out = rotate_volume(v, angles);
    // draw order is fixed so the stream is identical whether or not the
    // morphological branch fires
    const double gate = rng.uniform();
    const int radius =
        static_cast<int>(rng.uniform_int(cfg.morph_radius_min, cfg.morph_radius_max));
    const bool open = rng.uniform() < 0.5;
    if (gate < cfg.morph_prob) {
        out = open ? morph_open(out, radius) : morph_close(out, radius);
    }
    if (!out.has_foreground()) return v;
    return out;
}

namespace {

struct Sample {
    Volume3D volume;
};

std::vector<Volume3D> load_split(const DatasetManifest& manifest, Split split) {
    std::vector<Volume3D> out;
    for (const auto& id : manifest.ids(split)) out.push_back(manifest.load_volume(id));
    if (out.empty()) throw ConfigError("split " + to_string(split) + " is empty");
    return out;
}

torch::Tensor stack_volumes(const std::vector<const Volume3D*>& batch, torch::Dtype dtype) {
    std::vector<torch::Tensor> ts;
    ts.reserve(batch.size());
    for (const Volume3D* v : batch) ts.push_back(volume_to_tensor(*v, dtype));
    return torch::cat(ts, 0);
}

torch::Tensor stack_views(const std::vector<const Volume3D*>& batch,
                          const std::vector<ViewLabel>& labels, torch::Dtype dtype) {
    std::vector<torch::Tensor> ts;
    ts.reserve(batch.size());
    for (const Volume3D* v : batch) {
        ts.push_back(views_to_tensor(extract_views(*v).subset(labels), dtype));
    }
    return torch::cat(ts, 0);
}

torch::Tensor eps_tensor(std::uint64_t seed, std::uint64_t iteration, int64_t batch, int64_t d,
                         torch::Dtype dtype) {
    Rng rng = Rng(seed).fork(rng_tag::kEps).fork(iteration);
    std::vector<double> values(static_cast<std::size_t>(batch * d));
    for (auto& v : values) v = rng.normal();
    auto t = torch::from_blob(values.data(), {batch, d},
                              torch::TensorOptions().dtype(torch::kFloat64))
                 .clone();
    return t.to(dtype);
}

struct BatchLoss {
    torch::Tensor total;  // differentiable
    LossBreakdown breakdown;
};

/// Shared objective for training and validation.
BatchLoss batch_loss(ReconNet model, const TrainConfig& cfg, torch::Tensor views,
                     torch::Tensor gt, torch::Tensor eps) {
    auto out = model->forward_train_t(views, gt, eps);
    const auto& mcfg = model->config();

    torch::Tensor recon_term;  // enters `total` with its own sign
    double dice_term = 0.0;
    if (cfg.recon_loss == ReconLoss::Dice) {
        auto dice = soft_dice_t(out.pred, gt);
        recon_term = -dice;
        dice_term = dice.item<double>();
    } else {
        auto ce = cross_entropy_t(out.pred, gt);
        recon_term = ce;
        dice_term = -ce.item<double>();  // keeps total = -dice_term + a*kl + match
    }

    torch::Tensor total = recon_term;
    double kl_term = 0.0, match_term = 0.0;
    if (mcfg.is_variational()) {
        auto kl = kl_standard_normal_t(out.mu, out.log_var);
        total = total + cfg.alpha * kl;
        kl_term = kl.item<double>();
    }
    if (mcfg.variant == Variant::TLNET) {
        auto match = tlnet_match_t(out.e2d, out.e3d);
        total = total + match;
        match_term = match.item<double>();
    }

    BatchLoss bl;
    bl.total = total;
    bl.breakdown.alpha = cfg.alpha;
    bl.breakdown.dice_term = dice_term;
    bl.breakdown.kl_term = kl_term;
    bl.breakdown.match_term = match_term;
    bl.breakdown.total = -dice_term + cfg.alpha * kl_term + match_term;
    return bl;
}

void dump_diagnostics(const std::filesystem::path& out_dir, int iteration,
                      const LossBreakdown& lb) {
    nlohmann::ordered_json j;
    j["iteration"] = iteration;
    j["total"] = lb.total;
    j["dice_term"] = lb.dice_term;
    j["kl_term"] = lb.kl_term;
    j["match_term"] = lb.match_term;
    std::ofstream out(out_dir / "diagnostic_abort.json", std::ios::trunc);
    out << j.dump(2) << '\n';
}

nlohmann::ordered_json checkpoint_meta(const ModelConfig& mcfg, const TrainConfig& tcfg,
                                       int iteration, double val_loss) {
    nlohmann::ordered_json meta;
    meta["display_name"] = mcfg.display_name();
    meta["train_config"] = tcfg.to_json();
    meta["train_config_digest"] = tcfg.digest();
    meta["iteration"] = iteration;
    meta["val_loss"] = val_loss;
    return meta;
}

}  // namespace

double validation_loss(ReconNet model, const TrainConfig& train_cfg,
                       const DatasetManifest& manifest, Split split) {
    torch::NoGradGuard no_grad;
    model->eval();
    const auto dtype = model->parameters().front().scalar_type();
    const auto& mcfg = model->config();

    const auto ids = manifest.ids(split);
    if (ids.empty()) throw ConfigError("validation split is empty");

    double sum = 0.0;
    constexpr std::size_t kChunk = 8;
    for (std::size_t i = 0; i < ids.size(); i += kChunk) {
        std::vector<Volume3D> vols;
        std::vector<const Volume3D*> ptrs;
        for (std::size_t j = i; j < std::min(ids.size(), i + kChunk); ++j) {
            vols.push_back(manifest.load_volume(ids[j]));
        }
        for (const auto& v : vols) ptrs.push_back(&v);

        auto gt = stack_volumes(ptrs, dtype);
        torch::Tensor views;
        if (mcfg.has_views()) views = stack_views(ptrs, mcfg.views, dtype);
        torch::Tensor eps;
        if (mcfg.is_variational()) {
            eps = torch::zeros({gt.size(0), mcfg.latent_dim},
                               torch::TensorOptions().dtype(dtype));
        }

        // per-sample totals, then an order-fixed sum, so chunking is invisible
        auto out = model->forward_train_t(views, gt, eps);
        const auto b = gt.size(0);
        auto p = out.pred.reshape({b, -1});
        auto g = gt.reshape({b, -1});
        torch::Tensor per_sample;
        if (train_cfg.recon_loss == ReconLoss::Dice) {
            auto inter = (p * g).sum(1);
            per_sample = -((2.0 * inter + 1.0) / (p.sum(1) + g.sum(1) + 1.0));
        } else {
            auto pc = p.clamp(1e-7, 1.0 - 1e-7);
            per_sample = -(g * torch::log(pc) + (1.0 - g) * torch::log(1.0 - pc)).mean(1);
        }
        if (mcfg.is_variational()) {
            auto kl = 0.5 * (out.mu * out.mu + torch::exp(out.log_var) - 1.0 - out.log_var).sum(1);
            per_sample = per_sample + train_cfg.alpha * kl;
        }
        if (mcfg.variant == Variant::TLNET) {
            auto diff = out.e2d - out.e3d;
            per_sample = per_sample + (diff * diff).mean(1);
        }
        auto values = per_sample.to(torch::kFloat64);
        auto acc = values.accessor<double, 1>();
        for (int64_t k = 0; k < values.size(0); ++k) sum += acc[k];
    }
    model->train();
    return sum / static_cast<double>(ids.size());
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                  const TrainOptions& options) {
    model_cfg.validate();
    train_cfg.validate();
    manifest.validate(false);
    if (manifest.dims[0] != manifest.dims[1] || manifest.dims[0] != manifest.dims[2]) {
        throw ConfigError("dataset grid must be cubic");
    }
    if (manifest.dims[0] != model_cfg.volume_dim) {
        throw ConfigError("model volume_dim does not match dataset dims");
    }

    std::filesystem::create_directories(out_dir);
    const auto best_path = out_dir / "best.pt";
    const auto latest_path = out_dir / "latest.pt";
    const auto opt_path = out_dir / "latest.opt";
    const auto state_path = out_dir / "run_state.json";
    const auto log_path = out_dir / "train_log.jsonl";

    torch::manual_seed(static_cast<std::uint64_t>(train_cfg.seed));
    ReconNet model(model_cfg);
    if (!options.pretrained_view_encoder.empty()) {
        load_pretrained_view_encoder(model, options.pretrained_view_encoder);
    }
    torch::optim::Adam optimizer(model->parameters(),
                                 torch::optim::AdamOptions(train_cfg.learning_rate));

    int start_iteration = 0;
    double best_val = std::numeric_limits<double>::infinity();
    int checks_without_improvement = 0;
    bool have_best = false;

    if (options.resume) {
        if (!std::filesystem::exists(latest_path) || !std::filesystem::exists(state_path)) {
            throw StateError("resume requested but no previous run found in " + out_dir.string());
        }
        nlohmann::json st;
        std::ifstream(state_path) >> st;
        if (st.at("train_config_digest").get<std::string>() != train_cfg.digest()) {
            throw ConfigError("resume with a different train config");
        }
        torch::load(model, latest_path.string());
        torch::load(optimizer, opt_path.string());
        start_iteration = st.at("next_iteration").get<int>();
        best_val = st.at("best_val_loss").get<double>();
        checks_without_improvement = st.at("checks_without_improvement").get<int>();
        have_best = std::filesystem::exists(best_path);
    }

    std::ofstream log(log_path, options.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw FileError("cannot open training log: " + log_path.string());

    const std::vector<Volume3D> train_set = load_split(manifest, Split::Train);
    const auto dtype = model->parameters().front().scalar_type();
    const Rng batch_root = Rng(train_cfg.seed).fork(rng_tag::kBatch);
    const Rng aug_root = Rng(train_cfg.seed).fork(rng_tag::kAugment);

    const auto save_state = [&](int next_iteration) {
        torch::save(model, latest_path.string());
        torch::save(optimizer, opt_path.string());
        nlohmann::ordered_json side;
        side["model_config"] = model_cfg.to_json();
        side["meta"] = checkpoint_meta(model_cfg, train_cfg, next_iteration, best_val);
        std::ofstream(latest_path.string() + ".json", std::ios::trunc) << side.dump(2) << '\n';
        nlohmann::ordered_json st;
        st["next_iteration"] = next_iteration;
        st["best_val_loss"] = best_val;
        st["checks_without_improvement"] = checks_without_improvement;
        st["train_config_digest"] = train_cfg.digest();
        st["best_checkpoint"] = have_best ? best_path.string() : "";
        st["latest_checkpoint"] = latest_path.string();
        std::ofstream(state_path, std::ios::trunc) << st.dump(2) << '\n';
    };

    TrainResult result;
    result.best_checkpoint = best_path;
    result.latest_checkpoint = latest_path;
    result.log_path = log_path;

    model->train();
    int iteration = start_iteration;
    for (; iteration < train_cfg.max_iterations; ++iteration) {
        // assemble the minibatch (indices, augmentation, eps all keyed by
        // absolute iteration so a resumed run replays the same stream)
        Rng batch_rng = batch_root.fork(static_cast<std::uint64_t>(iteration));
        std::vector<Volume3D> augmented;
        std::vector<const Volume3D*> ptrs;
        augmented.reserve(train_cfg.batch_size);
        for (int s = 0; s < train_cfg.batch_size; ++s) {
            const auto idx = static_cast<std::size_t>(
                batch_rng.uniform_int(0, static_cast<std::int64_t>(train_set.size()) - 1));
            if (train_cfg.augment) {
                Rng aug_rng =
                    aug_root.fork(static_cast<std::uint64_t>(iteration)).fork(static_cast<std::uint64_t>(s));
                augmented.push_back(augment(train_set[idx], aug_rng, train_cfg.augmentation));
            } else {
                augmented.push_back(train_set[idx]);
            }
        }
        for (const auto& v : augmented) ptrs.push_back(&v);

        auto gt = stack_volumes(ptrs, dtype);
        torch::Tensor views;
        if (model_cfg.has_views()) views = stack_views(ptrs, model_cfg.views, dtype);
        torch::Tensor eps;
        if (model_cfg.is_variational()) {
            eps = eps_tensor(train_cfg.seed, static_cast<std::uint64_t>(iteration),
                             gt.size(0), model_cfg.latent_dim, dtype);
        }

        auto bl = batch_loss(model, train_cfg, views, gt, eps);
        if (!std::isfinite(bl.breakdown.total)) {
            dump_diagnostics(out_dir, iteration, bl.breakdown);
            save_state(iteration);
            throw StateError("non-finite training loss at iteration " + std::to_string(iteration) +
                             "; diagnostics in " + (out_dir / "diagnostic_abort.json").string());
        }

        optimizer.zero_grad();
        bl.total.backward();
        optimizer.step();

        nlohmann::ordered_json line;
        line["iter"] = iteration;
        line["total"] = bl.breakdown.total;
        line["dice_term"] = bl.breakdown.dice_term;
        line["kl_term"] = bl.breakdown.kl_term;
        line["match_term"] = bl.breakdown.match_term;
        log << line.dump() << '\n';

        const bool at_val = (iteration + 1) % train_cfg.val_interval == 0 ||
                            iteration + 1 == train_cfg.max_iterations;
        if (!at_val) continue;

        const double val = validation_loss(model, train_cfg, manifest, Split::Val);
        if (!options.quiet) {
            std::fprintf(stderr, "[%s] iter %d val_loss %.6f best %.6f\n",
                         model_cfg.display_name().c_str(), iteration + 1, val,
                         have_best ? best_val : val);
        }
        if (val < best_val) {
            best_val = val;
            checks_without_improvement = 0;
            have_best = true;
            save_checkpoint(model, best_path,
                            checkpoint_meta(model_cfg, train_cfg, iteration + 1, val));
        } else {
            ++checks_without_improvement;
        }
        save_state(iteration + 1);
        log.flush();
        if (checks_without_improvement >= train_cfg.patience) {
            result.early_stopped = true;
            ++iteration;
            break;
        }
    }

    if (!have_best) {
        // max_iterations smaller than val_interval: validate and save once
        best_val = validation_loss(model, train_cfg, manifest, Split::Val);
        have_best = true;
        save_checkpoint(model, best_path,
                        checkpoint_meta(model_cfg, train_cfg, iteration, best_val));
    }
    save_state(iteration);
    result.best_val_loss = best_val;
    result.iterations_run = iteration;
    return result;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json view_encoder_sidecar(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["in_channels"] = cfg.views.size();
    j["img_dim"] = cfg.volume_dim;
    j["channels"] = cfg.channels;
    j["out_dim"] = cfg.variant == Variant::TLNET ? cfg.latent_dim : cfg.view_embed_dim;
    return j;
}

}  // namespace

std::filesystem::path pretrain_view_autoencoder(const ModelConfig& model_cfg,
                                                const TrainConfig& train_cfg,
                                                const DatasetManifest& manifest,
                                                const std::filesystem::path& out_dir,
                                                bool quiet) {
    model_cfg.validate();
    train_cfg.validate();
    if (!model_cfg.has_views()) throw ConfigError("view pretraining requires views");

    std::filesystem::create_directories(out_dir);
    torch::manual_seed(static_cast<std::uint64_t>(train_cfg.seed) ^ 0x2d2d2d2dULL);

    const int k = static_cast<int>(model_cfg.views.size());
    ViewEncoder encoder(k, model_cfg.volume_dim, model_cfg.channels, model_cfg.view_embed_dim);
    ViewDecoder2D decoder(k, model_cfg.volume_dim, model_cfg.channels, model_cfg.view_embed_dim);

    std::vector<torch::Tensor> params = encoder->parameters();
    for (auto& p : decoder->parameters()) params.push_back(p);
    torch::optim::Adam optimizer(params, torch::optim::AdamOptions(train_cfg.learning_rate));

    const std::vector<Volume3D> train_set = load_split(manifest, Split::Train);
    const Rng batch_root = Rng(train_cfg.seed).fork(rng_tag::kBatch);
    const Rng aug_root = Rng(train_cfg.seed).fork(rng_tag::kAugment);
    const auto dtype = torch::kFloat32;

    for (int iteration = 0; iteration < train_cfg.max_iterations; ++iteration) {
        Rng batch_rng = batch_root.fork(static_cast<std::uint64_t>(iteration));
        std::vector<Volume3D> augmented;
        std::vector<const Volume3D*> ptrs;
        for (int s = 0; s < train_cfg.batch_size; ++s) {
            const auto idx = static_cast<std::size_t>(
                batch_rng.uniform_int(0, static_cast<std::int64_t>(train_set.size()) - 1));
            if (train_cfg.augment) {
                Rng aug_rng =
                    aug_root.fork(static_cast<std::uint64_t>(iteration)).fork(static_cast<std::uint64_t>(s));
                augmented.push_back(augment(train_set[idx], aug_rng, train_cfg.augmentation));
            } else {
                augmented.push_back(train_set[idx]);
            }
        }
        for (const auto& v : augmented) ptrs.push_back(&v);
        auto views = stack_views(ptrs, model_cfg.views, dtype);

        auto recon = decoder->forward(encoder->forward(views));
        auto loss = -soft_dice_t(recon, views);
        optimizer.zero_grad();
        loss.backward();
        optimizer.step();
        if (!quiet && (iteration + 1) % train_cfg.val_interval == 0) {
            std::fprintf(stderr, "[view-ae] iter %d dice %.4f\n", iteration + 1,
                         -loss.item<double>());
        }
    }

    const auto path = out_dir / "view_encoder.pt";
    torch::save(encoder, path.string());
    std::ofstream(path.string() + ".json", std::ios::trunc)
        << view_encoder_sidecar(model_cfg).dump(2) << '\n';
    return path;
}

void load_pretrained_view_encoder(ReconNet model, const std::filesystem::path& path) {
    if (!model->config().has_views()) throw ConfigError("model has no view encoder");
    if (!std::filesystem::exists(path)) throw StateError("missing pretrained encoder: " + path.string());
    std::ifstream side_in(path.string() + ".json");
    if (!side_in) throw StateError("missing pretrained encoder sidecar: " + path.string() + ".json");
    nlohmann::json side;
    side_in >> side;
    const auto expect = view_encoder_sidecar(model->config());
    if (side.at("in_channels").get<std::size_t>() != model->config().views.size() ||
        side.at("img_dim").get<int>() != expect.at("img_dim").get<int>() ||
        side.at("channels").get<std::vector<int>>() != model->config().channels ||
        side.at("out_dim").get<int>() != expect.at("out_dim").get<int>()) {
        throw ConfigError("pretrained encoder shape does not match the model config");
    }
    torch::load(model->view_encoder, path.string());
}

}  // namespace cardiorecon
