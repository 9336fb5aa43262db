#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "cardiorecon/models.hpp"
#include "cardiorecon/phantom.hpp"
#include "cardiorecon/rng.hpp"
#include "cardiorecon/volume.hpp"

namespace cardiorecon {

struct AugmentConfig {
    double rotation_sigma_deg = 6.0;  // per-axis N(0, sigma)
    double morph_prob = 0.5;          // chance of one open/close
    int morph_radius_min = 1;
    int morph_radius_max = 2;
};

enum class ReconLoss { Dice, CrossEntropy };

std::string to_string(ReconLoss l);
ReconLoss recon_loss_from_string(const std::string& s);

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 8;
    int max_iterations = 20000;
    int patience = 10;      // validation checks without improvement before stopping
    int val_interval = 500;
    std::uint64_t seed = 0;
    bool augment = true;
    AugmentConfig augmentation;
    double alpha = 1.0;     // KL weight
    ReconLoss recon_loss = ReconLoss::Dice;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    /// Stable content hash of the trajectory-defining fields, recorded in
    /// checkpoint sidecars and checked on resume. max_iterations is excluded
    /// so an interrupted run can be resumed with a raised cap.
    std::string digest() const;
};

/// Random rotation (per-axis N(0, sigma)) followed by an optional single
/// morphological open or close. If the result would be empty (a heavy opening
/// can erase a thin shell) the unaugmented input is returned instead, so the
/// target stays a valid segmentation.
Volume3D augment(const Volume3D& v, Rng& rng, const AugmentConfig& cfg);

struct TrainOptions {
    bool resume = false;
    /// pretrained 2D encoder parameters (pCVAE); empty = fresh initialization
    std::filesystem::path pretrained_view_encoder;
    bool quiet = false;  // suppress progress lines on stderr
};

struct TrainResult {
    std::filesystem::path best_checkpoint;
    std::filesystem::path latest_checkpoint;
    std::filesystem::path log_path;
    double best_val_loss = 0.0;
    int iterations_run = 0;
    bool early_stopped = false;
};

/// Full training loop: minibatch Adam on the variant's objective with
/// on-the-fly augmentation, periodic validation (no augmentation, eps = 0),
/// patience-based early stopping, best/latest checkpointing and a JSON-lines
/// log with records {iter, total, dice_term, kl_term, match_term}.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                  const TrainOptions& options = {});

/// Mean per-subject validation loss of the training objective on a split
/// (eval mode, eps = 0, no augmentation). Deterministic.
double validation_loss(ReconNet model, const TrainConfig& train_cfg,
                       const DatasetManifest& manifest, Split split);

/// Trains a 2D autoencoder on the extracted view stacks and exports the
/// encoder parameters for pCVAE initialization. Returns the parameter path.
std::filesystem::path pretrain_view_autoencoder(const ModelConfig& model_cfg,
                                                const TrainConfig& train_cfg,
                                                const DatasetManifest& manifest,
                                                const std::filesystem::path& out_dir,
                                                bool quiet = false);

/// Loads exported 2D-encoder parameters into a freshly built model; validates
/// the sidecar against the model's view-encoder shape.
void load_pretrained_view_encoder(ReconNet model, const std::filesystem::path& path);

}  // namespace cardiorecon
