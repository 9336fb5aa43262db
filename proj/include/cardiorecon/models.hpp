#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

#include "cardiorecon/errors.hpp"
#include "cardiorecon/volume.hpp"

namespace cardiorecon {

enum class Variant { CVAE, PCVAE, TLNET, AE, VAE };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Everything needed to build a network. All variants share the same 3D
/// encoder/decoder convolution schedule; only the heads differ.
struct ModelConfig {
    Variant variant = Variant::CVAE;
    std::vector<ViewLabel> views;  // canonical order; empty for AE/VAE
    int latent_dim = 125;
    int view_embed_dim = 125;
    int volume_dim = 80;           // cubic grid edge
    int volume_embed_dim = 512;    // length of y
    std::vector<int> channels = {32, 64, 128, 256};
    double alpha = 1.0;            // KL weight (used by losses/training)

    bool has_views() const { return !views.empty(); }
    bool is_variational() const {
        return variant == Variant::CVAE || variant == Variant::PCVAE || variant == Variant::VAE;
    }
    int blocks() const { return static_cast<int>(channels.size()); }
    /// spatial edge of the bottleneck feature map
    int bottleneck() const { return volume_dim >> blocks(); }

    void validate() const;
    /// Table-style name: CVAE_123, pCVAE_13, TL_net, AE, VAE_0
    std::string display_name() const;

    nlohmann::ordered_json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// 2D encoder for the stacked views: k-channel image -> embedding.
class ViewEncoderImpl : public torch::nn::Module {
public:
    ViewEncoderImpl(int in_channels, int img_dim, const std::vector<int>& channels, int out_dim);
    torch::Tensor forward(torch::Tensor views);  // [B,k,H,W] -> [B,out_dim]

private:
    torch::nn::Sequential conv_{nullptr};
    torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(ViewEncoder);

/// 2D decoder mirroring ViewEncoder, used only to pretrain the view encoder.
class ViewDecoder2DImpl : public torch::nn::Module {
public:
    ViewDecoder2DImpl(int out_channels, int img_dim, const std::vector<int>& channels, int in_dim);
    torch::Tensor forward(torch::Tensor embed);  // [B,in_dim] -> [B,k,H,W] in [0,1]

private:
    int bottleneck_ = 0;
    int top_channels_ = 0;
    torch::nn::Linear fc_{nullptr};
    torch::nn::Sequential deconv_{nullptr};
};
TORCH_MODULE(ViewDecoder2D);

/// 3D encoder: volume -> flattened feature vector y.
class VolumeEncoderImpl : public torch::nn::Module {
public:
    VolumeEncoderImpl(int vol_dim, const std::vector<int>& channels, int out_dim);
    torch::Tensor forward(torch::Tensor volume);  // [B,1,D,D,D] -> [B,out_dim]

private:
    torch::nn::Sequential conv_{nullptr};
    torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(VolumeEncoder);

/// 3D decoder: code -> volume of probabilities.
class Decoder3DImpl : public torch::nn::Module {
public:
    Decoder3DImpl(int in_dim, int vol_dim, const std::vector<int>& channels);
    torch::Tensor forward(torch::Tensor code);  // [B,in_dim] -> [B,1,D,D,D] in [0,1]

private:
    int bottleneck_ = 0;
    int top_channels_ = 0;
    torch::nn::Linear fc_{nullptr};
    torch::nn::Sequential deconv_{nullptr};
};
TORCH_MODULE(Decoder3D);

/// FC head mapping [x, y] (or y alone) to (mu, log_var).
class PosteriorHeadImpl : public torch::nn::Module {
public:
    PosteriorHeadImpl(int in_dim, int latent_dim);
    std::pair<torch::Tensor, torch::Tensor> forward(torch::Tensor joint);

private:
    torch::nn::Linear fc_{nullptr};
    int latent_dim_ = 0;
};
TORCH_MODULE(PosteriorHead);

/// The full reconstruction network for any variant.
class ReconNetImpl : public torch::nn::Module {
public:
    explicit ReconNetImpl(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    // --- batched tensor-level operations ---
    torch::Tensor encode_views_t(torch::Tensor views);
    torch::Tensor encode_volume_t(torch::Tensor volume);
    /// joint = [x, y] for view-conditioned variants, y alone for VAE
    std::pair<torch::Tensor, torch::Tensor> posterior_t(torch::Tensor joint);
    static torch::Tensor reparameterize_t(torch::Tensor mu, torch::Tensor log_var,
                                          torch::Tensor eps);
    /// x ignored (may be undefined) when the variant takes no views
    torch::Tensor decode_t(torch::Tensor z, torch::Tensor x);

    struct TrainOut {
        torch::Tensor pred;             // [B,1,D,D,D]
        torch::Tensor mu, log_var;      // defined for variational variants
        torch::Tensor e2d, e3d;         // defined for TLNET
    };
    /// Variant-dispatched training-mode forward. `views` required iff the
    /// variant is view-conditioned; `eps` required iff variational.
    TrainOut forward_train_t(torch::Tensor views, torch::Tensor gt, torch::Tensor eps);

    /// Test-mode forward for view-conditioned variants and VAE (z = 0).
    /// For VAE the views tensor supplies only the batch size.
    torch::Tensor forward_test_t(torch::Tensor views, int64_t batch);
    /// AE evaluation path: encode-decode of the volume itself.
    torch::Tensor ae_forward_t(torch::Tensor volume);

    ViewEncoder view_encoder{nullptr};
    VolumeEncoder volume_encoder{nullptr};
    PosteriorHead posterior_head{nullptr};
    Decoder3D decoder{nullptr};
    torch::nn::Linear code_head{nullptr};  // y -> embedding for AE/TLNET

private:
    ModelConfig cfg_;
};
TORCH_MODULE(ReconNet);

// --- bridges between core types and tensors ---
torch::Tensor views_to_tensor(const ViewSet& v, torch::Dtype dtype = torch::kFloat32);
torch::Tensor volume_to_tensor(const Volume3D& v, torch::Dtype dtype = torch::kFloat32);
/// Accepts [D,D,D], [1,D,D,D] or [1,1,D,D,D]; clamps tiny numeric overshoot.
ProbabilityVolume tensor_to_probability(torch::Tensor t, Vec3 spacing_mm);

// --- single-subject convenience wrappers (eval mode, no grad) ---
ProbabilityVolume forward_test(ReconNet model, const ViewSet& views,
                               Vec3 spacing_mm = kDefaultSpacingMm);
ProbabilityVolume ae_forward(ReconNet model, const Volume3D& volume);

std::int64_t parameter_count(const ReconNet& model);

/// Saves parameters to `path` and a JSON sidecar to `path + ".json"` carrying
/// the ModelConfig plus caller-provided metadata.
void save_checkpoint(ReconNet model, const std::filesystem::path& path,
                     const nlohmann::ordered_json& meta);

struct LoadedCheckpoint {
    ReconNet model{nullptr};
    ModelConfig config;
    nlohmann::json meta;
};
/// Rebuilds the network from the sidecar config and loads parameters. Fails
/// with StateError/FileError on missing files or config mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cardiorecon
