#include "cardiorecon/models.hpp"

#include <algorithm>
#include <fstream>

namespace cardiorecon {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::CVAE: return "cvae";
        case Variant::PCVAE: return "pcvae";
        case Variant::TLNET: return "tlnet";
        case Variant::AE: return "ae";
        case Variant::VAE: return "vae";
    }
    throw ParamError("unknown variant");
}

Variant variant_from_string(const std::string& s) {
    std::string t;
    for (char c : s) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "cvae") return Variant::CVAE;
    if (t == "pcvae") return Variant::PCVAE;
    if (t == "tlnet" || t == "tl_net" || t == "tl-net") return Variant::TLNET;
    if (t == "ae") return Variant::AE;
    if (t == "vae") return Variant::VAE;
    throw ParamError("unknown variant: " + s);
}

namespace {

int norm_groups(int channels) {
    const int g = std::min(8, channels);
    if (channels % g != 0) throw ConfigError("channel count must be divisible by its norm groups");
    return g;
}

}  // namespace

void ModelConfig::validate() const {
    const bool view_conditioned =
        variant == Variant::CVAE || variant == Variant::PCVAE || variant == Variant::TLNET;
    if (view_conditioned && views.empty()) {
        throw ConfigError("variant " + to_string(variant) + " requires at least one view");
    }
    if (!view_conditioned && !views.empty()) {
        throw ConfigError("variant " + to_string(variant) + " takes no views");
    }
    if (!views.empty()) {
        try {
            (void)canonical_view_labels(views);
        } catch (const ParamError& e) {
            throw ConfigError(e.what());  // duplicates are a config problem here
        }
        auto sorted = views;
        std::sort(sorted.begin(), sorted.end(),
                  [](ViewLabel a, ViewLabel b) { return static_cast<int>(a) < static_cast<int>(b); });
        if (sorted != views) throw ConfigError("views must be listed in canonical order");
    }
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (view_embed_dim < 1) throw ConfigError("view_embed_dim must be >= 1");
    if (volume_embed_dim < 1) throw ConfigError("volume_embed_dim must be >= 1");
    if (channels.empty()) throw ConfigError("channel schedule must be nonempty");
    for (int c : channels) {
        if (c < 1) throw ConfigError("channel counts must be positive");
        (void)norm_groups(c);
    }
    if (volume_dim < 1 || volume_dim % (1 << blocks()) != 0) {
        throw ConfigError("volume_dim must be a positive multiple of 2^blocks");
    }
    if (bottleneck() < 1) throw ConfigError("bottleneck collapsed to zero; too many blocks");
    if (variant == Variant::TLNET && view_embed_dim != latent_dim) {
        throw ConfigError("tlnet requires view_embed_dim == latent_dim (shared embedding)");
    }
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
}

std::string ModelConfig::display_name() const {
    switch (variant) {
        case Variant::TLNET: return "TL_net";
        case Variant::AE: return "AE";
        case Variant::VAE: return "VAE_0";
        case Variant::CVAE:
        case Variant::PCVAE: break;
    }
    std::string suffix;
    for (ViewLabel v : views) suffix += std::to_string(static_cast<int>(v) + 1);
    return (variant == Variant::PCVAE ? "pCVAE_" : "CVAE_") + suffix;
}

nlohmann::ordered_json ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["variant"] = to_string(variant);
    std::vector<std::string> vs;
    for (ViewLabel v : views) vs.push_back(cardiorecon::to_string(v));
    j["views"] = vs;
    j["latent_dim"] = latent_dim;
    j["view_embed_dim"] = view_embed_dim;
    j["volume_dim"] = volume_dim;
    j["volume_embed_dim"] = volume_embed_dim;
    j["channels"] = channels;
    j["alpha"] = alpha;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    try {
        cfg.variant = variant_from_string(j.at("variant").get<std::string>());
        cfg.views.clear();
        for (const auto& v : j.at("views")) {
            cfg.views.push_back(view_label_from_string(v.get<std::string>()));
        }
        cfg.latent_dim = j.at("latent_dim").get<int>();
        cfg.view_embed_dim = j.at("view_embed_dim").get<int>();
        cfg.volume_dim = j.at("volume_dim").get<int>();
        cfg.volume_embed_dim = j.at("volume_embed_dim").get<int>();
        cfg.channels = j.at("channels").get<std::vector<int>>();
        cfg.alpha = j.at("alpha").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad model config json: " + std::string(e.what()));
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------

ViewEncoderImpl::ViewEncoderImpl(int in_channels, int img_dim, const std::vector<int>& channels,
                                 int out_dim) {
    conv_ = torch::nn::Sequential();
    int in = in_channels;
    for (int ch : channels) {
        conv_->push_back(torch::nn::Conv2d(
            torch::nn::Conv2dOptions(in, ch, 3).stride(2).padding(1)));
        conv_->push_back(torch::nn::GroupNorm(norm_groups(ch), ch));
        conv_->push_back(torch::nn::SiLU());
        in = ch;
    }
    const int b = img_dim >> channels.size();
    fc_ = torch::nn::Linear(static_cast<int64_t>(in) * b * b, out_dim);
    register_module("conv", conv_);
    register_module("fc", fc_);
}

torch::Tensor ViewEncoderImpl::forward(torch::Tensor views) {
    auto h = conv_->forward(views);
    return fc_->forward(h.flatten(1));
}

ViewDecoder2DImpl::ViewDecoder2DImpl(int out_channels, int img_dim,
                                     const std::vector<int>& channels, int in_dim) {
    bottleneck_ = img_dim >> channels.size();
    top_channels_ = channels.back();
    fc_ = torch::nn::Linear(in_dim,
                            static_cast<int64_t>(top_channels_) * bottleneck_ * bottleneck_);
    deconv_ = torch::nn::Sequential();
    for (std::size_t i = channels.size(); i-- > 1;) {
        deconv_->push_back(torch::nn::ConvTranspose2d(
            torch::nn::ConvTranspose2dOptions(channels[i], channels[i - 1], 4).stride(2).padding(
                1)));
        deconv_->push_back(torch::nn::GroupNorm(norm_groups(channels[i - 1]), channels[i - 1]));
        deconv_->push_back(torch::nn::SiLU());
    }
    deconv_->push_back(torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(channels[0], out_channels, 4).stride(2).padding(1)));
    register_module("fc", fc_);
    register_module("deconv", deconv_);
}

torch::Tensor ViewDecoder2DImpl::forward(torch::Tensor embed) {
    auto h = fc_->forward(embed).view({embed.size(0), top_channels_, bottleneck_, bottleneck_});
    return torch::sigmoid(deconv_->forward(h));
}

VolumeEncoderImpl::VolumeEncoderImpl(int vol_dim, const std::vector<int>& channels, int out_dim) {
    conv_ = torch::nn::Sequential();
    int in = 1;
    for (int ch : channels) {
        conv_->push_back(torch::nn::Conv3d(
            torch::nn::Conv3dOptions(in, ch, 3).stride(2).padding(1)));
        conv_->push_back(torch::nn::GroupNorm(norm_groups(ch), ch));
        conv_->push_back(torch::nn::SiLU());
        in = ch;
    }
    const int b = vol_dim >> channels.size();
    fc_ = torch::nn::Linear(static_cast<int64_t>(in) * b * b * b, out_dim);
    register_module("conv", conv_);
    register_module("fc", fc_);
}

torch::Tensor VolumeEncoderImpl::forward(torch::Tensor volume) {
    auto h = conv_->forward(volume);
    return fc_->forward(h.flatten(1));
}

Decoder3DImpl::Decoder3DImpl(int in_dim, int vol_dim, const std::vector<int>& channels) {
    bottleneck_ = vol_dim >> channels.size();
    top_channels_ = channels.back();
    fc_ = torch::nn::Linear(
        in_dim, static_cast<int64_t>(top_channels_) * bottleneck_ * bottleneck_ * bottleneck_);
    deconv_ = torch::nn::Sequential();
    for (std::size_t i = channels.size(); i-- > 1;) {
        deconv_->push_back(torch::nn::ConvTranspose3d(
            torch::nn::ConvTranspose3dOptions(channels[i], channels[i - 1], 4).stride(2).padding(
                1)));
        deconv_->push_back(torch::nn::GroupNorm(norm_groups(channels[i - 1]), channels[i - 1]));
        deconv_->push_back(torch::nn::SiLU());
    }
    deconv_->push_back(torch::nn::ConvTranspose3d(
        torch::nn::ConvTranspose3dOptions(channels[0], 1, 4).stride(2).padding(1)));
    register_module("fc", fc_);
    register_module("deconv", deconv_);
}

torch::Tensor Decoder3DImpl::forward(torch::Tensor code) {
    auto h = fc_->forward(code).view(
        {code.size(0), top_channels_, bottleneck_, bottleneck_, bottleneck_});
    return torch::sigmoid(deconv_->forward(h));
}

PosteriorHeadImpl::PosteriorHeadImpl(int in_dim, int latent_dim) : latent_dim_(latent_dim) {
    fc_ = torch::nn::Linear(in_dim, 2 * latent_dim);
    register_module("fc", fc_);
}

std::pair<torch::Tensor, torch::Tensor> PosteriorHeadImpl::forward(torch::Tensor joint) {
    auto out = fc_->forward(joint);
    return {out.narrow(1, 0, latent_dim_), out.narrow(1, latent_dim_, latent_dim_)};
}

// ---------------------------------------------------------------------------

ReconNetImpl::ReconNetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int k = static_cast<int>(cfg_.views.size());

    if (cfg_.has_views()) {
        // TL-net's view branch regresses straight onto the shared embedding
        const int out = cfg_.variant == Variant::TLNET ? cfg_.latent_dim : cfg_.view_embed_dim;
        view_encoder = ViewEncoder(k, cfg_.volume_dim, cfg_.channels, out);
        register_module("view_encoder", view_encoder);
    }

    volume_encoder = VolumeEncoder(cfg_.volume_dim, cfg_.channels, cfg_.volume_embed_dim);
    register_module("volume_encoder", volume_encoder);

    if (cfg_.is_variational()) {
        const int joint = cfg_.variant == Variant::VAE ? cfg_.volume_embed_dim
                                                       : cfg_.view_embed_dim + cfg_.volume_embed_dim;
        posterior_head = PosteriorHead(joint, cfg_.latent_dim);
        register_module("posterior_head", posterior_head);
    } else {
        code_head = torch::nn::Linear(cfg_.volume_embed_dim, cfg_.latent_dim);
        register_module("code_head", code_head);
    }

    const int decode_dim = (cfg_.variant == Variant::CVAE || cfg_.variant == Variant::PCVAE)
                               ? cfg_.latent_dim + cfg_.view_embed_dim
                               : cfg_.latent_dim;
    decoder = Decoder3D(decode_dim, cfg_.volume_dim, cfg_.channels);
    register_module("decoder", decoder);
}

torch::Tensor ReconNetImpl::encode_views_t(torch::Tensor views) {
    if (!cfg_.has_views()) throw ConfigError("variant has no view encoder");
    if (views.dim() != 4 || views.size(1) != static_cast<int64_t>(cfg_.views.size())) {
        throw ConfigError("view tensor channels do not match configured views");
    }
    return view_encoder->forward(views);
}

torch::Tensor ReconNetImpl::encode_volume_t(torch::Tensor volume) {
    if (volume.dim() != 5 || volume.size(2) != cfg_.volume_dim ||
        volume.size(3) != cfg_.volume_dim || volume.size(4) != cfg_.volume_dim) {
        throw ShapeError("volume tensor does not match configured dims");
    }
    return volume_encoder->forward(volume);
}

std::pair<torch::Tensor, torch::Tensor> ReconNetImpl::posterior_t(torch::Tensor joint) {
    if (!cfg_.is_variational()) throw ConfigError("variant has no posterior head");
    return posterior_head->forward(joint);
}

torch::Tensor ReconNetImpl::reparameterize_t(torch::Tensor mu, torch::Tensor log_var,
                                             torch::Tensor eps) {
    if (eps.sizes() != mu.sizes()) throw ShapeError("eps shape does not match mu");
    return mu + torch::exp(log_var * 0.5) * eps;
}

torch::Tensor ReconNetImpl::decode_t(torch::Tensor z, torch::Tensor x) {
    if (z.dim() != 2 || z.size(1) != cfg_.latent_dim) throw ShapeError("latent code has wrong length");
    if (cfg_.variant == Variant::CVAE || cfg_.variant == Variant::PCVAE) {
        if (!x.defined() || x.dim() != 2 || x.size(1) != cfg_.view_embed_dim) {
            throw ShapeError("view embedding has wrong length");
        }
        return decoder->forward(torch::cat({z, x}, 1));
    }
    return decoder->forward(z);
}

ReconNetImpl::TrainOut ReconNetImpl::forward_train_t(torch::Tensor views, torch::Tensor gt,
                                                     torch::Tensor eps) {
    TrainOut out;
    switch (cfg_.variant) {
        case Variant::CVAE:
        case Variant::PCVAE: {
            auto x = encode_views_t(views);
            auto y = encode_volume_t(gt);
            std::tie(out.mu, out.log_var) = posterior_t(torch::cat({x, y}, 1));
            auto z = reparameterize_t(out.mu, out.log_var, eps);
            out.pred = decode_t(z, x);
            break;
        }
        case Variant::VAE: {
            auto y = encode_volume_t(gt);
            std::tie(out.mu, out.log_var) = posterior_t(y);
            auto z = reparameterize_t(out.mu, out.log_var, eps);
            out.pred = decode_t(z, torch::Tensor());
            break;
        }
        case Variant::TLNET: {
            out.e2d = encode_views_t(views);
            out.e3d = code_head->forward(encode_volume_t(gt));
            out.pred = decode_t(out.e3d, torch::Tensor());
            break;
        }
        case Variant::AE: {
            auto e = code_head->forward(encode_volume_t(gt));
            out.pred = decode_t(e, torch::Tensor());
            break;
        }
    }
    return out;
}

torch::Tensor ReconNetImpl::forward_test_t(torch::Tensor views, int64_t batch) {
    const auto opts = parameters().front().options();
    switch (cfg_.variant) {
        case Variant::CVAE:
        case Variant::PCVAE: {
            auto x = encode_views_t(views);
            auto z = torch::zeros({x.size(0), cfg_.latent_dim}, opts);
            return decode_t(z, x);
        }
        case Variant::TLNET: {
            auto e2d = encode_views_t(views);
            return decode_t(e2d, torch::Tensor());
        }
        case Variant::VAE: {
            auto z = torch::zeros({batch, cfg_.latent_dim}, opts);
            return decode_t(z, torch::Tensor());
        }
        case Variant::AE:
            throw ConfigError("AE has no view-conditioned test path; use ae_forward");
    }
    throw ConfigError("unknown variant");
}

torch::Tensor ReconNetImpl::ae_forward_t(torch::Tensor volume) {
    if (cfg_.is_variational()) throw ConfigError("ae_forward requires AE or TLNET variant");
    auto e = code_head->forward(encode_volume_t(volume));
    return decode_t(e, torch::Tensor());
}

// ---------------------------------------------------------------------------

torch::Tensor views_to_tensor(const ViewSet& v, torch::Dtype dtype) {
    if (v.count() == 0) throw ParamError("empty view set");
    auto t = torch::empty({1, static_cast<int64_t>(v.count()), v.height(), v.width()},
                          torch::TensorOptions().dtype(torch::kUInt8));
    auto acc = t.accessor<std::uint8_t, 4>();
    for (std::size_t c = 0; c < v.count(); ++c) {
        const auto& mask = v.mask(c);
        for (int y = 0; y < v.height(); ++y)
            for (int x = 0; x < v.width(); ++x)
                acc[0][static_cast<int64_t>(c)][y][x] =
                    mask[static_cast<std::size_t>(y) * v.width() + x];
    }
    return t.to(dtype);
}

torch::Tensor volume_to_tensor(const Volume3D& v, torch::Dtype dtype) {
    const auto& d = v.dims();
    auto t = torch::from_blob(const_cast<std::uint8_t*>(v.voxels().data()),
                              {1, 1, d[2], d[1], d[0]},
                              torch::TensorOptions().dtype(torch::kUInt8))
                 .clone();
    // storage is x-fastest: blob axes are (z,y,x); expose as (x,y,z)-indexed
    // [B,1,D2,D1,D0] -> permute so tensor dims read (d0,d1,d2)
    return t.permute({0, 1, 4, 3, 2}).contiguous().to(dtype);
}

ProbabilityVolume tensor_to_probability(torch::Tensor t, Vec3 spacing_mm) {
    auto u = t;
    while (u.dim() > 3) {
        if (u.size(0) != 1) throw ShapeError("expected a single-volume tensor");
        u = u.squeeze(0);
    }
    if (u.dim() != 3) throw ShapeError("expected a 3D tensor");
    u = u.to(torch::kFloat64).clamp(0.0, 1.0).contiguous();
    const Dims3 dims = {static_cast<int>(u.size(0)), static_cast<int>(u.size(1)),
                        static_cast<int>(u.size(2))};
    ProbabilityVolume p(dims, spacing_mm);
    auto acc = u.accessor<double, 3>();
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) p.set(x, y, z, acc[x][y][z]);
    return p;
}

ProbabilityVolume forward_test(ReconNet model, const ViewSet& views, Vec3 spacing_mm) {
    torch::NoGradGuard no_grad;
    model->eval();
    const auto dtype = model->parameters().front().scalar_type();
    torch::Tensor vt;
    if (model->config().has_views()) {
        ViewSet selected = views.subset(model->config().views);
        vt = views_to_tensor(selected, dtype);
    }
    auto pred = model->forward_test_t(vt, 1);
    return tensor_to_probability(pred, spacing_mm);
}

ProbabilityVolume ae_forward(ReconNet model, const Volume3D& volume) {
    torch::NoGradGuard no_grad;
    model->eval();
    const auto dtype = model->parameters().front().scalar_type();
    auto pred = model->ae_forward_t(volume_to_tensor(volume, dtype));
    return tensor_to_probability(pred, volume.spacing_mm());
}

std::int64_t parameter_count(const ReconNet& model) {
    std::int64_t n = 0;
    for (const auto& p : model->parameters()) n += p.numel();
    return n;
}

void save_checkpoint(ReconNet model, const std::filesystem::path& path,
                     const nlohmann::ordered_json& meta) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    torch::save(model, path.string());
    nlohmann::ordered_json side;
    side["model_config"] = model->config().to_json();
    side["meta"] = meta;
    std::ofstream out(path.string() + ".json", std::ios::trunc);
    if (!out) throw FileError("cannot write checkpoint sidecar for " + path.string());
    out << side.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw FileError("missing checkpoint: " + path.string());
    const auto side_path = path.string() + ".json";
    std::ifstream in(side_path);
    if (!in) throw FileError("missing checkpoint sidecar: " + side_path);
    nlohmann::json side;
    try {
        in >> side;
    } catch (const nlohmann::json::exception& e) {
        throw FileError("bad checkpoint sidecar: " + std::string(e.what()));
    }

    LoadedCheckpoint lc;
    lc.config = ModelConfig::from_json(side.at("model_config"));
    lc.meta = side.value("meta", nlohmann::json::object());
    lc.model = ReconNet(lc.config);

    // the archive reader swaps tensor storage without shape checks, so record
    // the shapes the config implies and verify them after the load
    std::vector<std::vector<std::int64_t>> expected;
    for (const auto& p : lc.model->parameters()) expected.push_back(p.sizes().vec());
    try {
        torch::load(lc.model, path.string());
    } catch (const c10::Error& e) {
        throw StateError("checkpoint does not match its sidecar config: " +
                         std::string(e.what_without_backtrace()));
    }
    const auto params = lc.model->parameters();
    if (params.size() != expected.size()) {
        throw StateError("checkpoint does not match its sidecar config: parameter count");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].sizes().vec() != expected[i]) {
            throw StateError("checkpoint does not match its sidecar config: parameter shape");
        }
    }
    lc.model->eval();
    return lc;
}

}  // namespace cardiorecon
