#include "cardiorecon/uncertainty.hpp"

#include <functional>

#include "cardiorecon/image_io.hpp"
#include "cardiorecon/rng.hpp"

namespace cardiorecon {

ConfidenceMap confidence_map(ReconNet model, const ViewSet& views, int n, std::uint64_t seed,
                             Vec3 spacing_mm) {
    const ModelConfig& cfg = model->config();
    if (!cfg.is_variational()) {
        throw ConfigError("confidence maps need a variational model (prior sampling)");
    }
    if (n < 1) throw ParamError("confidence_map needs n >= 1");

    torch::NoGradGuard no_grad;
    model->eval();
    const auto dtype = model->parameters().front().scalar_type();
    const int d = cfg.volume_dim;

    torch::Tensor x;
    if (cfg.has_views()) {
        x = model->encode_views_t(views_to_tensor(views.subset(cfg.views), dtype));
    }

    Rng rng = Rng(seed).fork(rng_tag::kConfidence);
    torch::Tensor counts = torch::zeros({d, d, d}, torch::kLong);
    constexpr int kChunk = 16;
    for (int done = 0; done < n; done += kChunk) {
        const int c = std::min(kChunk, n - done);
        // sample-major draws keep the stream independent of the chunk size
        std::vector<double> z_values(static_cast<std::size_t>(c) * cfg.latent_dim);
        for (auto& v : z_values) v = rng.normal();
        auto z = torch::from_blob(z_values.data(), {c, cfg.latent_dim},
                                  torch::TensorOptions().dtype(torch::kFloat64))
                     .to(dtype);
        torch::Tensor xc;
        if (cfg.has_views()) xc = x.expand({c, x.size(1)});
        auto pred = model->decode_t(z, xc);              // [c,1,D,D,D], (x,y,z) indexed
        counts += (pred >= 0.5).sum(0).squeeze(0).to(torch::kLong);
    }

    ConfidenceMap map;
    map.n_samples = n;
    map.seed = seed;
    map.prob = ProbabilityVolume({d, d, d}, spacing_mm);
    auto acc = counts.accessor<std::int64_t, 3>();
    for (int z = 0; z < d; ++z) {
        for (int y = 0; y < d; ++y) {
            for (int xi = 0; xi < d; ++xi) {
                map.prob.set(xi, y, z, static_cast<double>(acc[xi][y][z]) / n);
            }
        }
    }
    return map;
}

double mean_voxel_variance(const ConfidenceMap& map) {
    const auto& values = map.prob.values();
    if (values.empty()) throw ParamError("empty confidence map");
    double sum = 0.0;
    for (double p : values) sum += p * (1.0 - p);
    return sum / static_cast<double>(values.size());
}

std::array<double, 3> per_plane_uncertainty(const ConfidenceMap& map) {
    const auto& d = map.prob.dims();
    const int cx = d[0] / 2, cy = d[1] / 2, cz = d[2] / 2;
    std::array<double, 3> out{};
    double sum = 0.0;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y) sum += map.prob.at(cx, y, z) * (1.0 - map.prob.at(cx, y, z));
    out[0] = sum / (static_cast<double>(d[1]) * d[2]);
    sum = 0.0;
    for (int z = 0; z < d[2]; ++z)
        for (int x = 0; x < d[0]; ++x) sum += map.prob.at(x, cy, z) * (1.0 - map.prob.at(x, cy, z));
    out[1] = sum / (static_cast<double>(d[0]) * d[2]);
    sum = 0.0;
    for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) sum += map.prob.at(x, y, cz) * (1.0 - map.prob.at(x, y, cz));
    out[2] = sum / (static_cast<double>(d[0]) * d[1]);
    return out;
}

namespace {

struct Plane {
    const char* name;
    int width, height;
    /// voxel coordinate of panel pixel (u, v)
    std::function<std::array<int, 3>(int, int)> voxel;
};

std::vector<Plane> center_planes(const Dims3& d) {
    const int cx = d[0] / 2, cy = d[1] / 2, cz = d[2] / 2;
    return {
        {"la1", d[1], d[2], [cx](int u, int v) { return std::array<int, 3>{cx, u, v}; }},
        {"la2", d[0], d[2], [cy](int u, int v) { return std::array<int, 3>{u, cy, v}; }},
        {"sa", d[0], d[1], [cz](int u, int v) { return std::array<int, 3>{u, v, cz}; }},
    };
}

}  // namespace

void render_overlays(const Volume3D& gt, const Volume3D& recon, const ConfidenceMap& map,
                     const std::filesystem::path& out_dir) {
    if (gt.dims() != recon.dims() || gt.dims() != map.prob.dims()) {
        throw ShapeError("overlay inputs must share one grid");
    }
    std::filesystem::create_directories(out_dir);

    for (const Plane& plane : center_planes(gt.dims())) {
        ImageRGB overlay(plane.width, plane.height);
        ImageRGB confidence(plane.width, plane.height);
        for (int v = 0; v < plane.height; ++v) {
            for (int u = 0; u < plane.width; ++u) {
                const auto [x, y, z] = plane.voxel(u, v);
                const bool g = gt.at(x, y, z) != 0;
                const bool r = recon.at(x, y, z) != 0;
                if (g && r) {
                    overlay.set(u, v, 96, 0, 0);  // agreement: maroon
                } else if (g) {
                    overlay.set(u, v, 0, 0, 0);  // ground truth only: black
                } else if (r) {
                    overlay.set(u, v, 255, 0, 0);  // reconstruction only: red
                } else {
                    overlay.set(u, v, 255, 255, 255);
                }
                const auto [cr, cg, cb] = hot_colormap(map.prob.at(x, y, z));
                confidence.set(u, v, cr, cg, cb);
            }
        }
        write_png(overlay, out_dir / (std::string("overlay_") + plane.name + ".png"));
        write_png(confidence, out_dir / (std::string("confidence_") + plane.name + ".png"));
    }
}

}  // namespace cardiorecon
