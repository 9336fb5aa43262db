#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "cardiorecon/models.hpp"
#include "cardiorecon/volume.hpp"

namespace cardiorecon {

/// Per-voxel foreground frequency over n thresholded prior samples. Every
/// value is an exact multiple of 1/n_samples.
struct ConfidenceMap {
    ProbabilityVolume prob;
    int n_samples = 0;
    std::uint64_t seed = 0;
};

/// Samples z ~ N(0,1) n times, decodes each with the fixed view embedding,
/// thresholds at 0.5 and averages the binary volumes. Deterministic in seed.
/// Requires a variational model (AE and TL-net have no prior to sample).
ConfidenceMap confidence_map(ReconNet model, const ViewSet& views, int n, std::uint64_t seed,
                             Vec3 spacing_mm = kDefaultSpacingMm);

/// Mean per-voxel variance p(1-p) over the whole map; 0 means every sample
/// agreed everywhere.
double mean_voxel_variance(const ConfidenceMap& map);

/// Mean p(1-p) restricted to the three center planes, indexed
/// {LA1 (x = dx/2), LA2 (y = dy/2), SA (z = dz/2)}.
std::array<double, 3> per_plane_uncertainty(const ConfidenceMap& map);

/// Writes the Fig.-2-style panel grid for one subject: two rows of three
/// center-slice panels (top row overlay_{la1,la2,sa}.png, bottom row
/// confidence_{la1,la2,sa}.png). Overlays: white background, ground truth
/// only in black, reconstruction only in red, agreement in maroon.
/// Confidence panels use the hot colormap with the scale fixed to [0,1].
void render_overlays(const Volume3D& gt, const Volume3D& recon, const ConfidenceMap& map,
                     const std::filesystem::path& out_dir);

}  // namespace cardiorecon
