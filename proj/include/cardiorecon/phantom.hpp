#ifndef CARDIORECON_PHANTOM_HPP
#define CARDIORECON_PHANTOM_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cardiorecon/volume.hpp"

namespace cardiorecon {

/// One smooth sinusoidal mode of the surface perturbation field.
struct NoiseMode {
    Vec3 wave;    // radians per unit of normalized coordinates
    double phase;
};

/// Full parameter set of one synthetic left-ventricle-like shell. The shape is
/// a truncated thick ellipsoid: an endocardial ellipsoid with semi-axes
/// base_radii_mm, a wall whose thickness is modulated toward the apex and
/// around the azimuth, an in-plane twist of the ellipse axes that progresses
/// along the long axis, a global bend of the long axis, a basal cut that
/// leaves the base open, and a smooth multiplicative surface perturbation
/// shared by both surfaces.
struct PhantomParams {
    Vec3 base_radii_mm = {22.0, 22.0, 34.0};  // endocardial semi-axes (x, y, z)
    double wall_base_mm = 9.0;
    double wall_apex_coeff = 0.0;    // relative thickness change toward the apex
    double wall_azim_coeff = 0.0;    // relative azimuthal thickness modulation
    double wall_azim_phase_rad = 0.0;
    double axis_twist_rad = 0.0;       // in-plane rotation of the ellipse axes
    double axis_twist_rate_rad = 0.0;  // additional rotation per unit z/radius_z
    double truncation_fraction = 0.75;  // basal cut, fraction of the full z span
    double bend_deg = 0.0;           // long-axis curvature magnitude
    double bend_azimuth_rad = 0.0;   // bending direction in the x-y plane
    double noise_amp = 0.0;          // normalized surface perturbation amplitude
    std::vector<NoiseMode> noise_modes;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Sampling ranges for the phantom population. Defaults are tuned so that a
/// population of shells shares topology while varying enough that each view
/// plane carries distinct shape information.
struct ParamRanges {
    Range radius_x_mm = {14.0, 20.0};
    Range radius_y_mm = {16.0, 20.0};
    Range radius_z_mm = {27.0, 38.0};
    Range wall_base_mm = {9.0, 11.5};
    Range wall_apex_coeff = {-0.10, 0.05};
    Range wall_azim_coeff = {0.0, 0.10};
    Range axis_twist_deg = {-55.0, 55.0};
    Range axis_twist_rate_deg = {-40.0, 40.0};
    Range truncation_fraction = {0.62, 0.86};
    Range bend_deg = {0.0, 26.0};
    Range noise_amp = {0.03, 0.10};

    /// Throws ParamError on degenerate settings (non-positive wall, shell not
    /// guaranteed to fit the grid, truncation outside (0,1], ...).
    void validate(Dims3 dims, Vec3 spacing_mm) const;
};

/// Renders the shell described by `params` on the given grid and recenters it
/// at its center of mass. Deterministic in `params`.
Volume3D render_phantom(const PhantomParams& params, Dims3 dims, Vec3 spacing_mm);

/// Draws parameters from `ranges` (deterministically in `seed`) and renders.
/// Throws ParamError if the ranges are degenerate or the rendered shell is not
/// a single 6-connected component.
std::pair<Volume3D, PhantomParams> sample_phantom(std::uint64_t seed, const ParamRanges& ranges,
                                                  Dims3 dims = kDefaultDims,
                                                  Vec3 spacing_mm = kDefaultSpacingMm);

/// Spacing that keeps the physical field of view of the default 80-cube when
/// the grid is coarsened to dim^3.
Vec3 spacing_for_dim(int dim);

enum class Split { Train, Val, Test };
std::string to_string(Split split);

/// Dataset index: generated volumes, their train/val/test membership, and the
/// generator settings needed to reproduce or extend the set.
struct DatasetManifest {
    std::filesystem::path root;  // directory the entry paths are relative to
    Vec3 spacing_mm = kDefaultSpacingMm;
    Dims3 dims = kDefaultDims;
    std::uint64_t generator_seed = 0;
    ParamRanges ranges;
    std::map<std::string, std::string> entries;  // id -> relative path
    std::vector<std::string> train_ids, val_ids, test_ids;

    const std::vector<std::string>& ids(Split split) const;
    std::filesystem::path volume_path(const std::string& id) const;
    Volume3D load_volume(const std::string& id) const;

    /// Split lists must be disjoint and cover all entries; with
    /// `check_files`, every referenced volume must exist and parse.
    void validate(bool check_files = false) const;

    void save(const std::filesystem::path& manifest_path) const;
    static DatasetManifest load(const std::filesystem::path& manifest_path);
};

struct BuildDatasetOptions {
    int dim = 80;
    ParamRanges ranges;
    bool overwrite = false;
};

/// Generates n_train+n_val+n_test phantoms under out_dir and writes
/// manifest.json. Per-subject seeds derive from the master seed, so any
/// subject is reproducible in isolation. Refuses to clobber an existing
/// manifest unless options.overwrite is set.
DatasetManifest build_dataset(int n_train, int n_val, int n_test, std::uint64_t seed,
                              const std::filesystem::path& out_dir,
                              const BuildDatasetOptions& options = {});

}  // namespace cardiorecon

#endif
