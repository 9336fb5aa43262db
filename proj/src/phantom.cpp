#include "cardiorecon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "cardiorecon/geometry.hpp"
#include "cardiorecon/rng.hpp"

namespace cardiorecon {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kNoiseModes = 4;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void check_range(const Range& r, const char* name, double lo_bound, double hi_bound) {
    if (!(r.lo <= r.hi)) throw ParamError(std::string(name) + ": lo > hi");
    if (r.lo < lo_bound || r.hi > hi_bound) {
        throw ParamError(std::string(name) + ": outside valid bounds");
    }
}

}  // namespace

void ParamRanges::validate(Dims3 dims, Vec3 spacing_mm) const {
    check_range(radius_x_mm, "radius_x_mm", 5.0, 1e3);
    check_range(radius_y_mm, "radius_y_mm", 5.0, 1e3);
    check_range(radius_z_mm, "radius_z_mm", 5.0, 1e3);
    check_range(wall_base_mm, "wall_base_mm", 0.0, 1e3);
    check_range(wall_apex_coeff, "wall_apex_coeff", -0.9, 0.9);
    check_range(wall_azim_coeff, "wall_azim_coeff", 0.0, 0.9);
    check_range(axis_twist_deg, "axis_twist_deg", -90.0, 90.0);
    check_range(axis_twist_rate_deg, "axis_twist_rate_deg", -90.0, 90.0);
    check_range(truncation_fraction, "truncation_fraction", 1e-6, 1.0);
    check_range(bend_deg, "bend_deg", 0.0, 45.0);
    check_range(noise_amp, "noise_amp", 0.0, 0.2);

    // Inner surface must stay strictly inside the outer one, with a wall of at
    // least two voxels so augmentation cannot shatter the shell.
    const double wall_min = wall_base_mm.lo * (1.0 - wall_azim_coeff.hi) *
                            (1.0 + std::min(0.0, wall_apex_coeff.lo));
    const double max_spacing = std::max({spacing_mm[0], spacing_mm[1], spacing_mm[2]});
    if (wall_min <= 0.0) throw ParamError("degenerate ranges: inner surface can reach the outer");
    if (wall_min < 2.0 * max_spacing) {
        throw ParamError("degenerate ranges: wall can get thinner than 2 voxels");
    }

    // The shell (with bend displacement and noise) must fit the grid with a
    // two-voxel margin. Twist mixes x and y, so both in-plane axes use the
    // larger radius bound.
    const double t_max = wall_base_mm.hi * (1.0 + wall_azim_coeff.hi) *
                         (1.0 + std::max(0.0, wall_apex_coeff.hi));
    // bend displacement saturates as uz^2/(1+uz^2); |uz| is bounded by the
    // epicardial z-extent over the smallest base z-radius
    const double u_max = (1.0 + t_max / radius_z_mm.lo) * (1.0 + noise_amp.hi);
    const double bend_disp = std::tan(bend_deg.hi * kPi / 180.0) * radius_z_mm.hi * 0.5 *
                             (u_max * u_max / (1.0 + u_max * u_max));
    const double ext_xy =
        (std::max(radius_x_mm.hi, radius_y_mm.hi) + t_max) * (1.0 + noise_amp.hi) + bend_disp;
    const double ext_z = (radius_z_mm.hi + t_max) * (1.0 + noise_amp.hi);
    const double half_x = (dims[0] / 2 - 2) * spacing_mm[0];
    const double half_y = (dims[1] / 2 - 2) * spacing_mm[1];
    const double half_z = (dims[2] / 2 - 2) * spacing_mm[2];
    if (ext_xy > std::min(half_x, half_y) || ext_z > half_z) {
        throw ParamError("ranges allow shells larger than the target grid");
    }
}

Volume3D render_phantom(const PhantomParams& params, Dims3 dims, Vec3 spacing_mm) {
    const auto [ax, ay, az] = params.base_radii_mm;
    const double bend_k = std::tan(params.bend_deg * kPi / 180.0);
    const double cos_b = std::cos(params.bend_azimuth_rad);
    const double sin_b = std::sin(params.bend_azimuth_rad);
    const double z_cut = (az + params.wall_base_mm) * (2.0 * params.truncation_fraction - 1.0);

    // the analytic shape is centered on the center voxel floor(dims/2), the
    // same convention as crop_pad_center, extract_views and rotate_volume
    const double ccx = dims[0] / 2;
    const double ccy = dims[1] / 2;
    const double ccz = dims[2] / 2;

    Volume3D raw(dims, spacing_mm);
    std::size_t idx = 0;
    for (int k = 0; k < dims[2]; ++k) {
        const double pz = (k - ccz) * spacing_mm[2];
        // ellipse orientation progresses along the long axis
        const double theta = params.axis_twist_rad + params.axis_twist_rate_rad * (pz / az);
        const double cos_t = std::cos(theta);
        const double sin_t = std::sin(theta);
        for (int j = 0; j < dims[1]; ++j) {
            const double py = (j - ccy) * spacing_mm[1];
            for (int i = 0; i < dims[0]; ++i, ++idx) {
                const double px = (i - ccx) * spacing_mm[0];
                if (pz > z_cut) continue;

                // global bend: in-plane displacement saturating away from the
                // equator, so extreme slices do not run off the grid
                const double uz2 = (pz / az) * (pz / az);
                const double disp = bend_k * az * 0.5 * uz2 / (1.0 + uz2);
                double qx = px - disp * cos_b;
                double qy = py - disp * sin_b;

                // in-plane twist of the ellipse axes
                const double rx = cos_t * qx + sin_t * qy;
                const double ry = -sin_t * qx + cos_t * qy;

                const double ux = rx / ax, uy = ry / ay, uz = pz / az;

                double noise = 0.0;
                for (const NoiseMode& m : params.noise_modes) {
                    noise += std::sin(m.wave[0] * ux + m.wave[1] * uy + m.wave[2] * uz + m.phase);
                }
                if (!params.noise_modes.empty()) {
                    noise *= params.noise_amp / static_cast<double>(params.noise_modes.size());
                }
                const double surface = 1.0 + noise;

                const double rho_endo = std::sqrt(ux * ux + uy * uy + uz * uz);
                if (rho_endo < surface) continue;  // inside the cavity

                const double phi = std::atan2(ry, rx);
                const double w_apex = clamp01(-uz);
                const double thickness =
                    params.wall_base_mm *
                    (1.0 + params.wall_azim_coeff * std::cos(phi - params.wall_azim_phase_rad)) *
                    (1.0 + params.wall_apex_coeff * w_apex);

                const double ex = rx / (ax + thickness);
                const double ey = ry / (ay + thickness);
                const double ez = pz / (az + thickness);
                const double rho_epi = std::sqrt(ex * ex + ey * ey + ez * ez);
                if (rho_epi <= surface) raw.voxels()[idx] = 1;
            }
        }
    }
    return crop_pad_center(raw, dims);
}

std::pair<Volume3D, PhantomParams> sample_phantom(std::uint64_t seed, const ParamRanges& ranges,
                                                  Dims3 dims, Vec3 spacing_mm) {
    ranges.validate(dims, spacing_mm);
    Rng rng(seed);

    PhantomParams p;
    p.base_radii_mm = {rng.uniform(ranges.radius_x_mm.lo, ranges.radius_x_mm.hi),
                       rng.uniform(ranges.radius_y_mm.lo, ranges.radius_y_mm.hi),
                       rng.uniform(ranges.radius_z_mm.lo, ranges.radius_z_mm.hi)};
    p.wall_base_mm = rng.uniform(ranges.wall_base_mm.lo, ranges.wall_base_mm.hi);
    p.wall_apex_coeff = rng.uniform(ranges.wall_apex_coeff.lo, ranges.wall_apex_coeff.hi);
    p.wall_azim_coeff = rng.uniform(ranges.wall_azim_coeff.lo, ranges.wall_azim_coeff.hi);
    p.wall_azim_phase_rad = rng.uniform(0.0, 2.0 * kPi);
    p.axis_twist_rad =
        rng.uniform(ranges.axis_twist_deg.lo, ranges.axis_twist_deg.hi) * kPi / 180.0;
    p.axis_twist_rate_rad =
        rng.uniform(ranges.axis_twist_rate_deg.lo, ranges.axis_twist_rate_deg.hi) * kPi / 180.0;
    p.truncation_fraction = rng.uniform(ranges.truncation_fraction.lo, ranges.truncation_fraction.hi);
    p.bend_deg = rng.uniform(ranges.bend_deg.lo, ranges.bend_deg.hi);
    p.bend_azimuth_rad = rng.uniform(0.0, 2.0 * kPi);
    p.noise_amp = rng.uniform(ranges.noise_amp.lo, ranges.noise_amp.hi);

    Rng noise_rng = rng.fork(rng_tag::kNoiseField);
    for (int m = 0; m < kNoiseModes; ++m) {
        NoiseMode mode;
        for (int a = 0; a < 3; ++a) mode.wave[a] = noise_rng.uniform(1.5, 5.0);
        mode.phase = noise_rng.uniform(0.0, 2.0 * kPi);
        p.noise_modes.push_back(mode);
    }

    Volume3D volume = render_phantom(p, dims, spacing_mm);
    if (!volume.has_foreground()) throw ParamError("sampled phantom is empty");
    if (count_components6(volume) != 1) {
        throw ParamError("sampled phantom is not a single connected component");
    }
    return {std::move(volume), std::move(p)};
}

Vec3 spacing_for_dim(int dim) {
    if (dim <= 0) throw ParamError("dim must be positive");
    const double scale = 80.0 / static_cast<double>(dim);
    return {kDefaultSpacingMm[0] * scale, kDefaultSpacingMm[1] * scale,
            kDefaultSpacingMm[2] * scale};
}

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw ParamError("unknown split");
}

namespace {

nlohmann::ordered_json range_to_json(const Range& r) { return {r.lo, r.hi}; }

Range range_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

nlohmann::ordered_json ranges_to_json(const ParamRanges& r) {
    nlohmann::ordered_json j;
    j["radius_x_mm"] = range_to_json(r.radius_x_mm);
    j["radius_y_mm"] = range_to_json(r.radius_y_mm);
    j["radius_z_mm"] = range_to_json(r.radius_z_mm);
    j["wall_base_mm"] = range_to_json(r.wall_base_mm);
    j["wall_apex_coeff"] = range_to_json(r.wall_apex_coeff);
    j["wall_azim_coeff"] = range_to_json(r.wall_azim_coeff);
    j["axis_twist_deg"] = range_to_json(r.axis_twist_deg);
    j["axis_twist_rate_deg"] = range_to_json(r.axis_twist_rate_deg);
    j["truncation_fraction"] = range_to_json(r.truncation_fraction);
    j["bend_deg"] = range_to_json(r.bend_deg);
    j["noise_amp"] = range_to_json(r.noise_amp);
    return j;
}

ParamRanges ranges_from_json(const nlohmann::json& j) {
    ParamRanges r;
    r.radius_x_mm = range_from_json(j.at("radius_x_mm"));
    r.radius_y_mm = range_from_json(j.at("radius_y_mm"));
    r.radius_z_mm = range_from_json(j.at("radius_z_mm"));
    r.wall_base_mm = range_from_json(j.at("wall_base_mm"));
    r.wall_apex_coeff = range_from_json(j.at("wall_apex_coeff"));
    r.wall_azim_coeff = range_from_json(j.at("wall_azim_coeff"));
    r.axis_twist_deg = range_from_json(j.at("axis_twist_deg"));
    r.axis_twist_rate_deg = range_from_json(j.at("axis_twist_rate_deg"));
    r.truncation_fraction = range_from_json(j.at("truncation_fraction"));
    r.bend_deg = range_from_json(j.at("bend_deg"));
    r.noise_amp = range_from_json(j.at("noise_amp"));
    return r;
}

}  // namespace

const std::vector<std::string>& DatasetManifest::ids(Split split) const {
    switch (split) {
        case Split::Train: return train_ids;
        case Split::Val: return val_ids;
        case Split::Test: return test_ids;
    }
    throw ParamError("unknown split");
}

std::filesystem::path DatasetManifest::volume_path(const std::string& id) const {
    auto it = entries.find(id);
    if (it == entries.end()) throw FileError("unknown subject id: " + id);
    return root / it->second;
}

Volume3D DatasetManifest::load_volume(const std::string& id) const {
    return load_vol3d(volume_path(id));
}

void DatasetManifest::validate(bool check_files) const {
    std::vector<std::string> all;
    all.insert(all.end(), train_ids.begin(), train_ids.end());
    all.insert(all.end(), val_ids.begin(), val_ids.end());
    all.insert(all.end(), test_ids.begin(), test_ids.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
        throw ParamError("manifest splits are not disjoint");
    }
    if (all.size() != entries.size()) {
        throw ParamError("manifest splits do not cover all entries");
    }
    for (const auto& id : all) {
        if (!entries.contains(id)) throw ParamError("split id missing from entries: " + id);
    }
    if (check_files) {
        for (const auto& [id, rel] : entries) {
            const Volume3D v = load_volume(id);  // throws FileError on problems
            if (v.dims() != dims) throw FileError("volume dims mismatch for " + id);
        }
    }
}

void DatasetManifest::save(const std::filesystem::path& manifest_path) const {
    nlohmann::ordered_json j;
    j["root"] = ".";
    j["spacing_mm"] = spacing_mm;
    j["dims"] = dims;
    j["generator"]["seed"] = generator_seed;
    j["generator"]["ranges"] = ranges_to_json(ranges);
    j["splits"]["train"] = train_ids;
    j["splits"]["val"] = val_ids;
    j["splits"]["test"] = test_ids;
    j["entries"] = entries;

    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw FileError("cannot write manifest: " + manifest_path.string());
    out << j.dump(2) << '\n';
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw FileError("cannot open manifest: " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FileError("bad manifest json: " + std::string(e.what()));
    }

    DatasetManifest m;
    try {
        const auto rel_root = std::filesystem::path(j.at("root").get<std::string>());
        m.root = manifest_path.parent_path() / rel_root;
        for (int a = 0; a < 3; ++a) {
            m.spacing_mm[a] = j.at("spacing_mm").at(a).get<double>();
            m.dims[a] = j.at("dims").at(a).get<int>();
        }
        m.generator_seed = j.at("generator").at("seed").get<std::uint64_t>();
        m.ranges = ranges_from_json(j.at("generator").at("ranges"));
        m.train_ids = j.at("splits").at("train").get<std::vector<std::string>>();
        m.val_ids = j.at("splits").at("val").get<std::vector<std::string>>();
        m.test_ids = j.at("splits").at("test").get<std::vector<std::string>>();
        m.entries = j.at("entries").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FileError("manifest missing fields: " + std::string(e.what()));
    }
    m.validate(false);
    return m;
}

DatasetManifest build_dataset(int n_train, int n_val, int n_test, std::uint64_t seed,
                              const std::filesystem::path& out_dir,
                              const BuildDatasetOptions& options) {
    if (n_train < 1 || n_val < 1 || n_test < 1) throw ParamError("split counts must be >= 1");
    const Vec3 spacing = spacing_for_dim(options.dim);
    const Dims3 dims = {options.dim, options.dim, options.dim};
    options.ranges.validate(dims, spacing);

    const auto manifest_path = out_dir / "manifest.json";
    if (std::filesystem::exists(manifest_path) && !options.overwrite) {
        throw FileError("refusing to overwrite existing dataset at " + out_dir.string() +
                        " (pass overwrite)");
    }
    std::filesystem::create_directories(out_dir / "volumes");

    DatasetManifest m;
    m.root = out_dir;
    m.spacing_mm = spacing;
    m.dims = dims;
    m.generator_seed = seed;
    m.ranges = options.ranges;

    const int total = n_train + n_val + n_test;
    const Rng subject_seeds = Rng(seed).fork(rng_tag::kSubject);
    for (int i = 0; i < total; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "subject_%04d", i);
        const std::uint64_t subject_seed = subject_seeds.fork(static_cast<std::uint64_t>(i)).next_u64();
        auto [volume, params] = sample_phantom(subject_seed, options.ranges, dims, spacing);
        const std::string rel = std::string("volumes/") + id + ".vol3d";
        save_vol3d(volume, out_dir / rel);
        m.entries[id] = rel;
        if (i < n_train) {
            m.train_ids.push_back(id);
        } else if (i < n_train + n_val) {
            m.val_ids.push_back(id);
        } else {
            m.test_ids.push_back(id);
        }
    }
    m.save(manifest_path);
    return m;
}

}  // namespace cardiorecon
