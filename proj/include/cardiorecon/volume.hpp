#ifndef CARDIORECON_VOLUME_HPP
#define CARDIORECON_VOLUME_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "cardiorecon/errors.hpp"

namespace cardiorecon {

using Dims3 = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

constexpr Dims3 kDefaultDims = {80, 80, 80};
constexpr Vec3 kDefaultSpacingMm = {1.2, 1.2, 2.0};

/// Binary 3D segmentation volume. Voxels are strictly {0,1}, stored x-fastest:
/// linear index = x + dims[0] * (y + dims[1] * z). Spacing is physical voxel
/// size in millimeters.
class Volume3D {
public:
    Volume3D() : Volume3D(kDefaultDims, kDefaultSpacingMm) {}
    Volume3D(Dims3 dims, Vec3 spacing_mm);

    const Dims3& dims() const noexcept { return dims_; }
    const Vec3& spacing_mm() const noexcept { return spacing_; }

    std::size_t size() const noexcept { return voxels_.size(); }
    std::size_t linear(int x, int y, int z) const noexcept {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims_[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_[1]) * z);
    }
    std::uint8_t at(int x, int y, int z) const { return voxels_[linear(x, y, z)]; }
    void set(int x, int y, int z, std::uint8_t v) { voxels_[linear(x, y, z)] = v ? 1 : 0; }
    bool in_bounds(int x, int y, int z) const noexcept {
        return x >= 0 && y >= 0 && z >= 0 && x < dims_[0] && y < dims_[1] && z < dims_[2];
    }

    const std::vector<std::uint8_t>& voxels() const noexcept { return voxels_; }
    std::vector<std::uint8_t>& voxels() noexcept { return voxels_; }

    std::size_t foreground_count() const;
    bool has_foreground() const;

    bool same_grid(const Volume3D& other) const {
        return dims_ == other.dims_ && spacing_ == other.spacing_;
    }

    bool operator==(const Volume3D& other) const = default;

private:
    Dims3 dims_;
    Vec3 spacing_;
    std::vector<std::uint8_t> voxels_;
};

/// Real-valued volume with values in [0,1] (decoder outputs, confidence maps).
class ProbabilityVolume {
public:
    ProbabilityVolume() : ProbabilityVolume(kDefaultDims, kDefaultSpacingMm) {}
    ProbabilityVolume(Dims3 dims, Vec3 spacing_mm);

    const Dims3& dims() const noexcept { return dims_; }
    const Vec3& spacing_mm() const noexcept { return spacing_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t linear(int x, int y, int z) const noexcept {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims_[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_[1]) * z);
    }
    double at(int x, int y, int z) const { return values_[linear(x, y, z)]; }
    void set(int x, int y, int z, double v) { values_[linear(x, y, z)] = v; }

    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    /// Throws ParamError if any value falls outside [0,1].
    void check_range() const;

private:
    Dims3 dims_;
    Vec3 spacing_;
    std::vector<double> values_;
};

/// View plane identifiers. LA1 is the constant-x center plane, LA2 the
/// constant-y plane, SA the constant-z (short-axis) plane. Canonical order is
/// LA1 < LA2 < SA.
enum class ViewLabel : int { LA1 = 0, LA2 = 1, SA = 2 };

std::string to_string(ViewLabel label);
ViewLabel view_label_from_string(const std::string& s);

inline std::ostream& operator<<(std::ostream& os, ViewLabel label) {
    return os << to_string(label);
}

/// One 2D binary mask per selected view plane. All masks share a single
/// width x height shape.
class ViewSet {
public:
    ViewSet() = default;
    ViewSet(int width, int height) : width_(width), height_(height) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t count() const noexcept { return labels_.size(); }

    const std::vector<ViewLabel>& labels() const noexcept { return labels_; }
    const std::vector<std::uint8_t>& mask(std::size_t i) const { return masks_[i]; }
    const std::vector<std::uint8_t>& mask_for(ViewLabel label) const;
    bool has(ViewLabel label) const;

    std::uint8_t at(std::size_t view, int u, int v) const {
        return masks_[view][static_cast<std::size_t>(u) + static_cast<std::size_t>(width_) * v];
    }

    /// Appends a mask; labels must arrive in canonical order without repeats.
    void add(ViewLabel label, std::vector<std::uint8_t> mask);

    /// New ViewSet containing only the requested labels (canonical order).
    ViewSet subset(const std::vector<ViewLabel>& labels) const;

    bool operator==(const ViewSet& other) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<ViewLabel> labels_;
    std::vector<std::vector<std::uint8_t>> masks_;
};

/// Sorts labels canonically and rejects duplicates / empty selections.
std::vector<ViewLabel> canonical_view_labels(std::vector<ViewLabel> labels);

// .vol3d container: one JSON header line
//   {"dims":[dx,dy,dz],"spacing_mm":[sx,sy,sz],"dtype":"u8"}\n
// followed by dx*dy*dz raw bytes in x-fastest order. Payload bytes other than
// 0/1 are rejected on read.
void save_vol3d(const Volume3D& volume, const std::filesystem::path& path);
Volume3D load_vol3d(const std::filesystem::path& path);

}  // namespace cardiorecon

#endif
