#include "cardiorecon/volume.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace cardiorecon {

namespace {

void check_dims_spacing(const Dims3& dims, const Vec3& spacing) {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] <= 0) throw ParamError("dims must be strictly positive");
        if (!(spacing[a] > 0.0)) throw ParamError("spacing_mm must be strictly positive");
    }
}

}  // namespace

Volume3D::Volume3D(Dims3 dims, Vec3 spacing_mm) : dims_(dims), spacing_(spacing_mm) {
    check_dims_spacing(dims_, spacing_);
    voxels_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], 0);
}

std::size_t Volume3D::foreground_count() const {
    return static_cast<std::size_t>(
        std::count(voxels_.begin(), voxels_.end(), std::uint8_t{1}));
}

bool Volume3D::has_foreground() const {
    return std::find(voxels_.begin(), voxels_.end(), std::uint8_t{1}) != voxels_.end();
}

ProbabilityVolume::ProbabilityVolume(Dims3 dims, Vec3 spacing_mm)
    : dims_(dims), spacing_(spacing_mm) {
    check_dims_spacing(dims_, spacing_);
    values_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], 0.0);
}

void ProbabilityVolume::check_range() const {
    for (double v : values_) {
        if (!(v >= 0.0 && v <= 1.0)) throw ParamError("probability value outside [0,1]");
    }
}

std::string to_string(ViewLabel label) {
    switch (label) {
        case ViewLabel::LA1: return "la1";
        case ViewLabel::LA2: return "la2";
        case ViewLabel::SA: return "sa";
    }
    throw ParamError("unknown view label");
}

ViewLabel view_label_from_string(const std::string& s) {
    if (s == "la1" || s == "LA1" || s == "1") return ViewLabel::LA1;
    if (s == "la2" || s == "LA2" || s == "2") return ViewLabel::LA2;
    if (s == "sa" || s == "SA" || s == "3") return ViewLabel::SA;
    throw ParamError("unknown view label '" + s + "' (expected la1, la2 or sa)");
}

const std::vector<std::uint8_t>& ViewSet::mask_for(ViewLabel label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == label) return masks_[i];
    }
    throw ParamError("view " + to_string(label) + " not present in ViewSet");
}

bool ViewSet::has(ViewLabel label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

void ViewSet::add(ViewLabel label, std::vector<std::uint8_t> mask) {
    if (mask.size() != static_cast<std::size_t>(width_) * height_) {
        throw ShapeError("view mask size does not match ViewSet shape");
    }
    for (std::uint8_t v : mask) {
        if (v > 1) throw ParamError("view mask must be binary");
    }
    // keep labels in canonical order (la1, la2, sa) regardless of call order
    auto pos = labels_.begin();
    while (pos != labels_.end() && static_cast<int>(*pos) < static_cast<int>(label)) ++pos;
    if (pos != labels_.end() && *pos == label) throw ParamError("duplicate view label");
    const auto i = pos - labels_.begin();
    labels_.insert(pos, label);
    masks_.insert(masks_.begin() + i, std::move(mask));
}

ViewSet ViewSet::subset(const std::vector<ViewLabel>& labels) const {
    ViewSet out(width_, height_);
    for (ViewLabel label : canonical_view_labels(labels)) {
        out.add(label, mask_for(label));
    }
    return out;
}

std::vector<ViewLabel> canonical_view_labels(std::vector<ViewLabel> labels) {
    if (labels.empty() || labels.size() > 3) {
        throw ParamError("view selection must contain 1-3 labels");
    }
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
        throw ParamError("duplicate view label in selection");
    }
    return labels;
}

void save_vol3d(const Volume3D& volume, const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["dims"] = volume.dims();
    header["spacing_mm"] = volume.spacing_mm();
    header["dtype"] = "u8";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open for writing: " + path.string());
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(volume.voxels().data()),
              static_cast<std::streamsize>(volume.size()));
    if (!out) throw FileError("short write: " + path.string());
}

Volume3D load_vol3d(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open for reading: " + path.string());

    std::string header_line;
    if (!std::getline(in, header_line)) throw FileError("missing header line: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw FileError("bad header in " + path.string() + ": " + e.what());
    }
    if (!header.contains("dims") || !header.contains("spacing_mm") ||
        header.value("dtype", "") != "u8") {
        throw FileError("header missing dims/spacing_mm/dtype=u8: " + path.string());
    }

    Dims3 dims{};
    Vec3 spacing{};
    try {
        for (int a = 0; a < 3; ++a) {
            dims[a] = header["dims"].at(a).get<int>();
            spacing[a] = header["spacing_mm"].at(a).get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw FileError("bad dims/spacing in " + path.string() + ": " + e.what());
    }

    Volume3D volume(dims, spacing);
    in.read(reinterpret_cast<char*>(volume.voxels().data()),
            static_cast<std::streamsize>(volume.size()));
    if (in.gcount() != static_cast<std::streamsize>(volume.size())) {
        throw FileError("truncated payload: " + path.string());
    }
    for (std::uint8_t v : volume.voxels()) {
        if (v > 1) throw FileError("nonbinary payload byte in " + path.string());
    }
    return volume;
}

}  // namespace cardiorecon
