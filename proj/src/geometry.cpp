#include "cardiorecon/geometry.hpp"

#include <cmath>

namespace cardiorecon {

Vec3 center_of_mass(const Volume3D& volume) {
    const Dims3& d = volume.dims();
    double sx = 0.0, sy = 0.0, sz = 0.0;
    std::size_t n = 0;
    std::size_t idx = 0;
    const auto& vox = volume.voxels();
    for (int z = 0; z < d[2]; ++z) {
        for (int y = 0; y < d[1]; ++y) {
            for (int x = 0; x < d[0]; ++x, ++idx) {
                if (vox[idx]) {
                    sx += x;
                    sy += y;
                    sz += z;
                    ++n;
                }
            }
        }
    }
    if (n == 0) throw EmptySegmentationError("center_of_mass of empty volume");
    const double inv = 1.0 / static_cast<double>(n);
    return {sx * inv, sy * inv, sz * inv};
}

int round_half_down(double x) {
    return static_cast<int>(std::ceil(x - 0.5));
}

Volume3D crop_pad_center(const Volume3D& volume, Dims3 target) {
    const Vec3 com = center_of_mass(volume);  // throws on empty input
    Dims3 center{};
    Dims3 offset{};
    for (int a = 0; a < 3; ++a) {
        if (target[a] <= 0) throw ParamError("crop target dims must be positive");
        center[a] = target[a] / 2;
        offset[a] = round_half_down(com[a]) - center[a];  // out + offset = src
    }

    Volume3D out(target, volume.spacing_mm());
    const Dims3& sd = volume.dims();
    for (int z = 0; z < target[2]; ++z) {
        const int zs = z + offset[2];
        if (zs < 0 || zs >= sd[2]) continue;
        for (int y = 0; y < target[1]; ++y) {
            const int ys = y + offset[1];
            if (ys < 0 || ys >= sd[1]) continue;
            for (int x = 0; x < target[0]; ++x) {
                const int xs = x + offset[0];
                if (xs < 0 || xs >= sd[0]) continue;
                out.voxels()[out.linear(x, y, z)] = volume.at(xs, ys, zs);
            }
        }
    }
    return out;
}

ViewSet extract_views(const Volume3D& volume) {
    const Dims3& d = volume.dims();
    if (d[0] != d[1] || d[1] != d[2]) {
        throw ShapeError("extract_views requires a cubic volume");
    }
    const int n = d[0];
    const int cx = d[0] / 2, cy = d[1] / 2, cz = d[2] / 2;

    std::vector<std::uint8_t> la1(static_cast<std::size_t>(n) * n);
    std::vector<std::uint8_t> la2(static_cast<std::size_t>(n) * n);
    std::vector<std::uint8_t> sa(static_cast<std::size_t>(n) * n);
    for (int v = 0; v < n; ++v) {
        for (int u = 0; u < n; ++u) {
            const std::size_t i = static_cast<std::size_t>(u) + static_cast<std::size_t>(n) * v;
            la1[i] = volume.at(cx, u, v);  // (u,v) = (y,z)
            la2[i] = volume.at(u, cy, v);  // (u,v) = (x,z)
            sa[i] = volume.at(u, v, cz);   // (u,v) = (x,y)
        }
    }

    ViewSet views(n, n);
    views.add(ViewLabel::LA1, std::move(la1));
    views.add(ViewLabel::LA2, std::move(la2));
    views.add(ViewLabel::SA, std::move(sa));
    return views;
}

Volume3D rotate_volume(const Volume3D& volume, Vec3 angles_deg) {
    constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
    const double ax = angles_deg[0] * kDegToRad;
    const double ay = angles_deg[1] * kDegToRad;
    const double az = angles_deg[2] * kDegToRad;

    if (angles_deg[0] == 0.0 && angles_deg[1] == 0.0 && angles_deg[2] == 0.0) {
        return volume;
    }

    const double cx = std::cos(ax), sx = std::sin(ax);
    const double cy = std::cos(ay), sy = std::sin(ay);
    const double cz = std::cos(az), sz = std::sin(az);

    // R = Rz * Ry * Rx; output voxel o samples source at R^T * (o - c) + c.
    const double r00 = cz * cy, r01 = cz * sy * sx - sz * cx, r02 = cz * sy * cx + sz * sx;
    const double r10 = sz * cy, r11 = sz * sy * sx + cz * cx, r12 = sz * sy * cx - cz * sx;
    const double r20 = -sy, r21 = cy * sx, r22 = cy * cx;

    // rotate about the center voxel floor(dims/2) — the same center that
    // crop_pad_center and extract_views use
    const Dims3& d = volume.dims();
    const double ccx = d[0] / 2, ccy = d[1] / 2, ccz = d[2] / 2;

    Volume3D out(d, volume.spacing_mm());
    std::size_t idx = 0;
    for (int z = 0; z < d[2]; ++z) {
        const double pz = z - ccz;
        for (int y = 0; y < d[1]; ++y) {
            const double py = y - ccy;
            for (int x = 0; x < d[0]; ++x, ++idx) {
                const double px = x - ccx;
                const double qx = r00 * px + r10 * py + r20 * pz + ccx;
                const double qy = r01 * px + r11 * py + r21 * pz + ccy;
                const double qz = r02 * px + r12 * py + r22 * pz + ccz;
                const int ix = static_cast<int>(std::lround(qx));
                const int iy = static_cast<int>(std::lround(qy));
                const int iz = static_cast<int>(std::lround(qz));
                if (volume.in_bounds(ix, iy, iz)) {
                    out.voxels()[idx] = volume.at(ix, iy, iz);
                }
            }
        }
    }
    return out;
}

Volume3D dilate6(const Volume3D& volume) {
    const Dims3& d = volume.dims();
    Volume3D out = volume;
    std::size_t idx = 0;
    for (int z = 0; z < d[2]; ++z) {
        for (int y = 0; y < d[1]; ++y) {
            for (int x = 0; x < d[0]; ++x, ++idx) {
                if (volume.voxels()[idx]) continue;
                const bool hit = (x > 0 && volume.at(x - 1, y, z)) ||
                                 (x + 1 < d[0] && volume.at(x + 1, y, z)) ||
                                 (y > 0 && volume.at(x, y - 1, z)) ||
                                 (y + 1 < d[1] && volume.at(x, y + 1, z)) ||
                                 (z > 0 && volume.at(x, y, z - 1)) ||
                                 (z + 1 < d[2] && volume.at(x, y, z + 1));
                if (hit) out.voxels()[idx] = 1;
            }
        }
    }
    return out;
}

Volume3D erode6(const Volume3D& volume) {
    const Dims3& d = volume.dims();
    Volume3D out = volume;
    std::size_t idx = 0;
    for (int z = 0; z < d[2]; ++z) {
        for (int y = 0; y < d[1]; ++y) {
            for (int x = 0; x < d[0]; ++x, ++idx) {
                if (!volume.voxels()[idx]) continue;
                // Outside the box counts as background.
                const bool keep = (x > 0 && volume.at(x - 1, y, z)) &&
                                  (x + 1 < d[0] && volume.at(x + 1, y, z)) &&
                                  (y > 0 && volume.at(x, y - 1, z)) &&
                                  (y + 1 < d[1] && volume.at(x, y + 1, z)) &&
                                  (z > 0 && volume.at(x, y, z - 1)) &&
                                  (z + 1 < d[2] && volume.at(x, y, z + 1));
                if (!keep) out.voxels()[idx] = 0;
            }
        }
    }
    return out;
}

namespace {

Volume3D repeat(const Volume3D& volume, int radius, Volume3D (*op)(const Volume3D&)) {
    if (radius < 1) throw ParamError("morphology radius must be >= 1");
    Volume3D out = volume;
    for (int i = 0; i < radius; ++i) out = op(out);
    return out;
}

}  // namespace

Volume3D morph_open(const Volume3D& volume, int radius) {
    return repeat(repeat(volume, radius, erode6), radius, dilate6);
}

Volume3D morph_close(const Volume3D& volume, int radius) {
    return repeat(repeat(volume, radius, dilate6), radius, erode6);
}

std::size_t count_components6(const Volume3D& volume) {
    const Dims3& d = volume.dims();
    std::vector<std::uint8_t> seen(volume.size(), 0);
    std::vector<std::array<int, 3>> stack;
    std::size_t components = 0;
    for (int z0 = 0; z0 < d[2]; ++z0) {
        for (int y0 = 0; y0 < d[1]; ++y0) {
            for (int x0 = 0; x0 < d[0]; ++x0) {
                const std::size_t i0 = volume.linear(x0, y0, z0);
                if (!volume.voxels()[i0] || seen[i0]) continue;
                ++components;
                seen[i0] = 1;
                stack.push_back({x0, y0, z0});
                while (!stack.empty()) {
                    const auto [x, y, z] = stack.back();
                    stack.pop_back();
                    constexpr int kOff[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                                {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
                    for (const auto& o : kOff) {
                        const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                        if (!volume.in_bounds(nx, ny, nz)) continue;
                        const std::size_t ni = volume.linear(nx, ny, nz);
                        if (volume.voxels()[ni] && !seen[ni]) {
                            seen[ni] = 1;
                            stack.push_back({nx, ny, nz});
                        }
                    }
                }
            }
        }
    }
    return components;
}

}  // namespace cardiorecon
