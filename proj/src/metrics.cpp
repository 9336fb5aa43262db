#include "cardiorecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cardiorecon {

double dice3d(const Volume3D& a, const Volume3D& b) {
    if (a.dims() != b.dims()) throw ShapeError("dice3d: dimension mismatch");
    std::size_t inter = 0, ca = 0, cb = 0;
    const auto& va = a.voxels();
    const auto& vb = b.voxels();
    for (std::size_t i = 0; i < va.size(); ++i) {
        ca += va[i];
        cb += vb[i];
        inter += static_cast<std::size_t>(va[i] & vb[i]);
    }
    if (ca + cb == 0) return 1.0;  // both empty: perfect agreement
    return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

MassDiff mass_pct_diff(const Volume3D& recon, const Volume3D& gt) {
    if (recon.spacing_mm() != gt.spacing_mm()) {
        throw ShapeError("mass_pct_diff: spacing mismatch");
    }
    const auto cnt_gt = gt.foreground_count();
    if (cnt_gt == 0) throw EmptySegmentationError("mass_pct_diff: empty ground truth");
    const auto cnt_rec = recon.foreground_count();
    // Equal spacing: the voxel volume cancels, so work on counts directly.
    const double signed_pct = 100.0 *
                              (static_cast<double>(cnt_rec) - static_cast<double>(cnt_gt)) /
                              static_cast<double>(cnt_gt);
    return {signed_pct, std::fabs(signed_pct)};
}

namespace {

// Exact squared Euclidean distance transform of a 2D binary mask with
// anisotropic pixel spacing (two separable passes: nearest-in-row sweep, then
// lower envelope of parabolas along columns). Empty rows carry a `big`
// sentinel that exceeds any achievable squared distance, which keeps the
// envelope pass exact without infinity special cases.
class Edt2D {
public:
    void run(const std::uint8_t* mask, int w, int h, double sx, double sy,
             std::vector<double>& dist) {
        const double dx = (w - 1) * sx, dy = (h - 1) * sy;
        const double big = 4.0 * (dx * dx + dy * dy) + 1.0;
        dist.assign(static_cast<std::size_t>(w) * h, big);

        // pass 1: squared distance to the nearest foreground pixel in the row
        for (int y = 0; y < h; ++y) {
            const std::uint8_t* row = mask + static_cast<std::size_t>(y) * w;
            double* out = dist.data() + static_cast<std::size_t>(y) * w;
            int last = -1;
            for (int x = 0; x < w; ++x) {
                if (row[x]) last = x;
                if (last >= 0) {
                    const double d = (x - last) * sx;
                    out[x] = d * d;
                }
            }
            last = -1;
            for (int x = w - 1; x >= 0; --x) {
                if (row[x]) last = x;
                if (last >= 0) {
                    const double d = (last - x) * sx;
                    out[x] = std::min(out[x], d * d);
                }
            }
        }

        // pass 2: parabola lower envelope along each column
        f_.resize(h);
        env_out_.resize(h);
        v_.resize(h);
        zb_.resize(h + 1);
        for (int x = 0; x < w; ++x) {
            for (int y = 0; y < h; ++y) f_[y] = dist[static_cast<std::size_t>(y) * w + x];
            envelope(sy);
            for (int y = 0; y < h; ++y) dist[static_cast<std::size_t>(y) * w + x] = env_out_[y];
        }
    }

private:
    double intersect(int q, int p, double h2) const {
        return ((f_[q] + h2 * q * q) - (f_[p] + h2 * p * p)) / (2.0 * h2 * (q - p));
    }

    void envelope(double step) {
        const int n = static_cast<int>(f_.size());
        const double h2 = step * step;
        constexpr double kInf = std::numeric_limits<double>::infinity();
        int k = 0;
        v_[0] = 0;
        zb_[0] = -kInf;
        zb_[1] = kInf;
        for (int q = 1; q < n; ++q) {
            double s = intersect(q, v_[k], h2);
            while (s <= zb_[k]) {  // zb_[0] = -inf bounds the walk
                --k;
                s = intersect(q, v_[k], h2);
            }
            ++k;
            v_[k] = q;
            zb_[k] = s;
            zb_[k + 1] = kInf;
        }
        k = 0;
        for (int q = 0; q < n; ++q) {
            while (zb_[k + 1] < q) ++k;
            const double d = step * (q - v_[k]);
            env_out_[q] = f_[v_[k]] + d * d;
        }
    }

    std::vector<double> f_, env_out_, zb_;
    std::vector<int> v_;
};

// max over foreground pixels of sqrt(squared distance to the other set)
double directed_hausdorff(const std::uint8_t* mask, const std::vector<double>& dist_other,
                          std::size_t count) {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        if (mask[i] && dist_other[i] > worst) worst = dist_other[i];
    }
    return std::sqrt(worst);
}

}  // namespace

double slice_hausdorff_mm(const Volume3D& a, const Volume3D& b) {
    if (a.dims() != b.dims()) throw ShapeError("slice_hausdorff_mm: dimension mismatch");
    if (a.spacing_mm() != b.spacing_mm()) throw ShapeError("slice_hausdorff_mm: spacing mismatch");

    const Dims3& d = a.dims();
    const int w = d[0], h = d[1];
    const double sx = a.spacing_mm()[0], sy = a.spacing_mm()[1];
    const double diagonal = std::hypot((w - 1) * sx, (h - 1) * sy);
    const std::size_t plane = static_cast<std::size_t>(w) * h;

    double sum = 0.0;
    int contributing = 0;
    Edt2D edt;
    std::vector<double> dist_a, dist_b;
    for (int z = 0; z < d[2]; ++z) {
        const std::uint8_t* sa = a.voxels().data() + plane * z;
        const std::uint8_t* sb = b.voxels().data() + plane * z;
        const bool ea = std::find(sa, sa + plane, std::uint8_t{1}) == sa + plane;
        const bool eb = std::find(sb, sb + plane, std::uint8_t{1}) == sb + plane;
        if (ea && eb) continue;
        ++contributing;
        if (ea != eb) {
            sum += diagonal;  // missing-slice penalty
            continue;
        }
        edt.run(sa, w, h, sx, sy, dist_a);
        edt.run(sb, w, h, sx, sy, dist_b);
        sum += std::max(directed_hausdorff(sa, dist_b, plane),
                        directed_hausdorff(sb, dist_a, plane));
    }
    if (contributing == 0) return 0.0;  // both volumes empty
    return sum / contributing;
}

Volume3D threshold(const ProbabilityVolume& p, double t) {
    if (!(t > 0.0 && t < 1.0)) throw ParamError("threshold must lie in (0,1)");
    Volume3D out(p.dims(), p.spacing_mm());
    for (std::size_t i = 0; i < p.size(); ++i) {
        out.voxels()[i] = p.values()[i] >= t ? 1 : 0;
    }
    return out;
}

}  // namespace cardiorecon
