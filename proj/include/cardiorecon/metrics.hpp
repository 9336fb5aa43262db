#ifndef CARDIORECON_METRICS_HPP
#define CARDIORECON_METRICS_HPP

#include "cardiorecon/volume.hpp"

namespace cardiorecon {

/// 3D Dice overlap 2|A∩B| / (|A|+|B|). Both volumes empty -> 1.0.
/// Throws ShapeError on dimension mismatch.
double dice3d(const Volume3D& a, const Volume3D& b);

struct MassDiff {
    double signed_pct;
    double abs_pct;
};

/// Percentage mass difference of recon vs ground truth. Mass is foreground
/// voxel count times the physical voxel volume (the density constant cancels);
/// signed_pct = 100 * (M_rec - M_gt) / M_gt. Requires equal spacing and a
/// nonempty ground truth.
MassDiff mass_pct_diff(const Volume3D& recon, const Volume3D& gt);

/// Mean symmetric 2D Hausdorff distance over constant-z (short-axis) slices,
/// in millimeters with in-plane spacing applied. Slices where both masks are
/// empty are skipped; slices where exactly one mask is empty contribute the
/// slice diagonal (distance between opposite corner pixel centers). Returns 0
/// when both volumes are empty.
double slice_hausdorff_mm(const Volume3D& a, const Volume3D& b);

/// Binarize at threshold t in (0,1); voxel = 1 iff probability >= t.
Volume3D threshold(const ProbabilityVolume& p, double t = 0.5);

}  // namespace cardiorecon

#endif
