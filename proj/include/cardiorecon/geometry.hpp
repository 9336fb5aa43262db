#ifndef CARDIORECON_GEOMETRY_HPP
#define CARDIORECON_GEOMETRY_HPP

#include "cardiorecon/volume.hpp"

namespace cardiorecon {

/// Arithmetic mean of foreground voxel coordinates, in voxel units.
/// Throws EmptySegmentationError when the volume has no foreground.
Vec3 center_of_mass(const Volume3D& volume);

/// Rounds a voxel coordinate to the nearest integer, ties toward the lower
/// index (2.5 -> 2).
int round_half_down(double x);

/// Crops/pads so that the source center of mass (rounded) lands on the output
/// center voxel floor(target/2). Voxels outside the source extent become 0.
/// Spacing is preserved.
Volume3D crop_pad_center(const Volume3D& volume, Dims3 target);

/// Planar center slices through floor(dims/2): LA1 = constant-x plane over
/// (y,z), LA2 = constant-y plane over (x,z), SA = constant-z plane over (x,y).
/// Requires a cubic volume so all three masks share one shape.
ViewSet extract_views(const Volume3D& volume);

/// Rotation about the grid center by Euler angles (degrees) applied as
/// Rz * Ry * Rx in index space, nearest-neighbor resampling, out-of-bounds
/// source samples become 0. Output stays binary; angles (0,0,0) is the
/// identity bit-exactly.
Volume3D rotate_volume(const Volume3D& volume, Vec3 angles_deg);

/// Morphological opening (erode then dilate) with the 6-connected ball of the
/// given radius, realized as `radius` iterations of the unit cross. Outside
/// the stored box counts as background.
Volume3D morph_open(const Volume3D& volume, int radius);

/// Morphological closing (dilate then erode), same structuring element.
Volume3D morph_close(const Volume3D& volume, int radius);

// Single iterations, exposed for tests.
Volume3D dilate6(const Volume3D& volume);
Volume3D erode6(const Volume3D& volume);

/// Number of 6-connected foreground components.
std::size_t count_components6(const Volume3D& volume);

}  // namespace cardiorecon

#endif
