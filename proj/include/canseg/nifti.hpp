#pragma once

#include <string>

#include "canseg/volume.hpp"

namespace canseg {

// Minimal NIfTI-1 single-file (.nii / .nii.gz) support, little-endian only.
// Volumes are used in stored voxel order; the affine is reduced to spacing
// (pixdim) plus origin (qoffset). Accepted on read: uint8, int8, int16,
// float32. Written: float32 for images, uint8 for labels.

/// Load a scalar volume, converting any accepted dtype to float and applying
/// scl_slope/scl_inter when set.
Volume3D load_volume(const std::string& path);

/// Load an integer label map. Requires an integer dtype with values in
/// [0, 255] and no intensity scaling.
LabelVolume load_label_volume(const std::string& path);

void save_volume(const Volume3D& v, const std::string& path);
void save_volume(const LabelVolume& v, const std::string& path);

}  // namespace canseg
