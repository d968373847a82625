#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "canseg/volume.hpp"

namespace canseg {

struct PreprocessConfig {
  double vessel_threshold_quantile = 0.98;  // over nonzero intensities
  int vessel_min_component = 30;            // voxels
  int smooth_dilate_radius = 1;
  std::array<int, 2> adaptive_dilate_clamp{1, 4};
  int voi_size = 64;
  std::vector<std::string> augmentation_recipes = default_recipes();
  double split_ratio = 0.8;
  std::uint64_t rng_seed = 0;

  static std::vector<std::string> default_recipes();
  void validate() const;
};

/// Dual-channel training/inference sample with its placement in the source.
struct VoiCrop {
  Volume3D image_channel;
  Volume3D contour_channel;
  LabelVolume label;
  Region placement;
  std::string subject_id;
};

struct VesselExtraction {
  LabelVolume mask;
  bool degenerate = false;  // all-equal intensities, mask left empty
};

/// Bright-vessel mask: threshold at the configured quantile of the nonzero
/// intensities, then drop components below the minimum size.
VesselExtraction extract_vessels(const Volume3D& v, const PreprocessConfig& cfg);

struct ZScoreResult {
  Volume3D volume;
  bool zero_std = false;  // sigma guard fired, output all zeros
};

/// (v - mean) / stddev with the statistics taken over `mask` when given,
/// else over all voxels.
ZScoreResult zscore_normalize(const Volume3D& v, const LabelVolume* mask = nullptr);

/// Dilate the mask by an isotropic ball, then take the 3D Sobel gradient
/// magnitude; nonzero only near the dilated surface.
Volume3D extract_contour(const LabelVolume& mask, const PreprocessConfig& cfg);

/// 2 -> 0 (ruptured lesions become background), 1 -> 1, 0 -> 0.
LabelVolume remap_ruptured(const LabelVolume& l);

/// Dilate each component by radius clamp(round(D/10), clamp) where D is its
/// largest bounding-box extent; box structuring element.
LabelVolume adaptive_dilate_labels(const LabelVolume& l, const PreprocessConfig& cfg);

/// One VOI per label component, centered at its centroid; a lesion-free case
/// yields a single VOI at a seeded-random vessel voxel (or the volume center
/// when the image is empty).
std::vector<VoiCrop> crop_voi_samples(const Volume3D& img, const Volume3D& contour,
                                      const LabelVolume& l, const PreprocessConfig& cfg,
                                      const std::string& subject_id);

/// Exactly eight samples per the configured recipes; geometric transforms hit
/// every channel and the label, intensity transforms hit the image only.
std::vector<VoiCrop> augment_x8(const VoiCrop& s, const PreprocessConfig& cfg);

/// Subject-level split at the configured ratio; deterministic per seed.
std::pair<std::vector<VoiCrop>, std::vector<VoiCrop>> split_train_val(
    const std::vector<VoiCrop>& samples, const PreprocessConfig& cfg);

// Morphology shared with the phantom generator and tests.
LabelVolume dilate_ball(const LabelVolume& m, int radius);
LabelVolume dilate_box(const LabelVolume& m, int radius);

}  // namespace canseg
