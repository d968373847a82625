#pragma once

#include <random>
#include <string>
#include <vector>

#include "canseg/optim.hpp"
#include "canseg/tensor.hpp"
#include "canseg/volume.hpp"

namespace canseg {

struct CoarseConfig {
  Int3 hi_patch{25, 25, 25};
  int lo_downsample = 3;
  int conv_layers = 8;
  std::vector<int> channels{30, 30, 40, 40, 40, 40, 50, 50};
  int classes = 2;
  int iterations = 700;
  int batch_size = 10;
  double lr_init = 1e-3;
  double l1 = 1e-6;
  double l2 = 1e-4;
  int infer_tile = 27;          // output tile extent for dense inference
  int min_candidate_voxels = 10;
  std::uint64_t rng_seed = 0;

  void validate() const;
  [[nodiscard]] int out_extent() const { return hi_patch[0] - 2 * conv_layers; }
  [[nodiscard]] int lo_patch_extent(int out) const {
    return out / lo_downsample + 2 * conv_layers;
  }
};

/// Dual-pathway patch classifier: two stacks of unpadded 3^3 convolutions
/// over a full-resolution patch and a downsampled wide-context patch; the
/// low-resolution output is nearest-resampled onto the high-resolution
/// output grid and added before a 1^3 softmax head.
struct CoarseModel {
  CoarseConfig cfg;
  nn::ParamSet params;
  std::vector<nn::Tensor> hi_w, hi_b, lo_w, lo_b;
  nn::Tensor head_w, head_b;

  /// hi: (1,P,P,P); lo: (1,E,E,E). Returns class logits (2,T,T,T).
  nn::Tensor forward(const nn::Tensor& hi, const nn::Tensor& lo) const;
};

CoarseModel build_coarse(const CoarseConfig& cfg);

/// Preprocessed training inputs for the coarse stage.
struct CoarseSubject {
  std::string id;
  Volume3D image;               // normalized vessel image
  LabelVolume dilated_labels;   // adaptively dilated lesion map (targets)
};

struct CoarsePatch {
  std::vector<float> hi, lo;
  std::vector<std::uint8_t> target;  // T^3 class labels
  bool foreground_centered = false;
};

struct CoarseBatch {
  std::vector<CoarsePatch> patches;
  bool fg_missing = false;  // no foreground voxels; all-background batch
};

/// Alternating foreground/background-centered patches (even indices are
/// foreground-centered when any labeled voxel exists).
CoarseBatch sample_patches(const Volume3D& img, const LabelVolume& dilated_labels,
                           const CoarseConfig& cfg, int n, std::mt19937_64& rng);

struct CoarseTrainEntry {
  int step;
  double loss;
  double lr;
};

/// RMSProp training with step-decayed learning rate; returns the per-step log.
std::vector<CoarseTrainEntry> train_coarse(CoarseModel& model,
                                           const std::vector<CoarseSubject>& cohort,
                                           const CoarseConfig& cfg);

/// Dense tiled inference covering every voxel; argmax labels.
LabelVolume predict_coarse(const CoarseModel& model, const Volume3D& img);

/// Detection output: VOI center coordinates plus component extent.
struct CandidateRegion {
  Int3 center{0, 0, 0};
  Int3 extent{0, 0, 0};
  double score = 0.0;  // component size relative to the largest candidate
};

/// One candidate per connected component of at least min_size voxels,
/// sorted by descending voxel count (center as a deterministic tiebreak).
std::vector<CandidateRegion> extract_candidates(const LabelVolume& mask, int min_size);

/// In-place component-size filter (the declared stand-in for CRF cleanup).
void drop_small_components(LabelVolume& mask, int min_size);

}  // namespace canseg
