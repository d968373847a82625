#pragma once

#include <string>
#include <vector>

#include "canseg/coarse.hpp"
#include "canseg/fine.hpp"
#include "canseg/losses.hpp"
#include "canseg/metrics.hpp"
#include "canseg/phantom.hpp"
#include "canseg/preprocess.hpp"

namespace canseg {

enum class MergeMode { VoxelwiseOr, MaxProbability };

struct PipelineConfig {
  PreprocessConfig preprocess;
  CoarseConfig coarse;
  FineConfig fine;
  LossParams loss;
  PhantomSpec phantom;
  int folds = 5;
  bool augment_training = true;
  MergeMode merge = MergeMode::VoxelwiseOr;
  std::uint64_t rng_seed = 0;
  std::string output_dir = ".";

  void validate() const;
  /// Propagate the top-level seed into every nested stage.
  void reseed(std::uint64_t seed);
};

/// One subject after the preprocessing chain.
struct PreprocessedCase {
  std::string id;
  Volume3D normalized;          // z-scored masked vessel image
  Volume3D contour;
  LabelVolume vessel_mask;
  LabelVolume labels;           // binary lesion labels (ruptured remapped away)
  LabelVolume labels_dilated;   // coarse-stage targets
  bool degenerate = false;
  bool zero_std = false;
  std::vector<VoiCrop> vois;    // fine-stage samples, ground-truth-centered
};

/// Vessel extraction, normalization, contour, label remap + dilation, VOI
/// cropping. `raw_labels` may be empty-dimensioned for unlabeled images.
PreprocessedCase preprocess_case(const Volume3D& image, const LabelVolume* raw_labels,
                                 const PipelineConfig& cfg, const std::string& id);

/// Full test-time flow: preprocess, coarse mask, candidate VOIs, fine
/// segmentation per candidate, paste back at the recorded placements.
LabelVolume run_pipeline(const Volume3D& image, const CoarseModel& coarse,
                         const FineModel& fine, const PipelineConfig& cfg);

/// Deterministic subject partition: seeded shuffle then round-robin.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n_subjects, int k,
                                                 std::uint64_t seed);

struct FoldMetrics {
  std::string name;
  std::vector<std::pair<std::string, std::optional<double>>> values;
};

struct CrossvalResult {
  RankTable table;
  int best_fold = -1;
  std::vector<FoldMetrics> folds;
  std::vector<CoarseModel> coarse_models;  // one per fold when stage == Coarse
  std::vector<FineModel> fine_models;      // one per fold when stage == Fine
};

enum class Stage { Coarse, Fine };

/// k-fold cross-validation of one stage over labeled cases; per-fold metrics
/// (coarse: sensitivity / FP-per-case / PPV; fine: DSC / HD / VS) are rank-
/// aggregated and the best fold index reported.
CrossvalResult crossval(const std::vector<PreprocessedCase>& subjects, const PipelineConfig& cfg,
                        Stage stage);

}  // namespace canseg
