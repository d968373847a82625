#pragma once

#include <optional>
#include <string>
#include <vector>

#include "canseg/volume.hpp"

namespace canseg {

/// Lesion-level detection tallies, accumulated case by case.
struct LesionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t n_subjects = 0;

  LesionCounts& operator+=(const LesionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    n_subjects += o.n_subjects;
    return *this;
  }
};

enum class DistanceUnits { Voxel, Mm };

/// Per-case overlap metrics; nullopt renders as "Nan".
struct MetricsReport {
  std::optional<double> dsc;
  std::optional<double> hd;
  std::optional<double> vs;
  DistanceUnits units = DistanceUnits::Voxel;
};

enum class MatchRule {
  OverlapOneVoxel,  // any shared voxel matches (default)
  CenterInsideGt,   // the predicted component's center must fall inside the lesion
};

/// Component-wise GT/prediction matching. A GT lesion is a TP when a
/// predicted component matches it under the chosen rule; each predicted
/// component is assigned to at most one GT lesion (largest overlap wins)
/// and counts as FP only when it matches no GT lesion at all.
LesionCounts match_lesions(const LabelVolume& gt, const LabelVolume& pred,
                           int connectivity = 26,
                           MatchRule rule = MatchRule::OverlapOneVoxel);

std::optional<double> sensitivity(const LesionCounts& c);
std::optional<double> fp_per_case(const LesionCounts& c);
std::optional<double> ppv(const LesionCounts& c);

/// 2|A∩B| / (|A|+|B|); empty-vs-empty = 1, exactly one empty = 0.
double dsc(const LabelVolume& gt, const LabelVolume& pred);

/// Symmetric Hausdorff distance over all mask voxels; nullopt when either
/// mask is empty.
std::optional<double> hausdorff(const LabelVolume& gt, const LabelVolume& pred,
                                DistanceUnits units = DistanceUnits::Voxel);

/// 1 - ||A|-|B|| / (|A|+|B|); empty-vs-empty = 1.
double volumetric_similarity(const LabelVolume& gt, const LabelVolume& pred);

enum class Orientation { HigherBetter, LowerBetter };

struct MetricColumn {
  std::string name;
  Orientation orientation = Orientation::HigherBetter;
  std::vector<std::optional<double>> values;  // one per model
};

struct RankTable {
  std::vector<std::string> models;
  std::vector<MetricColumn> columns;
  std::vector<double> final_scores;  // mean normalized rank, best = lowest
};

/// Min-max normalized rank aggregation: per metric, the best model scores 0
/// and the worst 1 (all 0 when the column is constant); the final score is
/// the mean across metrics. Undefined entries score 1.
RankTable rank_models(const std::vector<std::string>& models,
                      const std::vector<MetricColumn>& columns);

std::string format_metric(const std::optional<double>& v, int precision = 4);

}  // namespace canseg
