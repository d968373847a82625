#include "canseg/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace canseg {

void PipelineConfig::validate() const {
  preprocess.validate();
  coarse.validate();
  fine.validate();
  loss.validate();
  phantom.validate();
  if (folds < 2) throw std::invalid_argument("pipeline: folds must be >= 2");
}

void PipelineConfig::reseed(std::uint64_t seed) {
  rng_seed = seed;
  preprocess.rng_seed = seed;
  coarse.rng_seed = seed;
  fine.rng_seed = seed;
  phantom.rng_seed = seed;
}

PreprocessedCase preprocess_case(const Volume3D& image, const LabelVolume* raw_labels,
                                 const PipelineConfig& cfg, const std::string& id) {
  image.validate();
  PreprocessedCase out;
  out.id = id;

  VesselExtraction vessels = extract_vessels(image, cfg.preprocess);
  out.vessel_mask = vessels.mask;
  out.degenerate = vessels.degenerate;

  ZScoreResult z = zscore_normalize(image, &out.vessel_mask);
  out.zero_std = z.zero_std;
  out.normalized = std::move(z.volume);
  // Keep the normalized intensities on the vessel support only.
  for (std::size_t i = 0; i < out.normalized.data.size(); ++i)
    if (!out.vessel_mask.data[i]) out.normalized.data[i] = 0.f;

  out.contour = extract_contour(out.vessel_mask, cfg.preprocess);

  if (raw_labels) {
    if (raw_labels->dims != image.dims)
      throw std::invalid_argument("preprocess_case: label geometry mismatch");
    out.labels = remap_ruptured(*raw_labels);
    out.labels_dilated = adaptive_dilate_labels(out.labels, cfg.preprocess);
  } else {
    out.labels = LabelVolume(image.dims, 0);
    out.labels.spacing = image.spacing;
    out.labels.origin = image.origin;
    out.labels_dilated = out.labels;
  }
  out.vois = crop_voi_samples(out.normalized, out.contour, out.labels, cfg.preprocess, id);
  return out;
}

LabelVolume run_pipeline(const Volume3D& image, const CoarseModel& coarse,
                         const FineModel& fine, const PipelineConfig& cfg) {
  const PreprocessedCase pc = preprocess_case(image, nullptr, cfg, "case");

  LabelVolume out(image.dims, 0);
  out.spacing = image.spacing;
  out.origin = image.origin;
  Volume3D prob_merge;
  if (cfg.merge == MergeMode::MaxProbability) {
    prob_merge = Volume3D(image.dims, 0.f);
    prob_merge.spacing = image.spacing;
    prob_merge.origin = image.origin;
  }

  const LabelVolume coarse_mask = predict_coarse(coarse, pc.normalized);
  const auto candidates = extract_candidates(coarse_mask, cfg.coarse.min_candidate_voxels);

  for (const auto& cand : candidates) {
    VoiCrop voi;
    voi.placement = centered_region(cand.center, cfg.preprocess.voi_size);
    voi.image_channel = crop(pc.normalized, voi.placement, 0.f);
    voi.contour_channel = crop(pc.contour, voi.placement, 0.f);
    voi.label = LabelVolume(voi.image_channel.dims, 0);
    voi.subject_id = "case";

    if (cfg.merge == MergeMode::MaxProbability) {
      const Volume3D prob = predict_fine_prob(fine, voi);
      for (int z = 0; z < prob.dims[2]; ++z)
        for (int y = 0; y < prob.dims[1]; ++y)
          for (int x = 0; x < prob.dims[0]; ++x) {
            const int px = voi.placement.start[0] + x;
            const int py = voi.placement.start[1] + y;
            const int pz = voi.placement.start[2] + z;
            if (!prob_merge.in_bounds(px, py, pz)) continue;
            prob_merge.at(px, py, pz) = std::max(prob_merge.at(px, py, pz), prob.at(x, y, z));
          }
    } else {
      const LabelVolume pred = predict_fine(fine, voi);
      // Overlapping VOIs merge by voxelwise OR.
      for (int z = 0; z < pred.dims[2]; ++z)
        for (int y = 0; y < pred.dims[1]; ++y)
          for (int x = 0; x < pred.dims[0]; ++x) {
            if (!pred.at(x, y, z)) continue;
            const int px = voi.placement.start[0] + x;
            const int py = voi.placement.start[1] + y;
            const int pz = voi.placement.start[2] + z;
            if (out.in_bounds(px, py, pz)) out.at(px, py, pz) = 1;
          }
    }
  }

  if (cfg.merge == MergeMode::MaxProbability)
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = prob_merge.data[i] > 0.5f;
  return out;
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n_subjects, int k,
                                                 std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
  if (n_subjects < std::size_t(k))
    throw std::invalid_argument("make_folds: fewer subjects than folds");
  std::vector<std::size_t> order(n_subjects);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds;
  folds.resize(std::size_t(k));
  for (std::size_t i = 0; i < n_subjects; ++i)
    folds[i % std::size_t(k)].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

namespace {

std::vector<VoiCrop> gather_fine_samples(const std::vector<PreprocessedCase>& subjects,
                                         const std::vector<std::size_t>& idx,
                                         const PipelineConfig& cfg, bool augment) {
  std::vector<VoiCrop> out;
  for (std::size_t i : idx)
    for (const auto& voi : subjects[i].vois) {
      if (augment) {
        auto aug = augment_x8(voi, cfg.preprocess);
        out.insert(out.end(), aug.begin(), aug.end());
      } else {
        out.push_back(voi);
      }
    }
  return out;
}

}  // namespace

CrossvalResult crossval(const std::vector<PreprocessedCase>& subjects, const PipelineConfig& cfg,
                        Stage stage) {
  cfg.validate();
  const auto folds = make_folds(subjects.size(), cfg.folds, cfg.rng_seed);
  CrossvalResult res;

  std::vector<MetricColumn> columns;
  std::vector<std::string> fold_names;
  if (stage == Stage::Coarse) {
    columns = {{"sensitivity", Orientation::HigherBetter, {}},
               {"fp_per_case", Orientation::LowerBetter, {}},
               {"ppv", Orientation::HigherBetter, {}}};
  } else {
    columns = {{"dsc", Orientation::HigherBetter, {}},
               {"hd", Orientation::LowerBetter, {}},
               {"vs", Orientation::HigherBetter, {}}};
  }

  for (int f = 0; f < cfg.folds; ++f) {
    fold_names.push_back("fold" + std::to_string(f));
    std::vector<std::size_t> train_idx;
    for (int g = 0; g < cfg.folds; ++g)
      if (g != f)
        train_idx.insert(train_idx.end(), folds[std::size_t(g)].begin(),
                         folds[std::size_t(g)].end());
    const auto& val_idx = folds[std::size_t(f)];

    FoldMetrics fm;
    fm.name = fold_names.back();

    if (stage == Stage::Coarse) {
      CoarseConfig ccfg = cfg.coarse;
      ccfg.rng_seed = cfg.rng_seed + std::uint64_t(f);
      CoarseModel model = build_coarse(ccfg);
      std::vector<CoarseSubject> cohort;
      for (std::size_t i : train_idx)
        cohort.push_back({subjects[i].id, subjects[i].normalized, subjects[i].labels_dilated});
      train_coarse(model, cohort, ccfg);

      LesionCounts counts;
      for (std::size_t i : val_idx) {
        LabelVolume mask = predict_coarse(model, subjects[i].normalized);
        drop_small_components(mask, ccfg.min_candidate_voxels);
        counts += match_lesions(subjects[i].labels, mask);
      }
      columns[0].values.push_back(sensitivity(counts));
      columns[1].values.push_back(fp_per_case(counts));
      auto p = ppv(counts);
      columns[2].values.push_back(p ? std::optional<double>(*p * 100.0) : p);
      fm.values = {{"sensitivity", columns[0].values.back()},
                   {"fp_per_case", columns[1].values.back()},
                   {"ppv", columns[2].values.back()}};
      res.coarse_models.push_back(std::move(model));
    } else {
      FineConfig fcfg = cfg.fine;
      fcfg.rng_seed = cfg.rng_seed + std::uint64_t(f);
      FineModel model = build_fine(fcfg);
      const auto train_samples = gather_fine_samples(subjects, train_idx, cfg,
                                                     cfg.augment_training);
      const auto val_samples = gather_fine_samples(subjects, val_idx, cfg, false);
      train_fine(model, train_samples, val_samples, cfg.loss, fcfg);

      double dsc_sum = 0, hd_sum = 0, vs_sum = 0;
      int n = 0, hd_n = 0;
      for (const auto& s : val_samples) {
        const LabelVolume pred = predict_fine(model, s);
        dsc_sum += dsc(s.label, pred);
        vs_sum += volumetric_similarity(s.label, pred);
        if (auto h = hausdorff(s.label, pred)) {
          hd_sum += *h;
          ++hd_n;
        }
        ++n;
      }
      columns[0].values.push_back(n ? std::optional<double>(dsc_sum / n) : std::nullopt);
      columns[1].values.push_back(hd_n ? std::optional<double>(hd_sum / hd_n) : std::nullopt);
      columns[2].values.push_back(n ? std::optional<double>(vs_sum / n) : std::nullopt);
      fm.values = {{"dsc", columns[0].values.back()},
                   {"hd", columns[1].values.back()},
                   {"vs", columns[2].values.back()}};
      res.fine_models.push_back(std::move(model));
    }
    res.folds.push_back(std::move(fm));
  }

  res.table = rank_models(fold_names, columns);
  res.best_fold = int(std::min_element(res.table.final_scores.begin(),
                                       res.table.final_scores.end()) -
                      res.table.final_scores.begin());
  return res;
}

}  // namespace canseg
