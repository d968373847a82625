#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "canseg/components.hpp"
#include "canseg/config.hpp"
#include "canseg/pipeline.hpp"

using namespace canseg;

namespace {

// Desk-scale configuration used across these tests.
PipelineConfig micro_config() {
  PipelineConfig cfg;
  cfg.preprocess.vessel_threshold_quantile = 0.98;
  cfg.preprocess.vessel_min_component = 30;
  cfg.preprocess.voi_size = 24;
  cfg.coarse.hi_patch = {17, 17, 17};
  cfg.coarse.conv_layers = 4;
  cfg.coarse.channels = {8, 8, 12, 12};
  cfg.coarse.iterations = 0;
  cfg.coarse.batch_size = 6;
  cfg.coarse.infer_tile = 27;
  cfg.coarse.min_candidate_voxels = 5;
  cfg.fine.base_filters = 8;
  cfg.fine.se_reduction = 4;
  cfg.fine.epochs = 0;
  cfg.phantom.dims = {96, 96, 96};
  cfg.phantom.n_vessels = 2;
  cfg.phantom.n_aneurysms = 1;
  cfg.reseed(5);
  return cfg;
}

CoarseModel background_only_coarse(const CoarseConfig& cfg) {
  // A detector that never fires: strong bias toward the background class.
  CoarseModel m = build_coarse(cfg);
  m.params.find("head.b")->value = {10.f, -10.f};
  return m;
}

}  // namespace

TEST_CASE("preprocess_case: channels share geometry, labels remap + dilate") {
  PipelineConfig cfg = micro_config();
  Phantom ph = generate_phantom(cfg.phantom);
  // stamp a ruptured lesion label (2) far from the real one to verify remap
  ph.label.at(4, 4, 4) = 2;

  PreprocessedCase pc = preprocess_case(ph.image, &ph.label, cfg, "subj");
  CHECK(pc.normalized.dims == ph.image.dims);
  CHECK(pc.contour.dims == ph.image.dims);
  CHECK(pc.labels.dims == ph.image.dims);
  CHECK(!pc.degenerate);
  CHECK(!pc.zero_std);
  CHECK(pc.labels.at(4, 4, 4) == 0);  // ruptured became background

  // Dilated targets contain the originals.
  for (std::size_t i = 0; i < pc.labels.data.size(); ++i)
    if (pc.labels.data[i]) CHECK(pc.labels_dilated.data[i] == 1);

  // One VOI per lesion, correct extent.
  CHECK(pc.vois.size() == connected_components(pc.labels, 26).count());
  for (const auto& v : pc.vois) CHECK(v.image_channel.dims == Int3{24, 24, 24});

  // Z-scored vessel intensities: mean ~0, sd ~1 over the mask support.
  double sum = 0, sumsq = 0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < pc.normalized.data.size(); ++i)
    if (pc.vessel_mask.data[i]) {
      sum += pc.normalized.data[i];
      sumsq += double(pc.normalized.data[i]) * pc.normalized.data[i];
      ++n;
    }
  REQUIRE(n > 0);
  const double mean = sum / double(n);
  CHECK(std::fabs(mean) < 1e-4);
  CHECK(std::fabs(std::sqrt(sumsq / double(n) - mean * mean) - 1.0) < 1e-3);
}

TEST_CASE("run_pipeline: zero candidates give an empty mask of input geometry") {
  PipelineConfig cfg = micro_config();
  Phantom ph = generate_phantom(cfg.phantom);
  CoarseModel coarse = background_only_coarse(cfg.coarse);
  FineModel fine = build_fine(cfg.fine);

  LabelVolume seg = run_pipeline(ph.image, coarse, fine, cfg);
  CHECK(seg.dims == ph.image.dims);
  CHECK(seg.spacing == ph.image.spacing);
  for (auto v : seg.data) CHECK(v == 0);

  // labels never leave {0,1} regardless of models
  CoarseModel wild = build_coarse(cfg.coarse);
  LabelVolume seg2 = run_pipeline(ph.image, wild, fine, cfg);
  CHECK(seg2.dims == ph.image.dims);
  for (auto v : seg2.data) CHECK(v <= 1);
}

TEST_CASE("make_folds: exhaustive disjoint partition, each subject validates once") {
  auto folds = make_folds(10, 5, 42);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> seen;
  for (const auto& f : folds) {
    CHECK(f.size() == 2);
    for (auto s : f) CHECK(seen.insert(s).second);
  }
  CHECK(seen.size() == 10);

  auto again = make_folds(10, 5, 42);
  CHECK(again == folds);
  auto other = make_folds(10, 5, 43);
  CHECK(other != folds);

  CHECK_THROWS(make_folds(3, 5, 0));
}

TEST_CASE("crossval: fold reports, rank scores in range, degenerate equality rule") {
  PipelineConfig cfg = micro_config();
  cfg.folds = 2;
  cfg.coarse.iterations = 2;
  cfg.fine.epochs = 1;
  cfg.augment_training = false;

  std::vector<PreprocessedCase> subjects;
  for (int i = 0; i < 4; ++i) {
    PhantomSpec spec = cfg.phantom;
    spec.rng_seed = 31 + std::uint64_t(i);
    Phantom ph = generate_phantom(spec);
    subjects.push_back(preprocess_case(ph.image, &ph.label, cfg, "s" + std::to_string(i)));
  }

  CrossvalResult rc = crossval(subjects, cfg, Stage::Coarse);
  CHECK(rc.folds.size() == 2);
  CHECK(rc.coarse_models.size() == 2);
  CHECK(rc.table.final_scores.size() == 2);
  for (double s : rc.table.final_scores) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  CHECK(rc.best_fold >= 0);
  CHECK(rc.best_fold < 2);

  CrossvalResult rf = crossval(subjects, cfg, Stage::Fine);
  CHECK(rf.fine_models.size() == 2);
  for (double s : rf.table.final_scores) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }

  // Identical metric columns across folds -> all final scores 0.
  auto table = rank_models({"f0", "f1", "f2"},
                           {{"dsc", Orientation::HigherBetter, {0.5, 0.5, 0.5}},
                            {"hd", Orientation::LowerBetter, {2.0, 2.0, 2.0}}});
  for (double s : table.final_scores) CHECK(s == 0.0);
}

TEST_CASE("config: defaults round-trip, unknown keys and bad values rejected") {
  const std::string defaults = default_config_json();
  PipelineConfig cfg = parse_config(defaults, "defaults");
  CHECK(cfg.coarse.iterations == 700);
  CHECK(cfg.coarse.batch_size == 10);
  CHECK(cfg.coarse.lr_init == doctest::Approx(1e-3));
  CHECK(cfg.coarse.l1 == doctest::Approx(1e-6));
  CHECK(cfg.coarse.l2 == doctest::Approx(1e-4));
  CHECK(cfg.fine.epochs == 500);
  CHECK(cfg.fine.batch_size == 1);
  CHECK(cfg.fine.lr_init == doctest::Approx(5e-4));
  CHECK(cfg.fine.dropout_p == doctest::Approx(0.3));
  CHECK(cfg.fine.plateau_patience == 10);
  CHECK(cfg.fine.early_stop_patience == 50);
  CHECK(cfg.loss.beta == doctest::Approx(1.0));
  CHECK(cfg.loss.smooth == doctest::Approx(1e-4));
  CHECK(cfg.preprocess.voi_size == 64);
  CHECK(cfg.preprocess.split_ratio == doctest::Approx(0.8));
  CHECK(cfg.folds == 5);

  CHECK_THROWS_WITH_AS(parse_config(R"({"coarse": {"lr": 1}})", "t"),
                       doctest::Contains("coarse.lr"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config(R"({"fine": {"dropout_p": 1.5}})", "t"),
                       doctest::Contains("dropout_p"), std::runtime_error);
  CHECK_THROWS(parse_config("{not json", "t"));
  CHECK_THROWS(parse_config(R"({"loss": {"beta": 2.0}})", "t"));

  // seed propagation
  PipelineConfig seeded = parse_config(R"({"rng_seed": 99})", "t");
  CHECK(seeded.coarse.rng_seed == 99);
  CHECK(seeded.fine.rng_seed == 99);
  CHECK(seeded.phantom.rng_seed == 99);
}

TEST_CASE("fine overfit smoke: three phantom VOIs reach DSC >= 0.8 within 150 epochs") {
  PipelineConfig cfg = micro_config();
  cfg.fine.epochs = 60;  // well under the 150-epoch budget
  cfg.reseed(7);

  std::vector<VoiCrop> vois;
  for (int i = 0; i < 3; ++i) {
    PhantomSpec spec = cfg.phantom;
    spec.rng_seed = 100 + std::uint64_t(i);
    spec.n_aneurysms = 1 + (i % 2);
    Phantom ph = generate_phantom(spec);
    PreprocessedCase pc = preprocess_case(ph.image, &ph.label, cfg, "p" + std::to_string(i));
    for (auto& v : pc.vois) vois.push_back(std::move(v));
  }
  REQUIRE(vois.size() >= 3);

  FineModel model = build_fine(cfg.fine);
  train_fine(model, vois, vois, cfg.loss, cfg.fine);

  double mean_dsc = 0;
  for (const auto& v : vois) {
    const LabelVolume pred = predict_fine(model, v);
    mean_dsc += dsc(v.label, pred);
  }
  mean_dsc /= double(vois.size());
  CHECK(mean_dsc >= 0.8);
}
