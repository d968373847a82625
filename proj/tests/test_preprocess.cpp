#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "canseg/components.hpp"
#include "canseg/preprocess.hpp"

using namespace canseg;

namespace {

PreprocessConfig cfg_with(int min_comp = 2) {
  PreprocessConfig c;
  c.vessel_threshold_quantile = 0.5;
  c.vessel_min_component = min_comp;
  c.voi_size = 16;
  return c;
}

LabelVolume digital_ball(Int3 dims, Int3 c, int r) {
  LabelVolume m(dims, 0);
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x)
        if ((x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]) + (z - c[2]) * (z - c[2]) <= r * r)
          m.at(x, y, z) = 1;
  return m;
}

// Shortest distance from voxel p to the surface of the analytic sphere.
double sphere_surface_distance(const Int3& p, const Int3& c, double r) {
  const double d = std::sqrt(double((p[0] - c[0]) * (p[0] - c[0]) +
                                    (p[1] - c[1]) * (p[1] - c[1]) +
                                    (p[2] - c[2]) * (p[2] - c[2])));
  return std::fabs(d - r);
}

}  // namespace

TEST_CASE("extract_vessels: constant volume is degenerate, tube thresholds cleanly") {
  auto cfg = cfg_with();
  Volume3D flat({12, 12, 12}, 7.f);
  auto res = extract_vessels(flat, cfg);
  CHECK(res.degenerate);
  for (auto v : res.mask.data) CHECK(v == 0);

  // A bright tube on zero background: quantile over nonzero intensities
  // lands inside the tube values, so the mask equals the tube.
  Volume3D vol({20, 20, 20}, 0.f);
  std::set<std::int64_t> tube;
  for (int z = 2; z < 18; ++z)
    for (int y = 9; y <= 11; ++y)
      for (int x = 9; x <= 11; ++x) {
        vol.at(x, y, z) = 1000.f;
        tube.insert(vol.index(x, y, z));
      }
  auto r2 = extract_vessels(vol, cfg);
  CHECK(!r2.degenerate);
  for (std::int64_t i = 0; i < vol.size(); ++i)
    CHECK(bool(r2.mask.data[std::size_t(i)]) == bool(tube.count(i)));

  // One isolated bright voxel below the component minimum changes nothing.
  Volume3D vol2 = vol;
  vol2.at(1, 1, 1) = 2000.f;
  auto r3 = extract_vessels(vol2, cfg);
  CHECK(r3.mask.data == r2.mask.data);
}

TEST_CASE("zscore: constant guard, closed-form small case, definitional statistics") {
  Volume3D flat({8, 8, 8}, 5.f);
  auto rf = zscore_normalize(flat);
  CHECK(rf.zero_std);
  for (auto v : rf.volume.data) CHECK(v == 0.f);

  // {-1, 0, 1}: already mean 0; population stddev sqrt(2/3).
  Volume3D three({3, 1, 1});
  three.data = {-1.f, 0.f, 1.f};
  auto rt = zscore_normalize(three);
  CHECK(!rt.zero_std);
  const double s = std::sqrt(2.0 / 3.0);
  CHECK(rt.volume.data[0] == doctest::Approx(-1.0 / s).epsilon(1e-6));
  CHECK(rt.volume.data[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(rt.volume.data[2] == doctest::Approx(1.0 / s).epsilon(1e-6));

  std::mt19937_64 rng(4);
  Volume3D rnd({10, 9, 8});
  std::uniform_real_distribution<float> d(-50.f, 120.f);
  for (auto& v : rnd.data) v = d(rng);
  auto rr = zscore_normalize(rnd);
  double mean = 0, var = 0;
  for (auto v : rr.volume.data) mean += v;
  mean /= double(rr.volume.data.size());
  for (auto v : rr.volume.data) var += (v - mean) * (v - mean);
  var /= double(rr.volume.data.size());
  CHECK(std::fabs(mean) < 1e-6);
  CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-6);

  // Masked statistics: the masked voxels end up standardized.
  LabelVolume mask(rnd.dims, 0);
  for (int i = 0; i < 200; ++i) mask.data[std::size_t(i * 3)] = 1;
  auto rm = zscore_normalize(rnd, &mask);
  double msum = 0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i]) {
      msum += rm.volume.data[i];
      ++n;
    }
  CHECK(std::fabs(msum / double(n)) < 1e-6);
}

TEST_CASE("extract_contour: empty and uniform masks give zero output") {
  auto cfg = cfg_with();
  LabelVolume empty({10, 10, 10}, 0);
  Volume3D c0 = extract_contour(empty, cfg);
  for (auto v : c0.data) CHECK(v == 0.f);

  // With replicated borders a solid mask has no gradient anywhere.
  LabelVolume full({10, 10, 10}, 1);
  Volume3D c1 = extract_contour(full, cfg);
  for (auto v : c1.data) CHECK(v == 0.f);
}

TEST_CASE("extract_contour: shell of a digital ball hugs the dilated surface") {
  auto cfg = cfg_with();
  cfg.smooth_dilate_radius = 1;
  const Int3 center{12, 12, 12};
  const int r = 6;
  LabelVolume ball = digital_ball({25, 25, 25}, center, r);
  Volume3D contour = extract_contour(ball, cfg);

  // Brute-force distance oracle against the analytic sphere of radius
  // r + smooth_dilate_radius: every nonzero voxel lies within 2 voxels of
  // the dilated surface.
  int nonzero = 0;
  for (int z = 0; z < 25; ++z)
    for (int y = 0; y < 25; ++y)
      for (int x = 0; x < 25; ++x)
        if (contour.at(x, y, z) > 1e-6f) {
          ++nonzero;
          CHECK(sphere_surface_distance({x, y, z}, center, double(r + 1)) <= 2.0);
        }
  CHECK(nonzero > 100);  // a real shell, not a fluke
}

TEST_CASE("contour locality property on random blobs") {
  auto cfg = cfg_with();
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_int_distribution<int> pos(6, 17), rad(2, 4);
    LabelVolume m =
        digital_ball({24, 24, 24}, {pos(rng), pos(rng), pos(rng)}, rad(rng));
    Volume3D contour = extract_contour(m, cfg);

    // Distance to the original mask surface (brute force over voxels).
    std::vector<Int3> surface;
    for (int z = 0; z < 24; ++z)
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
          if (!m.at(x, y, z)) continue;
          bool edge = false;
          for (auto [dx, dy, dz] :
               {std::array{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}})
            if (!m.in_bounds(x + dx, y + dy, z + dz) || !m.at(x + dx, y + dy, z + dz))
              edge = true;
          if (edge) surface.push_back({x, y, z});
        }
    REQUIRE(!surface.empty());
    // Voxel-step (Chebyshev) distance: dilation reaches at most
    // smooth_dilate_radius steps, the gradient stencil one more.
    const int bound = cfg.smooth_dilate_radius + 1;
    for (int z = 0; z < 24; ++z)
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
          if (contour.at(x, y, z) <= 1e-6f) continue;
          int best = INT32_MAX;
          for (const auto& s : surface) {
            const int cheb = std::max({std::abs(x - s[0]), std::abs(y - s[1]),
                                       std::abs(z - s[2])});
            best = std::min(best, cheb);
          }
          CHECK(best <= bound);
        }
  }
}

TEST_CASE("remap_ruptured: 2->0, counts preserved, identity without 2s") {
  LabelVolume all2({6, 6, 6}, 2);
  LabelVolume r = remap_ruptured(all2);
  for (auto v : r.data) CHECK(v == 0);

  std::mt19937_64 rng(10);
  LabelVolume mixed({8, 8, 8}, 0);
  std::uniform_int_distribution<int> d(0, 2);
  int ones = 0;
  for (auto& v : mixed.data) {
    v = std::uint8_t(d(rng));
    ones += v == 1;
  }
  LabelVolume rm = remap_ruptured(mixed);
  int rones = 0;
  for (auto v : rm.data) {
    CHECK(v <= 1);
    rones += v == 1;
  }
  CHECK(rones == ones);

  LabelVolume no2({5, 5, 5}, 1);
  CHECK(remap_ruptured(no2).data == no2.data);

  LabelVolume bad({2, 2, 2}, 3);
  CHECK_THROWS(remap_ruptured(bad));
}

TEST_CASE("adaptive_dilate_labels: clamp arithmetic and extensivity") {
  auto cfg = cfg_with();
  cfg.adaptive_dilate_clamp = {1, 4};

  LabelVolume empty({10, 10, 10}, 0);
  auto de = adaptive_dilate_labels(empty, cfg);
  for (auto v : de.data) CHECK(v == 0);

  // Single voxel: D=1, round(0.1)=0 clamps to 1 -> 3^3 box of 27 voxels.
  LabelVolume single({11, 11, 11}, 0);
  single.at(5, 5, 5) = 1;
  auto ds = adaptive_dilate_labels(single, cfg);
  std::int64_t count = 0;
  for (auto v : ds.data) count += v;
  CHECK(count == 27);

  // Extent 40 component: round(4) = 4 stays inside the clamp. Check by the
  // bbox growth of a 40-voxel bar.
  LabelVolume bar({60, 20, 20}, 0);
  for (int x = 10; x < 50; ++x) bar.at(x, 10, 10) = 1;
  auto db = adaptive_dilate_labels(bar, cfg);
  auto comps = connected_components(db, 26);
  REQUIRE(comps.count() == 1);
  CHECK(comps.components[0].bbox.size == Int3{40 + 8, 1 + 8, 1 + 8});

  // Extensive: output contains the input; idempotent component counts for
  // well-separated blobs.
  std::mt19937_64 rng(11);
  LabelVolume two({40, 40, 40}, 0);
  two.at(8, 8, 8) = 1;
  two.at(30, 30, 30) = 1;
  auto dt = adaptive_dilate_labels(two, cfg);
  CHECK(dt.at(8, 8, 8) == 1);
  CHECK(dt.at(30, 30, 30) == 1);
  CHECK(connected_components(dt, 26).count() == 2);
}

TEST_CASE("crop_voi_samples: per-component crops with identical placement") {
  auto cfg = cfg_with();
  Volume3D img({40, 40, 40}, 0.f);
  Volume3D contour({40, 40, 40}, 0.f);
  LabelVolume lbl({40, 40, 40}, 0);
  // two lesions
  for (int d = -1; d <= 1; ++d) {
    lbl.at(10 + d, 10, 10) = 1;
    lbl.at(30, 30 + d, 30) = 1;
  }
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = float(i % 7) + 1.f;

  auto vois = crop_voi_samples(img, contour, lbl, cfg, "s1");
  REQUIRE(vois.size() == 2);
  for (const auto& v : vois) {
    CHECK(v.image_channel.dims == Int3{16, 16, 16});
    CHECK(v.subject_id == "s1");
    std::int64_t labeled = 0;
    for (auto x : v.label.data) labeled += x;
    CHECK(labeled == 3);  // each VOI holds its own component
    // center voxel neighborhood contains the centroid by construction
    CHECK(v.label.at(8, 8, 8) == 1);
  }

  // Lesion-free case: one VOI, empty label, deterministic center.
  LabelVolume none({40, 40, 40}, 0);
  auto v1 = crop_voi_samples(img, contour, none, cfg, "s2");
  auto v2 = crop_voi_samples(img, contour, none, cfg, "s2");
  REQUIRE(v1.size() == 1);
  CHECK(v1[0].placement.start == v2[0].placement.start);
  for (auto x : v1[0].label.data) CHECK(x == 0);

  Volume3D wrong({39, 40, 40}, 0.f);
  CHECK_THROWS(crop_voi_samples(wrong, contour, lbl, cfg, "s3"));
}

TEST_CASE("augment_x8: recipe contract") {
  auto cfg = cfg_with();
  std::mt19937_64 rng(12);
  VoiCrop s;
  s.image_channel = Volume3D({16, 16, 16});
  s.contour_channel = Volume3D({16, 16, 16});
  s.label = LabelVolume({16, 16, 16}, 0);
  std::uniform_real_distribution<float> d(0.f, 10.f);
  for (auto& v : s.image_channel.data) v = d(rng);
  for (auto& v : s.contour_channel.data) v = d(rng);
  for (int i = 0; i < 40; ++i) s.label.data[std::size_t(i * 97)] = 1;
  s.subject_id = "s";

  auto aug = augment_x8(s, cfg);
  REQUIRE(aug.size() == 8);
  CHECK(aug[0].image_channel.data == s.image_channel.data);  // recipe 0 = identity
  CHECK(aug[0].label.data == s.label.data);

  // Flip involution: flipping twice restores the original.
  PreprocessConfig twice = cfg;
  twice.augmentation_recipes = {"flip-x", "flip-x", "flip-y", "flip-y",
                                "flip-z", "flip-z", "identity", "identity"};
  auto once = augment_x8(s, cfg);
  auto again = augment_x8(once[1], cfg);  // flip-x of flip-x
  CHECK(again[1].image_channel.data == s.image_channel.data);
  CHECK(again[1].label.data == s.label.data);

  // Geometric recipes preserve the label voxel count; intensity recipes
  // leave the label untouched.
  auto count = [](const LabelVolume& l) {
    std::int64_t n = 0;
    for (auto v : l.data) n += v;
    return n;
  };
  const std::int64_t n0 = count(s.label);
  for (const auto& a : aug) CHECK(count(a.label) == n0);
  CHECK(aug[4].label.data == s.label.data);  // gauss
  CHECK(aug[5].label.data == s.label.data);  // histeq
  CHECK(aug[4].contour_channel.data == s.contour_channel.data);
  // ... and they do modify the image channel
  CHECK(aug[4].image_channel.data != s.image_channel.data);
  CHECK(aug[5].image_channel.data != s.image_channel.data);

  PreprocessConfig bad = cfg;
  bad.augmentation_recipes = {"identity", "wat", "flip-x", "flip-y",
                              "flip-z",   "gauss", "histeq", "identity"};
  CHECK_THROWS(augment_x8(s, bad));
}

TEST_CASE("split_train_val: ratio, subject integrity, determinism") {
  auto cfg = cfg_with();
  cfg.split_ratio = 0.8;

  auto make_samples = [](int subjects, int per_subject) {
    std::vector<VoiCrop> out;
    for (int s = 0; s < subjects; ++s)
      for (int k = 0; k < per_subject; ++k) {
        VoiCrop v;
        v.image_channel = Volume3D({8, 8, 8});
        v.contour_channel = Volume3D({8, 8, 8});
        v.label = LabelVolume({8, 8, 8}, 0);
        v.subject_id = "subj" + std::to_string(s);
        out.push_back(v);
      }
    return out;
  };

  auto samples = make_samples(10, 3);
  auto [train, val] = split_train_val(samples, cfg);
  std::set<std::string> train_ids, val_ids;
  for (const auto& s : train) train_ids.insert(s.subject_id);
  for (const auto& s : val) val_ids.insert(s.subject_id);
  CHECK(train_ids.size() == 8);
  CHECK(val_ids.size() == 2);
  for (const auto& id : val_ids) CHECK(!train_ids.count(id));
  CHECK(train.size() == 24);
  CHECK(val.size() == 6);

  auto [train2, val2] = split_train_val(samples, cfg);
  CHECK(train2.size() == train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    CHECK(train2[i].subject_id == train[i].subject_id);

  auto five = make_samples(5, 1);
  auto [t5, v5] = split_train_val(five, cfg);
  CHECK(t5.size() == 4);
  CHECK(v5.size() == 1);

  auto one = make_samples(1, 4);
  CHECK_THROWS(split_train_val(one, cfg));
}
