#include "canseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "canseg/components.hpp"

namespace canseg {

std::vector<std::string> PreprocessConfig::default_recipes() {
  return {"identity", "flip-x",  "flip-y",       "flip-z",
          "gauss",    "histeq", "gauss+flip-x", "histeq+flip-x"};
}

void PreprocessConfig::validate() const {
  if (!(vessel_threshold_quantile > 0.0 && vessel_threshold_quantile < 1.0))
    throw std::invalid_argument("preprocess: vessel_threshold_quantile must be in (0,1)");
  if (vessel_min_component < 1)
    throw std::invalid_argument("preprocess: vessel_min_component must be >= 1");
  if (smooth_dilate_radius < 1)
    throw std::invalid_argument("preprocess: smooth_dilate_radius must be >= 1");
  if (adaptive_dilate_clamp[0] < 1 || adaptive_dilate_clamp[1] < adaptive_dilate_clamp[0])
    throw std::invalid_argument("preprocess: adaptive_dilate_clamp must be 1 <= min <= max");
  if (voi_size < 8) throw std::invalid_argument("preprocess: voi_size must be >= 8");
  if (augmentation_recipes.size() != 8)
    throw std::invalid_argument("preprocess: exactly 8 augmentation recipes required");
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw std::invalid_argument("preprocess: split_ratio must be in (0,1)");
}

// ---- morphology -----------------------------------------------------------

namespace {

std::vector<Int3> ball_offsets(int radius) {
  std::vector<Int3> offs;
  for (int dz = -radius; dz <= radius; ++dz)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy + dz * dz <= radius * radius) offs.push_back({dx, dy, dz});
  return offs;
}

LabelVolume dilate_with_offsets(const LabelVolume& m, const std::vector<Int3>& offs) {
  LabelVolume out(m.dims, 0);
  out.spacing = m.spacing;
  out.origin = m.origin;
  for (int z = 0; z < m.dims[2]; ++z)
    for (int y = 0; y < m.dims[1]; ++y)
      for (int x = 0; x < m.dims[0]; ++x) {
        if (!m.at(x, y, z)) continue;
        for (const auto& o : offs) {
          int px = x + o[0], py = y + o[1], pz = z + o[2];
          if (m.in_bounds(px, py, pz)) out.at(px, py, pz) = 1;
        }
      }
  return out;
}

}  // namespace

LabelVolume dilate_ball(const LabelVolume& m, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate_ball: negative radius");
  if (radius == 0) return m;
  return dilate_with_offsets(m, ball_offsets(radius));
}

LabelVolume dilate_box(const LabelVolume& m, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate_box: negative radius");
  if (radius == 0) return m;
  std::vector<Int3> offs;
  for (int dz = -radius; dz <= radius; ++dz)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) offs.push_back({dx, dy, dz});
  return dilate_with_offsets(m, offs);
}

// ---- vessel extraction ------------------------------------------------------

VesselExtraction extract_vessels(const Volume3D& v, const PreprocessConfig& cfg) {
  cfg.validate();
  v.validate();
  VesselExtraction out;
  out.mask = LabelVolume(v.dims, 0);
  out.mask.spacing = v.spacing;
  out.mask.origin = v.origin;

  std::vector<float> nonzero;
  nonzero.reserve(v.data.size());
  float lo = v.data[0], hi = v.data[0];
  for (float x : v.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    if (x != 0.f) nonzero.push_back(x);
  }
  if (nonzero.empty() || lo == hi) {
    out.degenerate = true;
    return out;
  }

  const std::size_t k =
      std::size_t(cfg.vessel_threshold_quantile * double(nonzero.size() - 1));
  std::nth_element(nonzero.begin(), nonzero.begin() + std::ptrdiff_t(k), nonzero.end());
  const float threshold = nonzero[k];

  for (std::size_t i = 0; i < v.data.size(); ++i)
    out.mask.data[i] = v.data[i] >= threshold && v.data[i] != 0.f;

  // Drop specks below the minimum component size.
  if (cfg.vessel_min_component > 1) {
    ComponentSet cs = connected_components(out.mask, 26);
    for (const auto& c : cs.components)
      if (c.voxel_count < cfg.vessel_min_component)
        for (auto idx : c.voxels) out.mask.data[std::size_t(idx)] = 0;
  }
  return out;
}

ZScoreResult zscore_normalize(const Volume3D& v, const LabelVolume* mask) {
  v.validate();
  if (mask && mask->dims != v.dims)
    throw std::invalid_argument("zscore_normalize: mask geometry mismatch");
  double sum = 0, sumsq = 0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    if (mask && !mask->data[i]) continue;
    sum += v.data[i];
    sumsq += double(v.data[i]) * v.data[i];
    ++n;
  }
  ZScoreResult res;
  res.volume = v;
  if (n == 0) {
    std::fill(res.volume.data.begin(), res.volume.data.end(), 0.f);
    res.zero_std = true;
    return res;
  }
  const double mean = sum / double(n);
  double var = sumsq / double(n) - mean * mean;
  if (var < 0) var = 0;
  const double sd = std::sqrt(var);
  if (sd < 1e-12) {
    std::fill(res.volume.data.begin(), res.volume.data.end(), 0.f);
    res.zero_std = true;
    return res;
  }
  const float s = float(1.0 / sd), b = float(-mean / sd);
  for (auto& x : res.volume.data) x = x * s + b;
  return res;
}

// ---- contour -----------------------------------------------------------------

namespace {

// Separable 3-tap pass with replicated borders. axis: 0=x, 1=y, 2=z.
void pass3(const std::vector<float>& in, std::vector<float>& out, const Int3& dims, int axis,
           const std::array<float, 3>& k) {
  const int nx = dims[0], ny = dims[1], nz = dims[2];
  auto idx = [&](int x, int y, int z) { return (std::size_t(z) * ny + y) * nx + x; };
  out.resize(in.size());
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        int m[3] = {x, y, z}, p[3] = {x, y, z};
        m[axis] = std::max(m[axis] - 1, 0);
        p[axis] = std::min(p[axis] + 1, dims[axis] - 1);
        out[idx(x, y, z)] = k[0] * in[idx(m[0], m[1], m[2])] + k[1] * in[idx(x, y, z)] +
                            k[2] * in[idx(p[0], p[1], p[2])];
      }
}

}  // namespace

Volume3D extract_contour(const LabelVolume& mask, const PreprocessConfig& cfg) {
  cfg.validate();
  mask.validate();
  Volume3D out(mask.dims, 0.f);
  out.spacing = mask.spacing;
  out.origin = mask.origin;

  bool any = false;
  for (auto v : mask.data)
    if (v) {
      any = true;
      break;
    }
  if (!any) return out;

  const LabelVolume dilated = dilate_ball(mask, cfg.smooth_dilate_radius);
  std::vector<float> f(dilated.data.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = dilated.data[i] ? 1.f : 0.f;

  // Sobel gradient per axis: central difference along the axis, binomial
  // smoothing along the other two.
  const std::array<float, 3> smooth{0.25f, 0.5f, 0.25f};
  const std::array<float, 3> deriv{-0.5f, 0.f, 0.5f};
  std::vector<float> ga, gb, grad;
  std::vector<double> magsq(f.size(), 0.0);
  for (int axis = 0; axis < 3; ++axis) {
    const int s1 = (axis + 1) % 3, s2 = (axis + 2) % 3;
    pass3(f, ga, mask.dims, s1, smooth);
    pass3(ga, gb, mask.dims, s2, smooth);
    pass3(gb, grad, mask.dims, axis, deriv);
    for (std::size_t i = 0; i < f.size(); ++i) magsq[i] += double(grad[i]) * grad[i];
  }
  for (std::size_t i = 0; i < f.size(); ++i) out.data[i] = float(std::sqrt(magsq[i]));
  return out;
}

// ---- labels ---------------------------------------------------------------------

LabelVolume remap_ruptured(const LabelVolume& l) {
  l.validate();
  LabelVolume out = l;
  for (auto& v : out.data) {
    if (v > 2) throw std::invalid_argument("remap_ruptured: unexpected label value");
    if (v == 2) v = 0;
  }
  return out;
}

LabelVolume adaptive_dilate_labels(const LabelVolume& l, const PreprocessConfig& cfg) {
  cfg.validate();
  for (auto v : l.data)
    if (v > 1) throw std::invalid_argument("adaptive_dilate_labels: label must be binary");

  LabelVolume out(l.dims, 0);
  out.spacing = l.spacing;
  out.origin = l.origin;
  const ComponentSet cs = connected_components(l, 26);
  for (const auto& comp : cs.components) {
    const int extent = std::max({comp.bbox.size[0], comp.bbox.size[1], comp.bbox.size[2]});
    const int radius = std::clamp(int(std::lround(extent / 10.0)),
                                  cfg.adaptive_dilate_clamp[0], cfg.adaptive_dilate_clamp[1]);
    for (auto idx : comp.voxels) {
      const int x = int(idx % l.dims[0]);
      const int y = int((idx / l.dims[0]) % l.dims[1]);
      const int z = int(idx / (std::int64_t(l.dims[0]) * l.dims[1]));
      for (int dz = -radius; dz <= radius; ++dz)
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int px = x + dx, py = y + dy, pz = z + dz;
            if (out.in_bounds(px, py, pz)) out.at(px, py, pz) = 1;
          }
    }
  }
  return out;
}

// ---- VOI sampling -------------------------------------------------------------

std::vector<VoiCrop> crop_voi_samples(const Volume3D& img, const Volume3D& contour,
                                      const LabelVolume& l, const PreprocessConfig& cfg,
                                      const std::string& subject_id) {
  cfg.validate();
  if (img.dims != contour.dims || img.dims != l.dims)
    throw std::invalid_argument("crop_voi_samples: geometry mismatch between channels");

  std::vector<Int3> centers;
  const ComponentSet cs = connected_components(l, 26);
  for (const auto& comp : cs.components)
    centers.push_back({int(std::lround(comp.centroid[0])), int(std::lround(comp.centroid[1])),
                       int(std::lround(comp.centroid[2]))});

  if (centers.empty()) {
    // Lesion-free case: center on a seeded-random vessel voxel.
    std::vector<std::int64_t> support;
    for (std::int64_t i = 0; i < img.size(); ++i)
      if (img.data[std::size_t(i)] != 0.f) support.push_back(i);
    if (support.empty()) {
      centers.push_back({img.dims[0] / 2, img.dims[1] / 2, img.dims[2] / 2});
    } else {
      std::seed_seq seq{cfg.rng_seed, std::uint64_t(std::hash<std::string>{}(subject_id))};
      std::mt19937_64 rng(seq);
      std::uniform_int_distribution<std::size_t> pick(0, support.size() - 1);
      const std::int64_t idx = support[pick(rng)];
      centers.push_back({int(idx % img.dims[0]), int((idx / img.dims[0]) % img.dims[1]),
                         int(idx / (std::int64_t(img.dims[0]) * img.dims[1]))});
    }
  }

  std::vector<VoiCrop> out;
  for (const auto& c : centers) {
    VoiCrop s;
    s.placement = centered_region(c, cfg.voi_size);
    s.image_channel = crop(img, s.placement, 0.f);
    s.contour_channel = crop(contour, s.placement, 0.f);
    s.label = crop(l, s.placement, std::uint8_t(0));
    s.subject_id = subject_id;
    out.push_back(std::move(s));
  }
  return out;
}

// ---- augmentation ---------------------------------------------------------------

namespace {

template <typename T>
Grid3<T> flip_grid(const Grid3<T>& v, int axis) {
  Grid3<T> out = v;
  for (int z = 0; z < v.dims[2]; ++z)
    for (int y = 0; y < v.dims[1]; ++y)
      for (int x = 0; x < v.dims[0]; ++x) {
        int s[3] = {x, y, z};
        s[axis] = v.dims[axis] - 1 - s[axis];
        out.at(x, y, z) = v.at(s[0], s[1], s[2]);
      }
  return out;
}

// Discrete Gaussian kernel T(n, t) = exp(-t) I_n(t), t = sigma^2.
std::vector<float> discrete_gaussian_kernel(double sigma, int half_width) {
  const double t = sigma * sigma;
  std::vector<float> k(std::size_t(2 * half_width + 1));
  double total = 0;
  for (int n = -half_width; n <= half_width; ++n) {
    const double v = std::exp(-t) * std::cyl_bessel_i(double(std::abs(n)), t);
    k[std::size_t(n + half_width)] = float(v);
    total += v;
  }
  for (auto& v : k) v = float(v / total);
  return k;
}

Volume3D gaussian_filter(const Volume3D& v, double sigma) {
  const auto k = discrete_gaussian_kernel(sigma, 3);
  const int hw = int(k.size() / 2);
  Volume3D cur = v;
  Volume3D nxt = v;
  for (int axis = 0; axis < 3; ++axis) {
    for (int z = 0; z < v.dims[2]; ++z)
      for (int y = 0; y < v.dims[1]; ++y)
        for (int x = 0; x < v.dims[0]; ++x) {
          double acc = 0;
          for (int o = -hw; o <= hw; ++o) {
            int s[3] = {x, y, z};
            s[axis] = std::clamp(s[axis] + o, 0, v.dims[axis] - 1);
            acc += double(k[std::size_t(o + hw)]) * cur.at(s[0], s[1], s[2]);
          }
          nxt.at(x, y, z) = float(acc);
        }
    std::swap(cur, nxt);
  }
  return cur;
}

Volume3D histogram_equalize(const Volume3D& v, int bins = 256) {
  float lo = v.data[0], hi = v.data[0];
  for (float x : v.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi <= lo) return v;
  std::vector<std::int64_t> hist(std::size_t(bins), 0);
  const double scale = double(bins - 1) / (double(hi) - double(lo));
  for (float x : v.data) ++hist[std::size_t((double(x) - lo) * scale)];
  std::vector<double> cdf(hist.size());
  double run = 0;
  for (std::size_t b = 0; b < hist.size(); ++b) {
    run += double(hist[b]);
    cdf[b] = run;
  }
  const double total = run;
  Volume3D out = v;
  for (auto& x : out.data) {
    const std::size_t b = std::size_t((double(x) - lo) * scale);
    x = float(lo + (double(hi) - double(lo)) * (cdf[b] / total));
  }
  return out;
}

struct Recipe {
  int flip_axis = -1;  // -1 = none
  int intensity = 0;   // 0 none, 1 gauss, 2 histeq
};

Recipe parse_recipe(const std::string& tag) {
  Recipe r;
  std::size_t start = 0;
  while (start <= tag.size()) {
    const std::size_t plus = tag.find('+', start);
    const std::string part =
        tag.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
    if (part == "identity" || part.empty()) {
    } else if (part == "flip-x") {
      r.flip_axis = 0;
    } else if (part == "flip-y") {
      r.flip_axis = 1;
    } else if (part == "flip-z") {
      r.flip_axis = 2;
    } else if (part == "gauss") {
      r.intensity = 1;
    } else if (part == "histeq") {
      r.intensity = 2;
    } else {
      throw std::invalid_argument("augment: unknown recipe part '" + part + "'");
    }
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return r;
}

}  // namespace

std::vector<VoiCrop> augment_x8(const VoiCrop& s, const PreprocessConfig& cfg) {
  cfg.validate();
  std::vector<VoiCrop> out;
  out.reserve(8);
  for (const auto& tag : cfg.augmentation_recipes) {
    const Recipe r = parse_recipe(tag);
    VoiCrop a = s;
    if (r.flip_axis >= 0) {
      a.image_channel = flip_grid(a.image_channel, r.flip_axis);
      a.contour_channel = flip_grid(a.contour_channel, r.flip_axis);
      a.label = flip_grid(a.label, r.flip_axis);
    }
    if (r.intensity == 1) a.image_channel = gaussian_filter(a.image_channel, 0.5);
    if (r.intensity == 2) a.image_channel = histogram_equalize(a.image_channel);
    out.push_back(std::move(a));
  }
  return out;
}

std::pair<std::vector<VoiCrop>, std::vector<VoiCrop>> split_train_val(
    const std::vector<VoiCrop>& samples, const PreprocessConfig& cfg) {
  cfg.validate();
  std::vector<std::string> subjects;
  for (const auto& s : samples)
    if (std::find(subjects.begin(), subjects.end(), s.subject_id) == subjects.end())
      subjects.push_back(s.subject_id);
  if (subjects.size() < 2)
    throw std::invalid_argument("split_train_val: need at least 2 subjects");

  std::mt19937_64 rng(cfg.rng_seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  const std::size_t n_train = std::size_t(std::clamp<long>(
      std::lround(cfg.split_ratio * double(subjects.size())), 1, long(subjects.size()) - 1));
  std::set<std::string> train_ids(subjects.begin(), subjects.begin() + std::ptrdiff_t(n_train));

  std::pair<std::vector<VoiCrop>, std::vector<VoiCrop>> out;
  for (const auto& s : samples)
    (train_ids.count(s.subject_id) ? out.first : out.second).push_back(s);
  return out;
}

}  // namespace canseg
