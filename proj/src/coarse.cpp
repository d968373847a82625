#include "canseg/coarse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "canseg/components.hpp"

namespace canseg {

void CoarseConfig::validate() const {
  if (hi_patch[0] != hi_patch[1] || hi_patch[0] != hi_patch[2])
    throw std::invalid_argument("coarse: hi_patch must be cubic");
  if (conv_layers < 1) throw std::invalid_argument("coarse: conv_layers must be >= 1");
  if (int(channels.size()) != conv_layers)
    throw std::invalid_argument("coarse: channels_per_layer length must equal conv_layers");
  for (int c : channels)
    if (c < 1) throw std::invalid_argument("coarse: channel widths must be positive");
  if (lo_downsample < 1) throw std::invalid_argument("coarse: lo_downsample must be >= 1");
  if (classes != 2) throw std::invalid_argument("coarse: only 2 classes supported");
  if (iterations < 0) throw std::invalid_argument("coarse: negative iteration count");
  if (batch_size < 1) throw std::invalid_argument("coarse: batch_size must be >= 1");
  if (!(lr_init > 0)) throw std::invalid_argument("coarse: lr_init must be > 0");
  if (l1 < 0 || l2 < 0) throw std::invalid_argument("coarse: penalties must be >= 0");
  if (min_candidate_voxels < 1)
    throw std::invalid_argument("coarse: min_candidate_voxels must be >= 1");

  const int out = out_extent();
  if (out < 1)
    throw std::invalid_argument(
        "coarse: patch too small for the receptive field (each unpadded 3^3 layer "
        "shrinks each axis by 2)");
  if (out % lo_downsample != 0)
    throw std::invalid_argument(
        "coarse: pathway output extent must be divisible by lo_downsample");
  if (hi_patch[0] % 2 != 1 || (out / lo_downsample) % 2 != 1)
    throw std::invalid_argument("coarse: patch and low-path extents must be odd for centering");
  if (infer_tile < 1 || infer_tile % lo_downsample != 0 ||
      (infer_tile / lo_downsample) % 2 != 1 || infer_tile % 2 != 1)
    throw std::invalid_argument("coarse: infer_tile must be odd and an odd multiple of "
                                "lo_downsample");
}

CoarseModel build_coarse(const CoarseConfig& cfg) {
  cfg.validate();
  CoarseModel m;
  m.cfg = cfg;
  std::mt19937_64 rng(cfg.rng_seed);

  auto make_path = [&](const char* prefix, std::vector<nn::Tensor>& ws,
                       std::vector<nn::Tensor>& bs) {
    int in_ch = 1;
    for (int l = 0; l < cfg.conv_layers; ++l) {
      const int out_ch = cfg.channels[std::size_t(l)];
      const float std = std::sqrt(2.f / float(in_ch * 27));
      std::string base = std::string(prefix) + std::to_string(l);
      ws.push_back(nn::param_randn({out_ch, in_ch, 3, 3, 3}, std, rng, base + ".w"));
      bs.push_back(nn::param({out_ch}, base + ".b"));
      m.params.add(ws.back());
      m.params.add(bs.back());
      in_ch = out_ch;
    }
  };
  make_path("hi", m.hi_w, m.hi_b);
  make_path("lo", m.lo_w, m.lo_b);

  const int top = cfg.channels.back();
  m.head_w = nn::param_randn({cfg.classes, top, 1, 1, 1}, std::sqrt(2.f / float(top)), rng,
                             "head.w");
  m.head_b = nn::param({cfg.classes}, "head.b");
  m.params.add(m.head_w);
  m.params.add(m.head_b);
  return m;
}

nn::Tensor CoarseModel::forward(const nn::Tensor& hi, const nn::Tensor& lo) const {
  auto run_path = [&](nn::Tensor x, const std::vector<nn::Tensor>& ws,
                      const std::vector<nn::Tensor>& bs) {
    for (std::size_t l = 0; l < ws.size(); ++l)
      x = nn::leaky_relu(nn::conv3d(x, ws[l], bs[l], 1, 0), 0.02f);
    return x;
  };
  nn::Tensor hi_out = run_path(hi, hi_w, hi_b);
  nn::Tensor lo_out = run_path(lo, lo_w, lo_b);

  // Receptive-field arithmetic: both pathway outputs shrink by 2 per layer.
  const int want = hi.shape()[1] - 2 * cfg.conv_layers;
  if (hi_out.shape()[1] != want || lo_out.shape()[1] * cfg.lo_downsample != want)
    throw std::logic_error("coarse: pathway output extents violate the receptive-field contract");

  nn::Tensor fused = nn::add(hi_out, nn::upsample_nearest(lo_out, cfg.lo_downsample));
  return nn::conv3d(fused, head_w, head_b, 1, 0);
}

namespace {

// Strided central gather for the low-resolution pathway: element i samples
// the full-resolution image at center + ds*(i - (E-1)/2), zero outside.
std::vector<float> gather_lo_patch(const Volume3D& img, const Int3& center, int extent,
                                   int ds) {
  std::vector<float> out(std::size_t(extent) * extent * extent, 0.f);
  const int half = (extent - 1) / 2;
  std::size_t i = 0;
  for (int z = 0; z < extent; ++z)
    for (int y = 0; y < extent; ++y)
      for (int x = 0; x < extent; ++x, ++i) {
        const int px = center[0] + ds * (x - half);
        const int py = center[1] + ds * (y - half);
        const int pz = center[2] + ds * (z - half);
        if (img.in_bounds(px, py, pz)) out[i] = img.at(px, py, pz);
      }
  return out;
}

CoarsePatch extract_patch(const Volume3D& img, const LabelVolume& labels,
                          const CoarseConfig& cfg, const Int3& center) {
  CoarsePatch p;
  const Volume3D hi = crop(img, centered_region(center, cfg.hi_patch[0]), 0.f);
  p.hi = hi.data;
  const int out = cfg.out_extent();
  p.lo = gather_lo_patch(img, center, cfg.lo_patch_extent(out), cfg.lo_downsample);
  const LabelVolume t = crop(labels, centered_region(center, out), std::uint8_t(0));
  p.target.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) p.target[i] = t.data[i] ? 1 : 0;
  return p;
}

Int3 index_to_xyz(std::int64_t idx, const Int3& dims) {
  return {int(idx % dims[0]), int((idx / dims[0]) % dims[1]),
          int(idx / (std::int64_t(dims[0]) * dims[1]))};
}

}  // namespace

CoarseBatch sample_patches(const Volume3D& img, const LabelVolume& dilated_labels,
                           const CoarseConfig& cfg, int n, std::mt19937_64& rng) {
  cfg.validate();
  if (img.dims != dilated_labels.dims)
    throw std::invalid_argument("sample_patches: geometry mismatch");

  std::vector<std::int64_t> fg;
  for (std::int64_t i = 0; i < dilated_labels.size(); ++i)
    if (dilated_labels.data[std::size_t(i)]) fg.push_back(i);

  CoarseBatch batch;
  batch.fg_missing = fg.empty();
  std::uniform_int_distribution<std::int64_t> any(0, img.size() - 1);
  for (int k = 0; k < n; ++k) {
    const bool want_fg = (k % 2 == 0) && !fg.empty();
    Int3 center;
    if (want_fg) {
      std::uniform_int_distribution<std::size_t> pick(0, fg.size() - 1);
      center = index_to_xyz(fg[pick(rng)], img.dims);
    } else {
      std::int64_t idx = any(rng);
      for (int guard = 0; guard < 1000 && dilated_labels.data[std::size_t(idx)]; ++guard)
        idx = any(rng);
      center = index_to_xyz(idx, img.dims);
    }
    CoarsePatch p = extract_patch(img, dilated_labels, cfg, center);
    p.foreground_centered = want_fg;
    batch.patches.push_back(std::move(p));
  }
  return batch;
}

namespace {

double step_lr(const CoarseConfig& cfg, int step) {
  // "dropped gradually": halve at 50% and 75% of the step budget.
  double lr = cfg.lr_init;
  if (cfg.iterations > 0) {
    if (step >= cfg.iterations / 2) lr *= 0.5;
    if (step >= cfg.iterations * 3 / 4) lr *= 0.5;
  }
  return lr;
}

}  // namespace

std::vector<CoarseTrainEntry> train_coarse(CoarseModel& model,
                                           const std::vector<CoarseSubject>& cohort,
                                           const CoarseConfig& cfg) {
  cfg.validate();
  if (cohort.empty()) throw std::invalid_argument("train_coarse: empty cohort");

  std::mt19937_64 rng(cfg.rng_seed + 1);
  nn::RmsProp opt(model.params, float(cfg.l1), float(cfg.l2));
  std::vector<CoarseTrainEntry> log;
  const int P = cfg.hi_patch[0];
  const int E = cfg.lo_patch_extent(cfg.out_extent());
  std::uniform_int_distribution<std::size_t> pick_subject(0, cohort.size() - 1);

  for (int step = 0; step < cfg.iterations; ++step) {
    const auto& subject = cohort[pick_subject(rng)];
    CoarseBatch batch =
        sample_patches(subject.image, subject.dilated_labels, cfg, cfg.batch_size, rng);

    model.params.zero_grad();
    double loss_sum = 0;
    for (const auto& p : batch.patches) {
      nn::Tensor hi = nn::from_data({1, P, P, P}, p.hi.data());
      nn::Tensor lo = nn::from_data({1, E, E, E}, p.lo.data());
      nn::Tensor ce = nn::softmax_cross_entropy(model.forward(hi, lo), p.target.data());
      loss_sum += ce.data()[0];
      nn::backward(ce, 1.f / float(batch.patches.size()));
    }
    const double loss = loss_sum / double(batch.patches.size());
    if (!std::isfinite(loss))
      throw std::runtime_error("train_coarse: non-finite loss at step " + std::to_string(step));

    const double lr = step_lr(cfg, step);
    opt.step(float(lr));
    log.push_back({step, loss, lr});
  }
  return log;
}

LabelVolume predict_coarse(const CoarseModel& model, const Volume3D& img) {
  const CoarseConfig& cfg = model.cfg;
  cfg.validate();
  if (std::min({img.dims[0], img.dims[1], img.dims[2]}) < cfg.out_extent())
    throw std::invalid_argument("predict_coarse: image smaller than the receptive field");

  LabelVolume out(img.dims, 0);
  out.spacing = img.spacing;
  out.origin = img.origin;

  int T = cfg.infer_tile;
  if (T > std::min({img.dims[0], img.dims[1], img.dims[2]})) T = cfg.out_extent();
  const int L = cfg.conv_layers;
  const int P = T + 2 * L;
  const int E = cfg.lo_patch_extent(T);
  nn::NoGradGuard guard;

  auto tile_starts = [&](int dim) {
    std::vector<int> starts;
    for (int s = 0;; s += T) {
      if (s + T >= dim) {
        starts.push_back(dim - T);
        break;
      }
      starts.push_back(s);
    }
    return starts;
  };
  const auto xs = tile_starts(img.dims[0]), ys = tile_starts(img.dims[1]),
             zs = tile_starts(img.dims[2]);

  std::vector<float> hi_buf;
  for (int sz : zs)
    for (int sy : ys)
      for (int sx : xs) {
        const Int3 center{sx + T / 2, sy + T / 2, sz + T / 2};
        const Volume3D hi_vol = crop(img, centered_region(center, P), 0.f);
        nn::Tensor hi = nn::from_data({1, P, P, P}, hi_vol.data.data());
        std::vector<float> lo_data = gather_lo_patch(img, center, E, cfg.lo_downsample);
        nn::Tensor lo = nn::from_data({1, E, E, E}, lo_data.data());
        nn::Tensor logits = model.forward(hi, lo);

        const std::size_t tvox = std::size_t(T) * T * T;
        const float* bg = logits.data();
        const float* fg = logits.data() + tvox;
        std::size_t i = 0;
        for (int z = 0; z < T; ++z)
          for (int y = 0; y < T; ++y)
            for (int x = 0; x < T; ++x, ++i)
              out.at(sx + x, sy + y, sz + z) = fg[i] > bg[i];  // ties go to background
      }
  return out;
}

void drop_small_components(LabelVolume& mask, int min_size) {
  if (min_size <= 1) return;
  const ComponentSet cs = connected_components(mask, 26);
  for (const auto& c : cs.components)
    if (c.voxel_count < min_size)
      for (auto idx : c.voxels) mask.data[std::size_t(idx)] = 0;
}

std::vector<CandidateRegion> extract_candidates(const LabelVolume& mask, int min_size) {
  if (min_size < 1) throw std::invalid_argument("extract_candidates: min_size must be >= 1");
  const ComponentSet cs = connected_components(mask, 26);
  std::vector<CandidateRegion> out;
  std::int64_t largest = 0;
  for (const auto& c : cs.components) {
    if (c.voxel_count < min_size) continue;
    CandidateRegion r;
    r.center = {int(std::lround(c.centroid[0])), int(std::lround(c.centroid[1])),
                int(std::lround(c.centroid[2]))};
    r.extent = c.bbox.size;
    r.score = double(c.voxel_count);
    largest = std::max(largest, c.voxel_count);
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const CandidateRegion& a, const CandidateRegion& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.center < b.center;
  });
  for (auto& r : out) r.score = largest > 0 ? r.score / double(largest) : 0.0;
  return out;
}

}  // namespace canseg
