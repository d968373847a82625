#include "canseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "canseg/components.hpp"

namespace canseg {

namespace {

void expect_same_geometry(const LabelVolume& a, const LabelVolume& b, const char* who) {
  if (a.dims != b.dims) throw std::invalid_argument(std::string(who) + ": geometry mismatch");
}

std::int64_t count_nonzero(const LabelVolume& m) {
  std::int64_t n = 0;
  for (auto v : m.data) n += (v != 0);
  return n;
}

}  // namespace

LesionCounts match_lesions(const LabelVolume& gt, const LabelVolume& pred, int connectivity,
                           MatchRule rule) {
  expect_same_geometry(gt, pred, "match_lesions");
  const ComponentSet gts = connected_components(gt, connectivity);
  const ComponentSet prs = connected_components(pred, connectivity);

  // Component id map of the GT for overlap counting.
  std::vector<std::int32_t> gt_id(gt.data.size(), -1);
  for (std::size_t g = 0; g < gts.components.size(); ++g)
    for (auto v : gts.components[g].voxels) gt_id[std::size_t(v)] = std::int32_t(g);

  std::vector<bool> gt_hit(gts.components.size(), false);
  LesionCounts c;
  c.n_subjects = 1;
  for (const auto& pc : prs.components) {
    if (rule == MatchRule::CenterInsideGt) {
      const int cx = int(std::lround(pc.centroid[0]));
      const int cy = int(std::lround(pc.centroid[1]));
      const int cz = int(std::lround(pc.centroid[2]));
      std::int32_t g = gt.in_bounds(cx, cy, cz) ? gt_id[std::size_t(gt.index(cx, cy, cz))] : -1;
      if (g < 0)
        ++c.fp;
      else
        gt_hit[std::size_t(g)] = true;
      continue;
    }
    std::vector<std::int64_t> overlap(gts.components.size(), 0);
    bool any = false;
    for (auto v : pc.voxels) {
      std::int32_t g = gt_id[std::size_t(v)];
      if (g >= 0) {
        ++overlap[std::size_t(g)];
        any = true;
      }
    }
    if (!any) {
      ++c.fp;
      continue;
    }
    // Largest-overlap assignment; ties resolve to the earlier component.
    std::size_t best = 0;
    for (std::size_t g = 1; g < overlap.size(); ++g)
      if (overlap[g] > overlap[best]) best = g;
    gt_hit[best] = true;
  }
  for (bool hit : gt_hit) hit ? ++c.tp : ++c.fn;
  return c;
}

std::optional<double> sensitivity(const LesionCounts& c) {
  if (c.tp + c.fn == 0) return std::nullopt;
  return double(c.tp) / double(c.tp + c.fn);
}

std::optional<double> fp_per_case(const LesionCounts& c) {
  if (c.n_subjects <= 0) throw std::invalid_argument("fp_per_case: no subjects");
  return double(c.fp) / double(c.n_subjects);
}

std::optional<double> ppv(const LesionCounts& c) {
  if (c.tp + c.fp == 0) return std::nullopt;
  return double(c.tp) / double(c.tp + c.fp);
}

double dsc(const LabelVolume& gt, const LabelVolume& pred) {
  expect_same_geometry(gt, pred, "dsc");
  std::int64_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const bool a = gt.data[i] != 0, b = pred.data[i] != 0;
    inter += (a && b);
    na += a;
    nb += b;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * double(inter) / double(na + nb);
}

std::optional<double> hausdorff(const LabelVolume& gt, const LabelVolume& pred,
                                DistanceUnits units) {
  expect_same_geometry(gt, pred, "hausdorff");
  std::vector<std::array<float, 3>> a, b;
  const Float3 sp = units == DistanceUnits::Mm ? gt.spacing : Float3{1.f, 1.f, 1.f};
  auto collect = [&](const LabelVolume& m, std::vector<std::array<float, 3>>& out) {
    for (int z = 0; z < m.dims[2]; ++z)
      for (int y = 0; y < m.dims[1]; ++y)
        for (int x = 0; x < m.dims[0]; ++x)
          if (m.at(x, y, z)) out.push_back({x * sp[0], y * sp[1], z * sp[2]});
  };
  collect(gt, a);
  collect(pred, b);
  if (a.empty() || b.empty()) return std::nullopt;

  auto directed = [](const std::vector<std::array<float, 3>>& from,
                     const std::vector<std::array<float, 3>>& to) {
    double worst = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::max();
      for (const auto& q : to) {
        const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
        if (best == 0) break;
      }
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

double volumetric_similarity(const LabelVolume& gt, const LabelVolume& pred) {
  expect_same_geometry(gt, pred, "volumetric_similarity");
  const std::int64_t na = count_nonzero(gt), nb = count_nonzero(pred);
  if (na + nb == 0) return 1.0;
  return 1.0 - double(std::llabs(na - nb)) / double(na + nb);
}

RankTable rank_models(const std::vector<std::string>& models,
                      const std::vector<MetricColumn>& columns) {
  if (models.size() < 2) throw std::invalid_argument("rank_models: need at least 2 models");
  if (columns.empty()) throw std::invalid_argument("rank_models: need at least one metric");

  RankTable table;
  table.models = models;
  table.columns = columns;
  table.final_scores.assign(models.size(), 0.0);

  for (const auto& col : columns) {
    if (col.values.size() != models.size())
      throw std::invalid_argument("rank_models: column '" + col.name +
                                  "' length does not match model count");
    double best = std::numeric_limits<double>::quiet_NaN();
    double worst = best;
    bool any = false;
    for (const auto& v : col.values) {
      if (!v) continue;
      if (!any) {
        best = worst = *v;
        any = true;
        continue;
      }
      if (col.orientation == Orientation::HigherBetter) {
        best = std::max(best, *v);
        worst = std::min(worst, *v);
      } else {
        best = std::min(best, *v);
        worst = std::max(worst, *v);
      }
    }
    if (!any)
      throw std::invalid_argument("rank_models: metric '" + col.name + "' has no defined value");

    for (std::size_t m = 0; m < models.size(); ++m) {
      double score;
      if (!col.values[m]) {
        score = 1.0;  // a missing value ranks as the worst outcome
      } else if (best == worst) {
        score = 0.0;
      } else {
        score = (col.orientation == Orientation::HigherBetter)
                    ? (best - *col.values[m]) / (best - worst)
                    : (*col.values[m] - best) / (worst - best);
      }
      table.final_scores[m] += score;
    }
  }
  for (auto& s : table.final_scores) s /= double(columns.size());
  return table;
}

std::string format_metric(const std::optional<double>& v, int precision) {
  if (!v) return "Nan";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << *v;
  return os.str();
}

}  // namespace canseg
