#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "canseg/config.hpp"
#include "canseg/nifti.hpp"
#include "canseg/pipeline.hpp"
#include "canseg/weights.hpp"

namespace fs = std::filesystem;
using namespace canseg;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

PipelineConfig resolve_config(const CommonOpts& o) {
  PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  if (o.seed) cfg.reseed(*o.seed);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "Override every stage seed");
}

std::string subject_name(int i) {
  std::ostringstream os;
  os << "subject_" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

struct DatasetEntry {
  std::string id;
  std::string image;
  std::string label;  // empty when unlabeled
};

std::vector<DatasetEntry> read_dataset(const std::string& dir) {
  const fs::path manifest = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest))
    throw std::runtime_error("dataset: missing manifest.json in " + dir);
  std::ifstream in(manifest);
  json j = json::parse(in);
  std::vector<DatasetEntry> out;
  for (const auto& e : j.at("subjects")) {
    DatasetEntry d;
    d.id = e.at("id").get<std::string>();
    d.image = (fs::path(dir) / e.at("image").get<std::string>()).string();
    if (e.contains("label") && !e.at("label").is_null())
      d.label = (fs::path(dir) / e.at("label").get<std::string>()).string();
    out.push_back(d);
  }
  if (out.empty()) throw std::runtime_error("dataset: no subjects listed in " + dir);
  return out;
}

std::vector<PreprocessedCase> preprocess_dataset(const std::string& dir,
                                                 const PipelineConfig& cfg) {
  std::vector<PreprocessedCase> cases;
  for (const auto& e : read_dataset(dir)) {
    Volume3D img = load_volume(e.image);
    if (e.label.empty()) {
      cases.push_back(preprocess_case(img, nullptr, cfg, e.id));
    } else {
      LabelVolume lbl = load_label_volume(e.label);
      cases.push_back(preprocess_case(img, &lbl, cfg, e.id));
    }
  }
  return cases;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// ---- subcommands ----------------------------------------------------------

int cmd_phantom(const CommonOpts& common, const std::string& out_dir, int count) {
  PipelineConfig cfg = resolve_config(common);
  fs::create_directories(out_dir);
  json manifest;
  manifest["subjects"] = json::array();
  for (int i = 0; i < count; ++i) {
    PhantomSpec spec = cfg.phantom;
    spec.rng_seed = cfg.phantom.rng_seed + std::uint64_t(i) * 7919;
    Phantom ph = generate_phantom(spec);
    const std::string id = subject_name(i);
    const std::string img = id + "_img.nii.gz";
    const std::string lbl = id + "_lbl.nii.gz";
    save_volume(ph.image, (fs::path(out_dir) / img).string());
    save_volume(ph.label, (fs::path(out_dir) / lbl).string());
    manifest["subjects"].push_back(
        {{"id", id}, {"image", img}, {"label", lbl}, {"seed", spec.rng_seed}});
  }
  write_text((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << "wrote " << count << " phantoms to " << out_dir << "\n";
  return 0;
}

int cmd_preprocess(const CommonOpts& common, const std::string& in_dir,
                   const std::string& out_dir) {
  PipelineConfig cfg = resolve_config(common);
  fs::create_directories(out_dir);
  json manifest;
  manifest["voi_size"] = cfg.preprocess.voi_size;
  manifest["subjects"] = json::array();
  for (const auto& pc : preprocess_dataset(in_dir, cfg)) {
    const fs::path base = fs::path(out_dir) / pc.id;
    save_volume(pc.normalized, base.string() + "_norm.nii.gz");
    save_volume(pc.contour, base.string() + "_contour.nii.gz");
    save_volume(pc.vessel_mask, base.string() + "_vessels.nii.gz");
    save_volume(pc.labels, base.string() + "_labels.nii.gz");
    save_volume(pc.labels_dilated, base.string() + "_labels_dilated.nii.gz");
    json subj;
    subj["subject_id"] = pc.id;
    subj["degenerate"] = pc.degenerate;
    subj["zero_std"] = pc.zero_std;
    subj["vois"] = json::array();
    for (const auto& voi : pc.vois) {
      std::int64_t label_count = 0;
      for (auto v : voi.label.data) label_count += v != 0;
      subj["vois"].push_back(
          {{"subject_id", voi.subject_id},
           {"center_xyz",
            {voi.placement.start[0] + voi.placement.size[0] / 2,
             voi.placement.start[1] + voi.placement.size[1] / 2,
             voi.placement.start[2] + voi.placement.size[2] / 2}},
           {"size", voi.placement.size[0]},
           {"label_count", label_count}});
    }
    manifest["subjects"].push_back(subj);
  }
  write_text((fs::path(out_dir) / "voi_manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << "preprocessed dataset written to " << out_dir << "\n";
  return 0;
}

void write_coarse_log(const std::string& path, const std::vector<CoarseTrainEntry>& log) {
  std::ostringstream os;
  os << "step,loss,lr\n";
  for (const auto& e : log)
    os << e.step << "," << std::setprecision(10) << e.loss << "," << e.lr << "\n";
  write_text(path, os.str());
}

// Fold metric table + normalized rank scores, one row per fold.
void write_crossval_report(const std::string& path, const CrossvalResult& res) {
  std::ostringstream os;
  os << "fold";
  for (const auto& [name, _] : res.folds.at(0).values) os << "," << name;
  os << ",rank_score\n";
  for (std::size_t f = 0; f < res.folds.size(); ++f) {
    os << res.folds[f].name;
    for (const auto& [_, v] : res.folds[f].values) os << "," << format_metric(v, 6);
    os << "," << std::setprecision(6) << std::fixed << res.table.final_scores[f] << "\n";
  }
  write_text(path, os.str());
}

int cmd_train_coarse(const CommonOpts& common, const std::string& data_dir,
                     const std::string& out_path, const std::string& log_path,
                     bool use_crossval, const std::string& folds_csv) {
  PipelineConfig cfg = resolve_config(common);
  if (use_crossval) {
    const auto subjects = preprocess_dataset(data_dir, cfg);
    CrossvalResult res = crossval(subjects, cfg, Stage::Coarse);
    save_weights(res.coarse_models[std::size_t(res.best_fold)].params, out_path);
    if (!folds_csv.empty()) write_crossval_report(folds_csv, res);
    std::cout << "best fold " << res.best_fold << " (score "
              << res.table.final_scores[std::size_t(res.best_fold)]
              << "); weights written to " << out_path << "\n";
    return 0;
  }
  std::vector<CoarseSubject> cohort;
  for (auto& pc : preprocess_dataset(data_dir, cfg))
    cohort.push_back({pc.id, std::move(pc.normalized), std::move(pc.labels_dilated)});
  CoarseModel model = build_coarse(cfg.coarse);
  auto log = train_coarse(model, cohort, cfg.coarse);
  save_weights(model.params, out_path);
  if (!log_path.empty()) write_coarse_log(log_path, log);
  std::cout << "coarse weights written to " << out_path;
  if (!log.empty()) std::cout << " (final loss " << log.back().loss << ")";
  std::cout << "\n";
  return 0;
}

void write_fine_log(const std::string& path, const std::vector<FineTrainEntry>& log) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,lr\n";
  for (const auto& e : log)
    os << e.epoch << "," << std::setprecision(10) << e.train_loss << "," << e.val_loss << ","
       << e.lr << "\n";
  write_text(path, os.str());
}

int cmd_train_fine(const CommonOpts& common, const std::string& data_dir,
                   const std::string& out_path, const std::string& log_path,
                   const std::string& summary_path, bool overfit, bool use_crossval,
                   const std::string& folds_csv) {
  PipelineConfig cfg = resolve_config(common);
  if (use_crossval) {
    const auto subjects = preprocess_dataset(data_dir, cfg);
    CrossvalResult res = crossval(subjects, cfg, Stage::Fine);
    save_weights(res.fine_models[std::size_t(res.best_fold)].params, out_path);
    if (!folds_csv.empty()) write_crossval_report(folds_csv, res);
    std::cout << "best fold " << res.best_fold << " (score "
              << res.table.final_scores[std::size_t(res.best_fold)]
              << "); weights written to " << out_path << "\n";
    return 0;
  }
  std::vector<VoiCrop> all;
  for (const auto& pc : preprocess_dataset(data_dir, cfg))
    for (const auto& voi : pc.vois) {
      if (cfg.augment_training) {
        auto aug = augment_x8(voi, cfg.preprocess);
        all.insert(all.end(), aug.begin(), aug.end());
      } else {
        all.push_back(voi);
      }
    }

  std::vector<VoiCrop> train, val;
  if (overfit) {
    train = all;
    val = all;
  } else {
    auto split = split_train_val(all, cfg.preprocess);
    train = std::move(split.first);
    val = std::move(split.second);
  }

  FineModel model = build_fine(cfg.fine);
  if (!summary_path.empty()) write_text(summary_path, summarize(model.params));
  auto result = train_fine(model, train, val, cfg.loss, cfg.fine);
  save_weights(model.params, out_path);
  if (!log_path.empty()) write_fine_log(log_path, result.log);
  std::cout << "fine weights written to " << out_path << " (best val " << result.best_val
            << " at epoch " << result.best_epoch << ")\n";
  return 0;
}

int cmd_predict(const CommonOpts& common, const std::string& image_path,
                const std::string& coarse_path, const std::string& fine_path,
                const std::string& out_path, const std::string& candidates_path,
                const std::string& overlay_path) {
  PipelineConfig cfg = resolve_config(common);
  Volume3D image = load_volume(image_path);

  CoarseModel coarse = build_coarse(cfg.coarse);
  load_weights(coarse.params, coarse_path);
  FineModel fine = build_fine(cfg.fine);
  load_weights(fine.params, fine_path);

  if (!candidates_path.empty()) {
    const PreprocessedCase pc = preprocess_case(image, nullptr, cfg, "case");
    const LabelVolume mask = predict_coarse(coarse, pc.normalized);
    json out = json::array();
    for (const auto& c : extract_candidates(mask, cfg.coarse.min_candidate_voxels))
      out.push_back({{"center", {c.center[0], c.center[1], c.center[2]}},
                     {"extent", {c.extent[0], c.extent[1], c.extent[2]}},
                     {"score", c.score}});
    write_text(candidates_path, out.dump(2) + "\n");
  }

  LabelVolume seg = run_pipeline(image, coarse, fine, cfg);
  save_volume(seg, out_path);
  if (!overlay_path.empty()) {
    // Viewer-friendly overlay: segmented voxels pushed above the image range.
    Volume3D overlay = image;
    float hi = image.data.empty() ? 1.f : *std::max_element(image.data.begin(), image.data.end());
    for (std::size_t i = 0; i < overlay.data.size(); ++i)
      if (seg.data[i]) overlay.data[i] = hi * 1.25f + 1.f;
    save_volume(overlay, overlay_path);
  }
  std::cout << "segmentation written to " << out_path << "\n";
  return 0;
}

struct EvalPair {
  std::string id, pred, gt;
};

std::vector<EvalPair> collect_pairs(const std::string& pred, const std::string& gt) {
  if (!fs::is_directory(pred))
    return {{fs::path(pred).filename().string(), pred, gt}};
  std::vector<EvalPair> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(pred))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const fs::path other = fs::path(gt) / f.filename();
    if (fs::exists(other)) out.push_back({f.filename().string(), f.string(), other.string()});
  }
  if (out.empty()) throw std::runtime_error("evaluate: no matching prediction/label pairs");
  return out;
}

int cmd_evaluate(const std::string& pred, const std::string& gt, const std::string& out_csv,
                 const std::string& summary_path, const std::string& units_name) {
  const DistanceUnits units =
      units_name == "mm" ? DistanceUnits::Mm : DistanceUnits::Voxel;
  std::ostringstream csv;
  csv << "subject_id,dsc,hd,vs\n";
  std::vector<double> dscs, hds, vss;
  LesionCounts totals;
  for (const auto& pair : collect_pairs(pred, gt)) {
    const LabelVolume p = load_label_volume(pair.pred);
    const LabelVolume g = load_label_volume(pair.gt);
    const double d = dsc(g, p);
    const auto h = hausdorff(g, p, units);
    const double v = volumetric_similarity(g, p);
    totals += match_lesions(g, p);
    csv << pair.id << "," << std::setprecision(6) << d << "," << format_metric(h, 4) << ","
        << v << "\n";
    dscs.push_back(d);
    vss.push_back(v);
    if (h) hds.push_back(*h);
  }
  if (!out_csv.empty()) write_text(out_csv, csv.str());
  else std::cout << csv.str();

  auto mean_sd = [](const std::vector<double>& xs) {
    json j;
    if (xs.empty()) {
      j["mean"] = nullptr;
      j["sd"] = nullptr;
      return j;
    }
    double m = 0;
    for (double x : xs) m += x;
    m /= double(xs.size());
    double var = 0;
    for (double x : xs) var += (x - m) * (x - m);
    j["mean"] = m;
    j["sd"] = std::sqrt(var / double(xs.size()));
    return j;
  };
  json summary;
  summary["n_cases"] = dscs.size();
  summary["dsc"] = mean_sd(dscs);
  summary["hd"] = mean_sd(hds);
  summary["hd_undefined_cases"] = dscs.size() - hds.size();
  summary["vs"] = mean_sd(vss);
  summary["lesions"] = {{"tp", totals.tp},
                        {"fp", totals.fp},
                        {"fn", totals.fn},
                        {"sensitivity", sensitivity(totals) ? json(*sensitivity(totals)) : json()},
                        {"fp_per_case", *fp_per_case(totals)},
                        {"ppv", ppv(totals) ? json(*ppv(totals)) : json()}};
  if (!summary_path.empty()) write_text(summary_path, summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

Orientation orientation_for(const std::string& metric, const std::string& spec) {
  // explicit spec wins: "dsc:higher,hd:lower"
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) continue;
    if (item.substr(0, colon) == metric)
      return item.substr(colon + 1) == "lower" ? Orientation::LowerBetter
                                               : Orientation::HigherBetter;
  }
  std::string lower = metric;
  for (auto& c : lower) c = char(std::tolower(c));
  if (lower.find("hd") != std::string::npos || lower.find("fp") != std::string::npos ||
      lower.find("hausdorff") != std::string::npos)
    return Orientation::LowerBetter;
  return Orientation::HigherBetter;
}

int cmd_rank(const std::string& in_csv, const std::string& out_csv,
             const std::string& orient_spec) {
  std::ifstream in(in_csv);
  if (!in) throw std::runtime_error("rank: cannot open " + in_csv);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("rank: empty csv");
  auto split_csv = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  const auto header = split_csv(line);
  if (header.size() < 2) throw std::runtime_error("rank: need a model column and >= 1 metric");

  std::vector<std::string> models;
  std::vector<MetricColumn> cols(header.size() - 1);
  for (std::size_t c = 1; c < header.size(); ++c) {
    cols[c - 1].name = header[c];
    cols[c - 1].orientation = orientation_for(header[c], orient_spec);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw std::runtime_error("rank: row width mismatch at '" + line + "'");
    models.push_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      if (cell.empty() || cell == "Nan" || cell == "nan" || cell == "NaN")
        cols[c - 1].values.push_back(std::nullopt);
      else
        cols[c - 1].values.push_back(std::stod(cell));
    }
  }

  const RankTable table = rank_models(models, cols);
  std::ostringstream os;
  os << "model,score\n";
  for (std::size_t m = 0; m < models.size(); ++m)
    os << models[m] << "," << std::setprecision(6) << std::fixed << table.final_scores[m]
       << "\n";
  if (!out_csv.empty()) write_text(out_csv, os.str());
  std::cout << "[";
  for (std::size_t m = 0; m < models.size(); ++m)
    std::cout << (m ? ", " : "") << std::setprecision(4) << std::fixed
              << table.final_scores[m];
  std::cout << "]\n";
  return 0;
}

int cmd_figure4(const std::string& out_csv, bool include_negative, int x_steps) {
  std::ostringstream os;
  os << "x,y,G\n";
  std::vector<double> ys;
  for (int i = 1; i <= 10; ++i) ys.push_back(i / 10.0);
  if (include_negative)
    for (int i = 1; i <= 10; ++i) ys.push_back(-i / 10.0);
  os << std::setprecision(10);
  for (double y : ys) {
    // G blows up at x = 1 for negative y; stop the sweep at 0.99 there.
    const int last = y < 0 ? x_steps - 2 : x_steps - 1;
    for (int i = 0; i <= last; ++i) {
      const double x = double(i) / double(x_steps - 1);
      os << x << "," << y << "," << weight_factor_G(x, y) << "\n";
    }
  }
  if (!out_csv.empty()) write_text(out_csv, os.str());
  else std::cout << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine vascular lesion segmentation toolkit"};
  app.require_subcommand(1);

  CommonOpts phantom_o, prep_o, tc_o, tf_o, pred_o, eval_o, rank_o, fig_o;

  auto* phantom_cmd = app.add_subcommand("phantom", "Generate a synthetic dataset");
  std::string phantom_out = "phantoms";
  int phantom_n = 5;
  add_common(phantom_cmd, phantom_o);
  phantom_cmd->add_option("--out", phantom_out, "Output directory");
  phantom_cmd->add_option("--n", phantom_n, "Number of subjects");

  auto* prep_cmd = app.add_subcommand("preprocess", "Run the preprocessing chain");
  std::string prep_in, prep_out = "preprocessed";
  add_common(prep_cmd, prep_o);
  prep_cmd->add_option("--in", prep_in, "Dataset directory (with manifest.json)")->required();
  prep_cmd->add_option("--out", prep_out, "Output directory");

  auto* tc_cmd = app.add_subcommand("train-coarse", "Train the coarse detector");
  std::string tc_data, tc_out = "coarse.weights", tc_log, tc_folds;
  bool tc_cv = false;
  add_common(tc_cmd, tc_o);
  tc_cmd->add_option("--data", tc_data, "Dataset directory")->required();
  tc_cmd->add_option("--out", tc_out, "Weights archive path");
  tc_cmd->add_option("--log", tc_log, "Training log CSV");
  tc_cmd->add_flag("--crossval", tc_cv, "k-fold cross-validation; keep the best fold");
  tc_cmd->add_option("--folds-out", tc_folds, "Per-fold metrics + rank CSV (with --crossval)");

  auto* tf_cmd = app.add_subcommand("train-fine", "Train the fine segmenter");
  std::string tf_data, tf_out = "fine.weights", tf_log, tf_summary, tf_folds;
  bool tf_overfit = false, tf_cv = false;
  add_common(tf_cmd, tf_o);
  tf_cmd->add_option("--data", tf_data, "Dataset directory")->required();
  tf_cmd->add_option("--out", tf_out, "Weights archive path");
  tf_cmd->add_option("--log", tf_log, "Training log CSV");
  tf_cmd->add_option("--summary", tf_summary, "Write a per-layer parameter summary");
  tf_cmd->add_flag("--overfit", tf_overfit, "Validate on the training samples");
  tf_cmd->add_flag("--crossval", tf_cv, "k-fold cross-validation; keep the best fold");
  tf_cmd->add_option("--folds-out", tf_folds, "Per-fold metrics + rank CSV (with --crossval)");

  auto* pred_cmd = app.add_subcommand("predict", "Segment one image end to end");
  std::string pred_image, pred_coarse, pred_fine, pred_out = "segmentation.nii.gz",
                          pred_candidates, pred_overlay;
  add_common(pred_cmd, pred_o);
  pred_cmd->add_option("--image", pred_image, "Input NIfTI image")->required();
  pred_cmd->add_option("--coarse-weights", pred_coarse)->required();
  pred_cmd->add_option("--fine-weights", pred_fine)->required();
  pred_cmd->add_option("--out", pred_out, "Output mask path");
  pred_cmd->add_option("--candidates", pred_candidates, "Write the candidate list JSON");
  pred_cmd->add_option("--overlay", pred_overlay, "Write an image with highlighted segmentation");

  auto* eval_cmd = app.add_subcommand("evaluate", "Per-case metrics CSV + cohort summary");
  std::string ev_pred, ev_gt, ev_csv, ev_summary, ev_units = "voxel";
  add_common(eval_cmd, eval_o);
  eval_cmd->add_option("--pred", ev_pred, "Prediction file or directory")->required();
  eval_cmd->add_option("--gt", ev_gt, "Ground-truth file or directory")->required();
  eval_cmd->add_option("--out", ev_csv, "Per-case CSV path");
  eval_cmd->add_option("--summary", ev_summary, "Cohort summary JSON path");
  eval_cmd->add_option("--units", ev_units, "voxel|mm distance units")
      ->check(CLI::IsMember({"voxel", "mm"}));

  auto* rank_cmd = app.add_subcommand("rank", "Normalized-rank aggregation of a metrics CSV");
  std::string rank_in, rank_out, rank_orient;
  add_common(rank_cmd, rank_o);
  rank_cmd->add_option("--in", rank_in, "CSV: model,metric1,metric2,...")->required();
  rank_cmd->add_option("--out", rank_out, "Rank table CSV");
  rank_cmd->add_option("--orient", rank_orient,
                       "Per-metric orientation, e.g. dsc:higher,hd:lower");

  auto* fig_cmd = app.add_subcommand("figure4", "Emit the weighting-factor (x,y,G) grid");
  std::string fig_out;
  bool fig_neg = false;
  int fig_steps = 101;
  add_common(fig_cmd, fig_o);
  fig_cmd->add_option("--out", fig_out, "Output CSV");
  fig_cmd->add_flag("--include-negative", fig_neg, "Also sweep y in {-0.1..-1.0}");
  fig_cmd->add_option("--x-steps", fig_steps, "Grid resolution along x")
      ->check(CLI::Range(2, 100000));

  CLI11_PARSE(app, argc, argv);

  try {
    if (phantom_cmd->parsed()) return cmd_phantom(phantom_o, phantom_out, phantom_n);
    if (prep_cmd->parsed()) return cmd_preprocess(prep_o, prep_in, prep_out);
    if (tc_cmd->parsed())
      return cmd_train_coarse(tc_o, tc_data, tc_out, tc_log, tc_cv, tc_folds);
    if (tf_cmd->parsed())
      return cmd_train_fine(tf_o, tf_data, tf_out, tf_log, tf_summary, tf_overfit, tf_cv,
                            tf_folds);
    if (pred_cmd->parsed())
      return cmd_predict(pred_o, pred_image, pred_coarse, pred_fine, pred_out, pred_candidates,
                         pred_overlay);
    if (eval_cmd->parsed()) {
      resolve_config(eval_o);  // config/seed accepted everywhere; validates early
      return cmd_evaluate(ev_pred, ev_gt, ev_csv, ev_summary, ev_units);
    }
    if (rank_cmd->parsed()) {
      resolve_config(rank_o);
      return cmd_rank(rank_in, rank_out, rank_orient);
    }
    if (fig_cmd->parsed()) {
      resolve_config(fig_o);
      return cmd_figure4(fig_out, fig_neg, fig_steps);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
