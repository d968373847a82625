#include "canseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace canseg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw std::runtime_error("config: " + path + ": " + msg);
}

void expect_keys(const json& obj, const std::string& path,
                 const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) fail(path + "." + key, "unknown key");
}

template <typename T>
void read(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path + "." + key, e.what());
  }
}

void read_int3(const json& obj, const std::string& path, const char* key, Int3& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 3) fail(path + "." + key, "expected an array of 3 integers");
  for (int a = 0; a < 3; ++a) out[std::size_t(a)] = v.at(std::size_t(a)).get<int>();
}

template <typename T>
void read_range2(const json& obj, const std::string& path, const char* key,
                 std::array<T, 2>& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 2) fail(path + "." + key, "expected an array of 2 values");
  out[0] = v.at(0).get<T>();
  out[1] = v.at(1).get<T>();
}

void parse_preprocess(const json& j, PreprocessConfig& c) {
  expect_keys(j, "preprocess",
              {"vessel_threshold_quantile", "vessel_min_component", "smooth_dilate_radius",
               "adaptive_dilate_clamp", "voi_size", "augmentation_recipes", "split_ratio",
               "rng_seed"});
  read(j, "preprocess", "vessel_threshold_quantile", c.vessel_threshold_quantile);
  read(j, "preprocess", "vessel_min_component", c.vessel_min_component);
  read(j, "preprocess", "smooth_dilate_radius", c.smooth_dilate_radius);
  read_range2(j, "preprocess", "adaptive_dilate_clamp", c.adaptive_dilate_clamp);
  read(j, "preprocess", "voi_size", c.voi_size);
  read(j, "preprocess", "augmentation_recipes", c.augmentation_recipes);
  read(j, "preprocess", "split_ratio", c.split_ratio);
  read(j, "preprocess", "rng_seed", c.rng_seed);
}

void parse_coarse(const json& j, CoarseConfig& c) {
  expect_keys(j, "coarse",
              {"hi_patch", "lo_downsample", "conv_layers", "channels_per_layer", "iterations",
               "batch_size", "lr_init", "l1", "l2", "infer_tile", "min_candidate_voxels",
               "rng_seed"});
  read_int3(j, "coarse", "hi_patch", c.hi_patch);
  read(j, "coarse", "lo_downsample", c.lo_downsample);
  read(j, "coarse", "conv_layers", c.conv_layers);
  read(j, "coarse", "channels_per_layer", c.channels);
  read(j, "coarse", "iterations", c.iterations);
  read(j, "coarse", "batch_size", c.batch_size);
  read(j, "coarse", "lr_init", c.lr_init);
  read(j, "coarse", "l1", c.l1);
  read(j, "coarse", "l2", c.l2);
  read(j, "coarse", "infer_tile", c.infer_tile);
  read(j, "coarse", "min_candidate_voxels", c.min_candidate_voxels);
  read(j, "coarse", "rng_seed", c.rng_seed);
}

void parse_fine(const json& j, FineConfig& c) {
  expect_keys(j, "fine",
              {"base_filters", "depth", "dropout_p", "se_reduction", "epochs", "batch_size",
               "lr_init", "plateau_factor", "plateau_patience", "early_stop_patience",
               "rng_seed"});
  read(j, "fine", "base_filters", c.base_filters);
  read(j, "fine", "depth", c.depth);
  read(j, "fine", "dropout_p", c.dropout_p);
  read(j, "fine", "se_reduction", c.se_reduction);
  read(j, "fine", "epochs", c.epochs);
  read(j, "fine", "batch_size", c.batch_size);
  read(j, "fine", "lr_init", c.lr_init);
  read(j, "fine", "plateau_factor", c.plateau_factor);
  read(j, "fine", "plateau_patience", c.plateau_patience);
  read(j, "fine", "early_stop_patience", c.early_stop_patience);
  read(j, "fine", "rng_seed", c.rng_seed);
}

void parse_loss(const json& j, LossParams& c) {
  expect_keys(j, "loss", {"beta", "smooth"});
  read(j, "loss", "beta", c.beta);
  read(j, "loss", "smooth", c.smooth);
}

void parse_phantom(const json& j, PhantomSpec& c) {
  expect_keys(j, "phantom",
              {"dims", "n_vessels", "vessel_radius", "n_aneurysms", "aneurysm_radius",
               "noise_sigma", "rng_seed"});
  read_int3(j, "phantom", "dims", c.dims);
  read(j, "phantom", "n_vessels", c.n_vessels);
  read_range2(j, "phantom", "vessel_radius", c.vessel_radius);
  read(j, "phantom", "n_aneurysms", c.n_aneurysms);
  read_range2(j, "phantom", "aneurysm_radius", c.aneurysm_radius);
  read(j, "phantom", "noise_sigma", c.noise_sigma);
  read(j, "phantom", "rng_seed", c.rng_seed);
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: " + origin + ": " + e.what());
  }
  if (!j.is_object()) fail(origin, "top level must be a JSON object");
  expect_keys(j, origin,
              {"preprocess", "coarse", "fine", "loss", "phantom", "folds", "augment_training",
               "merge", "rng_seed", "output_dir"});

  PipelineConfig cfg;
  if (j.contains("preprocess")) parse_preprocess(j.at("preprocess"), cfg.preprocess);
  if (j.contains("coarse")) parse_coarse(j.at("coarse"), cfg.coarse);
  if (j.contains("fine")) parse_fine(j.at("fine"), cfg.fine);
  if (j.contains("loss")) parse_loss(j.at("loss"), cfg.loss);
  if (j.contains("phantom")) parse_phantom(j.at("phantom"), cfg.phantom);
  read(j, origin, "folds", cfg.folds);
  read(j, origin, "augment_training", cfg.augment_training);
  if (j.contains("merge")) {
    const std::string m = j.at("merge").get<std::string>();
    if (m == "or")
      cfg.merge = MergeMode::VoxelwiseOr;
    else if (m == "max-prob")
      cfg.merge = MergeMode::MaxProbability;
    else
      fail(origin + ".merge", "expected 'or' or 'max-prob'");
  }
  read(j, origin, "rng_seed", cfg.rng_seed);
  read(j, origin, "output_dir", cfg.output_dir);

  if (j.contains("rng_seed")) cfg.reseed(cfg.rng_seed);
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error("config: " + origin + ": " + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string default_config_json() {
  const PipelineConfig cfg;
  json j;
  j["rng_seed"] = cfg.rng_seed;
  j["folds"] = cfg.folds;
  j["augment_training"] = cfg.augment_training;
  j["merge"] = "or";
  j["output_dir"] = cfg.output_dir;
  j["preprocess"] = {{"vessel_threshold_quantile", cfg.preprocess.vessel_threshold_quantile},
                     {"vessel_min_component", cfg.preprocess.vessel_min_component},
                     {"smooth_dilate_radius", cfg.preprocess.smooth_dilate_radius},
                     {"adaptive_dilate_clamp", cfg.preprocess.adaptive_dilate_clamp},
                     {"voi_size", cfg.preprocess.voi_size},
                     {"augmentation_recipes", cfg.preprocess.augmentation_recipes},
                     {"split_ratio", cfg.preprocess.split_ratio},
                     {"rng_seed", cfg.preprocess.rng_seed}};
  j["coarse"] = {{"hi_patch", cfg.coarse.hi_patch},
                 {"lo_downsample", cfg.coarse.lo_downsample},
                 {"conv_layers", cfg.coarse.conv_layers},
                 {"channels_per_layer", cfg.coarse.channels},
                 {"iterations", cfg.coarse.iterations},
                 {"batch_size", cfg.coarse.batch_size},
                 {"lr_init", cfg.coarse.lr_init},
                 {"l1", cfg.coarse.l1},
                 {"l2", cfg.coarse.l2},
                 {"infer_tile", cfg.coarse.infer_tile},
                 {"min_candidate_voxels", cfg.coarse.min_candidate_voxels},
                 {"rng_seed", cfg.coarse.rng_seed}};
  j["fine"] = {{"base_filters", cfg.fine.base_filters},
               {"depth", cfg.fine.depth},
               {"dropout_p", cfg.fine.dropout_p},
               {"se_reduction", cfg.fine.se_reduction},
               {"epochs", cfg.fine.epochs},
               {"batch_size", cfg.fine.batch_size},
               {"lr_init", cfg.fine.lr_init},
               {"plateau_factor", cfg.fine.plateau_factor},
               {"plateau_patience", cfg.fine.plateau_patience},
               {"early_stop_patience", cfg.fine.early_stop_patience},
               {"rng_seed", cfg.fine.rng_seed}};
  j["loss"] = {{"beta", cfg.loss.beta}, {"smooth", cfg.loss.smooth}};
  j["phantom"] = {{"dims", cfg.phantom.dims},
                  {"n_vessels", cfg.phantom.n_vessels},
                  {"vessel_radius", cfg.phantom.vessel_radius},
                  {"n_aneurysms", cfg.phantom.n_aneurysms},
                  {"aneurysm_radius", cfg.phantom.aneurysm_radius},
                  {"noise_sigma", cfg.phantom.noise_sigma},
                  {"rng_seed", cfg.phantom.rng_seed}};
  return j.dump(2) + "\n";
}

}  // namespace canseg
