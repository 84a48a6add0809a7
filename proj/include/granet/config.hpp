#pragma once

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "granet/annotate.hpp"
#include "granet/decimal.hpp"
#include "granet/eval.hpp"
#include "granet/model.hpp"
#include "granet/scene.hpp"
#include "granet/supervise.hpp"

namespace granet {

/// Every run-level knob in one flat structure; `format_config` echoes it as the
/// same key = value text `parse_config` reads, so a run is reproducible from
/// its own log. Profiles only change the defaults, explicit keys always win.
struct RunConfig {
  std::string profile = "paper";
  std::uint64_t seed = 0;

  // scene generation
  std::size_t points = 12000;
  std::size_t min_objects = 3;
  std::size_t max_objects = 8;
  double object_fraction = 0.65;
  double plane_extent = 0.3;
  std::size_t scene_count = 10;

  // graph feature embedding
  std::size_t knn = 32;
  std::size_t hops = 4;
  std::size_t embed_dim = 64;
  std::size_t resample = 7000;
  std::size_t edge_out = 256;

  // point selection
  std::size_t n_obj = 2048;
  std::size_t n_val = 512;
  std::size_t dov_levels = 10;

  // grasp generation
  std::size_t views = 300;
  std::size_t angle_bins = 12;
  std::size_t crop_points = 64;
  double w_max = 0.1;
  double crop_radius = 0.05;

  // training
  double lambda1 = 0.5;
  double lambda2 = 0.3;
  double lambda3 = 0.2;
  std::size_t epochs = 10;
  std::size_t batch_size = 2;
  double lr = 1e-3;
  double lr_late = 5e-4;
  std::size_t lr_switch_epoch = 8;
  double match_radius = 0.005;

  // evaluation
  double nms_translation = 0.03;
  double nms_rotation_deg = 30.0;
  std::size_t top_k = 50;
  std::string mode = "granet";

  // paths
  std::string scenes_dir;
  std::string checkpoint;
  std::string out;

  ModelConfig model() const {
    ModelConfig m;
    m.gfe.hops = hops;
    m.gfe.embed_dim = embed_dim;
    m.gfe.knn = knn;
    m.gfe.resample = resample;
    m.gfe.edge_out = edge_out;
    m.gpg.views = views;
    m.gpg.angle_bins = angle_bins;
    m.gpg.w_max = w_max;
    m.gpg.crop_radius = crop_radius;
    m.gpg.crop_points = crop_points;
    m.n_obj = n_obj;
    m.n_val = n_val;
    m.dov_levels = dov_levels;
    m.mode = mode == "granet" ? SelectionMode::granet : SelectionMode::fps_baseline;
    return m;
  }

  SceneProfile scene_profile() const {
    SceneProfile p;
    p.n_points = points;
    p.plane_extent = plane_extent;
    p.min_objects = min_objects;
    p.max_objects = max_objects;
    p.object_fraction = object_fraction;
    return p;
  }

  TrainConfig train() const {
    TrainConfig t;
    t.lambda1 = lambda1;
    t.lambda2 = lambda2;
    t.lambda3 = lambda3;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.lr = lr;
    t.lr_late = lr_late;
    t.lr_switch_epoch = lr_switch_epoch;
    t.seed = seed;
    t.match_radius = match_radius;
    return t;
  }

  EvalConfig eval() const {
    EvalConfig e;
    e.nms.translation_radius = nms_translation;
    e.nms.rotation_threshold = nms_rotation_deg * std::numbers::pi / 180.0;
    e.top_k = top_k;
    e.w_max = w_max;
    return e;
  }

  GripperModel gripper() const { return GripperModel{}; }
};

namespace detail {

inline std::uint64_t config_u64(const std::string& value, const std::string& key) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos)
    throw std::runtime_error("config: value for '" + key + "' must be an unsigned integer, got '" +
                             value + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (errno != 0 || end == nullptr || *end != '\0')
    throw std::runtime_error("config: value for '" + key + "' out of range: '" + value + "'");
  return static_cast<std::uint64_t>(v);
}

inline double config_real(const std::string& value, const std::string& key) {
  return parse_double(value, "config value for '" + key + "'");
}

}  // namespace detail

inline RunConfig config_for_profile(const std::string& name) {
  RunConfig cfg;  // paper defaults
  if (name == "paper") return cfg;
  if (name == "desk") {
    cfg.profile = "desk";
    cfg.points = 2048;
    cfg.resample = 1024;
    cfg.n_obj = 512;
    cfg.n_val = 128;
    cfg.knn = 16;
    return cfg;
  }
  throw std::runtime_error("config: unknown profile '" + name + "' (expected paper or desk)");
}

/// Range validation; every failure names the offending key.
inline void validate_config(const RunConfig& cfg) {
  const auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
  if (cfg.mode != "granet" && cfg.mode != "fps-baseline")
    fail("mode must be granet or fps-baseline, got '" + cfg.mode + "'");
  if (cfg.points < 16) fail("points must be >= 16");
  if (cfg.min_objects < 1) fail("min_objects must be >= 1");
  if (cfg.max_objects < cfg.min_objects) fail("max_objects must be >= min_objects");
  if (!(cfg.object_fraction > 0.0) || !(cfg.object_fraction < 1.0))
    fail("object_fraction must be in (0, 1)");
  if (!(cfg.plane_extent > 0.0)) fail("plane_extent must be > 0");
  if (cfg.scene_count < 1) fail("scene_count must be >= 1");
  if (cfg.hops < 1) fail("hops must be >= 1");
  if (cfg.embed_dim < 1) fail("embed_dim must be >= 1");
  if (cfg.edge_out < 1) fail("edge_out must be >= 1");
  if (cfg.knn < 1) fail("knn must be >= 1");
  if (cfg.resample < 2) fail("resample must be >= 2");
  if (cfg.resample > cfg.points) fail("resample must be <= points");
  if (cfg.knn >= cfg.resample) fail("knn must be < resample");
  if (cfg.n_obj < 2) fail("n_obj must be >= 2");
  if (cfg.n_obj > cfg.resample) fail("n_obj must be <= resample");
  if (cfg.n_val < 1) fail("n_val must be >= 1");
  if (cfg.n_val > cfg.n_obj) fail("n_val must be <= n_obj");
  if (cfg.dov_levels < 2) fail("dov_levels must be >= 2");
  if (cfg.views < 1) fail("views must be >= 1");
  if (cfg.angle_bins < 1) fail("angle_bins must be >= 1");
  if (cfg.crop_points < 1) fail("crop_points must be >= 1");
  if (!(cfg.w_max > 0.0)) fail("w_max must be > 0");
  if (!(cfg.crop_radius > 0.0)) fail("crop_radius must be > 0");
  if (cfg.lambda1 < 0.0) fail("lambda1 must be >= 0");
  if (cfg.lambda2 < 0.0) fail("lambda2 must be >= 0");
  if (cfg.lambda3 < 0.0) fail("lambda3 must be >= 0");
  if (cfg.epochs < 1) fail("epochs must be >= 1");
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) fail("lr must be > 0");
  if (!(cfg.lr_late > 0.0)) fail("lr_late must be > 0");
  if (cfg.lr_switch_epoch < 1) fail("lr_switch_epoch must be >= 1");
  if (!(cfg.match_radius > 0.0)) fail("match_radius must be > 0");
  if (cfg.nms_translation < 0.0) fail("nms_translation must be >= 0");
  if (cfg.nms_rotation_deg < 0.0) fail("nms_rotation_deg must be >= 0");
  if (cfg.top_k < 1) fail("top_k must be >= 1");
}

/// key = value lines; '#' starts a comment, blank lines skipped. A 'profile'
/// key anywhere resets the defaults before the remaining keys apply.
inline RunConfig parse_config(std::istream& in, const std::string& where,
                              const std::string& profile_override = std::string()) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  std::string file_profile;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    const auto begin = std::find_if(line.begin(), line.end(), notspace);
    if (begin == line.end()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(where + ":" + std::to_string(lineno) +
                               ": expected 'key = value'");
    const auto trim = [&](std::string s) {
      const auto b = std::find_if(s.begin(), s.end(), notspace);
      const auto e = std::find_if(s.rbegin(), s.rend(), notspace).base();
      return b < e ? std::string(b, e) : std::string();
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(where + ":" + std::to_string(lineno) + ": empty key");
    if (key == "profile") {
      file_profile = value;
      continue;
    }
    entries.emplace_back(std::move(key), std::move(value));
  }

  std::string profile = !profile_override.empty() ? profile_override
                        : !file_profile.empty()   ? file_profile
                                                  : "paper";
  RunConfig cfg = config_for_profile(profile);

  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> m;
    const auto u64 = [&m](const char* key, std::size_t RunConfig::* field) {
      m[key] = [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.*field = static_cast<std::size_t>(detail::config_u64(v, k));
      };
    };
    const auto real = [&m](const char* key, double RunConfig::* field) {
      m[key] = [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.*field = detail::config_real(v, k);
      };
    };
    const auto str = [&m](const char* key, std::string RunConfig::* field) {
      m[key] = [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; };
    };
    m["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.seed = detail::config_u64(v, k);
    };
    u64("points", &RunConfig::points);
    u64("min_objects", &RunConfig::min_objects);
    u64("max_objects", &RunConfig::max_objects);
    real("object_fraction", &RunConfig::object_fraction);
    real("plane_extent", &RunConfig::plane_extent);
    u64("scene_count", &RunConfig::scene_count);
    u64("knn", &RunConfig::knn);
    u64("hops", &RunConfig::hops);
    u64("embed_dim", &RunConfig::embed_dim);
    u64("resample", &RunConfig::resample);
    u64("edge_out", &RunConfig::edge_out);
    u64("n_obj", &RunConfig::n_obj);
    u64("n_val", &RunConfig::n_val);
    u64("dov_levels", &RunConfig::dov_levels);
    u64("views", &RunConfig::views);
    u64("angle_bins", &RunConfig::angle_bins);
    u64("crop_points", &RunConfig::crop_points);
    real("w_max", &RunConfig::w_max);
    real("crop_radius", &RunConfig::crop_radius);
    real("lambda1", &RunConfig::lambda1);
    real("lambda2", &RunConfig::lambda2);
    real("lambda3", &RunConfig::lambda3);
    u64("epochs", &RunConfig::epochs);
    u64("batch_size", &RunConfig::batch_size);
    real("lr", &RunConfig::lr);
    real("lr_late", &RunConfig::lr_late);
    u64("lr_switch_epoch", &RunConfig::lr_switch_epoch);
    real("match_radius", &RunConfig::match_radius);
    real("nms_translation", &RunConfig::nms_translation);
    real("nms_rotation_deg", &RunConfig::nms_rotation_deg);
    u64("top_k", &RunConfig::top_k);
    str("mode", &RunConfig::mode);
    str("scenes_dir", &RunConfig::scenes_dir);
    str("checkpoint", &RunConfig::checkpoint);
    str("out", &RunConfig::out);
    return m;
  }();

  for (const auto& [key, value] : entries) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::runtime_error("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  validate_config(cfg);
  return cfg;
}

inline RunConfig load_config(const std::string& path,
                             const std::string& profile_override = std::string()) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("config: cannot open file: " + path);
  return parse_config(f, path, profile_override);
}

inline RunConfig default_config(const std::string& profile = "paper") {
  RunConfig cfg = config_for_profile(profile);
  validate_config(cfg);
  return cfg;
}

/// Echo in the exact syntax parse_config reads back.
inline std::string format_config(const RunConfig& cfg) {
  std::ostringstream o;
  o << "profile = " << cfg.profile << "\n";
  o << "seed = " << cfg.seed << "\n";
  o << "points = " << cfg.points << "\n";
  o << "min_objects = " << cfg.min_objects << "\n";
  o << "max_objects = " << cfg.max_objects << "\n";
  o << "object_fraction = " << fmt9(cfg.object_fraction) << "\n";
  o << "plane_extent = " << fmt9(cfg.plane_extent) << "\n";
  o << "scene_count = " << cfg.scene_count << "\n";
  o << "knn = " << cfg.knn << "\n";
  o << "hops = " << cfg.hops << "\n";
  o << "embed_dim = " << cfg.embed_dim << "\n";
  o << "resample = " << cfg.resample << "\n";
  o << "edge_out = " << cfg.edge_out << "\n";
  o << "n_obj = " << cfg.n_obj << "\n";
  o << "n_val = " << cfg.n_val << "\n";
  o << "dov_levels = " << cfg.dov_levels << "\n";
  o << "views = " << cfg.views << "\n";
  o << "angle_bins = " << cfg.angle_bins << "\n";
  o << "crop_points = " << cfg.crop_points << "\n";
  o << "w_max = " << fmt9(cfg.w_max) << "\n";
  o << "crop_radius = " << fmt9(cfg.crop_radius) << "\n";
  o << "lambda1 = " << fmt9(cfg.lambda1) << "\n";
  o << "lambda2 = " << fmt9(cfg.lambda2) << "\n";
  o << "lambda3 = " << fmt9(cfg.lambda3) << "\n";
  o << "epochs = " << cfg.epochs << "\n";
  o << "batch_size = " << cfg.batch_size << "\n";
  o << "lr = " << fmt9(cfg.lr) << "\n";
  o << "lr_late = " << fmt9(cfg.lr_late) << "\n";
  o << "lr_switch_epoch = " << cfg.lr_switch_epoch << "\n";
  o << "match_radius = " << fmt9(cfg.match_radius) << "\n";
  o << "nms_translation = " << fmt9(cfg.nms_translation) << "\n";
  o << "nms_rotation_deg = " << fmt9(cfg.nms_rotation_deg) << "\n";
  o << "top_k = " << cfg.top_k << "\n";
  o << "mode = " << cfg.mode << "\n";
  if (!cfg.scenes_dir.empty()) o << "scenes_dir = " << cfg.scenes_dir << "\n";
  if (!cfg.checkpoint.empty()) o << "checkpoint = " << cfg.checkpoint << "\n";
  if (!cfg.out.empty()) o << "out = " << cfg.out << "\n";
  return o.str();
}

}  // namespace granet
