#include "symseg/config.hpp"

#include "symseg/digest.hpp"
#include "symseg/errors.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace symseg {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.' && c != '-') {
      return false;
    }
  }
  return true;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an integer: '" + value + "'");
  }
  if (used != value.size()) throw ConfigError(key + ": not an integer: '" + value + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: '" + value + "'");
  }
  if (used != value.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": not a finite number: '" + value + "'");
  }
  return out;
}

void require_readable(const std::string& key, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(key + ": cannot open '" + path + "'");
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_text(text.str(), path);
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text, const std::string& origin) {
  KeyValueConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": bad key '" + key + "'");
    }
    config.entries_[key] = trim(line.substr(eq + 1));
  }
  return config;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ConfigError("bad configuration key '" + key + "'");
  entries_[key] = trim(value);
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_double(key, it->second);
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_int(key, it->second);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + it->second + "'");
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(
    const std::string& key, const std::vector<std::int64_t>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<std::int64_t> out;
  if (trim(it->second).empty()) return out;
  std::istringstream in(it->second);
  std::string token;
  while (std::getline(in, token, ',')) out.push_back(parse_int(key, trim(token)));
  return out;
}

std::uint64_t KeyValueConfig::digest() const {
  std::string canon;
  for (const auto& [key, value] : entries_) {
    canon += key;
    canon += '=';
    canon += value;
    canon += '\n';
  }
  return fnv1a64(canon);
}

RunConfig RunConfig::parse(const KeyValueConfig& kv) {
  static const std::set<std::string> known = {
      "seed", "out",
      "dataset.kind", "dataset.classes", "dataset.height", "dataset.width", "dataset.density",
      "dataset.min_objects", "dataset.max_objects", "dataset.train_frames", "dataset.eval_frames",
      "dataset.list", "dataset.label_map", "dataset.fx", "dataset.fy", "dataset.cx", "dataset.cy",
      "dataset.near",
      "model.widths", "model.decoder_width", "model.r", "model.write_back", "model.learnable_r",
      "train.iterations", "train.warmup", "train.peak_lr", "train.lidar_lr_scale", "train.lr_start", "train.lr_end",
      "train.momentum", "train.weight_decay", "train.feature_align_weight", "train.kd_weight",
      "train.kd_temperature",
      "continual.preset", "continual.kd", "continual.inpainting", "continual.class_order",
  };
  for (const auto& [key, value] : kv.entries()) {
    if (!known.count(key)) throw ConfigError("unknown configuration key: " + key);
  }

  RunConfig cfg;
  const std::int64_t seed = kv.get_int("seed", 1);
  if (seed < 0) throw ConfigError("seed: must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.out_dir = kv.get_string("out", cfg.out_dir);
  // The digest guards checkpoint/config compatibility; the destination
  // directory doesn't change what a run computes, so it stays out.
  std::string canon;
  for (const auto& [key, value] : kv.entries()) {
    if (key == "out") continue;
    canon += key;
    canon += '=';
    canon += value;
    canon += '\n';
  }
  cfg.digest = fnv1a64(canon);

  // dataset
  const std::string kind = kv.get_string("dataset.kind", "synthetic");
  if (kind != "synthetic" && kind != "external") {
    throw ConfigError("dataset.kind: expected synthetic or external, got '" + kind + "'");
  }
  cfg.dataset.synthetic = kind == "synthetic";
  SceneSpec& scene = cfg.dataset.scene;
  scene.seed = cfg.seed;
  scene.num_classes = static_cast<int>(kv.get_int("dataset.classes", scene.num_classes));
  scene.height = kv.get_int("dataset.height", scene.height);
  scene.width = kv.get_int("dataset.width", scene.width);
  scene.density = kv.get_int("dataset.density", scene.density);
  scene.min_objects = static_cast<int>(kv.get_int("dataset.min_objects", scene.min_objects));
  scene.max_objects = static_cast<int>(kv.get_int("dataset.max_objects", scene.max_objects));
  cfg.dataset.train_frames = static_cast<int>(kv.get_int("dataset.train_frames", 8));
  cfg.dataset.eval_frames = static_cast<int>(kv.get_int("dataset.eval_frames", 2));
  if (cfg.dataset.train_frames < 1) throw ConfigError("dataset.train_frames: must be >= 1");
  if (cfg.dataset.eval_frames < 0) throw ConfigError("dataset.eval_frames: must be >= 0");
  if (cfg.dataset.synthetic) {
    scene.validate();
  } else {
    cfg.dataset.frame_list = kv.get_string("dataset.list", "");
    if (cfg.dataset.frame_list.empty()) {
      throw ConfigError("dataset.list: required for external datasets");
    }
    require_readable("dataset.list", cfg.dataset.frame_list);
    cfg.dataset.label_map = kv.get_string("dataset.label_map", "");
    if (!cfg.dataset.label_map.empty()) {
      require_readable("dataset.label_map", cfg.dataset.label_map);
    }
    ProjectionConfig& cam = cfg.dataset.intrinsics;
    cam.fx = kv.get_double("dataset.fx", 1.0);
    cam.fy = kv.get_double("dataset.fy", 1.0);
    cam.cx = kv.get_double("dataset.cx", 0.0);
    cam.cy = kv.get_double("dataset.cy", 0.0);
    cam.near_plane = kv.get_double("dataset.near", 0.1);
    cam.height = scene.height;
    cam.width = scene.width;
    cam.validate();
    if (scene.num_classes < 2) throw ConfigError("dataset.classes: must be >= 2");
  }

  // model (class counts are derived from the schedule when a run starts)
  const std::vector<std::int64_t> widths =
      kv.get_int_list("model.widths", {8, 16, 32, 64});
  if (widths.size() != 4) throw ConfigError("model.widths: expected exactly 4 entries");
  cfg.model.color.widths.clear();
  for (std::int64_t w : widths) {
    if (w < 1) throw ConfigError("model.widths: widths must be positive");
    cfg.model.color.widths.push_back(w);
  }
  cfg.model.lidar.widths = cfg.model.color.widths;
  cfg.model.color.in_channels = 3;
  cfg.model.lidar.in_channels = 5;
  cfg.model.decoder_width = kv.get_int("model.decoder_width", 16);
  if (cfg.model.decoder_width < 1) throw ConfigError("model.decoder_width: must be >= 1");
  cfg.model.fusion.r = kv.get_double("model.r", 0.5);
  cfg.model.fusion.write_back = kv.get_bool("model.write_back", true);
  cfg.model.fusion.learnable_r = kv.get_bool("model.learnable_r", false);
  cfg.model.fusion.validate();
  cfg.model.init_seed = cfg.seed;

  // training plan
  StepPlan& plan = cfg.plan;
  plan.iterations = kv.get_int("train.iterations", plan.iterations);
  plan.warmup_iterations = kv.get_int("train.warmup", plan.warmup_iterations);
  plan.peak_lr = kv.get_double("train.peak_lr", plan.peak_lr);
  plan.lidar_lr_scale = kv.get_double("train.lidar_lr_scale", plan.lidar_lr_scale);
  plan.incremental_lr_start = kv.get_double("train.lr_start", plan.incremental_lr_start);
  plan.incremental_lr_end = kv.get_double("train.lr_end", plan.incremental_lr_end);
  plan.momentum = kv.get_double("train.momentum", plan.momentum);
  plan.weight_decay = kv.get_double("train.weight_decay", plan.weight_decay);
  plan.weights.feature_align = kv.get_double("train.feature_align_weight", plan.weights.feature_align);
  plan.weights.kd = kv.get_double("train.kd_weight", plan.weights.kd);
  plan.kd_temperature = kv.get_double("train.kd_temperature", plan.kd_temperature);
  plan.seed = cfg.seed;

  cfg.preset = kv.get_string("continual.preset", cfg.preset);
  const std::string kd = kv.get_string("continual.kd", "none");
  if (kd == "none") {
    plan.kd.reset();
  } else {
    try {
      plan.kd = parse_kd_variant(kd);
    } catch (const std::exception&) {
      throw ConfigError("continual.kd: expected same/img/pcd/cross/none, got '" + kd + "'");
    }
  }
  plan.inpainting = kv.get_bool("continual.inpainting", false);
  for (std::int64_t c : kv.get_int_list("continual.class_order", {})) {
    cfg.class_order.push_back(static_cast<int>(c));
  }
  plan.schedule = build_schedule(cfg.preset, scene.num_classes, cfg.class_order);
  plan.validate();
  return cfg;
}

FrameSet RunConfig::load_frames() const {
  FrameSet data;
  if (dataset.synthetic) {
    SyntheticDataset set{dataset.scene, dataset.train_frames, dataset.eval_frames};
    for (int i = 0; i < dataset.train_frames; ++i) data.train.push_back(set.train_frame(i));
    for (int i = 0; i < dataset.eval_frames; ++i) data.eval.push_back(set.eval_frame(i));
    return data;
  }

  const LabelMap map =
      dataset.label_map.empty() ? LabelMap{} : read_label_map(dataset.label_map);
  std::ifstream in(dataset.frame_list);
  if (!in) throw DataError("cannot open frame list " + dataset.frame_list);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string entry = trim(line);
    if (entry.empty() || entry[0] == '#') continue;
    std::istringstream fields(entry);
    std::string role, scan, label, image;
    fields >> role >> scan >> label >> image;
    if (image.empty() || (role != "train" && role != "eval")) {
      throw DataError(dataset.frame_list + ":" + std::to_string(line_no) +
                      ": expected 'train|eval scan label image' (label may be '-')");
    }
    if (label == "-") label.clear();
    ProjectedFrame frame = load_external_frame(scan, label, image, dataset.intrinsics, map);
    (role == "train" ? data.train : data.eval).push_back(std::move(frame));
  }
  if (data.train.empty()) throw DataError(dataset.frame_list + ": no training frames listed");
  return data;
}

}  // namespace symseg
