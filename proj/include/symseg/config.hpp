#pragma once

#include "symseg/continual.hpp"
#include "symseg/dataset.hpp"
#include "symseg/geometry.hpp"
#include "symseg/network.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace symseg {

// Flat key=value run configuration: dotted keys, '#' comments, blank lines
// allowed, later assignments win. The digest covers the canonical sorted
// post-override view, so reordering a file never changes its identity.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_text(const std::string& text,
                                   const std::string& origin = "<inline>");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::vector<std::int64_t>& fallback) const;

  std::uint64_t digest() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct DatasetSection {
  bool synthetic = true;
  SceneSpec scene;  // synthetic generator parameters (scene.num_classes is the taxonomy size)
  int train_frames = 8;
  int eval_frames = 2;
  std::string frame_list;  // external: file of "role scan label image" lines
  std::string label_map;   // external: optional raw-to-taxonomy id translation
  ProjectionConfig intrinsics;
};

// Everything a run needs, resolved and validated. Model class counts are
// filled from the schedule at run time, not here.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";
  DatasetSection dataset;
  ModelConfig model;
  StepPlan plan;
  std::string preset = "offline";
  std::vector<int> class_order;
  std::uint64_t digest = 0;  // of the key=value view this config was parsed from

  // Strict: unknown keys, malformed values, bad ranges, and missing
  // referenced files are all rejected here rather than mid-run.
  static RunConfig parse(const KeyValueConfig& kv);

  FrameSet load_frames() const;
};

}  // namespace symseg
