#pragma once

#include "symseg/geometry.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace symseg {

// --- class-incremental schedules ------------------------------------------

// Ordered partition of the class taxonomy into training steps. Class id 0
// is the ignore label and never appears in a step.
struct ClassSchedule {
  int total_classes = 0;
  std::vector<std::vector<int>> steps;

  int step_count() const { return static_cast<int>(steps.size()); }
  // Union of C_0..C_k, in schedule order.
  std::vector<int> classes_through(int step) const;
};

// Builds a schedule from a preset name. Named presets: "offline" (one step
// with every class), and dash-separated step sizes such as "11-8" or
// "6-5-8". When the sizes sum short of the class count, the last size
// repeats until it fits exactly ("6-1" on 19 classes gives 6,1,1,... for
// 14 steps). class_order optionally permutes which classes land in which
// step; empty means ids 1..total_classes in order.
ClassSchedule build_schedule(const std::string& preset, int total_classes,
                             const std::vector<int>& class_order = {});

// Builds a schedule from explicit per-step class-id sets (e.g. a split
// file); validates disjointness and full coverage of 1..total_classes.
ClassSchedule schedule_from_steps(std::vector<std::vector<int>> steps, int total_classes);

// Split file: one step per line, comma-separated class ids.
std::vector<std::vector<int>> read_split_file(const std::string& path);

// Returns a copy of the frame with every label outside step_classes set
// to 0. Pixels and modality channels are untouched (overlapped setting:
// same samples, restricted labels).
ProjectedFrame mask_labels(const ProjectedFrame& frame, const std::vector<int>& step_classes);

// --- synthetic scenes -------------------------------------------------------

// Parameters of the deterministic scene generator. Classes 1 and 2 are
// the ground plane and the back wall; classes 3..num_classes are assigned
// cyclically to floating geometric objects.
struct SceneSpec {
  std::uint64_t seed = 1;
  Eigen::Index height = 24;
  Eigen::Index width = 32;
  int num_classes = 4;   // >= 2
  int min_objects = 2;
  int max_objects = 5;
  Eigen::Index density = 256;  // LiDAR samples per frame, <= height*width

  void validate() const;
};

// Camera intrinsics used to render and back-project a scene of this size.
ProjectionConfig scene_camera(const SceneSpec& spec);

// Renders one scene: dense color image, dense labels, and a sparse LiDAR
// image obtained by sampling `density` pixels of the dense depth field
// and back-projecting them through the scene camera. Deterministic in
// spec.seed alone.
ProjectedFrame generate_scene(const SceneSpec& spec);

// Frame collection over a base spec; frame i uses seed spec.seed + i.
// Evaluation frames draw from a disjoint seed range.
struct SyntheticDataset {
  SceneSpec spec;
  int train_frames = 8;
  int eval_frames = 2;

  ProjectedFrame train_frame(int i) const;
  ProjectedFrame eval_frame(int i) const;
};

// --- external frames --------------------------------------------------------

// Raw-label to taxonomy-id translation. An empty map is the identity;
// otherwise unmapped raw ids become 0 (ignored).
using LabelMap = std::unordered_map<int, int>;

// Parses "raw=mapped" lines (blank lines and '#' comments allowed).
LabelMap read_label_map(const std::string& path);

// Loads a scan/label/image triple and projects it. label_path may be
// empty for unlabeled frames. The image must match cfg's size.
ProjectedFrame load_external_frame(const std::string& scan_path, const std::string& label_path,
                                   const std::string& image_path, const ProjectionConfig& cfg,
                                   const LabelMap& label_map = {});

}  // namespace symseg
