#pragma once

#include "symseg/dataset.hpp"
#include "symseg/losses.hpp"
#include "symseg/metrics.hpp"
#include "symseg/network.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace symseg {

struct FrameSet {
  std::vector<ProjectedFrame> train;
  std::vector<ProjectedFrame> eval;
};

enum class OptimizerKind { sgd, adam };

// One training campaign: either a single offline step or a class-incremental
// sequence. Iteration counts, schedules and loss weights apply per step.
struct StepPlan {
  ClassSchedule schedule;
  std::optional<KdVariant> kd;     // distillation term in incremental steps; nullopt = off
  bool inpainting = false;         // fill unknown labels from teacher predictions
  Index iterations = 300;          // optimizer steps per training step
  Index warmup_iterations = 60;    // linear warmup span (offline / step 0)
  double peak_lr = 0.02;           // warmup-cosine peak (offline / step 0)
  // Adaptive steps need a much smaller rate than momentum descent, so the
  // lidar branch follows the same schedule scaled by this factor.
  double lidar_lr_scale = 0.1;
  double incremental_lr_start = 1e-3;  // linear-decay endpoints (steps >= 1)
  double incremental_lr_end = 5e-4;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  LossWeights weights;
  double kd_temperature = 1.0;
  std::uint64_t seed = 1;
  // Branch optimizers for the offline phase / step 0. Incremental steps
  // always run momentum descent on both branches.
  OptimizerKind color_optimizer = OptimizerKind::sgd;
  OptimizerKind lidar_optimizer = OptimizerKind::adam;

  void validate() const;
};

struct IouRow {
  int step;
  int branch;    // 0 = color, 1 = lidar
  int class_id;  // 1..C at that step
  double iou;    // NaN when the class is undefined on the eval set
};

// Everything a run emits besides the models. Wall-clock time is attached
// for operator logs only and is never serialized into reports.
struct TrainReport {
  std::vector<IouRow> iou_rows;                 // one row per (step, branch, class)
  std::vector<std::vector<double>> loss_curves; // per step, per iteration
  double wall_clock_seconds = 0.0;
  std::uint64_t config_digest = 0;
};

// Classifier width needed through schedule step `step`: the largest class id
// revealed so far (ids map to output channels id-1, so sparse id sets still
// need channels up to their maximum).
int needed_channels(const ClassSchedule& schedule, int step);

// Deep frozen copy: bit-identical predictions, no gradient participation.
Model snapshot_teacher(const Model& model);

// Single-step training on every class of the (one-step) schedule. The model
// is built from `base` with the class count derived from the schedule.
std::pair<Model, TrainReport> run_offline(const ModelConfig& base, const StepPlan& plan,
                                          const FrameSet& data);

// Class-incremental training over a K>=2 step schedule: step 0 trains like
// run_offline restricted to its classes; each later step snapshots the
// previous model as a frozen teacher, widens the classifiers, masks labels
// to the new classes, optionally inpaints unknown pixels from the teacher,
// and adds the configured distillation term. Returns one model snapshot per
// step plus the report.
std::pair<std::vector<Model>, TrainReport> run_continual(const ModelConfig& base,
                                                         const StepPlan& plan,
                                                         const FrameSet& data);

}  // namespace symseg
