#include "symseg/continual.hpp"

#include "symseg/errors.hpp"
#include "symseg/ops.hpp"
#include "symseg/optim.hpp"
#include "symseg/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <utility>

namespace symseg {

namespace {

// Supervision exists only where a LiDAR point landed; the dense label image
// outside the valid mask is rendering metadata, not ground truth.
ProjectedFrame drop_unsupervised(const ProjectedFrame& frame) {
  ProjectedFrame out = frame;
  for (Index i = 0; i < out.labels.size(); ++i) {
    if (!out.valid(i)) out.labels(i) = 0;
  }
  return out;
}

// Fixed-kind optimizer dispatch; Adam keeps its standard moment constants
// and only shares the weight decay with the plan.
class BranchOptimizer {
 public:
  BranchOptimizer(OptimizerKind kind, std::vector<Tensor> params, const StepPlan& plan,
                  double lr_scale = 1.0)
      : lr_scale_(lr_scale) {
    if (kind == OptimizerKind::sgd) {
      sgd_.emplace(std::move(params), plan.momentum, plan.weight_decay);
    } else {
      adam_.emplace(std::move(params), 0.9, 0.999, 1e-8, plan.weight_decay);
    }
  }
  void step(double lr) {
    if (sgd_) {
      sgd_->step(lr * lr_scale_);
    } else {
      adam_->step(lr * lr_scale_);
    }
  }

 private:
  double lr_scale_;
  std::optional<SgdOptimizer> sgd_;
  std::optional<AdamOptimizer> adam_;
};

// Per-frame teacher predictions, detached so step-k training never touches
// the teacher's graph. Indices parallel the training frame vector.
struct TeacherCache {
  std::vector<Tensor> color;
  std::vector<Tensor> lidar;
};

TeacherCache predict_all(const Model& teacher, const std::vector<ProjectedFrame>& frames) {
  TeacherCache cache;
  const ModalityAvailability both{};
  cache.color.reserve(frames.size());
  cache.lidar.reserve(frames.size());
  for (const ProjectedFrame& frame : frames) {
    Model::ForwardResult out = teacher.forward(frame, both);
    cache.color.push_back(out.color_probs.detach());
    cache.lidar.push_back(out.lidar_probs.detach());
  }
  return cache;
}

// One optimization pass over `frames` (already masked for the step).
// Offline shape: per-branch optimizers + warmup-cosine. Incremental shape:
// momentum descent on everything + linear decay + optional distillation.
std::vector<double> train_step(Model& model, const std::vector<ProjectedFrame>& frames,
                               const StepPlan& plan, int step_index, bool incremental,
                               const TeacherCache* teacher) {
  std::vector<BranchOptimizer> optimizers;
  if (incremental) {
    std::vector<Tensor> all;
    all.reserve(model.parameters().size());
    for (const auto& [name, tensor] : model.parameters()) all.push_back(tensor);
    optimizers.emplace_back(OptimizerKind::sgd, std::move(all), plan);
  } else {
    std::vector<Tensor> color = model.parameter_group("color.");
    const std::vector<Tensor> fusion = model.parameter_group("fusion.");
    color.insert(color.end(), fusion.begin(), fusion.end());
    optimizers.emplace_back(plan.color_optimizer, std::move(color), plan);
    optimizers.emplace_back(plan.lidar_optimizer, model.parameter_group("lidar."), plan,
                            plan.lidar_lr_scale);
  }

  Rng rng(plan.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(step_index + 1));
  const ModalityAvailability both{};
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(plan.iterations));
  for (Index it = 0; it < plan.iterations; ++it) {
    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(frames.size()) - 1));
    const ProjectedFrame& frame = frames[pick];

    model.zero_grads();
    double value = 0.0;
    // exploded activations surface as domain errors from the numeric guards
    // inside the ops (softmax rejects non-finite logits) before the loss
    // itself can go non-finite; both spellings mean the run diverged
    try {
      Model::ForwardResult out = model.forward(frame, both);
      Tensor loss =
          add(seg_ce(out.color_probs, frame.labels), seg_ce(out.lidar_probs, frame.labels));
      if (plan.weights.feature_align > 0.0) {
        loss = add(loss, scale(feature_align_loss(out.color_pyramid, out.lidar_pyramid),
                               plan.weights.feature_align));
      }
      if (incremental && teacher != nullptr && plan.kd.has_value()) {
        loss = add(loss, scale(kd_composite(*plan.kd, teacher->color[pick], teacher->lidar[pick],
                                            out.color_probs, out.lidar_probs, plan.kd_temperature),
                               plan.weights.kd));
      }
      value = loss.values()(0);
      if (!std::isfinite(value)) throw std::domain_error("loss is not finite");
      backward(loss);
    } catch (const std::domain_error& e) {
      throw DivergenceError("training diverged at step " + std::to_string(step_index) +
                            ", iteration " + std::to_string(it) + ": " + e.what());
    }
    curve.push_back(value);

    const double lr = incremental
                          ? linear_lr(it, plan.iterations, plan.incremental_lr_start,
                                      plan.incremental_lr_end)
                          : warmup_cosine_lr(it, plan.iterations, plan.warmup_iterations,
                                             plan.peak_lr);
    for (BranchOptimizer& opt : optimizers) opt.step(lr);
  }
  return curve;
}

// Per-class rows for both branches on the eval set, restricted to the
// classes revealed so far. One forward per frame serves both branches.
void append_eval_rows(TrainReport& report, const Model& model,
                      const std::vector<ProjectedFrame>& eval_frames,
                      const std::vector<int>& classes_so_far, int step) {
  const ModalityAvailability both{};
  ConfusionMatrix cm_color(model.num_classes());
  ConfusionMatrix cm_lidar(model.num_classes());
  for (const ProjectedFrame& frame : eval_frames) {
    const ProjectedFrame masked = mask_labels(frame, classes_so_far);
    Model::ForwardResult out = model.forward(masked, both);
    cm_color.accumulate(argmax_ids(out.color_probs), masked);
    cm_lidar.accumulate(argmax_ids(out.lidar_probs), masked);
  }
  const IouReport reports[2] = {iou(cm_color), iou(cm_lidar)};
  for (int branch = 0; branch < 2; ++branch) {
    for (int c = 1; c <= model.num_classes(); ++c) {
      report.iou_rows.push_back({step, branch, c, reports[branch].per_class[static_cast<std::size_t>(c - 1)]});
    }
  }
}

ModelConfig sized_config(const ModelConfig& base, int num_classes) {
  ModelConfig cfg = base;
  cfg.color.num_classes = num_classes;
  cfg.lidar.num_classes = num_classes;
  cfg.validate();
  return cfg;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void StepPlan::validate() const {
  if (schedule.step_count() < 1) throw ConfigError("plan: schedule has no steps");
  if (iterations < 1) throw ConfigError("plan: iterations must be >= 1");
  if (warmup_iterations < 0 || warmup_iterations > iterations) {
    throw ConfigError("plan: warmup must fit within the step's iterations");
  }
  if (peak_lr <= 0.0) throw ConfigError("plan: peak learning rate must be positive");
  if (lidar_lr_scale <= 0.0) throw ConfigError("plan: lidar lr scale must be positive");
  if (incremental_lr_start <= 0.0 || incremental_lr_end <= 0.0) {
    throw ConfigError("plan: learning-rate endpoints must be positive");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("plan: momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("plan: weight decay must be >= 0");
  if (weights.feature_align < 0.0 || weights.kd < 0.0) {
    throw ConfigError("plan: loss weights must be >= 0");
  }
  if (kd_temperature <= 0.0) throw ConfigError("plan: distillation temperature must be positive");
}

int needed_channels(const ClassSchedule& schedule, int step) {
  int max_id = 0;
  for (int c : schedule.classes_through(step)) max_id = std::max(max_id, c);
  if (max_id == 0) throw ConfigError("schedule step reveals no classes");
  return max_id;
}

Model snapshot_teacher(const Model& model) { return model.clone(false); }

std::pair<Model, TrainReport> run_offline(const ModelConfig& base, const StepPlan& plan,
                                          const FrameSet& data) {
  plan.validate();
  if (plan.schedule.step_count() != 1) {
    throw ConfigError("offline training expects a single-step schedule");
  }
  if (data.train.empty()) throw ConfigError("offline training has no training frames");
  const auto t0 = std::chrono::steady_clock::now();

  Model model(sized_config(base, needed_channels(plan.schedule, 0)));
  const std::vector<int> classes = plan.schedule.classes_through(0);
  std::vector<ProjectedFrame> train;
  train.reserve(data.train.size());
  for (const ProjectedFrame& frame : data.train) {
    train.push_back(mask_labels(drop_unsupervised(frame), classes));
  }

  TrainReport report;
  report.loss_curves.push_back(train_step(model, train, plan, 0, false, nullptr));
  append_eval_rows(report, model, data.eval, classes, 0);
  report.wall_clock_seconds = seconds_since(t0);
  return {std::move(model), std::move(report)};
}

std::pair<std::vector<Model>, TrainReport> run_continual(const ModelConfig& base,
                                                         const StepPlan& plan,
                                                         const FrameSet& data) {
  plan.validate();
  if (plan.schedule.step_count() < 2) {
    throw ConfigError("incremental training expects a schedule with at least two steps");
  }
  if (data.train.empty()) throw ConfigError("incremental training has no training frames");
  const auto t0 = std::chrono::steady_clock::now();

  Model model(sized_config(base, needed_channels(plan.schedule, 0)));
  TrainReport report;
  std::vector<Model> snapshots;
  snapshots.reserve(static_cast<std::size_t>(plan.schedule.step_count()));

  for (int k = 0; k < plan.schedule.step_count(); ++k) {
    const std::vector<int>& step_classes = plan.schedule.steps[static_cast<std::size_t>(k)];
    const std::vector<int> classes_so_far = plan.schedule.classes_through(k);

    std::vector<ProjectedFrame> train;
    train.reserve(data.train.size());
    for (const ProjectedFrame& frame : data.train) {
      train.push_back(mask_labels(drop_unsupervised(frame), step_classes));
    }

    if (k == 0) {
      report.loss_curves.push_back(train_step(model, train, plan, 0, false, nullptr));
    } else {
      const Model teacher = snapshot_teacher(model);
      model.extend_classifier(needed_channels(plan.schedule, k));
      const TeacherCache cache = predict_all(teacher, data.train);
      if (plan.inpainting) {
        for (std::size_t i = 0; i < train.size(); ++i) {
          // teacher argmax ids can stray outside the revealed classes when
          // the taxonomy is permuted; the final mask restores the guarantee
          // that supervision only ever covers revealed classes
          train[i] = mask_labels(inpaint_labels(train[i], cache.color[i], cache.lidar[i]),
                                 classes_so_far);
        }
      }
      report.loss_curves.push_back(train_step(model, train, plan, k, true, &cache));
    }

    append_eval_rows(report, model, data.eval, classes_so_far, k);
    snapshots.push_back(model.clone(true));
  }
  report.wall_clock_seconds = seconds_since(t0);
  return {std::move(snapshots), std::move(report)};
}

}  // namespace symseg
