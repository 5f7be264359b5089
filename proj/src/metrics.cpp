#include "symseg/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace symseg {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

ConfusionMatrix::ConfusionMatrix(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) throw std::invalid_argument("confusion: need at least one class");
  counts_.assign(static_cast<size_t>(num_classes) * num_classes, 0);
}

std::uint64_t ConfusionMatrix::count(int true_id, int pred_id) const {
  if (true_id < 1 || true_id > num_classes_ || pred_id < 1 || pred_id > num_classes_) {
    throw std::invalid_argument("confusion: class id outside 1.." +
                                std::to_string(num_classes_));
  }
  return counts_[static_cast<size_t>(true_id - 1) * num_classes_ + (pred_id - 1)];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (std::uint64_t c : counts_) t += c;
  return t;
}

void ConfusionMatrix::add_count(int true_id, int pred_id, std::uint64_t n) {
  if (true_id < 1 || true_id > num_classes_ || pred_id < 1 || pred_id > num_classes_) {
    throw std::invalid_argument("confusion: class id outside 1.." +
                                std::to_string(num_classes_));
  }
  counts_[static_cast<size_t>(true_id - 1) * num_classes_ + (pred_id - 1)] += n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw std::invalid_argument("confusion: merging tables of different class counts");
  }
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void ConfusionMatrix::accumulate(const Eigen::Array<int, Eigen::Dynamic, 1>& pred_ids,
                                 const ProjectedFrame& frame) {
  if (pred_ids.size() != frame.height * frame.width) {
    throw std::invalid_argument("confusion: prediction plane size mismatch");
  }
  for (Index p = 0; p < pred_ids.size(); ++p) {
    if (!frame.valid(p) || frame.labels(p) == 0) continue;
    add_count(frame.labels(p), pred_ids(p));
  }
}

IouReport iou(const ConfusionMatrix& cm) {
  const int c = cm.num_classes();
  IouReport report;
  report.per_class.assign(static_cast<size_t>(c), kNan);
  report.defined_classes = 0;
  double sum = 0.0;
  for (int k = 1; k <= c; ++k) {
    std::uint64_t tp = cm.count(k, k), fp = 0, fn = 0;
    for (int j = 1; j <= c; ++j) {
      if (j == k) continue;
      fp += cm.count(j, k);
      fn += cm.count(k, j);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) continue;  // class never seen nor predicted: undefined
    const double value = static_cast<double>(tp) / static_cast<double>(denom);
    report.per_class[static_cast<size_t>(k - 1)] = value;
    sum += value;
    ++report.defined_classes;
  }
  report.miou = report.defined_classes > 0 ? sum / report.defined_classes : kNan;
  return report;
}

Eigen::Array<int, Eigen::Dynamic, 1> argmax_ids(const Tensor& probs) {
  if (probs.ndim() != 3) {
    throw std::invalid_argument("argmax_ids: expected [classes, height, width]");
  }
  const Index c = probs.shape()[0], h = probs.shape()[1], w = probs.shape()[2];
  Eigen::Array<int, Eigen::Dynamic, 1> ids(h * w);
  for (Index p = 0; p < h * w; ++p) {
    Index best = 0;
    double best_score = probs.values()(p);
    for (Index q = 1; q < c; ++q) {
      const double score = probs.values()(q * h * w + p);
      if (score > best_score) {
        best_score = score;
        best = q;
      }
    }
    ids(p) = static_cast<int>(best) + 1;
  }
  return ids;
}

IouReport evaluate_branch(const Model& model, const std::vector<ProjectedFrame>& frames,
                          bool color_branch, const ModalityAvailability& avail) {
  ConfusionMatrix cm(model.num_classes());
  for (const ProjectedFrame& frame : frames) {
    const auto out = model.forward(frame, avail);
    cm.accumulate(argmax_ids(color_branch ? out.color_probs : out.lidar_probs), frame);
  }
  return iou(cm);
}

ModalityTable modality_table(const Model& model, const std::vector<ProjectedFrame>& frames) {
  if (frames.empty()) {
    throw std::invalid_argument("modality_table: no frames to evaluate");
  }
  const ModalityAvailability settings[3] = {{true, true}, {true, false}, {false, true}};
  ModalityTable table{};
  for (int s = 0; s < 3; ++s) {
    ConfusionMatrix cm_color(model.num_classes());
    ConfusionMatrix cm_lidar(model.num_classes());
    for (const ProjectedFrame& frame : frames) {
      const auto out = model.forward(frame, settings[s]);
      cm_color.accumulate(argmax_ids(out.color_probs), frame);
      cm_lidar.accumulate(argmax_ids(out.lidar_probs), frame);
    }
    table.miou[s][0] = iou(cm_color).miou;
    table.miou[s][1] = iou(cm_lidar).miou;
  }
  for (int b = 0; b < 2; ++b) {
    table.branch_average[b] = (table.miou[0][b] + table.miou[1][b] + table.miou[2][b]) / 3.0;
  }
  return table;
}

}  // namespace symseg
