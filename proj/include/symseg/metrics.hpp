#pragma once

#include "symseg/geometry.hpp"
#include "symseg/network.hpp"

#include <cstdint>
#include <vector>

namespace symseg {

// Square count table over the real classes 1..C; entry (i, j) counts pixels
// of true class i predicted as class j. Only pixels that are LiDAR-valid
// and labeled are ever counted, so the ignore id 0 has no row or column.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return num_classes_; }
  std::uint64_t count(int true_id, int pred_id) const;
  std::uint64_t total() const;

  void add_count(int true_id, int pred_id, std::uint64_t n = 1);
  void merge(const ConfusionMatrix& other);

  // Counts every pixel with valid_mask true and label != 0. Predictions at
  // those pixels must be class ids in 1..C.
  void accumulate(const Eigen::Array<int, Eigen::Dynamic, 1>& pred_ids,
                  const ProjectedFrame& frame);

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
};

struct IouReport {
  std::vector<double> per_class;  // index c-1 for class c; NaN when undefined
  double miou;                    // mean over defined classes; NaN if none
  int defined_classes;
};

IouReport iou(const ConfusionMatrix& cm);

// Per-pixel argmax of [C,H,W] probabilities as class ids 1..C (ties fall to
// the lowest class).
Eigen::Array<int, Eigen::Dynamic, 1> argmax_ids(const Tensor& probs);

// Both-branch mIoU under the three availability settings, Table-style:
// rows both / color-only / lidar-only, columns color branch / lidar branch,
// plus the per-branch average over the three rows.
struct ModalityTable {
  double miou[3][2];
  double branch_average[2];
};

ModalityTable modality_table(const Model& model, const std::vector<ProjectedFrame>& frames);

// Per-class IoU of one branch's predictions over a frame set.
IouReport evaluate_branch(const Model& model, const std::vector<ProjectedFrame>& frames,
                          bool color_branch, const ModalityAvailability& avail);

}  // namespace symseg
