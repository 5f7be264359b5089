#pragma once

#include "symseg/geometry.hpp"
#include "symseg/tensor.hpp"

#include <string>
#include <vector>

namespace symseg {

// Distillation composites, named by the modality pairs that supervise:
// same = CC+LL, img adds the color teacher onto the lidar student (CL),
// pcd adds the lidar teacher onto the color student (LC), cross adds both.
enum class KdVariant { same, img, pcd, cross };

const char* kd_variant_name(KdVariant v);
KdVariant parse_kd_variant(const std::string& name);

// Mean of -log p(label) over pixels whose label differs from ignore_id.
// Class id l reads probability channel l-1; probabilities are clamped to
// [1e-12, 1] before the log. Returns 0 when no pixel is labeled.
Tensor seg_ce(const Tensor& probs, const Eigen::Array<int, Eigen::Dynamic, 1>& labels,
              int ignore_id = 0);

// Per level: L2 norm of the feature difference plus (1 - cosine similarity),
// each level flattened to a vector; summed over levels.
Tensor feature_align_loss(const std::vector<Tensor>& color_pyramid,
                          const std::vector<Tensor>& lidar_pyramid);

// Mean over pixels of the cross-entropy between the (constant) teacher
// distribution and the student restricted to the teacher's channels and
// renormalized. temperature != 1 smooths both sides by p^(1/T).
Tensor kd_pair(const Tensor& teacher_probs, const Tensor& student_probs,
               double temperature = 1.0);

Tensor kd_composite(KdVariant variant, const Tensor& teacher_color, const Tensor& teacher_lidar,
                    const Tensor& student_color, const Tensor& student_lidar,
                    double temperature = 1.0);

// Averages the two teacher predictions and writes the argmax class into
// pixels that are unlabeled but carry a valid LiDAR return; every other
// pixel is left untouched.
ProjectedFrame inpaint_labels(const ProjectedFrame& masked, const Tensor& teacher_color,
                              const Tensor& teacher_lidar);

struct LossWeights {
  double feature_align = 0.1;
  double kd = 1.0;
};

}  // namespace symseg
