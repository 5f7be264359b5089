#include "symseg/losses.hpp"

#include "symseg/errors.hpp"
#include "symseg/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace symseg {

namespace {
constexpr double kProbFloor = 1e-12;
constexpr double kNoCeiling = std::numeric_limits<double>::infinity();
}

const char* kd_variant_name(KdVariant v) {
  switch (v) {
    case KdVariant::same: return "same";
    case KdVariant::img: return "img";
    case KdVariant::pcd: return "pcd";
    case KdVariant::cross: return "cross";
  }
  throw std::logic_error("kd_variant_name: bad enum value");
}

KdVariant parse_kd_variant(const std::string& name) {
  if (name == "same") return KdVariant::same;
  if (name == "img") return KdVariant::img;
  if (name == "pcd") return KdVariant::pcd;
  if (name == "cross") return KdVariant::cross;
  throw ConfigError("unknown distillation variant '" + name +
                    "' (expected same, img, pcd or cross)");
}

Tensor seg_ce(const Tensor& probs, const Eigen::Array<int, Eigen::Dynamic, 1>& labels,
              int ignore_id) {
  if (probs.ndim() != 3) {
    throw std::invalid_argument("seg_ce: probabilities must be [classes, height, width]");
  }
  const Index c = probs.shape()[0], h = probs.shape()[1], w = probs.shape()[2];
  if (labels.size() != h * w) {
    throw std::invalid_argument("seg_ce: label plane size mismatch");
  }
  Index labeled = 0;
  for (Index p = 0; p < labels.size(); ++p) {
    const int l = labels(p);
    if (l == ignore_id) continue;
    if (l < 1 || l > c) {
      throw std::invalid_argument("seg_ce: label " + std::to_string(l) + " out of range 1.." +
                                  std::to_string(c));
    }
    ++labeled;
  }
  if (labeled == 0) return Tensor::scalar(0.0);

  Eigen::ArrayXd pick = Eigen::ArrayXd::Zero(c * h * w);
  const double weight = 1.0 / static_cast<double>(labeled);
  for (Index p = 0; p < labels.size(); ++p) {
    const int l = labels(p);
    if (l == ignore_id) continue;
    pick((l - 1) * h * w + p) = weight;
  }
  Tensor mask = Tensor::from_values({c, h, w}, std::move(pick));
  return neg(sum(mul(log(clamp(probs, kProbFloor, 1.0)), mask)));
}

Tensor feature_align_loss(const std::vector<Tensor>& color_pyramid,
                          const std::vector<Tensor>& lidar_pyramid) {
  if (color_pyramid.empty() || color_pyramid.size() != lidar_pyramid.size()) {
    throw std::invalid_argument("feature_align_loss: pyramids must pair up level by level");
  }
  Tensor total;
  for (size_t i = 0; i < color_pyramid.size(); ++i) {
    const Tensor& fc = color_pyramid[i];
    const Tensor& fl = lidar_pyramid[i];
    if (fc.shape() != fl.shape()) {
      throw std::invalid_argument("feature_align_loss: level " + std::to_string(i) +
                                  " shape mismatch");
    }
    // rounding can push the cosine of near-parallel vectors past 1, which
    // would make the loss dip below zero
    Tensor term = add(l2_norm(sub(fc, fl)),
                      sub(Tensor::scalar(1.0), clamp(cosine_similarity(fc, fl), -1.0, 1.0)));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor kd_pair(const Tensor& teacher_probs, const Tensor& student_probs, double temperature) {
  if (teacher_probs.ndim() != 3 || student_probs.ndim() != 3) {
    throw std::invalid_argument("kd_pair: predictions must be [classes, height, width]");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("kd_pair: temperature must be positive");
  const Index ct = teacher_probs.shape()[0];
  const Index h = teacher_probs.shape()[1], w = teacher_probs.shape()[2];
  if (student_probs.shape()[1] != h || student_probs.shape()[2] != w) {
    throw std::invalid_argument("kd_pair: spatial size mismatch");
  }
  if (student_probs.shape()[0] < ct) {
    throw std::invalid_argument("kd_pair: student has fewer classes than the teacher");
  }

  // teacher is a constant; smooth and renormalize it in plain array math
  Eigen::ArrayXd tv = teacher_probs.values();
  if (temperature != 1.0) {
    tv = tv.max(kProbFloor).pow(1.0 / temperature);
    for (Index p = 0; p < h * w; ++p) {
      double mass = 0.0;
      for (Index q = 0; q < ct; ++q) mass += tv(q * h * w + p);
      for (Index q = 0; q < ct; ++q) tv(q * h * w + p) /= mass;
    }
  }
  Eigen::ArrayXd tmass_values = Eigen::ArrayXd::Zero(h * w);
  for (Index q = 0; q < ct; ++q) tmass_values += tv.segment(q * h * w, h * w);
  Tensor teacher = Tensor::from_values({ct, h, w}, std::move(tv));
  Tensor tmass = Tensor::from_values({1, h, w}, std::move(tmass_values));

  Tensor st = slice_axis0(student_probs, 0, ct);
  if (temperature != 1.0) {
    st = exp(scale(log(clamp(st, kProbFloor, kNoCeiling)), 1.0 / temperature));
  }
  // -sum_c t_c (log s_c - log S) summed over pixels, S the sliced mass;
  // the log difference renormalizes the restricted student. Only a floor
  // is clamped: S routinely exceeds 1 and capping it would skew the mean.
  Tensor log_st = log(clamp(st, kProbFloor, kNoCeiling));
  Tensor log_mass = log(clamp(sum_axis(st, 0), kProbFloor, kNoCeiling));
  Tensor a = sum(mul(teacher, log_st));
  Tensor b = sum(mul(tmass, log_mass));
  return scale(sub(b, a), 1.0 / static_cast<double>(h * w));
}

Tensor kd_composite(KdVariant variant, const Tensor& teacher_color, const Tensor& teacher_lidar,
                    const Tensor& student_color, const Tensor& student_lidar,
                    double temperature) {
  Tensor total = add(kd_pair(teacher_color, student_color, temperature),
                     kd_pair(teacher_lidar, student_lidar, temperature));
  if (variant == KdVariant::img || variant == KdVariant::cross) {
    total = add(total, kd_pair(teacher_color, student_lidar, temperature));
  }
  if (variant == KdVariant::pcd || variant == KdVariant::cross) {
    total = add(total, kd_pair(teacher_lidar, student_color, temperature));
  }
  return total;
}

ProjectedFrame inpaint_labels(const ProjectedFrame& masked, const Tensor& teacher_color,
                              const Tensor& teacher_lidar) {
  if (teacher_color.ndim() != 3 || teacher_color.shape() != teacher_lidar.shape()) {
    throw std::invalid_argument("inpaint_labels: teacher predictions must share one shape");
  }
  const Index c = teacher_color.shape()[0];
  const Index h = teacher_color.shape()[1], w = teacher_color.shape()[2];
  if (h != masked.height || w != masked.width) {
    throw std::invalid_argument("inpaint_labels: prediction size does not match the frame");
  }
  ProjectedFrame out = masked;
  const Eigen::ArrayXd& pc = teacher_color.values();
  const Eigen::ArrayXd& pl = teacher_lidar.values();
  for (Index p = 0; p < h * w; ++p) {
    if (out.labels(p) != 0 || !out.valid(p)) continue;
    Index best = 0;
    double best_score = pc(p) + pl(p);
    for (Index q = 1; q < c; ++q) {
      const double score = pc(q * h * w + p) + pl(q * h * w + p);
      if (score > best_score) {  // strict: ties keep the lowest class
        best_score = score;
        best = q;
      }
    }
    out.labels(p) = static_cast<int>(best) + 1;
  }
  return out;
}

}  // namespace symseg
