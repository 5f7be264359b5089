#include "symseg/gradsuite.hpp"

#include "symseg/dataset.hpp"
#include "symseg/gradcheck.hpp"
#include "symseg/losses.hpp"
#include "symseg/network.hpp"
#include "symseg/ops.hpp"
#include "symseg/rng.hpp"

#include <algorithm>

namespace symseg {

namespace {

constexpr double kEps = 1e-5;

Tensor random_simplex(Rng& rng, Index c, Index h, Index w) {
  Eigen::ArrayXd v = rng.uniform_array(c * h * w, 0.05, 1.0);
  for (Index p = 0; p < h * w; ++p) {
    double mass = 0.0;
    for (Index k = 0; k < c; ++k) mass += v(k * h * w + p);
    for (Index k = 0; k < c; ++k) v(k * h * w + p) /= mass;
  }
  return Tensor::from_values({c, h, w}, std::move(v));
}

}  // namespace

std::vector<GradCheckEntry> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckEntry> entries;
  Rng rng(seed);

  {  // masked cross-entropy through a softmax head, ignore label included
    Tensor logits = Tensor::from_values({3, 2, 2}, rng.uniform_array(12, -1.0, 1.0), true);
    Eigen::Array<int, Eigen::Dynamic, 1> labels(4);
    labels << 1, 3, 0, 2;
    entries.push_back({"seg_ce",
                       finite_difference_check(
                           [&labels](const Tensor& t) { return seg_ce(softmax(t, 0), labels); },
                           logits, kEps)});
  }

  {  // feature alignment, differentiated through each side in turn
    const Index c = 3, h = 2, w = 2;
    Tensor color0 = Tensor::from_values({c, h, w}, rng.uniform_array(c * h * w, -1.0, 1.0), true);
    Tensor color1 = Tensor::from_values({c, 1, 1}, rng.uniform_array(c, -1.0, 1.0), true);
    Tensor lidar0 = Tensor::from_values({c, h, w}, rng.uniform_array(c * h * w, -1.0, 1.0), true);
    Tensor lidar1 = Tensor::from_values({c, 1, 1}, rng.uniform_array(c, -1.0, 1.0), true);
    const auto align = [&](const Tensor&) {
      return feature_align_loss({color0, color1}, {lidar0, lidar1});
    };
    entries.push_back({"feature_align/color", finite_difference_check(align, color0, kEps)});
    entries.push_back({"feature_align/lidar", finite_difference_check(align, lidar1, kEps)});
  }

  {  // every distillation variant, including channel slicing and tempering
    const Index h = 2, w = 2;
    const Tensor tc = random_simplex(rng, 3, h, w);
    const Tensor tl = random_simplex(rng, 3, h, w);
    Tensor logits_c = Tensor::from_values({4, h, w}, rng.uniform_array(4 * h * w, -1.0, 1.0), true);
    Tensor logits_l = Tensor::from_values({4, h, w}, rng.uniform_array(4 * h * w, -1.0, 1.0), true);
    for (KdVariant variant :
         {KdVariant::same, KdVariant::img, KdVariant::pcd, KdVariant::cross}) {
      const auto loss = [&](const Tensor&) {
        return kd_composite(variant, tc, tl, softmax(logits_c, 0), softmax(logits_l, 0));
      };
      const double err_c = finite_difference_check(loss, logits_c, kEps);
      const double err_l = finite_difference_check(loss, logits_l, kEps);
      entries.push_back({std::string("kd_composite/") + kd_variant_name(variant),
                         std::max(err_c, err_l)});
    }
    const auto tempered = [&](const Tensor&) {
      return kd_composite(KdVariant::cross, tc, tl, softmax(logits_c, 0), softmax(logits_l, 0),
                          2.0);
    };
    entries.push_back({"kd_composite/cross-tempered",
                       finite_difference_check(tempered, logits_c, kEps)});
  }

  {  // reduced-size network end to end under its training loss
    ModelConfig cfg;
    cfg.color = BranchConfig{3, {2, 2, 2, 2}, 2};
    cfg.lidar = BranchConfig{5, {2, 2, 2, 2}, 2};
    cfg.decoder_width = 2;
    cfg.fusion.r = 0.4;
    cfg.fusion.learnable_r = true;
    cfg.init_seed = seed + 1;
    Model model(cfg);

    SceneSpec spec;
    spec.seed = seed + 2;
    spec.height = 6;
    spec.width = 6;
    spec.num_classes = 2;
    spec.density = 20;
    const ProjectedFrame frame = generate_scene(spec);
    Eigen::Array<int, Eigen::Dynamic, 1> labels = frame.labels;
    for (Index i = 0; i < labels.size(); ++i) {
      if (!frame.valid(i)) labels(i) = 0;
    }

    const ModalityAvailability both{};
    const auto loss = [&](const Tensor&) {
      Model::ForwardResult out = model.forward(frame, both);
      Tensor value = add(seg_ce(out.color_probs, labels), seg_ce(out.lidar_probs, labels));
      return add(value,
                 scale(feature_align_loss(out.color_pyramid, out.lidar_pyramid), 0.1));
    };
    double worst = 0.0;
    for (const auto& [name, param] : model.parameters()) {
      worst = std::max(worst, finite_difference_check(loss, param, kEps));
    }
    entries.push_back({"network", worst});
  }

  return entries;
}

}  // namespace symseg
