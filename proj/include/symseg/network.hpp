#pragma once

#include "symseg/geometry.hpp"
#include "symseg/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace symseg {

// One encoder-decoder stream. Both branches must agree on widths and
// class count so their features can be fused level-wise.
struct BranchConfig {
  Index in_channels = 3;
  std::vector<Index> widths = {8, 16, 32, 64};  // 4 encoder levels
  int num_classes = 2;

  void validate() const;
};

struct FusionConfig {
  double r = 0.5;           // weight of the color features in the convex sum
  bool write_back = true;   // fused features re-enter both branches
  bool learnable_r = false; // per-level trainable fusion weight

  void validate() const;
};

struct ModalityAvailability {
  bool color_present = true;
  bool lidar_present = true;
};

struct ModelConfig {
  BranchConfig color{3, {8, 16, 32, 64}, 2};
  BranchConfig lidar{5, {8, 16, 32, 64}, 2};
  Index decoder_width = 16;
  FusionConfig fusion;
  std::uint64_t init_seed = 1;

  void validate() const;
};

// Convex combination of two shape-equal feature maps. At the boundary
// weights the corresponding input is returned as-is (same tensor handle),
// so a fully selected branch passes through bit-exactly.
Tensor fuse(const Tensor& color_features, const Tensor& lidar_features, double r);

// Symmetric two-branch segmentation model: per-branch encoders of four
// stride-2 conv+relu stages, level-wise fusion, and per-branch decoders
// that consume the fused pyramid through lateral convolutions and
// nearest-neighbor upsampling back to full resolution.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  int num_classes() const { return cfg_.color.num_classes; }

  struct ForwardResult {
    Tensor color_probs;  // [C,H,W], softmax over classes
    Tensor lidar_probs;  // [C,H,W]
    std::vector<Tensor> color_pyramid;  // per-branch encoder features (pre-fusion)
    std::vector<Tensor> lidar_pyramid;
    std::vector<Tensor> fused_pyramid;
  };

  // Runs both branches on the frame. A missing modality contributes a
  // zero input and forces the fusion weight to the available branch, so
  // the output is invariant to the missing modality's data.
  ForwardResult forward(const ProjectedFrame& frame, const ModalityAvailability& avail) const;

  // Same network on raw, already-conditioned branch inputs; lets harnesses
  // drive the two branches with arbitrary tensors (e.g. to check that
  // swapping branch weights and inputs while replacing r by 1-r swaps the
  // two predictions exactly).
  ForwardResult forward_inputs(Tensor color_input, Tensor lidar_input,
                               const ModalityAvailability& avail) const;

  // Ordered name -> tensor registry; iteration order is the checkpoint
  // block order and the optimizer update order.
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  // Parameters whose name starts with prefix ("color." / "lidar." / "fusion.").
  std::vector<Tensor> parameter_group(const std::string& prefix) const;
  void zero_grads();

  // Grows both classifiers to new_class_count outputs. Existing rows are
  // preserved bit-exactly; new rows draw from a seeded initializer.
  void extend_classifier(int new_class_count);

  // Deep copy. Teachers are cloned without gradient tracking so their
  // forward passes stay off the tape.
  Model clone(bool requires_grad) const;

  // Architecture digest: identifies everything a checkpoint needs to be
  // loadable except the class count (which extension legitimately grows).
  std::uint64_t architecture_digest() const;

  // Flat binary checkpoint: header (magic, version, architecture digest,
  // run-config digest) + named little-endian float64 blocks. Loading
  // auto-extends the classifier when the stored one is wider.
  void save_checkpoint(const std::string& path, std::uint64_t config_digest = 0) const;
  void load_checkpoint(const std::string& path, std::uint64_t expected_config_digest = 0);
  static std::uint64_t checkpoint_config_digest(const std::string& path);

 private:
  Model() = default;
  Tensor decode(const std::string& branch, const std::vector<Tensor>& fused, Index out_h,
                Index out_w) const;
  const Tensor& param(const std::string& name) const;
  void set_param(const std::string& name, Tensor t);

  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace symseg
