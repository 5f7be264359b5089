#include "symseg/network.hpp"

#include "symseg/binio.hpp"
#include "symseg/digest.hpp"
#include "symseg/errors.hpp"
#include "symseg/ops.hpp"
#include "symseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace symseg {

void BranchConfig::validate() const {
  if (in_channels < 1) throw ConfigError("branch: input channels must be positive");
  if (widths.size() != 4) throw ConfigError("branch: exactly 4 encoder levels required");
  for (Index w : widths) {
    if (w < 1) throw ConfigError("branch: widths must be positive");
  }
  if (num_classes < 2) throw ConfigError("branch: at least 2 classes required");
}

void FusionConfig::validate() const {
  if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("fusion: r must lie in [0,1]");
}

void ModelConfig::validate() const {
  color.validate();
  lidar.validate();
  fusion.validate();
  if (color.widths != lidar.widths) {
    throw ConfigError("model: branch widths must match for level-wise fusion");
  }
  if (color.num_classes != lidar.num_classes) {
    throw ConfigError("model: branches must share the class count");
  }
  if (decoder_width < 1) throw ConfigError("model: decoder width must be positive");
}

Tensor fuse(const Tensor& color_features, const Tensor& lidar_features, double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("fuse: r must lie in [0,1]");
  if (color_features.shape() != lidar_features.shape()) {
    throw std::invalid_argument("fuse: shape mismatch " + shape_str(color_features.shape()) +
                                " vs " + shape_str(lidar_features.shape()));
  }
  // boundary weights hand back the selected branch untouched
  if (r == 1.0) return color_features;
  if (r == 0.0) return lidar_features;
  return add(scale(color_features, r), scale(lidar_features, 1.0 - r));
}

namespace {

// scale applied to the (d,x,y,z) LiDAR channels so their metric ranges
// land near the [0,1] color range
constexpr double kLidarScale = 0.1;

constexpr char kMagic[8] = {'S', 'S', 'E', 'G', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  auto add_conv = [&](const std::string& name, Index c_out, Index c_in, Index k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
    params_.emplace_back(
        name, Tensor::from_values({c_out, c_in, k, k},
                                  rng.uniform_array(c_out * c_in * k * k, -bound, bound), true));
  };
  const std::pair<const char*, const BranchConfig*> branches[] = {{"color", &cfg_.color},
                                                                  {"lidar", &cfg_.lidar}};
  for (const auto& [prefix, bc] : branches) {
    Index in = bc->in_channels;
    for (int i = 0; i < 4; ++i) {
      add_conv(std::string(prefix) + ".enc" + std::to_string(i) + ".weight", bc->widths[i], in, 3);
      in = bc->widths[i];
    }
    for (int i = 0; i < 4; ++i) {
      add_conv(std::string(prefix) + ".lat" + std::to_string(i) + ".weight", cfg_.decoder_width,
               bc->widths[i], 1);
    }
    add_conv(std::string(prefix) + ".head.weight", cfg_.decoder_width, cfg_.decoder_width, 3);
    add_conv(std::string(prefix) + ".cls.weight", bc->num_classes, cfg_.decoder_width, 1);
  }
  if (cfg_.fusion.learnable_r) {
    for (int i = 0; i < 4; ++i) {
      params_.emplace_back("fusion.r" + std::to_string(i), Tensor::scalar(cfg_.fusion.r, true));
    }
  }
}

const Tensor& Model::param(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw std::logic_error("model: unknown parameter " + name);
}

void Model::set_param(const std::string& name, Tensor t) {
  for (auto& [n, existing] : params_) {
    if (n == name) {
      existing = std::move(t);
      return;
    }
  }
  throw std::logic_error("model: unknown parameter " + name);
}

std::vector<Tensor> Model::parameter_group(const std::string& prefix) const {
  std::vector<Tensor> out;
  for (const auto& [n, t] : params_) {
    if (n.rfind(prefix, 0) == 0) out.push_back(t);
  }
  return out;
}

void Model::zero_grads() {
  for (auto& [n, t] : params_) t.zero_grad();
}

Tensor Model::decode(const std::string& branch, const std::vector<Tensor>& fused, Index out_h,
                     Index out_w) const {
  Tensor p = conv2d(fused[3], param(branch + ".lat3.weight"), 1, 0);
  for (int i = 2; i >= 0; --i) {
    Tensor lateral = conv2d(fused[static_cast<size_t>(i)],
                            param(branch + ".lat" + std::to_string(i) + ".weight"), 1, 0);
    p = add(lateral, upsample_nearest(p, 2, lateral.shape()[1], lateral.shape()[2]));
  }
  p = upsample_nearest(p, 2, out_h, out_w);
  p = relu(conv2d(p, param(branch + ".head.weight"), 1, 1));
  Tensor logits = conv2d(p, param(branch + ".cls.weight"), 1, 0);
  return softmax(logits, 0);
}

Model::ForwardResult Model::forward(const ProjectedFrame& frame,
                                    const ModalityAvailability& avail) const {
  const Index h = frame.height, w = frame.width;
  if (h < 1 || w < 1 || frame.color.size() != 3 * h * w || frame.lidar.size() != 5 * h * w ||
      cfg_.color.in_channels != 3 || cfg_.lidar.in_channels != 5) {
    throw std::invalid_argument("forward: frame does not match the configured input channels");
  }
  Eigen::ArrayXd lidar_values(5 * h * w);
  lidar_values.head(4 * h * w) = frame.lidar.head(4 * h * w) * kLidarScale;
  lidar_values.tail(h * w) = frame.lidar.tail(h * w);
  return forward_inputs(Tensor::from_values({3, h, w}, frame.color),
                        Tensor::from_values({5, h, w}, std::move(lidar_values)), avail);
}

Model::ForwardResult Model::forward_inputs(Tensor color_input, Tensor lidar_input,
                                           const ModalityAvailability& avail) const {
  if (!avail.color_present && !avail.lidar_present) {
    throw std::invalid_argument("forward: at least one modality must be present");
  }
  const Shape cs = color_input.shape(), ls = lidar_input.shape();
  if (cs.size() != 3 || ls.size() != 3 || cs[0] != cfg_.color.in_channels ||
      ls[0] != cfg_.lidar.in_channels || cs[1] != ls[1] || cs[2] != ls[2] || cs[1] < 1 ||
      cs[2] < 1) {
    throw std::invalid_argument("forward: branch inputs do not match the configuration");
  }
  const Index h = cs[1], w = cs[2];
  Tensor xc = avail.color_present ? std::move(color_input)
                                  : Tensor::zeros({cfg_.color.in_channels, h, w});
  Tensor xl = avail.lidar_present ? std::move(lidar_input)
                                  : Tensor::zeros({cfg_.lidar.in_channels, h, w});

  // -1 means "use the configured fusion"; a missing modality pins the
  // weight so only the present branch contributes
  double forced_r = -1.0;
  if (!avail.lidar_present) forced_r = 1.0;
  if (!avail.color_present) forced_r = 0.0;

  ForwardResult out;
  for (int i = 0; i < 4; ++i) {
    const std::string level = std::to_string(i);
    Tensor fc = relu(conv2d(xc, param("color.enc" + level + ".weight"), 2, 1));
    Tensor fl = relu(conv2d(xl, param("lidar.enc" + level + ".weight"), 2, 1));
    Tensor fi;
    if (forced_r >= 0.0) {
      fi = fuse(fc, fl, forced_r);
    } else if (cfg_.fusion.learnable_r) {
      Tensor r = clamp(param("fusion.r" + level), 0.0, 1.0);
      fi = add(mul(fc, r), mul(fl, sub(Tensor::scalar(1.0), r)));
    } else {
      fi = fuse(fc, fl, cfg_.fusion.r);
    }
    out.color_pyramid.push_back(fc);
    out.lidar_pyramid.push_back(fl);
    out.fused_pyramid.push_back(fi);
    if (cfg_.fusion.write_back) {
      xc = fi;
      xl = fi;
    } else {
      xc = fc;
      xl = fl;
    }
  }

  out.color_probs = decode("color", out.fused_pyramid, h, w);
  out.lidar_probs = decode("lidar", out.fused_pyramid, h, w);
  return out;
}

void Model::extend_classifier(int new_class_count) {
  const int current = num_classes();
  if (new_class_count < current) {
    throw std::invalid_argument("extend_classifier: cannot shrink from " +
                                std::to_string(current) + " to " +
                                std::to_string(new_class_count));
  }
  if (new_class_count == current) return;
  const bool track = params_.front().second.requires_grad();
  const Index d = cfg_.decoder_width;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  const char* prefixes[] = {"color", "lidar"};
  for (int b = 0; b < 2; ++b) {
    const std::string name = std::string(prefixes[b]) + ".cls.weight";
    const Tensor& old = param(name);
    Eigen::ArrayXd values(new_class_count * d);
    values.head(old.size()) = old.values();
    // each fresh row is seeded by (class channel, branch) so growing
    // stepwise or in one jump yields the same weights
    for (int q = current; q < new_class_count; ++q) {
      Rng rng(cfg_.init_seed + 7919ull * static_cast<std::uint64_t>(q + 1) +
              static_cast<std::uint64_t>(b));
      values.segment(q * d, d) = rng.uniform_array(d, -bound, bound);
    }
    set_param(name, Tensor::from_values({new_class_count, d, 1, 1}, std::move(values), track));
  }
  cfg_.color.num_classes = new_class_count;
  cfg_.lidar.num_classes = new_class_count;
}

Model Model::clone(bool requires_grad) const {
  Model copy;
  copy.cfg_ = cfg_;
  copy.params_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    copy.params_.emplace_back(name, t.clone_leaf(requires_grad));
  }
  return copy;
}

std::uint64_t Model::architecture_digest() const {
  std::ostringstream os;
  os << "color_in=" << cfg_.color.in_channels << "\nlidar_in=" << cfg_.lidar.in_channels
     << "\nwidths=";
  for (size_t i = 0; i < cfg_.color.widths.size(); ++i) {
    os << (i ? "," : "") << cfg_.color.widths[i];
  }
  char rbuf[32];
  std::snprintf(rbuf, sizeof rbuf, "%.17g", cfg_.fusion.r);
  os << "\ndecoder=" << cfg_.decoder_width << "\nr=" << rbuf
     << "\nwrite_back=" << (cfg_.fusion.write_back ? 1 : 0)
     << "\nlearnable_r=" << (cfg_.fusion.learnable_r ? 1 : 0) << "\n";
  return fnv1a64(os.str());
}

void Model::save_checkpoint(const std::string& path, std::uint64_t config_digest) const {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  binio::put_u32(out, kVersion);
  binio::put_u64(out, architecture_digest());
  binio::put_u64(out, config_digest);
  binio::put_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, t] : params_) {
    binio::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    binio::put_u64(out, static_cast<std::uint64_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) binio::put_f64(out, t.values()(i));
  }
  binio::write_file(path, out);
}

namespace {

struct CheckpointReader {
  const std::vector<unsigned char>& bytes;
  const std::string& path;
  size_t pos = 0;

  void need(size_t n) {
    if (bytes.size() - pos < n) {
      throw DataError(path + ": truncated checkpoint at byte offset " + std::to_string(pos));
    }
  }
  std::uint32_t u32() {
    need(4);
    const auto v = binio::load_u32le(bytes.data() + pos);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    const auto v = binio::load_u64le(bytes.data() + pos);
    pos += 8;
    return v;
  }
  double f64() {
    need(8);
    const double v = binio::load_f64le(bytes.data() + pos);
    pos += 8;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
};

void check_header(CheckpointReader& r) {
  const std::string magic = r.str(8);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    throw DataError(r.path + ": not a model checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError(r.path + ": unsupported checkpoint version " + std::to_string(version));
  }
}

}  // namespace

void Model::load_checkpoint(const std::string& path, std::uint64_t expected_config_digest) {
  const auto bytes = binio::read_file(path);
  CheckpointReader r{bytes, path};
  check_header(r);
  const std::uint64_t arch = r.u64();
  const std::uint64_t config_digest = r.u64();
  if (arch != architecture_digest()) {
    throw DataError(path + ": checkpoint was written by a different architecture");
  }
  if (expected_config_digest != 0 && config_digest != 0 &&
      expected_config_digest != config_digest) {
    throw DataError(path + ": config digest mismatch (run configuration changed)");
  }

  const std::uint32_t count = r.u32();
  std::unordered_map<std::string, Eigen::ArrayXd> blocks;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint64_t n = r.u64();
    Eigen::ArrayXd values(static_cast<Index>(n));
    for (std::uint64_t j = 0; j < n; ++j) values(static_cast<Index>(j)) = r.f64();
    if (!blocks.emplace(name, std::move(values)).second) {
      throw DataError(path + ": duplicate parameter block " + name);
    }
  }
  if (r.pos != bytes.size()) {
    throw DataError(path + ": trailing bytes at offset " + std::to_string(r.pos));
  }

  const auto cls_it = blocks.find("color.cls.weight");
  if (cls_it == blocks.end()) throw DataError(path + ": missing classifier block");
  const auto stored_classes = static_cast<int>(cls_it->second.size() / cfg_.decoder_width);
  if (stored_classes > num_classes()) {
    extend_classifier(stored_classes);
  } else if (stored_classes < num_classes()) {
    throw DataError(path + ": checkpoint has " + std::to_string(stored_classes) +
                    " classes, model expects " + std::to_string(num_classes()));
  }

  if (blocks.size() != params_.size()) {
    throw DataError(path + ": checkpoint holds " + std::to_string(blocks.size()) +
                    " parameter blocks, model has " + std::to_string(params_.size()));
  }
  for (auto& [name, t] : params_) {
    const auto it = blocks.find(name);
    if (it == blocks.end()) throw DataError(path + ": missing parameter block " + name);
    if (it->second.size() != t.size()) {
      throw DataError(path + ": parameter " + name + " holds " +
                      std::to_string(it->second.size()) + " values, expected " +
                      std::to_string(t.size()));
    }
    t.values_mut() = it->second;
    t.zero_grad();
  }
}

std::uint64_t Model::checkpoint_config_digest(const std::string& path) {
  const auto bytes = binio::read_file(path);
  CheckpointReader r{bytes, path};
  check_header(r);
  r.u64();  // architecture digest
  return r.u64();
}

}  // namespace symseg
