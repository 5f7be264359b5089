#include "symseg/dataset.hpp"

#include "symseg/errors.hpp"
#include "symseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace symseg {

// --- schedules --------------------------------------------------------------

std::vector<int> ClassSchedule::classes_through(int step) const {
  if (step < 0 || step >= step_count()) {
    throw std::out_of_range("ClassSchedule: step " + std::to_string(step) + " out of range");
  }
  std::vector<int> out;
  for (int k = 0; k <= step; ++k) out.insert(out.end(), steps[k].begin(), steps[k].end());
  return out;
}

ClassSchedule schedule_from_steps(std::vector<std::vector<int>> steps, int total_classes) {
  if (total_classes < 1) throw ConfigError("schedule: total_classes must be positive");
  if (steps.empty()) throw ConfigError("schedule: at least one step required");
  std::vector<bool> seen(static_cast<size_t>(total_classes) + 1, false);
  int covered = 0;
  for (size_t k = 0; k < steps.size(); ++k) {
    if (steps[k].empty()) throw ConfigError("schedule: step " + std::to_string(k) + " is empty");
    for (int c : steps[k]) {
      if (c < 1 || c > total_classes) {
        throw ConfigError("schedule: class id " + std::to_string(c) + " outside 1.." +
                          std::to_string(total_classes));
      }
      if (seen[static_cast<size_t>(c)]) {
        throw ConfigError("schedule: class id " + std::to_string(c) + " appears twice");
      }
      seen[static_cast<size_t>(c)] = true;
      ++covered;
    }
  }
  if (covered != total_classes) {
    throw ConfigError("schedule: steps cover " + std::to_string(covered) + " of " +
                      std::to_string(total_classes) + " classes");
  }
  ClassSchedule s;
  s.total_classes = total_classes;
  s.steps = std::move(steps);
  return s;
}

namespace {

std::vector<int> parse_step_sizes(const std::string& preset, int total_classes) {
  if (preset == "offline") return {total_classes};
  std::vector<int> sizes;
  std::stringstream ss(preset);
  std::string token;
  while (std::getline(ss, token, '-')) {
    size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(token, &pos);
    } catch (const std::exception&) {
      throw ConfigError("schedule preset '" + preset + "': bad step size '" + token + "'");
    }
    if (pos != token.size() || v < 1) {
      throw ConfigError("schedule preset '" + preset + "': bad step size '" + token + "'");
    }
    sizes.push_back(v);
  }
  if (sizes.empty()) throw ConfigError("schedule preset '" + preset + "' has no step sizes");
  int sum = std::accumulate(sizes.begin(), sizes.end(), 0);
  // a short list is padded by repeating the final size ("6-1" -> 6,1,1,...)
  while (sum < total_classes) {
    sizes.push_back(sizes.back());
    sum += sizes.back();
  }
  if (sum != total_classes) {
    throw ConfigError("schedule preset '" + preset + "': sizes sum to " + std::to_string(sum) +
                      ", expected " + std::to_string(total_classes));
  }
  return sizes;
}

}  // namespace

ClassSchedule build_schedule(const std::string& preset, int total_classes,
                             const std::vector<int>& class_order) {
  if (total_classes < 1) throw ConfigError("schedule: total_classes must be positive");
  std::vector<int> order = class_order;
  if (order.empty()) {
    order.resize(static_cast<size_t>(total_classes));
    std::iota(order.begin(), order.end(), 1);
  }
  if (static_cast<int>(order.size()) != total_classes) {
    throw ConfigError("schedule: class_order has " + std::to_string(order.size()) +
                      " entries, expected " + std::to_string(total_classes));
  }
  const std::vector<int> sizes = parse_step_sizes(preset, total_classes);
  std::vector<std::vector<int>> steps;
  size_t cursor = 0;
  for (int size : sizes) {
    steps.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                       order.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    cursor += static_cast<size_t>(size);
  }
  return schedule_from_steps(std::move(steps), total_classes);  // validates the order too
}

std::vector<std::vector<int>> read_split_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path);
  std::vector<std::vector<int>> steps;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<int> step;
    std::stringstream ss(line);
    std::string token;
    while (std::getline(ss, token, ',')) {
      try {
        step.push_back(std::stoi(token));
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad class id '" + token + "'");
      }
    }
    if (step.empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": empty step");
    }
    steps.push_back(std::move(step));
  }
  if (steps.empty()) throw DataError(path + ": no steps found");
  return steps;
}

ProjectedFrame mask_labels(const ProjectedFrame& frame, const std::vector<int>& step_classes) {
  int max_id = 0;
  for (int c : step_classes) max_id = std::max(max_id, c);
  std::vector<bool> keep(static_cast<size_t>(max_id) + 1, false);
  for (int c : step_classes) {
    if (c >= 1) keep[static_cast<size_t>(c)] = true;
  }
  ProjectedFrame out = frame;
  for (Eigen::Index i = 0; i < out.labels.size(); ++i) {
    const int label = out.labels(i);
    if (label <= 0 || label > max_id || !keep[static_cast<size_t>(label)]) out.labels(i) = 0;
  }
  return out;
}

// --- synthetic scenes -------------------------------------------------------

void SceneSpec::validate() const {
  if (height < 2 || width < 2) throw ConfigError("scene: image must be at least 2x2");
  if (num_classes < 2) throw ConfigError("scene: at least 2 classes required");
  if (min_objects < 0 || max_objects < min_objects) {
    throw ConfigError("scene: invalid object count range");
  }
  if (density < 1 || density > height * width) {
    throw ConfigError("scene: density must be in 1..height*width");
  }
}

ProjectionConfig scene_camera(const SceneSpec& spec) {
  ProjectionConfig cfg;
  cfg.fx = 0.6 * static_cast<double>(spec.width);
  cfg.fy = 0.6 * static_cast<double>(spec.width);
  cfg.cx = 0.5 * static_cast<double>(spec.width);
  cfg.cy = 0.5 * static_cast<double>(spec.height);
  cfg.width = spec.width;
  cfg.height = spec.height;
  cfg.near_plane = 0.1;
  return cfg;
}

namespace {

constexpr double kGroundY = 1.2;  // camera height above the ground (y points down)
constexpr double kWallZ = 10.0;

struct SceneObject {
  int kind = 0;  // 0 sphere, 1 box, 2 cylinder
  int class_id = 0;
  // sphere: c = center, p0 = (radius,_,_)
  // box: c = min corner, p0 = max corner
  // cylinder: c = (x, y_top, z) axis point, p0 = (radius, y_bottom, _)
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
};

// Nearest positive hit parameter of the ray t*(u,v,1) with the object,
// or +inf. The ray origin is the camera at (0,0,0).
double hit_object(const SceneObject& ob, double u, double v) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const Eigen::Vector3d dir(u, v, 1.0);
  if (ob.kind == 0) {  // sphere
    const double a = dir.squaredNorm();
    const double b = -2.0 * dir.dot(ob.c);
    const double c = ob.c.squaredNorm() - ob.p0.x() * ob.p0.x();
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return kInf;
    const double sq = std::sqrt(disc);
    const double t1 = (-b - sq) / (2.0 * a);
    const double t2 = (-b + sq) / (2.0 * a);
    if (t1 > 0.0) return t1;
    if (t2 > 0.0) return t2;
    return kInf;
  }
  if (ob.kind == 1) {  // axis-aligned box, slab method
    double tmin = 0.0, tmax = kInf;
    for (int axis = 0; axis < 3; ++axis) {
      const double inv = 1.0 / dir(axis);
      double t0 = (ob.c(axis) - 0.0) * inv;
      double t1 = (ob.p0(axis) - 0.0) * inv;
      if (inv < 0.0) std::swap(t0, t1);
      tmin = std::max(tmin, t0);
      tmax = std::min(tmax, t1);
      if (tmax < tmin) return kInf;
    }
    return tmin > 0.0 ? tmin : kInf;
  }
  // vertical cylinder with a top cap
  const double rad = ob.p0.x();
  const double y_top = ob.c.y(), y_bot = ob.p0.y();
  double best = kInf;
  const double a = u * u + 1.0;
  const double b = -2.0 * (u * ob.c.x() + ob.c.z());
  const double c = ob.c.x() * ob.c.x() + ob.c.z() * ob.c.z() - rad * rad;
  const double disc = b * b - 4.0 * a * c;
  if (disc >= 0.0) {
    const double sq = std::sqrt(disc);
    for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
      if (t <= 0.0 || t >= best) continue;
      const double y = t * v;
      if (y >= y_top && y <= y_bot) best = t;
    }
  }
  if (v > 0.0) {  // camera sits above the cap plane
    const double t = y_top / v;
    if (t > 0.0 && t < best) {
      const double x = t * u, z = t;
      const double dx = x - ob.c.x(), dz = z - ob.c.z();
      if (dx * dx + dz * dz <= rad * rad) best = t;
    }
  }
  return best;
}

// Golden-ratio class palette: stable, well-spread hues.
void class_color(int class_id, double& r, double& g, double& b) {
  const double hue = std::fmod(0.618033988749895 * static_cast<double>(class_id), 1.0);
  const double s = 0.65, v = 0.9;
  const double h6 = hue * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

double class_reflectance(int class_id) {
  return 0.2 + 0.7 * std::fmod(0.381966011250105 * static_cast<double>(class_id), 1.0);
}

}  // namespace

ProjectedFrame generate_scene(const SceneSpec& spec) {
  spec.validate();
  const ProjectionConfig cam = scene_camera(spec);
  Rng rng(spec.seed);

  // objects for classes 3..num_classes; enough of them that every class
  // has at least one instance in every frame
  const int object_classes = spec.num_classes - 2;
  int count = static_cast<int>(rng.uniform_int(spec.min_objects, spec.max_objects));
  count = std::max(count, object_classes);
  if (object_classes == 0) count = 0;
  std::vector<SceneObject> objects;
  for (int j = 0; j < count; ++j) {
    SceneObject ob;
    ob.kind = j % 3;
    ob.class_id = 3 + (object_classes > 0 ? j % object_classes : 0);
    const double z = rng.uniform(3.5, 8.0);
    // lane placement spreads objects across the frustum to limit occlusion
    const double lane = -0.7 + 1.4 * (static_cast<double>(j) + 0.5) / static_cast<double>(count);
    const double x = (lane + rng.uniform(-0.05, 0.05)) * z;
    if (ob.kind == 0) {
      const double rad = rng.uniform(0.35, 0.75);
      ob.c = Eigen::Vector3d(x, kGroundY - rad, z);
      ob.p0 = Eigen::Vector3d(rad, 0.0, 0.0);
    } else if (ob.kind == 1) {
      const double hx = rng.uniform(0.3, 0.6);
      const double hy = rng.uniform(0.4, 0.9);
      const double hz = rng.uniform(0.3, 0.6);
      ob.c = Eigen::Vector3d(x - hx, kGroundY - 2.0 * hy, z - hz);
      ob.p0 = Eigen::Vector3d(x + hx, kGroundY, z + hz);
    } else {
      const double rad = rng.uniform(0.25, 0.5);
      const double h = rng.uniform(0.6, 1.2);
      ob.c = Eigen::Vector3d(x, kGroundY - h, z);
      ob.p0 = Eigen::Vector3d(rad, kGroundY, 0.0);
    }
    objects.push_back(ob);
  }

  ProjectedFrame frame = ProjectedFrame::empty(spec.height, spec.width);
  Eigen::ArrayXd depth(spec.height * spec.width);

  for (Eigen::Index row = 0; row < spec.height; ++row) {
    for (Eigen::Index col = 0; col < spec.width; ++col) {
      const double u = (static_cast<double>(col) + 0.5 - cam.cx) / cam.fx;
      const double v = (static_cast<double>(row) + 0.5 - cam.cy) / cam.fy;

      double best_t = kWallZ;  // the back wall catches every ray
      int label = 2;
      if (v > 0.0) {
        const double t_ground = kGroundY / v;
        if (t_ground < best_t) {
          best_t = t_ground;
          label = 1;
        }
      }
      for (const SceneObject& ob : objects) {
        const double t = hit_object(ob, u, v);
        if (t < best_t) {
          best_t = t;
          label = ob.class_id;
        }
      }

      const Eigen::Index pix = frame.pixel(row, col);
      depth(pix) = best_t;  // dir z-component is 1, so t is the z depth
      frame.labels(pix) = label;
      double r, g, b;
      class_color(label, r, g, b);
      const double shade = 1.0 / (1.0 + 0.06 * best_t);
      frame.color(frame.plane(0, row, col)) = r * shade;
      frame.color(frame.plane(1, row, col)) = g * shade;
      frame.color(frame.plane(2, row, col)) = b * shade;
    }
  }

  // per-pixel sensor noise: 3 color draws + 1 reflectance draw, in pixel order
  Eigen::ArrayXd reflectance(spec.height * spec.width);
  for (Eigen::Index pix = 0; pix < frame.pixel_count(); ++pix) {
    const Eigen::Index row = pix / spec.width, col = pix % spec.width;
    for (Eigen::Index ch = 0; ch < 3; ++ch) {
      double& c = frame.color(frame.plane(ch, row, col));
      c = std::clamp(c + 0.02 * rng.normal(), 0.0, 1.0);
    }
    reflectance(pix) =
        std::clamp(class_reflectance(frame.labels(pix)) + 0.02 * rng.normal(), 0.0, 1.0);
  }

  // choose `density` distinct pixels with a partial Fisher-Yates pass
  std::vector<Eigen::Index> pool(static_cast<size_t>(frame.pixel_count()));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < spec.density; ++i) {
    const auto j = static_cast<Eigen::Index>(
        rng.uniform_int(i, static_cast<std::int64_t>(frame.pixel_count()) - 1));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    const Eigen::Index pix = pool[static_cast<size_t>(i)];
    const Eigen::Index row = pix / spec.width, col = pix % spec.width;
    const double z = depth(pix);
    const double x = (static_cast<double>(col) + 0.5 - cam.cx) * z / cam.fx;
    const double y = (static_cast<double>(row) + 0.5 - cam.cy) * z / cam.fy;
    frame.lidar(frame.plane(kDistance, row, col)) = std::sqrt(x * x + y * y + z * z);
    frame.lidar(frame.plane(kPointX, row, col)) = x;
    frame.lidar(frame.plane(kPointY, row, col)) = y;
    frame.lidar(frame.plane(kPointZ, row, col)) = z;
    frame.lidar(frame.plane(kReflectance, row, col)) = reflectance(pix);
    frame.valid(pix) = true;
  }
  return frame;
}

ProjectedFrame SyntheticDataset::train_frame(int i) const {
  if (i < 0 || i >= train_frames) throw std::out_of_range("SyntheticDataset: train frame index");
  SceneSpec s = spec;
  s.seed = spec.seed + static_cast<std::uint64_t>(i);
  return generate_scene(s);
}

ProjectedFrame SyntheticDataset::eval_frame(int i) const {
  if (i < 0 || i >= eval_frames) throw std::out_of_range("SyntheticDataset: eval frame index");
  SceneSpec s = spec;
  s.seed = spec.seed + 0x100000u + static_cast<std::uint64_t>(i);
  return generate_scene(s);
}

// --- external frames --------------------------------------------------------

LabelMap read_label_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label map " + path);
  LabelMap map;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected raw=mapped");
    }
    try {
      const int raw = std::stoi(line.substr(0, eq));
      const int mapped = std::stoi(line.substr(eq + 1));
      if (mapped < 0) throw std::out_of_range("negative");
      map[raw] = mapped;
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad label-map entry");
    }
  }
  return map;
}

ProjectedFrame load_external_frame(const std::string& scan_path, const std::string& label_path,
                                   const std::string& image_path, const ProjectionConfig& cfg,
                                   const LabelMap& label_map) {
  PointCloud cloud = read_scan(scan_path);
  if (!label_path.empty()) {
    cloud.labels = read_labels(label_path);
    if (cloud.labels.size() != cloud.points.size()) {
      throw DataError(label_path + ": " + std::to_string(cloud.labels.size()) + " labels for " +
                      std::to_string(cloud.points.size()) + " points in " + scan_path);
    }
    if (!label_map.empty()) {
      for (int& label : cloud.labels) {
        const auto it = label_map.find(label);
        label = (it == label_map.end()) ? 0 : it->second;
      }
    }
  }
  Eigen::Index h = 0, w = 0;
  Eigen::ArrayXd color = read_ppm(image_path, h, w);
  if (h != cfg.height || w != cfg.width) {
    throw DataError(image_path + ": image is " + std::to_string(w) + "x" + std::to_string(h) +
                    ", camera expects " + std::to_string(cfg.width) + "x" +
                    std::to_string(cfg.height));
  }
  return project(cloud, cfg, color);
}

}  // namespace symseg
