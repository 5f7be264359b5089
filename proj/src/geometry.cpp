#include "symseg/geometry.hpp"

#include "symseg/binio.hpp"
#include "symseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace symseg {

void ProjectionConfig::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("ProjectionConfig: focal lengths must be positive");
  if (!(near_plane > 0.0)) throw std::invalid_argument("ProjectionConfig: near plane must be positive");
  if (height < 1 || width < 1) throw std::invalid_argument("ProjectionConfig: image size must be at least 1x1");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw std::invalid_argument("ProjectionConfig: principal point must be finite");
}

ProjectedFrame ProjectedFrame::empty(Eigen::Index height, Eigen::Index width) {
  ProjectedFrame f;
  f.height = height;
  f.width = width;
  f.color = Eigen::ArrayXd::Zero(3 * height * width);
  f.lidar = Eigen::ArrayXd::Zero(5 * height * width);
  f.labels = Eigen::Array<int, Eigen::Dynamic, 1>::Zero(height * width);
  f.valid = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(height * width, false);
  return f;
}

ProjectedFrame project(const PointCloud& cloud, const ProjectionConfig& cfg,
                       const Eigen::ArrayXd& color) {
  cfg.validate();
  if (color.size() != 3 * cfg.height * cfg.width) {
    throw std::invalid_argument("project: color image size does not match ProjectionConfig");
  }
  if (cloud.reflectance.size() != cloud.points.size()) {
    throw std::invalid_argument("project: reflectance count does not match point count");
  }
  if (cloud.has_labels() && cloud.labels.size() != cloud.points.size()) {
    throw std::invalid_argument("project: label count does not match point count");
  }

  ProjectedFrame frame = ProjectedFrame::empty(cfg.height, cfg.width);
  frame.color = color;

  const Eigen::Index npix = frame.pixel_count();
  std::vector<double> best_d(static_cast<std::size_t>(npix), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> best_point(static_cast<std::size_t>(npix));

  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    if (!p.allFinite() || !std::isfinite(cloud.reflectance[i])) {
      throw std::invalid_argument("project: non-finite coordinates at point " + std::to_string(i));
    }
    if (p.z() < cfg.near_plane) continue;
    const double u = cfg.fx * p.x() / p.z() + cfg.cx;
    const double v = cfg.fy * p.y() / p.z() + cfg.cy;
    const auto col = static_cast<Eigen::Index>(std::floor(u));
    const auto row = static_cast<Eigen::Index>(std::floor(v));
    if (col < 0 || col >= cfg.width || row < 0 || row >= cfg.height) continue;
    const double d = p.norm();
    const Eigen::Index pix = frame.pixel(row, col);
    // strict < keeps the lowest input index on exact-distance ties
    if (d < best_d[static_cast<std::size_t>(pix)]) {
      best_d[static_cast<std::size_t>(pix)] = d;
      best_point[static_cast<std::size_t>(pix)] = i;
    }
  }

  for (Eigen::Index pix = 0; pix < npix; ++pix) {
    if (!std::isfinite(best_d[static_cast<std::size_t>(pix)])) continue;
    const std::size_t i = best_point[static_cast<std::size_t>(pix)];
    const Eigen::Vector3d& p = cloud.points[i];
    const Eigen::Index row = pix / cfg.width, col = pix % cfg.width;
    frame.lidar(frame.plane(kDistance, row, col)) = best_d[static_cast<std::size_t>(pix)];
    frame.lidar(frame.plane(kPointX, row, col)) = p.x();
    frame.lidar(frame.plane(kPointY, row, col)) = p.y();
    frame.lidar(frame.plane(kPointZ, row, col)) = p.z();
    frame.lidar(frame.plane(kReflectance, row, col)) = cloud.reflectance[i];
    frame.labels(pix) = cloud.has_labels() ? cloud.labels[i] : 0;
    frame.valid(pix) = true;
  }
  return frame;
}

// --- binary IO ------------------------------------------------------------

using binio::load_f32le;
using binio::load_u32le;
using binio::read_file;
using binio::store_f32le;
using binio::store_u32le;
using binio::write_file;

PointCloud read_scan(const std::string& scan_path) {
  const auto bytes = read_file(scan_path);
  if (bytes.size() % 16 != 0) {
    throw DataError(scan_path + ": truncated scan record at byte offset " +
                    std::to_string(bytes.size() - bytes.size() % 16));
  }
  const std::size_t n = bytes.size() / 16;
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.reflectance.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * 16;
    const double x = load_f32le(rec);
    const double y = load_f32le(rec + 4);
    const double z = load_f32le(rec + 8);
    const double r = load_f32le(rec + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(r)) {
      throw DataError(scan_path + ": non-finite record at byte offset " + std::to_string(i * 16));
    }
    cloud.points.emplace_back(x, y, z);
    cloud.reflectance.push_back(std::clamp(r, 0.0, 1.0));
  }
  return cloud;
}

std::vector<int> read_labels(const std::string& label_path) {
  const auto bytes = read_file(label_path);
  if (bytes.size() % 4 != 0) {
    throw DataError(label_path + ": truncated label record at byte offset " +
                    std::to_string(bytes.size() - bytes.size() % 4));
  }
  std::vector<int> labels(bytes.size() / 4);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<int>(load_u32le(bytes.data() + i * 4) & 0xffffu);
  }
  return labels;
}

void write_scan(const std::string& scan_path, const PointCloud& cloud) {
  if (cloud.reflectance.size() != cloud.points.size()) {
    throw std::invalid_argument("write_scan: reflectance count does not match point count");
  }
  std::vector<unsigned char> bytes(cloud.points.size() * 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    unsigned char* rec = bytes.data() + i * 16;
    store_f32le(rec, static_cast<float>(cloud.points[i].x()));
    store_f32le(rec + 4, static_cast<float>(cloud.points[i].y()));
    store_f32le(rec + 8, static_cast<float>(cloud.points[i].z()));
    store_f32le(rec + 12, static_cast<float>(cloud.reflectance[i]));
  }
  write_file(scan_path, bytes);
}

void write_labels(const std::string& label_path, const std::vector<int>& labels) {
  std::vector<unsigned char> bytes(labels.size() * 4);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 0xffff) {
      throw std::invalid_argument("write_labels: label out of 16-bit range at index " +
                                  std::to_string(i));
    }
    store_u32le(bytes.data() + i * 4, static_cast<std::uint32_t>(labels[i]));
  }
  write_file(label_path, bytes);
}

Eigen::ArrayXd read_ppm(const std::string& image_path, Eigen::Index& height, Eigen::Index& width) {
  const auto bytes = read_file(image_path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw DataError(image_path + ": malformed PPM header at byte offset " + std::to_string(pos));
    }
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw DataError(image_path + ": not a binary PPM (P6) file");
  }
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (w < 1 || h < 1 || maxval != 255) {
    throw DataError(image_path + ": unsupported PPM geometry or maxval");
  }
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() - pos < need) {
    throw DataError(image_path + ": truncated PPM data at byte offset " + std::to_string(bytes.size()));
  }
  height = h;
  width = w;
  Eigen::ArrayXd color(3 * h * w);
  for (long row = 0; row < h; ++row) {
    for (long col = 0; col < w; ++col) {
      for (long c = 0; c < 3; ++c) {
        const unsigned char byte = bytes[pos + 3 * (row * w + col) + c];
        color((c * h + row) * w + col) = static_cast<double>(byte) / 255.0;
      }
    }
  }
  return color;
}

void write_ppm(const std::string& image_path, const Eigen::ArrayXd& color, Eigen::Index height,
               Eigen::Index width) {
  if (color.size() != 3 * height * width) {
    throw std::invalid_argument("write_ppm: color buffer does not match image size");
  }
  std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + static_cast<std::size_t>(3 * height * width));
  for (Eigen::Index row = 0; row < height; ++row) {
    for (Eigen::Index col = 0; col < width; ++col) {
      for (Eigen::Index c = 0; c < 3; ++c) {
        const double v = std::clamp(color((c * height + row) * width + col), 0.0, 1.0);
        bytes.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
  }
  write_file(image_path, bytes);
}

}  // namespace symseg
