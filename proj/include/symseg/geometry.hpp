#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace symseg {

// Channel order of the projected LiDAR image.
enum LidarChannel { kDistance = 0, kPointX = 1, kPointY = 2, kPointZ = 3, kReflectance = 4 };

struct PointCloud {
  std::vector<Eigen::Vector3d> points;  // camera coordinates, meters
  std::vector<double> reflectance;      // [0,1]
  std::vector<int> labels;              // empty when unlabeled

  std::size_t size() const { return points.size(); }
  bool has_labels() const { return !labels.empty(); }
};

struct ProjectionConfig {
  double fx = 1.0, fy = 1.0;  // focal lengths, pixels
  double cx = 0.0, cy = 0.0;  // principal point, pixels
  Eigen::Index height = 1, width = 1;
  double near_plane = 0.1;  // meters

  void validate() const;
};

// Aligned color / projected-LiDAR pair. Planar layout, row-major within
// each channel plane, so a plane maps directly onto a [C,H,W] tensor.
struct ProjectedFrame {
  Eigen::Index height = 0, width = 0;
  Eigen::ArrayXd color;                       // 3*H*W, values in [0,1]
  Eigen::ArrayXd lidar;                       // 5*H*W, channels (d,x,y,z,reflectance)
  Eigen::Array<int, Eigen::Dynamic, 1> labels;    // H*W, 0 = unlabeled/ignore
  Eigen::Array<bool, Eigen::Dynamic, 1> valid;    // H*W, true where a point landed

  Eigen::Index pixel(Eigen::Index row, Eigen::Index col) const { return row * width + col; }
  Eigen::Index plane(Eigen::Index channel, Eigen::Index row, Eigen::Index col) const {
    return (channel * height + row) * width + col;
  }
  Eigen::Index pixel_count() const { return height * width; }

  static ProjectedFrame empty(Eigen::Index height, Eigen::Index width);
};

// Perspective projection of a labeled cloud into the camera image plane.
// Points behind the near plane or outside the image are dropped; pixel
// collisions keep the point closest to the camera, exact-distance ties
// keep the lowest input index. Untouched pixels stay all-zero with
// label 0 and valid=false.
ProjectedFrame project(const PointCloud& cloud, const ProjectionConfig& cfg,
                       const Eigen::ArrayXd& color);

// --- binary file formats ------------------------------------------------
// Scans are little-endian float32 records (x, y, z, reflectance); labels
// are little-endian uint32 per point with the class id in the low 16 bits.
// Images are binary PPM (P6, maxval 255).

PointCloud read_scan(const std::string& scan_path);
std::vector<int> read_labels(const std::string& label_path);
void write_scan(const std::string& scan_path, const PointCloud& cloud);
void write_labels(const std::string& label_path, const std::vector<int>& labels);

Eigen::ArrayXd read_ppm(const std::string& image_path, Eigen::Index& height, Eigen::Index& width);
void write_ppm(const std::string& image_path, const Eigen::ArrayXd& color, Eigen::Index height,
               Eigen::Index width);

}  // namespace symseg
