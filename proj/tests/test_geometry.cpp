#include <doctest.h>

#include "symseg/errors.hpp"
#include "symseg/geometry.hpp"
#include "symseg/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <string>

using namespace symseg;

namespace {

ProjectionConfig test_camera() {
  ProjectionConfig cfg;
  cfg.fx = 100.0;
  cfg.fy = 100.0;
  cfg.cx = 8.0;
  cfg.cy = 6.0;
  cfg.width = 16;
  cfg.height = 12;
  cfg.near_plane = 0.1;
  return cfg;
}

Eigen::ArrayXd black(const ProjectionConfig& cfg) {
  return Eigen::ArrayXd::Zero(3 * cfg.height * cfg.width);
}

std::string temp_path(const char* name) {
  return std::string("/tmp/symseg_geom_") + name;
}

}  // namespace

TEST_CASE("projection config validation") {
  ProjectionConfig cfg = test_camera();
  CHECK_NOTHROW(cfg.validate());
  cfg.fx = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = test_camera();
  cfg.near_plane = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = test_camera();
  cfg.height = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("on-axis point lands at the principal point with all five channels") {
  const ProjectionConfig cfg = test_camera();
  PointCloud cloud;
  cloud.points.emplace_back(0.0, 0.0, 4.0);
  cloud.reflectance.push_back(0.5);
  cloud.labels.push_back(7);

  ProjectedFrame f = project(cloud, cfg, black(cfg));
  const Eigen::Index pix = f.pixel(6, 8);
  REQUIRE(f.valid(pix));
  CHECK(f.lidar(f.plane(kDistance, 6, 8)) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(f.lidar(f.plane(kPointX, 6, 8)) == 0.0);
  CHECK(f.lidar(f.plane(kPointY, 6, 8)) == 0.0);
  CHECK(f.lidar(f.plane(kPointZ, 6, 8)) == 4.0);
  CHECK(f.lidar(f.plane(kReflectance, 6, 8)) == 0.5);
  CHECK(f.labels(pix) == 7);
  CHECK(f.valid.cast<int>().sum() == 1);

  // everything else stays zeroed
  CHECK(f.labels.abs().sum() == 7);
  CHECK(f.color.abs().sum() == 0.0);
}

TEST_CASE("points aimed at pixel centers land on those pixels") {
  const ProjectionConfig cfg = test_camera();
  const double z = 2.5;
  PointCloud cloud;
  const int targets[][2] = {{0, 0}, {11, 15}, {3, 9}, {6, 8}};
  for (auto [row, col] : targets) {
    cloud.points.emplace_back((col + 0.5 - cfg.cx) * z / cfg.fx, (row + 0.5 - cfg.cy) * z / cfg.fy,
                              z);
    cloud.reflectance.push_back(0.25);
  }
  ProjectedFrame f = project(cloud, cfg, black(cfg));
  for (auto [row, col] : targets) {
    CAPTURE(row);
    CAPTURE(col);
    CHECK(f.valid(f.pixel(row, col)));
    CHECK(f.lidar(f.plane(kPointZ, row, col)) == z);
  }
  CHECK(f.valid.cast<int>().sum() == 4);
}

TEST_CASE("pixel collisions keep the nearest point; exact ties keep the first") {
  const ProjectionConfig cfg = test_camera();
  PointCloud cloud;
  cloud.points.emplace_back(0.0, 0.0, 5.0);  // farther, earlier index
  cloud.points.emplace_back(0.0, 0.0, 3.0);  // nearer, wins
  cloud.reflectance = {0.1, 0.9};
  ProjectedFrame f = project(cloud, cfg, black(cfg));
  CHECK(f.lidar(f.plane(kDistance, 6, 8)) == 3.0);
  CHECK(f.lidar(f.plane(kReflectance, 6, 8)) == 0.9);

  PointCloud tie;
  tie.points.emplace_back(0.0, 0.0, 4.0);
  tie.points.emplace_back(0.0, 0.0, 4.0);
  tie.reflectance = {0.1, 0.9};
  ProjectedFrame g = project(tie, cfg, black(cfg));
  CHECK(g.lidar(g.plane(kReflectance, 6, 8)) == 0.1);  // lowest index on equal distance
}

TEST_CASE("points behind the near plane or outside the image are culled") {
  const ProjectionConfig cfg = test_camera();
  PointCloud cloud;
  cloud.points.emplace_back(0.0, 0.0, -2.0);                      // behind the camera
  cloud.points.emplace_back(0.0, 0.0, cfg.near_plane - 1e-9);     // in front of the near plane
  cloud.points.emplace_back(100.0, 0.0, 1.0);                     // off the right edge
  cloud.points.emplace_back(-1.0, 0.0, 1.0);                      // u < 0
  cloud.points.emplace_back(0.0, 0.0, cfg.near_plane);            // exactly on the near plane: kept
  cloud.reflectance = {0.5, 0.5, 0.5, 0.5, 0.5};
  ProjectedFrame f = project(cloud, cfg, black(cfg));
  CHECK(f.valid.cast<int>().sum() == 1);
  CHECK(f.valid(f.pixel(6, 8)));
  CHECK(f.lidar(f.plane(kPointZ, 6, 8)) == cfg.near_plane);
}

TEST_CASE("project validates inputs") {
  const ProjectionConfig cfg = test_camera();
  PointCloud cloud;
  cloud.points.emplace_back(0.0, 0.0, 1.0);
  cloud.reflectance.push_back(0.5);

  CHECK_THROWS_AS(project(cloud, cfg, Eigen::ArrayXd::Zero(7)), std::invalid_argument);

  PointCloud bad = cloud;
  bad.points.emplace_back(std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0);
  bad.reflectance.push_back(0.5);
  CHECK_THROWS_AS(project(bad, cfg, black(cfg)), std::invalid_argument);

  PointCloud mismatched = cloud;
  mismatched.labels = {1, 2};
  CHECK_THROWS_AS(project(mismatched, cfg, black(cfg)), std::invalid_argument);
}

TEST_CASE("random cloud replay matches an independent projection and keeps d consistent") {
  const ProjectionConfig cfg = test_camera();
  Rng rng(7);
  PointCloud cloud;
  for (int i = 0; i < 200; ++i) {
    if (i < 160) {
      // aimed at the frustum so pixel collisions actually happen
      const double z = rng.uniform(0.2, 8.0);
      const double u = rng.uniform(0.0, static_cast<double>(cfg.width));
      const double v = rng.uniform(0.0, static_cast<double>(cfg.height));
      cloud.points.emplace_back((u - cfg.cx) * z / cfg.fx, (v - cfg.cy) * z / cfg.fy, z);
    } else {
      // wild points, mostly culled
      cloud.points.emplace_back(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                                rng.uniform(-2.0, 8.0));
    }
    cloud.reflectance.push_back(rng.uniform());
    cloud.labels.push_back(i % 5 + 1);
  }
  ProjectedFrame f = project(cloud, cfg, black(cfg));

  // independent z-buffer: ordered map from pixel to (distance, index)
  std::map<Eigen::Index, std::pair<double, int>> expect;
  for (int i = 0; i < 200; ++i) {
    const auto& p = cloud.points[i];
    if (p.z() < cfg.near_plane) continue;
    const double u = cfg.fx * p.x() / p.z() + cfg.cx;
    const double v = cfg.fy * p.y() / p.z() + cfg.cy;
    if (u < 0.0 || v < 0.0) continue;
    const auto col = static_cast<Eigen::Index>(u);
    const auto row = static_cast<Eigen::Index>(v);
    if (col >= cfg.width || row >= cfg.height) continue;
    const double d = std::sqrt(p.x() * p.x() + p.y() * p.y() + p.z() * p.z());
    const Eigen::Index pix = row * cfg.width + col;
    auto it = expect.find(pix);
    if (it == expect.end() || d < it->second.first) expect[pix] = {d, i};
  }

  Eigen::Index valid_count = 0;
  for (Eigen::Index pix = 0; pix < f.pixel_count(); ++pix) valid_count += f.valid(pix) ? 1 : 0;
  CHECK(valid_count == static_cast<Eigen::Index>(expect.size()));
  REQUIRE(valid_count > 50);  // the cloud actually exercises the image

  for (const auto& [pix, best] : expect) {
    const int i = best.second;
    const Eigen::Index row = pix / cfg.width, col = pix % cfg.width;
    REQUIRE(f.valid(pix));
    CHECK(f.lidar(f.plane(kDistance, row, col)) == best.first);
    CHECK(f.lidar(f.plane(kPointX, row, col)) == cloud.points[i].x());
    CHECK(f.lidar(f.plane(kPointY, row, col)) == cloud.points[i].y());
    CHECK(f.lidar(f.plane(kPointZ, row, col)) == cloud.points[i].z());
    CHECK(f.lidar(f.plane(kReflectance, row, col)) == cloud.reflectance[i]);
    CHECK(f.labels(pix) == cloud.labels[i]);

    // stored distance is the euclidean norm of the stored coordinates
    const double x = f.lidar(f.plane(kPointX, row, col));
    const double y = f.lidar(f.plane(kPointY, row, col));
    const double zz = f.lidar(f.plane(kPointZ, row, col));
    CHECK(std::abs(f.lidar(f.plane(kDistance, row, col)) - std::sqrt(x * x + y * y + zz * zz)) <=
          1e-6);
  }
}

TEST_CASE("scan files round-trip through float32 with reflectance clamped on read") {
  PointCloud cloud;
  cloud.points.emplace_back(1.25, -2.5, 3.75);
  cloud.points.emplace_back(0.1, 0.2, 0.3);
  cloud.reflectance = {0.5, 1.5};  // second value is out of range on disk

  const std::string path = temp_path("scan.bin");
  write_scan(path, cloud);
  PointCloud back = read_scan(path);
  REQUIRE(back.size() == 2);
  CHECK(back.points[0].x() == 1.25);  // exactly representable
  CHECK(back.points[0].y() == -2.5);
  CHECK(back.points[1].x() == static_cast<double>(static_cast<float>(0.1)));
  CHECK(back.reflectance[0] == 0.5);
  CHECK(back.reflectance[1] == 1.0);  // clamped at ingestion
  std::remove(path.c_str());
}

TEST_CASE("malformed scan files raise data errors with byte offsets") {
  const std::string path = temp_path("truncated.bin");
  {
    std::ofstream out(path, std::ios::binary);
    const char junk[10] = {0};
    out.write(junk, sizeof junk);
  }
  CHECK_THROWS_WITH_AS(read_scan(path), doctest::Contains("offset"), DataError);
  std::remove(path.c_str());

  PointCloud nan_cloud;
  nan_cloud.points.emplace_back(std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0);
  nan_cloud.reflectance.push_back(0.5);
  const std::string nan_path = temp_path("nan.bin");
  write_scan(nan_path, nan_cloud);
  CHECK_THROWS_AS(read_scan(nan_path), DataError);
  std::remove(nan_path.c_str());

  CHECK_THROWS_AS(read_scan("/nonexistent/scan.bin"), DataError);
}

TEST_CASE("label files keep the class id in the low sixteen bits") {
  const std::string path = temp_path("labels.label");
  write_labels(path, {0, 7, 65535});
  std::vector<int> back = read_labels(path);
  CHECK(back == std::vector<int>{0, 7, 65535});

  // upper half-word (e.g. an instance id) is masked away on read
  {
    std::ofstream out(path, std::ios::binary);
    const unsigned char rec[4] = {0x0a, 0x00, 0x05, 0x00};  // 0x0005000a
    out.write(reinterpret_cast<const char*>(rec), 4);
  }
  back = read_labels(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0] == 0x000a);

  CHECK_THROWS_AS(write_labels(path, {70000}), std::invalid_argument);
  {
    std::ofstream out(path, std::ios::binary);
    const char junk[6] = {0};
    out.write(junk, 6);
  }
  CHECK_THROWS_WITH_AS(read_labels(path), doctest::Contains("offset"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("ppm images round-trip at 8-bit precision and tolerate comments") {
  const Eigen::Index h = 3, w = 4;
  Rng rng(21);
  Eigen::ArrayXd color = rng.uniform_array(3 * h * w, 0.0, 1.0);
  const std::string path = temp_path("img.ppm");
  write_ppm(path, color, h, w);

  Eigen::Index rh = 0, rw = 0;
  Eigen::ArrayXd back = read_ppm(path, rh, rw);
  CHECK(rh == h);
  CHECK(rw == w);
  for (Eigen::Index i = 0; i < color.size(); ++i) {
    const double quantized = std::round(color(i) * 255.0) / 255.0;
    CHECK(back(i) == doctest::Approx(quantized).epsilon(1e-12));
  }

  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n# a comment\n2 1\n255\n";
    const unsigned char px[6] = {255, 0, 0, 0, 0, 255};
    out.write(reinterpret_cast<const char*>(px), 6);
  }
  back = read_ppm(path, rh, rw);
  CHECK(rh == 1);
  CHECK(rw == 2);
  CHECK(back(0) == 1.0);                  // R plane, first pixel
  CHECK(back(2 * 1 * 2 + 1) == 1.0);      // B plane, second pixel

  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n4 4\n255\n";
    out << "shortdata";
  }
  CHECK_THROWS_AS(read_ppm(path, rh, rw), DataError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 1\n255\n1234567890";
  }
  CHECK_THROWS_AS(read_ppm(path, rh, rw), DataError);
  std::remove(path.c_str());

  CHECK_THROWS_AS(write_ppm(path, Eigen::ArrayXd::Zero(5), 1, 2), std::invalid_argument);
}
