#include <doctest.h>

#include "symseg/dataset.hpp"
#include "symseg/errors.hpp"

#include <cstdio>
#include <fstream>
#include <set>

using namespace symseg;

TEST_CASE("named schedule presets produce the documented step counts over 19 classes") {
  struct Expect {
    const char* preset;
    int steps;
  } const table[] = {{"offline", 1}, {"11-8", 2}, {"6-5-8", 3}, {"11-1", 9}, {"6-1", 14}};

  for (const auto& e : table) {
    CAPTURE(e.preset);
    ClassSchedule s = build_schedule(e.preset, 19);
    CHECK(s.step_count() == e.steps);
    int covered = 0;
    std::set<int> all;
    for (const auto& step : s.steps) {
      covered += static_cast<int>(step.size());
      all.insert(step.begin(), step.end());
    }
    CHECK(covered == 19);
    CHECK(all.size() == 19);
    CHECK(*all.begin() == 1);
    CHECK(*all.rbegin() == 19);
  }

  ClassSchedule s = build_schedule("6-1", 19);
  CHECK(s.steps[0].size() == 6);
  for (int k = 1; k < 14; ++k) CHECK(s.steps[static_cast<size_t>(k)].size() == 1);
  CHECK(s.steps[0] == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(s.steps[1] == std::vector<int>{7});

  ClassSchedule two = build_schedule("11-8", 19);
  CHECK(two.steps[1].size() == 8);
  CHECK(two.steps[1].front() == 12);
}

TEST_CASE("custom schedules, class orders, and rejections") {
  ClassSchedule s = build_schedule("4-2-2", 8);
  CHECK(s.step_count() == 3);
  CHECK(s.steps[0].size() == 4);

  // a permuted class order shuffles which ids land in which step
  ClassSchedule p = build_schedule("2-1-1", 4, {3, 1, 4, 2});
  CHECK(p.steps[0] == std::vector<int>{3, 1});
  CHECK(p.steps[1] == std::vector<int>{4});
  CHECK(p.steps[2] == std::vector<int>{2});
  CHECK(p.classes_through(1) == std::vector<int>{3, 1, 4});

  CHECK_THROWS_AS(build_schedule("10-4", 19), ConfigError);  // padding overshoots
  CHECK_THROWS_AS(build_schedule("0-19", 19), ConfigError);
  CHECK_THROWS_AS(build_schedule("abc", 19), ConfigError);
  CHECK_THROWS_AS(build_schedule("", 19), ConfigError);
  CHECK_THROWS_AS(build_schedule("2-1-1", 4, {1, 2, 3}), ConfigError);     // short order
  CHECK_THROWS_AS(build_schedule("2-1-1", 4, {1, 2, 3, 3}), ConfigError);  // duplicate
  CHECK_THROWS_AS(build_schedule("2-1-1", 4, {1, 2, 3, 5}), ConfigError);  // out of range

  CHECK_THROWS_AS(schedule_from_steps({{1, 2}, {2, 3}}, 3), ConfigError);  // overlap
  CHECK_THROWS_AS(schedule_from_steps({{1, 2}}, 3), ConfigError);          // incomplete
  CHECK_THROWS_AS(schedule_from_steps({{1, 2}, {}}, 2), ConfigError);      // empty step
}

TEST_CASE("split files parse into schedules") {
  const std::string path = "/tmp/symseg_split.txt";
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "1,3\n";
    out << "2\n";
    out << "4,5  # trailing comment\n";
  }
  auto steps = read_split_file(path);
  REQUIRE(steps.size() == 3);
  CHECK(steps[0] == std::vector<int>{1, 3});
  CHECK(steps[2] == std::vector<int>{4, 5});
  ClassSchedule s = schedule_from_steps(steps, 5);
  CHECK(s.step_count() == 3);

  {
    std::ofstream out(path);
    out << "1,x\n";
  }
  CHECK_THROWS_AS(read_split_file(path), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_split_file("/nonexistent/split.txt"), DataError);
}

TEST_CASE("label masking keeps exactly the requested classes") {
  SceneSpec spec;
  spec.seed = 99;
  ProjectedFrame frame = generate_scene(spec);

  // identity: every class kept
  ProjectedFrame same = mask_labels(frame, {1, 2, 3, 4});
  CHECK((same.labels == frame.labels).all());

  // empty set: everything ignored
  ProjectedFrame none = mask_labels(frame, {});
  CHECK(none.labels.abs().sum() == 0);
  CHECK((none.color == frame.color).all());
  CHECK((none.lidar == frame.lidar).all());
  CHECK((none.valid == frame.valid).all());

  // single class: per-pixel oracle
  ProjectedFrame only2 = mask_labels(frame, {2});
  Eigen::Index kept = 0, expected = 0;
  for (Eigen::Index i = 0; i < frame.labels.size(); ++i) {
    if (frame.labels(i) == 2) ++expected;
    if (only2.labels(i) != 0) {
      ++kept;
      CHECK(only2.labels(i) == 2);
      CHECK(frame.labels(i) == 2);
    }
  }
  CHECK(kept == expected);
  CHECK(expected > 0);

  // masking twice is the same as masking once
  ProjectedFrame twice = mask_labels(only2, {2});
  CHECK((twice.labels == only2.labels).all());
}

TEST_CASE("scene generation is deterministic in the seed") {
  SceneSpec spec;
  spec.seed = 7;
  ProjectedFrame a = generate_scene(spec);
  ProjectedFrame b = generate_scene(spec);
  CHECK((a.color == b.color).all());
  CHECK((a.lidar == b.lidar).all());
  CHECK((a.labels == b.labels).all());
  CHECK((a.valid == b.valid).all());

  spec.seed = 8;
  ProjectedFrame c = generate_scene(spec);
  CHECK((a.color != c.color).any());
}

TEST_CASE("generated scenes satisfy the frame contract") {
  SceneSpec spec;
  spec.seed = 3;
  ProjectedFrame f = generate_scene(spec);

  CHECK(f.height == spec.height);
  CHECK(f.width == spec.width);
  CHECK((f.color >= 0.0).all());
  CHECK((f.color <= 1.0).all());

  // labels are dense and within the class range
  CHECK((f.labels >= 1).all());
  CHECK((f.labels <= spec.num_classes).all());
  std::set<int> present(f.labels.data(), f.labels.data() + f.labels.size());
  CHECK(present.size() == static_cast<size_t>(spec.num_classes));

  // exactly `density` valid LiDAR pixels, each self-consistent
  CHECK(f.valid.cast<int>().sum() == spec.density);
  for (Eigen::Index pix = 0; pix < f.pixel_count(); ++pix) {
    const Eigen::Index row = pix / f.width, col = pix % f.width;
    if (!f.valid(pix)) {
      CHECK(f.lidar(f.plane(kDistance, row, col)) == 0.0);
      continue;
    }
    const double d = f.lidar(f.plane(kDistance, row, col));
    const double x = f.lidar(f.plane(kPointX, row, col));
    const double y = f.lidar(f.plane(kPointY, row, col));
    const double z = f.lidar(f.plane(kPointZ, row, col));
    CHECK(d > 0.0);
    CHECK(z > 0.0);
    CHECK(std::abs(d - std::sqrt(x * x + y * y + z * z)) <= 1e-12);
    const double refl = f.lidar(f.plane(kReflectance, row, col));
    CHECK(refl >= 0.0);
    CHECK(refl <= 1.0);
  }
}

TEST_CASE("full density marks every pixel valid") {
  SceneSpec spec;
  spec.seed = 5;
  spec.density = spec.height * spec.width;
  ProjectedFrame f = generate_scene(spec);
  CHECK(f.valid.all());
}

TEST_CASE("every class appears in nearly every generated frame") {
  SceneSpec spec;
  spec.num_classes = 4;
  int frames_with_all = 0;
  for (int i = 0; i < 100; ++i) {
    spec.seed = 1000 + static_cast<std::uint64_t>(i);
    ProjectedFrame f = generate_scene(spec);
    std::set<int> present(f.labels.data(), f.labels.data() + f.labels.size());
    if (present.size() == 4) ++frames_with_all;
  }
  CHECK(frames_with_all >= 90);
}

TEST_CASE("sampled LiDAR pixels reproject onto themselves") {
  SceneSpec spec;
  spec.seed = 11;
  ProjectedFrame f = generate_scene(spec);
  const ProjectionConfig cam = scene_camera(spec);

  PointCloud cloud;
  for (Eigen::Index pix = 0; pix < f.pixel_count(); ++pix) {
    if (!f.valid(pix)) continue;
    const Eigen::Index row = pix / f.width, col = pix % f.width;
    cloud.points.emplace_back(f.lidar(f.plane(kPointX, row, col)),
                              f.lidar(f.plane(kPointY, row, col)),
                              f.lidar(f.plane(kPointZ, row, col)));
    cloud.reflectance.push_back(f.lidar(f.plane(kReflectance, row, col)));
    cloud.labels.push_back(f.labels(pix));
  }
  ProjectedFrame re = project(cloud, cam, f.color);
  CHECK((re.valid == f.valid).all());
  for (Eigen::Index pix = 0; pix < f.pixel_count(); ++pix) {
    if (!f.valid(pix)) continue;
    const Eigen::Index row = pix / f.width, col = pix % f.width;
    CHECK(re.labels(pix) == f.labels(pix));
    CHECK(re.lidar(re.plane(kPointZ, row, col)) == f.lidar(f.plane(kPointZ, row, col)));
    CHECK(re.lidar(re.plane(kDistance, row, col)) ==
          doctest::Approx(f.lidar(f.plane(kDistance, row, col))).epsilon(1e-12));
  }
}

TEST_CASE("dataset splits train and eval seeds apart") {
  SyntheticDataset data;
  data.spec.seed = 40;
  data.train_frames = 3;
  data.eval_frames = 2;

  ProjectedFrame t0 = data.train_frame(0);
  ProjectedFrame t0_again = data.train_frame(0);
  CHECK((t0.color == t0_again.color).all());

  ProjectedFrame t1 = data.train_frame(1);
  CHECK((t0.color != t1.color).any());

  ProjectedFrame e0 = data.eval_frame(0);
  CHECK((e0.color != t0.color).any());

  CHECK_THROWS_AS(data.train_frame(3), std::out_of_range);
  CHECK_THROWS_AS(data.eval_frame(-1), std::out_of_range);
}

TEST_CASE("scene spec validation") {
  SceneSpec spec;
  spec.num_classes = 1;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec = SceneSpec{};
  spec.density = 0;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec = SceneSpec{};
  spec.density = spec.height * spec.width + 1;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec = SceneSpec{};
  spec.min_objects = 5;
  spec.max_objects = 2;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
}

TEST_CASE("external frames load through the projection pipeline with label remapping") {
  // camera matching the scan fixture below
  ProjectionConfig cfg;
  cfg.fx = cfg.fy = 50.0;
  cfg.cx = 4.0;
  cfg.cy = 3.0;
  cfg.width = 8;
  cfg.height = 6;
  cfg.near_plane = 0.1;

  PointCloud cloud;
  cloud.points.emplace_back(0.0, 0.0, 2.0);    // principal pixel (3,4)
  cloud.points.emplace_back(-0.12, -0.08, 2.0);  // u = 4 - 3 = 1, v = 3 - 2 = 1
  cloud.reflectance = {0.25, 0.75};

  const std::string scan = "/tmp/symseg_ext.bin";
  const std::string labels = "/tmp/symseg_ext.label";
  const std::string image = "/tmp/symseg_ext.ppm";
  const std::string map_path = "/tmp/symseg_ext.map";
  write_scan(scan, cloud);
  write_labels(labels, {40, 52});
  write_ppm(image, Eigen::ArrayXd::Constant(3 * 6 * 8, 0.5), 6, 8);
  {
    std::ofstream out(map_path);
    out << "# raw -> taxonomy\n40=3\n52=7\n";
  }

  ProjectedFrame f =
      load_external_frame(scan, labels, image, cfg, read_label_map(map_path));
  CHECK(f.valid(f.pixel(3, 4)));
  CHECK(f.labels(f.pixel(3, 4)) == 3);
  CHECK(f.valid(f.pixel(1, 1)));
  CHECK(f.labels(f.pixel(1, 1)) == 7);
  CHECK(f.color(0) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));

  // unmapped ids drop to ignore
  {
    std::ofstream out(map_path);
    out << "40=3\n";
  }
  ProjectedFrame g = load_external_frame(scan, labels, image, cfg, read_label_map(map_path));
  CHECK(g.labels(g.pixel(1, 1)) == 0);

  // label/point count mismatch is a data error
  write_labels(labels, {40});
  CHECK_THROWS_AS(load_external_frame(scan, labels, image, cfg, {}), DataError);

  // image size mismatch is a data error
  write_labels(labels, {40, 52});
  write_ppm(image, Eigen::ArrayXd::Constant(3 * 4 * 8, 0.5), 4, 8);
  CHECK_THROWS_AS(load_external_frame(scan, labels, image, cfg, {}), DataError);

  // unlabeled loads leave labels at zero
  write_ppm(image, Eigen::ArrayXd::Constant(3 * 6 * 8, 0.5), 6, 8);
  ProjectedFrame u = load_external_frame(scan, "", image, cfg, {});
  CHECK(u.valid(u.pixel(3, 4)));
  CHECK(u.labels.abs().sum() == 0);

  std::remove(scan.c_str());
  std::remove(labels.c_str());
  std::remove(image.c_str());
  std::remove(map_path.c_str());

  CHECK_THROWS_AS(load_external_frame(scan, labels, image, cfg, {}), DataError);
  CHECK_THROWS_AS(read_label_map("/nonexistent/map.txt"), DataError);
}
