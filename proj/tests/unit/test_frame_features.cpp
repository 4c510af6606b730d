#include <doctest.h>

#include <cmath>

#include "handformer/error.hpp"
#include "handformer/model/frame_features.hpp"
#include "handformer/numerics/rng.hpp"
#include "handformer/pose/files.hpp"

using handformer::Error;
using handformer::Rng;
using namespace handformer::features;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Projection points2d(std::initializer_list<std::array<double, 2>> pts) {
  Projection p;
  for (const auto& q : pts) {
    p.points.push_back(q);
    p.valid.push_back(true);
  }
  return p;
}

handformer::pose::SegmentSample segment_with_frames(std::size_t object) {
  handformer::pose::SegmentSample s;
  s.id = "seg";
  s.labels = {object, 0, object};
  s.frame_features[0] = {1.0, 0.0};
  s.frame_features[6] = {0.0, 2.0};
  return s;
}

}  // namespace

TEST_SUITE("frame_features") {
  TEST_CASE("pinhole projection") {
    CameraIntrinsics unit{1, 1, 0, 0, 10, 10};
    std::array<double, 3> origin_axis[] = {{0, 0, 1}};
    auto p = project_pose_to_image(origin_axis, unit);
    CHECK(p.points[0][0] == 0.0);
    CHECK(p.points[0][1] == 0.0);
    CameraIntrinsics cam{100, 100, 50, 50, 640, 480};
    std::array<double, 3> pt[] = {{1, 2, 2}, {0, 0, -1}};
    p = project_pose_to_image(pt, cam);
    CHECK(p.points[0][0] == 100.0);
    CHECK(p.points[0][1] == 150.0);
    CHECK(p.valid[0]);
    CHECK_FALSE(p.valid[1]);
  }

  TEST_CASE("projection matches a per-point formula on a random cloud") {
    Rng rng(3);
    CameraIntrinsics cam{480, 510, 321, 239, 640, 480};
    std::vector<std::array<double, 3>> cloud;
    for (int i = 0; i < 50; ++i) cloud.push_back({rng.normal(), rng.normal(), rng.uniform(0.1, 2.0)});
    auto p = project_pose_to_image(cloud, cam);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      CHECK(std::abs(p.points[i][0] - (480 * cloud[i][0] / cloud[i][2] + 321)) < 1e-12);
      CHECK(std::abs(p.points[i][1] - (510 * cloud[i][1] / cloud[i][2] + 239)) < 1e-12);
    }
  }

  TEST_CASE("crop expands by a quarter about its center") {
    auto box = compute_hoi_crop(points2d({{10, 10}, {30, 30}, {20, 15}}), 1000, 1000);
    CHECK(box.x0 == 7.5);
    CHECK(box.y0 == 7.5);
    CHECK(box.x1 == 32.5);
    CHECK(box.y1 == 32.5);
  }

  TEST_CASE("single point gives the minimum box") {
    auto box = compute_hoi_crop(points2d({{50, 60}}), 640, 480);
    CHECK(box.x0 == 46.0);
    CHECK(box.x1 == 54.0);
    CHECK(box.y0 == 56.0);
    CHECK(box.y1 == 64.0);
  }

  TEST_CASE("crop is clamped to the image") {
    auto box = compute_hoi_crop(points2d({{1, 1}, {639, 470}}), 640, 480);
    CHECK(box.x0 == 0.0);
    CHECK(box.y0 == 0.0);
    CHECK(box.x1 == 640.0);
    CHECK(box.y1 == 480.0);
  }

  TEST_CASE("crop without valid points is an error") {
    Projection p;
    p.points.push_back({1, 1});
    p.valid.push_back(false);
    CHECK_THROWS_WITH_AS(compute_hoi_crop(p, 640, 480), "no valid crop", Error);
  }

  TEST_CASE("crop is translation-equivariant away from the borders") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      Projection p;
      for (int i = 0; i < 6; ++i) {
        p.points.push_back({rng.uniform(200, 300), rng.uniform(200, 300)});
        p.valid.push_back(true);
      }
      const double dx = std::round(rng.uniform(-50, 50)), dy = std::round(rng.uniform(-50, 50));
      Projection q = p;
      for (auto& pt : q.points) {
        pt[0] += dx;
        pt[1] += dy;
      }
      auto a = compute_hoi_crop(p, 1000, 1000);
      auto b = compute_hoi_crop(q, 1000, 1000);
      CHECK(b.x0 == doctest::Approx(a.x0 + dx).epsilon(1e-12));
      CHECK(b.y1 == doctest::Approx(a.y1 + dy).epsilon(1e-12));
    }
  }

  TEST_CASE("fusion averages and normalizes") {
    FrameFeature v{{3.0, 4.0}, 2, FeatureSource::kFull};
    auto same = fuse_full_and_crop(v, FrameFeature{{3.0, 4.0}, 2, FeatureSource::kCrop});
    CHECK(same.vector[0] == doctest::Approx(0.6));
    CHECK(same.vector[1] == doctest::Approx(0.8));
    CHECK(same.source == FeatureSource::kFused);
    auto alone = fuse_full_and_crop(v, std::nullopt);
    CHECK(alone.vector == same.vector);
    auto mixed = fuse_full_and_crop(FrameFeature{{1, 0}}, FrameFeature{{0, 1}});
    CHECK(mixed.vector[0] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(mixed.vector[1] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_WITH_AS(fuse_full_and_crop(FrameFeature{{1, -1}}, FrameFeature{{-1, 1}}),
                         "degenerate feature", Error);
    CHECK_THROWS_AS(fuse_full_and_crop(FrameFeature{{1, 0}}, FrameFeature{{1, 0, 0}}), Error);
  }

  TEST_CASE("fused features have unit norm") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      FrameFeature a, b;
      for (int i = 0; i < 16; ++i) {
        a.vector.push_back(rng.normal() * 100);
        b.vector.push_back(rng.normal() * 1e-3);
      }
      CHECK(std::abs(norm(fuse_full_and_crop(a, b).vector) - 1.0) < 1e-6);
      CHECK(std::abs(norm(fuse_full_and_crop(b, std::nullopt).vector) - 1.0) < 1e-6);
    }
  }

  TEST_CASE("file-mode provider returns stored vectors and lists missing indices") {
    auto seg = segment_with_frames(0);
    auto provider = FrameFeatureProvider::from_files();
    handformer::pose::FeatureFile file{2, seg.frame_features};
    seg.frame_features = handformer::pose::parse_feature_file(handformer::pose::format_feature_file(file)).features;
    CHECK(provider.provide(seg, 6).vector == std::vector<double>{0.0, 2.0});
    CHECK(provider.provide(seg, 6).vector == provider.provide(seg, 6).vector);
    CHECK_THROWS_WITH_AS(provider.provide(seg, 3), doctest::Contains("available: 0,6"), Error);
  }

  TEST_CASE("stub provider is deterministic and cluster-centered") {
    StubFeatureGenerator gen(8, 0.0, 11);
    auto provider = FrameFeatureProvider::from_stub(gen);
    auto a = segment_with_frames(1);
    auto b = segment_with_frames(2);
    const auto fa = provider.provide(a, 0).vector;
    CHECK(fa == provider.provide(a, 0).vector);
    CHECK(fa == gen.center(1));
    CHECK(std::abs(norm(fa) - 1.0) < 1e-12);
    const auto fb = provider.provide(b, 6).vector;
    const auto ca = gen.center(1), cb = gen.center(2);
    double d_feat = 0, d_center = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      d_feat += (fa[i] - fb[i]) * (fa[i] - fb[i]);
      d_center += (ca[i] - cb[i]) * (ca[i] - cb[i]);
    }
    CHECK(d_feat == doctest::Approx(d_center).epsilon(1e-12));
    CHECK(d_center > 0.1);
  }

  TEST_CASE("stub noise differs between full and crop streams") {
    StubFeatureGenerator gen(8, 0.1, 11);
    const auto full = gen.feature(0, 99, 6, FeatureSource::kFull);
    const auto crop = gen.feature(0, 99, 6, FeatureSource::kCrop);
    CHECK(full != crop);
    CHECK(full == gen.feature(0, 99, 6, FeatureSource::kFull));
  }
}
