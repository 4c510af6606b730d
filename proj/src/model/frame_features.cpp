#include "handformer/model/frame_features.hpp"

#include <algorithm>
#include <cmath>

#include "handformer/error.hpp"
#include "handformer/numerics/rng.hpp"

namespace handformer::features {

Projection project_pose_to_image(std::span<const std::array<double, 3>> points,
                                 const CameraIntrinsics& cam) {
  require(cam.fx > 0 && cam.fy > 0, ErrorCode::kInvalidArgument, "focal lengths must be positive");
  Projection out;
  out.points.reserve(points.size());
  out.valid.reserve(points.size());
  for (const auto& p : points) {
    if (p[2] <= 0.0) {
      out.points.push_back({0.0, 0.0});
      out.valid.push_back(false);
      continue;
    }
    out.points.push_back({cam.fx * p[0] / p[2] + cam.cx, cam.fy * p[1] / p[2] + cam.cy});
    out.valid.push_back(true);
  }
  return out;
}

CropBox compute_hoi_crop(const Projection& projected, double image_width, double image_height) {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t i = 0; i < projected.points.size(); ++i) {
    if (!projected.valid[i]) continue;
    const auto& p = projected.points[i];
    if (!any) {
      x0 = x1 = p[0];
      y0 = y1 = p[1];
      any = true;
      continue;
    }
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  require(any, ErrorCode::kDegenerate, "no valid crop");
  const double cx = 0.5 * (x0 + x1);
  const double cy = 0.5 * (y0 + y1);
  const double half_w = 0.5 * std::max((x1 - x0) * kCropExpansion, kMinCropSide);
  const double half_h = 0.5 * std::max((y1 - y0) * kCropExpansion, kMinCropSide);
  CropBox box{cx - half_w, cy - half_h, cx + half_w, cy + half_h};
  box.x0 = std::clamp(box.x0, 0.0, image_width);
  box.x1 = std::clamp(box.x1, 0.0, image_width);
  box.y0 = std::clamp(box.y0, 0.0, image_height);
  box.y1 = std::clamp(box.y1, 0.0, image_height);
  require(box.x1 > box.x0 && box.y1 > box.y0, ErrorCode::kDegenerate, "no valid crop");
  return box;
}

FrameFeature fuse_full_and_crop(const FrameFeature& full, const std::optional<FrameFeature>& crop) {
  std::vector<double> mean = full.vector;
  if (crop) {
    require(crop->vector.size() == mean.size(), ErrorCode::kShapeMismatch,
            "full and crop features differ in dimension");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = 0.5 * (mean[i] + crop->vector[i]);
  }
  double norm = 0;
  for (double v : mean) norm += v * v;
  norm = std::sqrt(norm);
  require(norm > 0 && std::isfinite(norm), ErrorCode::kDegenerate, "degenerate feature");
  for (double& v : mean) v /= norm;
  return FrameFeature{std::move(mean), full.frame_index, FeatureSource::kFused};
}

std::vector<double> StubFeatureGenerator::center(std::size_t object) const {
  Rng rng(derive_seed(seed_, 0x0b1ec7000ull + object));
  std::vector<double> c(dim_);
  double norm = 0;
  for (double& v : c) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : c) v /= norm;
  return c;
}

std::vector<double> StubFeatureGenerator::feature(std::size_t object, std::uint64_t sample,
                                                  std::size_t frame, FeatureSource source) const {
  std::vector<double> f = center(object);
  if (noise_ == 0.0) return f;
  const std::uint64_t stream =
      derive_seed(derive_seed(sample, frame), source == FeatureSource::kCrop ? 2 : 1);
  Rng rng(derive_seed(seed_, stream));
  for (double& v : f) v += noise_ * rng.normal();
  return f;
}

std::uint64_t sample_key(const std::string& sample_id) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : sample_id) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string list_indices(const pose::FrameFeatureMap& map) {
  std::string out;
  for (const auto& [idx, _] : map) {
    if (!out.empty()) out += ',';
    out += std::to_string(idx);
  }
  return out.empty() ? "none" : out;
}

}  // namespace

FrameFeature FrameFeatureProvider::provide(const pose::SegmentSample& segment,
                                           std::size_t frame_index, FeatureSource source) const {
  const pose::FrameFeatureMap& map =
      source == FeatureSource::kCrop ? segment.crop_features : segment.frame_features;
  if (mode_ == Mode::kStub) {
    // The stub serves any frame the segment declares, so a missing index is
    // still reported the same way as in file mode.
    require(map.empty() || map.count(frame_index), ErrorCode::kMissingFeature,
            "segment " + segment.id + " has no feature for frame " + std::to_string(frame_index) +
                "; available: " + list_indices(map));
    return FrameFeature{generator_->feature(segment.labels.object, sample_key(segment.id),
                                            frame_index, source),
                        frame_index, source};
  }
  auto it = map.find(frame_index);
  require(it != map.end(), ErrorCode::kMissingFeature,
          "segment " + segment.id + " has no feature for frame " + std::to_string(frame_index) +
              "; available: " + list_indices(map));
  return FrameFeature{it->second, frame_index, source};
}

FrameFeature FrameFeatureProvider::provide_fused(const pose::SegmentSample& segment,
                                                 std::size_t frame_index) const {
  const FrameFeature full = provide(segment, frame_index, FeatureSource::kFull);
  std::optional<FrameFeature> crop;
  if (segment.crop_features.count(frame_index)) {
    crop = provide(segment, frame_index, FeatureSource::kCrop);
  }
  return fuse_full_and_crop(full, crop);
}

}  // namespace handformer::features
