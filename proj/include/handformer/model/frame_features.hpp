#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "handformer/pose/segment.hpp"

namespace handformer::features {

enum class FeatureSource { kFull, kCrop, kFused };

struct FrameFeature {
  std::vector<double> vector;
  std::size_t frame_index = 0;
  FeatureSource source = FeatureSource::kFull;
};

struct CameraIntrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  double width = 640.0;
  double height = 480.0;
};

struct Projection {
  std::vector<std::array<double, 2>> points;
  std::vector<bool> valid;  // false where z <= 0
};

struct CropBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

inline constexpr double kCropExpansion = 1.25;
inline constexpr double kMinCropSide = 8.0;

// Pinhole projection (fx x / z + cx, fy y / z + cy).
Projection project_pose_to_image(std::span<const std::array<double, 3>> points,
                                 const CameraIntrinsics& cam);

// Enclosing rectangle of the valid points, each side scaled 1.25x about its
// center, widened to at least 8 px, then clamped to the image.
CropBox compute_hoi_crop(const Projection& projected, double image_width, double image_height);

// Mean of full and crop (or full alone) rescaled to unit norm.
FrameFeature fuse_full_and_crop(const FrameFeature& full, const std::optional<FrameFeature>& crop);

// Deterministic synthetic frame encoder: each object class owns a unit-norm
// cluster center; a feature is that center plus seeded Gaussian noise.
class StubFeatureGenerator {
 public:
  StubFeatureGenerator(std::size_t dim, double noise, std::uint64_t seed)
      : dim_(dim), noise_(noise), seed_(seed) {}

  std::size_t dim() const { return dim_; }
  std::vector<double> center(std::size_t object) const;
  std::vector<double> feature(std::size_t object, std::uint64_t sample_key, std::size_t frame,
                              FeatureSource source) const;

 private:
  std::size_t dim_;
  double noise_;
  std::uint64_t seed_;
};

// Frozen source of raw per-frame features: either the maps loaded from FEAT
// files into a segment, or the stub generator keyed on the segment's object.
class FrameFeatureProvider {
 public:
  enum class Mode { kFile, kStub };

  static FrameFeatureProvider from_files() { return FrameFeatureProvider(Mode::kFile, std::nullopt); }
  static FrameFeatureProvider from_stub(StubFeatureGenerator generator) {
    return FrameFeatureProvider(Mode::kStub, std::move(generator));
  }

  Mode mode() const { return mode_; }
  FrameFeature provide(const pose::SegmentSample& segment, std::size_t frame_index,
                       FeatureSource source = FeatureSource::kFull) const;
  // Full-frame feature fused with the crop feature when one exists.
  FrameFeature provide_fused(const pose::SegmentSample& segment, std::size_t frame_index) const;

 private:
  FrameFeatureProvider(Mode mode, std::optional<StubFeatureGenerator> generator)
      : mode_(mode), generator_(std::move(generator)) {}

  Mode mode_;
  std::optional<StubFeatureGenerator> generator_;
};

std::uint64_t sample_key(const std::string& sample_id);

}  // namespace handformer::features
