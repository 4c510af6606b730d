#pragma once

#include <cstdint>
#include <string>

#include "handformer/model/frame_features.hpp"
#include "handformer/pose/segment.hpp"

namespace handformer::pose {

// Verb families cycle every kVerbFamilies classes; later cycles run faster.
inline constexpr std::size_t kVerbFamilies = 8;

struct SyntheticSpec {
  std::size_t verbs = 8;
  std::size_t objects = 4;
  std::size_t per_class = 50;
  double noise = 0.05;
  std::uint64_t seed = 7;
  std::size_t frames = 90;
  double fps = 60.0;
  std::size_t feature_dim = 32;
  std::size_t feature_stride = 6;  // one sparse frame feature every this many frames
  double feature_noise = 0.05;
  features::CameraIntrinsics camera;
};

const char* verb_family_name(std::size_t verb);

// Largest random time offset (frames) applied to a sample.
std::size_t max_time_shift(const SyntheticSpec& spec);

// Noise-free motion of `verb` over `frames` frames starting at time 0.
PoseSequence verb_prototype(const SyntheticSpec& spec, std::size_t verb, std::size_t frames);

std::string synthetic_sample_id(std::size_t index);

// Sample `index` (0-based within its class) of the (verb, object) class.
SegmentSample generate_sample(const SyntheticSpec& spec, std::size_t verb, std::size_t object,
                              std::size_t index);

// Samples ordered by action, then index. `threads` only affects speed.
Dataset generate_synthetic_dataset(const SyntheticSpec& spec, std::size_t threads = 1);

}  // namespace handformer::pose
