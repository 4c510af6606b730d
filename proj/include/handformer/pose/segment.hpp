#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "handformer/pose/pose_sequence.hpp"

namespace handformer::pose {

// Sparse frame index -> feature vector.
using FrameFeatureMap = std::map<std::size_t, std::vector<double>>;

// Compositional label space: action = verb * objects + object.
struct LabelSpace {
  std::size_t verbs = 0;
  std::size_t objects = 0;

  std::size_t actions() const { return verbs * objects; }
  std::size_t compose(std::size_t verb, std::size_t object) const { return verb * objects + object; }
  std::size_t verb_of(std::size_t action) const { return action / objects; }
  std::size_t object_of(std::size_t action) const { return action % objects; }
};

struct ActionLabels {
  std::size_t action = 0;
  std::size_t verb = 0;
  std::size_t object = 0;
};

struct SegmentSample {
  std::string id;
  PoseSequence pose;
  FrameFeatureMap frame_features;  // full-frame features
  FrameFeatureMap crop_features;   // hand-object crop features, where a crop exists
  ActionLabels labels;
};

struct Dataset {
  LabelSpace label_space;
  std::vector<SegmentSample> samples;
};

// Throws unless labels fit the label space and action == compose(verb, object).
void validate_labels(const ActionLabels& labels, const LabelSpace& space);

}  // namespace handformer::pose
