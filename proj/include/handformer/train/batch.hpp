#pragma once

#include <string>
#include <vector>

#include "handformer/model/frame_features.hpp"
#include "handformer/model/handformer.hpp"
#include "handformer/pose/segment.hpp"

namespace handformer::train {

// Model-ready view of one segment, in double precision.
struct PreparedSample {
  std::string id;
  pose::ActionLabels labels;
  std::vector<double> joints;  // [K, 2J, C, N]
  std::vector<double> wrist;   // [12, T'], channels (hand, translation xyz, axis-angle xyz)
  std::vector<double> rgb;     // [K, d_f], empty in pose-only mode
  std::vector<std::size_t> rgb_frames;  // h(k) per micro-action
};

// Fills missing hands, interpolates to T', derives wrist 6D from the input
// joints, keeps the configured joint subset, optionally subtracts the wrist,
// factorizes into micro-actions and gathers fused frame features.
PreparedSample prepare_sample(const pose::SegmentSample& segment, const model::ModelConfig& cfg,
                              const features::FrameFeatureProvider* provider);

std::vector<PreparedSample> prepare_samples(const std::vector<pose::SegmentSample>& segments,
                                            const model::ModelConfig& cfg,
                                            const features::FrameFeatureProvider* provider,
                                            std::size_t threads = 1);

template <typename T>
model::ModelBatch<T> make_batch(const std::vector<const PreparedSample*>& samples,
                                const model::ModelConfig& cfg);

struct BatchLabels {
  std::vector<std::size_t> action, verb, object;
};
BatchLabels batch_labels(const std::vector<const PreparedSample*>& samples);

}  // namespace handformer::train
