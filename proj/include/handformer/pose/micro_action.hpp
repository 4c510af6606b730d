#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "handformer/pose/pose_sequence.hpp"

namespace handformer::pose {

// K windows of N frames with stride R over T' = (K - 1) R + N frames.
struct FactorizationPlan {
  std::size_t frames_per_action = 15;  // N
  std::size_t stride = 15;             // R
  std::size_t count = 8;               // K

  std::size_t total_frames() const { return (count - 1) * stride + frames_per_action; }
  // g(k) = (k - 1) R + 1, 1-based for 1-based k.
  std::size_t first_pose_frame(std::size_t k) const { return (k - 1) * stride + 1; }
};

// Solves (K - 1) R + N = total_frames for integer K >= 1.
FactorizationPlan plan_factorization(std::size_t total_frames, std::size_t frames_per_action,
                                     std::size_t stride);

struct MicroAction {
  std::size_t block_index = 1;   // k, 1-based
  std::size_t start_frame = 0;   // g(k) - 1
  std::vector<double> pose_block;  // [N x 2 x J x C]
  std::optional<std::size_t> rgb_frame_index;  // h(k), in the feature timeline
};

// Index in `available` (sorted ascending) closest to `position`; ties go to
// the earlier frame.
std::size_t nearest_available_frame(std::span<const std::size_t> available, double position);

// Splits `seq` into micro-actions. Feature indices live on a timeline of
// `source_frames` frames (the pre-interpolation length; defaults to seq's),
// onto which g(k) is mapped linearly before the nearest-frame lookup. With
// `require_features` an empty `available` is an error; otherwise blocks carry
// no frame index when none are available.
std::vector<MicroAction> factorize_micro_actions(const PoseSequence& seq,
                                                 std::span<const std::size_t> available,
                                                 std::size_t frames_per_action, std::size_t stride,
                                                 bool require_features,
                                                 std::optional<std::size_t> source_frames = std::nullopt);

}  // namespace handformer::pose
