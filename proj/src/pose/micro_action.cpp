#include "handformer/pose/micro_action.hpp"

#include <algorithm>
#include <cmath>

#include "handformer/error.hpp"

namespace handformer::pose {

FactorizationPlan plan_factorization(std::size_t total_frames, std::size_t frames_per_action,
                                     std::size_t stride) {
  require(frames_per_action >= 1 && stride >= 1, ErrorCode::kInvalidArgument,
          "micro-action length and stride must be positive");
  const auto incompatible = [&] {
    fail(ErrorCode::kIncompatibleFactorization,
         "incompatible factorization: no integer K satisfies (K-1)*" + std::to_string(stride) +
             " + " + std::to_string(frames_per_action) + " = " + std::to_string(total_frames));
  };
  if (total_frames < frames_per_action) incompatible();
  const std::size_t span = total_frames - frames_per_action;
  if (span % stride != 0) incompatible();
  return FactorizationPlan{frames_per_action, stride, span / stride + 1};
}

std::size_t nearest_available_frame(std::span<const std::size_t> available, double position) {
  require(!available.empty(), ErrorCode::kMissingFeature, "no frame features available");
  std::size_t best = available[0];
  double best_distance = std::abs(static_cast<double>(best) - position);
  for (std::size_t idx : available.subspan(1)) {
    const double distance = std::abs(static_cast<double>(idx) - position);
    if (distance < best_distance || (distance == best_distance && idx < best)) {
      best = idx;
      best_distance = distance;
    }
  }
  return best;
}

std::vector<MicroAction> factorize_micro_actions(const PoseSequence& seq,
                                                 std::span<const std::size_t> available,
                                                 std::size_t frames_per_action, std::size_t stride,
                                                 bool require_features,
                                                 std::optional<std::size_t> source_frames) {
  const FactorizationPlan plan = plan_factorization(seq.frames(), frames_per_action, stride);
  if (require_features) {
    require(!available.empty(), ErrorCode::kMissingFeature,
            "multimodal factorization needs a non-empty frame feature map");
  }
  const std::size_t source = source_frames.value_or(seq.frames());
  require(source >= 1, ErrorCode::kInvalidArgument, "feature timeline must have frames");
  const double to_source = seq.frames() > 1 ? static_cast<double>(source - 1) /
                                                  static_cast<double>(seq.frames() - 1)
                                            : 0.0;
  const std::size_t frame_values = seq.frame_stride();
  std::vector<MicroAction> blocks;
  blocks.reserve(plan.count);
  for (std::size_t k = 1; k <= plan.count; ++k) {
    MicroAction block;
    block.block_index = k;
    block.start_frame = plan.first_pose_frame(k) - 1;
    const double* begin = seq.frame_data(block.start_frame);
    block.pose_block.assign(begin, begin + frames_per_action * frame_values);
    if (!available.empty()) {
      const double position =
          source == seq.frames() ? static_cast<double>(block.start_frame)
                                 : static_cast<double>(block.start_frame) * to_source;
      block.rgb_frame_index = nearest_available_frame(available, position);
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

}  // namespace handformer::pose
