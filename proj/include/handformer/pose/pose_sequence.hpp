#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace handformer::pose {

inline constexpr std::size_t kHands = 2;
inline constexpr std::size_t kFullJoints = 21;

// Named joint ordering for one hand, wrist first. `source` maps each joint to
// its index in the 21-joint layout (wrist, thumb 1-4, index 5-8, middle 9-12,
// ring 13-16, pinky 17-20).
struct JointLayout {
  std::vector<std::string> names;
  std::vector<std::size_t> source;
  std::size_t wrist = 0;
  // Positions within this layout of the joints spanning the palm triad.
  std::optional<std::size_t> index_ref;
  std::optional<std::size_t> pinky_ref;

  std::size_t size() const { return names.size(); }

  static JointLayout full();
  // 21: all joints; 11: wrist, thumb 2-4, index 5-8, middle/ring/pinky tips;
  // 6: wrist and fingertips; fewer: a prefix of the 6-joint layout.
  static JointLayout for_count(std::size_t joints);
};

// Time-major two-hand joint coordinates, frames x hands x joints x coords.
class PoseSequence {
 public:
  PoseSequence() = default;
  PoseSequence(std::size_t frames, std::size_t joints, std::size_t coords, double fps);
  PoseSequence(std::size_t frames, JointLayout layout, std::size_t coords, double fps);

  std::size_t frames() const { return frames_; }
  std::size_t joints() const { return layout_.size(); }
  std::size_t coords() const { return coords_; }
  double fps() const { return fps_; }
  const JointLayout& layout() const { return layout_; }
  std::size_t frame_stride() const { return kHands * joints() * coords_; }

  double& at(std::size_t frame, std::size_t hand, std::size_t joint, std::size_t coord) {
    return values_[index(frame, hand, joint, coord)];
  }
  double at(std::size_t frame, std::size_t hand, std::size_t joint, std::size_t coord) const {
    return values_[index(frame, hand, joint, coord)];
  }
  const double* frame_data(std::size_t frame) const { return values_.data() + frame * frame_stride(); }
  double* frame_data(std::size_t frame) { return values_.data() + frame * frame_stride(); }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // Hands never observed in the source (see fill_missing_hands).
  std::array<bool, kHands> hand_observed{true, true};

  friend bool operator==(const PoseSequence& a, const PoseSequence& b) {
    return a.frames_ == b.frames_ && a.coords_ == b.coords_ && a.fps_ == b.fps_ &&
           a.layout_.size() == b.layout_.size() && a.values_ == b.values_;
  }

 private:
  std::size_t index(std::size_t frame, std::size_t hand, std::size_t joint, std::size_t coord) const {
    return ((frame * kHands + hand) * joints() + joint) * coords_ + coord;
  }

  std::size_t frames_ = 0;
  std::size_t coords_ = 3;
  double fps_ = 60.0;
  JointLayout layout_;
  std::vector<double> values_;
};

// POSE v1 text format; values written in shortest round-trip form.
PoseSequence load_pose_sequence(const std::filesystem::path& path);
PoseSequence parse_pose_sequence(const std::string& text);
void save_pose_sequence(const PoseSequence& seq, const std::filesystem::path& path);
std::string format_pose_sequence(const PoseSequence& seq);

// Linear resampling of every coordinate channel at t' (T - 1) / (T' - 1).
PoseSequence interpolate_sequence(const PoseSequence& seq, std::size_t target_frames);

// Keeps the joints of `layout`, whose `source` indexes into seq's joints. The
// result's layout maps back to the 21-joint numbering.
PoseSequence select_joints(const PoseSequence& seq, const JointLayout& layout);

// Subtracts each hand's wrist position from all of its joints, per frame.
PoseSequence make_wrist_relative(const PoseSequence& seq);

// A hand whose coordinates are all zero in a frame is treated as missing and
// carried forward from its last valid frame; leading gaps take the first valid
// frame. A hand never observed stays zero and is flagged in hand_observed.
PoseSequence fill_missing_hands(const PoseSequence& seq);

}  // namespace handformer::pose
