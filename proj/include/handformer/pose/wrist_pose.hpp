#pragma once

#include <Eigen/Geometry>
#include <optional>
#include <vector>

#include "handformer/pose/pose_sequence.hpp"

namespace handformer::pose {

// Per frame and hand: wrist translation (3) then axis-angle orientation (3),
// laid out [frames x 2 x 6].
struct Wrist6dSequence {
  std::size_t frames = 0;
  std::vector<double> values;

  const double* at(std::size_t frame, std::size_t hand) const { return values.data() + (frame * kHands + hand) * 6; }
  double* at(std::size_t frame, std::size_t hand) { return values.data() + (frame * kHands + hand) * 6; }
};

// Orthonormal palm frame: x = wrist->index, z = x cross (wrist->pinky), y = z cross x.
// Returns nullopt when the three points are (nearly) collinear.
std::optional<Eigen::Matrix3d> palm_frame(const Eigen::Vector3d& wrist, const Eigen::Vector3d& index,
                                          const Eigen::Vector3d& pinky);

Eigen::Vector3d rotation_to_axis_angle(const Eigen::Matrix3d& rotation);
Eigen::Matrix3d axis_angle_to_rotation(const Eigen::Vector3d& axis_angle);

// Needs 3-D coordinates and a layout with palm reference joints. A degenerate
// palm reuses the previous frame's orientation (zero on the first frame).
Wrist6dSequence derive_wrist_6d(const PoseSequence& seq);

}  // namespace handformer::pose
