#include "handformer/pose/wrist_pose.hpp"

#include <cmath>

#include "handformer/error.hpp"

namespace handformer::pose {

namespace {
constexpr double kDegenerateNorm = 1e-9;
}

std::optional<Eigen::Matrix3d> palm_frame(const Eigen::Vector3d& wrist, const Eigen::Vector3d& index,
                                          const Eigen::Vector3d& pinky) {
  const Eigen::Vector3d to_index = index - wrist;
  const Eigen::Vector3d to_pinky = pinky - wrist;
  if (to_index.norm() < kDegenerateNorm) return std::nullopt;
  const Eigen::Vector3d x = to_index.normalized();
  const Eigen::Vector3d normal = x.cross(to_pinky);
  if (normal.norm() < kDegenerateNorm * std::max(1.0, to_pinky.norm())) return std::nullopt;
  const Eigen::Vector3d z = normal.normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d frame;
  frame.col(0) = x;
  frame.col(1) = y;
  frame.col(2) = z;
  return frame;
}

Eigen::Vector3d rotation_to_axis_angle(const Eigen::Matrix3d& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  if (aa.angle() == 0.0) return Eigen::Vector3d::Zero();
  return aa.axis() * aa.angle();
}

Eigen::Matrix3d axis_angle_to_rotation(const Eigen::Vector3d& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Wrist6dSequence derive_wrist_6d(const PoseSequence& seq) {
  require(seq.coords() == 3, ErrorCode::kInvalidArgument, "6D wrist pose needs 3-D coordinates");
  const JointLayout& layout = seq.layout();
  require(layout.index_ref.has_value() && layout.pinky_ref.has_value(), ErrorCode::kInvalidArgument,
          "joint layout lacks the palm reference joints needed for hand orientation");
  Wrist6dSequence out;
  out.frames = seq.frames();
  out.values.assign(seq.frames() * kHands * 6, 0.0);
  auto joint = [&](std::size_t t, std::size_t h, std::size_t j) {
    return Eigen::Vector3d(seq.at(t, h, j, 0), seq.at(t, h, j, 1), seq.at(t, h, j, 2));
  };
  for (std::size_t h = 0; h < kHands; ++h) {
    Eigen::Vector3d previous = Eigen::Vector3d::Zero();
    for (std::size_t t = 0; t < seq.frames(); ++t) {
      const Eigen::Vector3d wrist = joint(t, h, layout.wrist);
      const auto frame = palm_frame(wrist, joint(t, h, *layout.index_ref), joint(t, h, *layout.pinky_ref));
      const Eigen::Vector3d orientation = frame ? rotation_to_axis_angle(*frame) : previous;
      previous = orientation;
      double* dst = out.at(t, h);
      for (int c = 0; c < 3; ++c) {
        dst[c] = wrist[c];
        dst[3 + c] = orientation[c];
      }
    }
  }
  return out;
}

}  // namespace handformer::pose
