#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "handformer/pose/pose_sequence.hpp"

namespace handformer::analysis {

using Point3 = std::array<double, 3>;

// A generic skeleton track: `joints` points per frame, frame-major.
struct SkeletonClip {
  std::string id;
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<Point3> points;

  const Point3& at(std::size_t frame, std::size_t joint) const { return points[frame * joints + joint]; }
  Point3& at(std::size_t frame, std::size_t joint) { return points[frame * joints + joint]; }
};

// One hand of a pose sequence as a clip (3-D input only).
SkeletonClip clip_from_hand(const pose::PoseSequence& seq, std::size_t hand, std::string id);

// d_j(t) = |P_j(t) - P_j(t-1)| for t = 1..T-1.
std::vector<double> joint_distance_series(const SkeletonClip& clip, std::size_t joint);

struct ActivityExtremes {
  std::size_t j_sta = 0;  // argmin of D_j, lowest index on ties
  std::size_t j_dyn = 0;  // argmax of D_j, lowest index on ties
  std::vector<double> totals;  // D_j
};
ActivityExtremes activity_extremes(const SkeletonClip& clip);

// Sample correlation, clipped to [-1, 1]. Throws "undefined correlation" when
// either input has zero variance.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

// Largest pairwise joint distance in the first frame.
double skeleton_diameter(const SkeletonClip& clip);

struct ActivityProfile {
  std::string clip_id;
  std::vector<std::vector<double>> distance_series;  // [joint][t]
  std::vector<double> totals;
  std::size_t j_sta = 0, j_dyn = 0;
  double r = 0;
  double diameter = 0;
};
ActivityProfile activity_profile(const SkeletonClip& clip);

// Profiles in clip-id order, computed on up to `threads` workers.
std::vector<ActivityProfile> activity_profiles(const std::vector<SkeletonClip>& clips,
                                               std::size_t threads = 1);

// clip_id,t,d_sta_norm,d_dyn_norm with distances divided by the diameter.
void export_profile_csv(const std::vector<ActivityProfile>& profiles, const std::filesystem::path& path);
// clip_id,j_sta,j_dyn,r,diameter
void export_summary_csv(const std::vector<ActivityProfile>& profiles, const std::filesystem::path& path);

// `count` distinct indices from [0, total), sorted; all of them when count >= total.
std::vector<std::size_t> seeded_sample(std::size_t total, std::size_t count, std::uint64_t seed);

// Rigid two-finger-span hand (21 joints) moving along a smooth random path
// with a varying speed, plus small per-joint articulation.
SkeletonClip synthetic_hand_clip(std::uint64_t seed, std::size_t frames = 120);
// Body-like skeleton (25 joints): one joint pinned up to sensor noise and
// limbs swinging with independent phases and amplitudes.
SkeletonClip synthetic_body_clip(std::uint64_t seed, std::size_t frames = 120);

}  // namespace handformer::analysis
