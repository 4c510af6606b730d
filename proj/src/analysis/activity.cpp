#include "handformer/analysis/activity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <numeric>
#include <thread>

#include "handformer/error.hpp"
#include "handformer/numerics/rng.hpp"

namespace handformer::analysis {

namespace {

double distance(const Point3& a, const Point3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

void require_frames(const SkeletonClip& clip) {
  require(clip.frames >= 2, ErrorCode::kInvalidArgument,
          "clip '" + clip.id + "' needs at least two frames");
  require(clip.joints >= 1 && clip.points.size() == clip.frames * clip.joints, ErrorCode::kExtentMismatch,
          "clip '" + clip.id + "' point count does not match frames x joints");
}

// Rotation of v by angle about a unit axis (Rodrigues).
Point3 rotate(const Point3& v, const Point3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
  const Point3 cross{axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2],
                     axis[0] * v[1] - axis[1] * v[0]};
  Point3 out;
  for (int i = 0; i < 3; ++i) out[i] = v[i] * c + cross[i] * s + axis[i] * dot * (1 - c);
  return out;
}

Point3 random_unit(Rng& rng) {
  Point3 a{rng.normal(), rng.normal(), rng.normal()};
  const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  for (double& v : a) v /= n;
  return a;
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

SkeletonClip clip_from_hand(const pose::PoseSequence& seq, std::size_t hand, std::string id) {
  require(seq.coords() == 3, ErrorCode::kInvalidArgument, "activity analysis needs 3-D poses");
  require(hand < pose::kHands, ErrorCode::kInvalidArgument, "hand index out of range");
  SkeletonClip clip{std::move(id), seq.frames(), seq.joints(), {}};
  clip.points.reserve(clip.frames * clip.joints);
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t j = 0; j < seq.joints(); ++j) {
      clip.points.push_back({seq.at(t, hand, j, 0), seq.at(t, hand, j, 1), seq.at(t, hand, j, 2)});
    }
  }
  return clip;
}

std::vector<double> joint_distance_series(const SkeletonClip& clip, std::size_t joint) {
  require_frames(clip);
  require(joint < clip.joints, ErrorCode::kInvalidArgument, "joint index out of range");
  std::vector<double> d(clip.frames - 1);
  for (std::size_t t = 1; t < clip.frames; ++t) d[t - 1] = distance(clip.at(t, joint), clip.at(t - 1, joint));
  return d;
}

ActivityExtremes activity_extremes(const SkeletonClip& clip) {
  require_frames(clip);
  ActivityExtremes e;
  e.totals.resize(clip.joints);
  for (std::size_t j = 0; j < clip.joints; ++j) {
    const auto d = joint_distance_series(clip, j);
    e.totals[j] = std::accumulate(d.begin(), d.end(), 0.0);
  }
  // min_element and max_element return the first extremum, i.e. the lowest index.
  e.j_sta = static_cast<std::size_t>(std::min_element(e.totals.begin(), e.totals.end()) - e.totals.begin());
  e.j_dyn = static_cast<std::size_t>(std::max_element(e.totals.begin(), e.totals.end()) - e.totals.begin());
  return e;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::kInvalidArgument,
          "pearson_r needs two series of equal length >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0 && syy > 0, ErrorCode::kDegenerate, "undefined correlation: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double skeleton_diameter(const SkeletonClip& clip) {
  require(clip.frames >= 1 && clip.points.size() >= clip.joints, ErrorCode::kInvalidArgument,
          "clip '" + clip.id + "' has no frames");
  double best = 0;
  for (std::size_t a = 0; a < clip.joints; ++a) {
    for (std::size_t b = a + 1; b < clip.joints; ++b) best = std::max(best, distance(clip.at(0, a), clip.at(0, b)));
  }
  return best;
}

ActivityProfile activity_profile(const SkeletonClip& clip) {
  const ActivityExtremes e = activity_extremes(clip);
  ActivityProfile p;
  p.clip_id = clip.id;
  for (std::size_t j = 0; j < clip.joints; ++j) p.distance_series.push_back(joint_distance_series(clip, j));
  p.totals = e.totals;
  p.j_sta = e.j_sta;
  p.j_dyn = e.j_dyn;
  p.r = pearson_r(p.distance_series[p.j_sta], p.distance_series[p.j_dyn]);
  p.diameter = skeleton_diameter(clip);
  return p;
}

std::vector<ActivityProfile> activity_profiles(const std::vector<SkeletonClip>& clips, std::size_t threads) {
  std::vector<ActivityProfile> out(clips.size());
  std::vector<std::exception_ptr> errors(clips.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, clips.size()));
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < clips.size(); i += workers) {
      try {
        out[i] = activity_profile(clips[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ActivityProfile& a, const ActivityProfile& b) { return a.clip_id < b.clip_id; });
  return out;
}

void export_profile_csv(const std::vector<ActivityProfile>& profiles, const std::filesystem::path& path) {
  require(!profiles.empty(), ErrorCode::kInvalidArgument, "no profiles to export");
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << "clip_id,t,d_sta_norm,d_dyn_norm\n";
  for (const ActivityProfile& p : profiles) {
    require(p.diameter > 0, ErrorCode::kDegenerate, "clip '" + p.clip_id + "' has zero diameter");
    const auto& sta = p.distance_series[p.j_sta];
    const auto& dyn = p.distance_series[p.j_dyn];
    for (std::size_t t = 0; t < sta.size(); ++t) {
      out << p.clip_id << "," << t + 1 << "," << real(sta[t] / p.diameter) << ","
          << real(dyn[t] / p.diameter) << "\n";
    }
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

void export_summary_csv(const std::vector<ActivityProfile>& profiles, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << "clip_id,j_sta,j_dyn,r,diameter\n";
  for (const ActivityProfile& p : profiles) {
    out << p.clip_id << "," << p.j_sta << "," << p.j_dyn << "," << real(p.r) << "," << real(p.diameter) << "\n";
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

std::vector<std::size_t> seeded_sample(std::size_t total, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  if (count >= total) return idx;
  Rng rng(derive_seed(seed, 0xa11a));
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SkeletonClip synthetic_hand_clip(std::uint64_t seed, std::size_t frames) {
  Rng rng(derive_seed(seed, 0x4a4d));
  // Wrist at the origin, five 4-joint fingers fanned in the x-y plane.
  std::vector<Point3> shape{{0, 0, 0}};
  for (int f = 0; f < 5; ++f) {
    const double angle = -0.6 + 0.3 * f;
    for (int s = 1; s <= 4; ++s) {
      const double r = 0.03 + 0.025 * s;
      shape.push_back({r * std::sin(angle), r * std::cos(angle), 0.005 * s});
    }
  }
  const double two_pi = 2 * std::numbers::pi;
  Point3 amp, freq, phase;
  for (int i = 0; i < 3; ++i) {
    amp[i] = rng.uniform(0.05, 0.15);
    freq[i] = rng.uniform(0.5, 1.5);
    phase[i] = rng.uniform(0, two_pi);
  }
  const Point3 axis = random_unit(rng);
  const double tilt = rng.uniform(0.02, 0.06), tilt_phase = rng.uniform(0, two_pi);
  // Reach-and-pause pacing: progress s(u) whose speed 1 - cos(2 pi m u) swings
  // between rest and twice the mean.
  const double m = static_cast<double>(2 + rng.next() % 3);
  std::vector<double> curl_phase(shape.size());
  for (double& p : curl_phase) p = rng.uniform(0, two_pi);

  SkeletonClip clip{"hand_" + std::to_string(seed), frames, shape.size(), {}};
  clip.points.resize(frames * shape.size());
  for (std::size_t t = 0; t < frames; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(frames);
    const double progress = u - std::sin(two_pi * m * u) / (two_pi * m);
    Point3 offset;
    for (int i = 0; i < 3; ++i) offset[i] = amp[i] * std::sin(two_pi * freq[i] * progress + phase[i]);
    const double angle = tilt * std::sin(two_pi * progress + tilt_phase);
    for (std::size_t j = 0; j < shape.size(); ++j) {
      Point3 p = rotate(shape[j], axis, angle);
      const double curl = 0.002 * std::sin(two_pi * 2 * u + curl_phase[j]);
      for (int i = 0; i < 3; ++i) clip.at(t, j)[i] = p[i] + offset[i] + curl + 5e-5 * rng.normal();
    }
  }
  return clip;
}

SkeletonClip synthetic_body_clip(std::uint64_t seed, std::size_t frames) {
  Rng rng(derive_seed(seed, 0xb0d1));
  // Limb chains hanging off a pinned root (joint 0): torso+head, two arms, two legs.
  struct Chain {
    Point3 direction;
    std::size_t length;
  };
  const std::vector<Chain> chains{{{0, 1, 0}, 4}, {{1, 0.3, 0}, 5}, {{-1, 0.3, 0}, 5},
                                  {{0.3, -1, 0}, 5}, {{-0.3, -1, 0}, 5}};
  std::vector<Point3> shape{{0, 0, 0}};
  std::vector<std::size_t> chain_of{0}, depth_of{0};
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t s = 1; s <= chains[c].length; ++s) {
      const double r = 0.12 * static_cast<double>(s);
      shape.push_back({r * chains[c].direction[0], r * chains[c].direction[1], 0});
      chain_of.push_back(c);
      depth_of.push_back(s);
    }
  }
  const double two_pi = 2 * std::numbers::pi;
  std::vector<double> amp(chains.size()), freq(chains.size()), phase(chains.size());
  std::vector<Point3> axis(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    amp[c] = rng.uniform(0.1, 0.8);
    freq[c] = rng.uniform(0.5, 3.0);
    phase[c] = rng.uniform(0, two_pi);
    axis[c] = random_unit(rng);
  }
  SkeletonClip clip{"body_" + std::to_string(seed), frames, shape.size(), {}};
  clip.points.resize(frames * shape.size());
  for (std::size_t t = 0; t < frames; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(frames);
    clip.at(t, 0) = {5e-5 * rng.normal(), 5e-5 * rng.normal(), 5e-5 * rng.normal()};
    for (std::size_t j = 1; j < shape.size(); ++j) {
      const std::size_t c = chain_of[j];
      // Deeper joints swing further, like distal limb segments.
      const double angle = amp[c] * std::sin(two_pi * freq[c] * u + phase[c]) *
                           static_cast<double>(depth_of[j]) / static_cast<double>(chains[c].length);
      const Point3 p = rotate(shape[j], axis[c], angle);
      for (int i = 0; i < 3; ++i) clip.at(t, j)[i] = p[i] + 2e-4 * rng.normal();
    }
  }
  return clip;
}

}  // namespace handformer::analysis
