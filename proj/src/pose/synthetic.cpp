#include "handformer/pose/synthetic.hpp"

#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <thread>

#include "handformer/error.hpp"
#include "handformer/numerics/rng.hpp"

namespace handformer::pose {

namespace {

constexpr double kQuantum = 1e-5;

// Right-hand rest geometry in a local frame: fingers along +x, thumb toward
// +y, palm facing -z. Per finger: base joint, direction angle in the palm
// plane, three segment lengths.
struct FingerGeometry {
  Eigen::Vector3d base;
  double angle;
  std::array<double, 3> segments;
};

const std::array<FingerGeometry, 5>& finger_geometry() {
  static const std::array<FingerGeometry, 5> fingers = {{
      {{0.025, 0.030, 0.0}, 0.70, {0.035, 0.030, 0.025}},
      {{0.090, 0.025, 0.0}, 0.10, {0.040, 0.025, 0.020}},
      {{0.095, 0.005, 0.0}, 0.00, {0.045, 0.028, 0.022}},
      {{0.090, -0.015, 0.0}, -0.08, {0.042, 0.026, 0.020}},
      {{0.080, -0.033, 0.0}, -0.18, {0.032, 0.020, 0.018}},
  }};
  return fingers;
}

// 21 local joints for a given curl (radians per segment).
std::array<Eigen::Vector3d, kFullJoints> local_hand(double curl) {
  std::array<Eigen::Vector3d, kFullJoints> joints;
  joints[0] = Eigen::Vector3d::Zero();
  const auto& fingers = finger_geometry();
  for (std::size_t f = 0; f < fingers.size(); ++f) {
    const FingerGeometry& g = fingers[f];
    const Eigen::Vector3d planar(std::cos(g.angle), std::sin(g.angle), 0.0);
    Eigen::Vector3d p = g.base;
    joints[1 + 4 * f] = p;
    double bend = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
      bend += curl;
      p = p + g.segments[s] * (std::cos(bend) * planar - std::sin(bend) * Eigen::Vector3d::UnitZ());
      joints[2 + 4 * f + s] = p;
    }
  }
  return joints;
}

// Maps local +x to camera +z (away), local -z (palm) to camera +y (down).
Eigen::Matrix3d rest_rotation() {
  Eigen::Matrix3d r;
  r.col(0) = Eigen::Vector3d(0, 0, 1);
  r.col(1) = Eigen::Vector3d(-1, 0, 0);
  r.col(2) = Eigen::Vector3d(0, -1, 0);
  return r;
}

struct HandState {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double twist = 0.0;  // rotation about the finger axis
  double curl = 0.3;
};

// Per-sample nuisance parameters; all identity at noise 0.
struct Nuisance {
  std::size_t shift = 0;
  double speed = 1.0;
  std::array<Eigen::Vector3d, kHands> offset{Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
  std::array<Eigen::Matrix3d, kHands> tilt{Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity()};
  std::array<double, kHands> curl_offset{0.0, 0.0};
};

HandState motion(std::size_t verb, std::size_t hand, double tau) {
  const double scale = 1.0 + 0.5 * static_cast<double>(verb / kVerbFamilies);
  const double t = tau * scale;
  const double side = hand == 0 ? 1.0 : -1.0;  // hand 0 is the right hand at +x
  HandState s;
  switch (verb % kVerbFamilies) {
    case 0:  // translate up
      s.translation = {0.0, -0.08 * t, 0.0};
      s.curl = 0.2;
      break;
    case 1:  // translate down
      s.translation = {0.0, 0.08 * t, 0.0};
      s.curl = 0.2;
      break;
    case 2:  // screw clockwise: right hand twists, left holds
    case 3:  // screw counter-clockwise
      if (hand == 0) {
        s.twist = (verb % kVerbFamilies == 2 ? 3.0 : -3.0) * t;
        s.curl = 0.4;
      } else {
        s.curl = 0.6;
      }
      break;
    case 4:  // oscillate
      s.translation = {0.04 * std::sin(2.0 * std::numbers::pi * 1.2 * t), 0.0, 0.0};
      s.curl = 0.3;
      break;
    case 5:  // approach and grasp
      s.translation = {-side * 0.06 * t, 0.0, 0.0};
      s.curl = 0.1 + 0.6 * std::min(1.0, t / 1.5);
      break;
    case 6:  // static hold
      s.curl = 0.5;
      break;
    default:  // separate
      s.translation = {side * 0.06 * t, 0.0, 0.0};
      s.curl = 0.3;
      break;
  }
  return s;
}

double quantize(double v) { return std::round(v / kQuantum) * kQuantum; }

Eigen::Matrix3d rotation_from_vector(const Eigen::Vector3d& v) {
  const double angle = v.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, v / angle).toRotationMatrix();
}

// Fills frames [0, frames) of the sequence from prototype time shift + t.
void render(PoseSequence& seq, std::size_t verb, const Nuisance& nz, double fps,
            Rng* jitter_rng, double jitter_sd) {
  static const Eigen::Vector3d kRestPosition[kHands] = {{0.12, 0.05, 0.45}, {-0.12, 0.05, 0.45}};
  const Eigen::Matrix3d rest = rest_rotation();
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    const double tau = static_cast<double>(nz.shift + t) / fps * nz.speed;
    for (std::size_t h = 0; h < kHands; ++h) {
      const HandState s = motion(verb, h, tau);
      auto local = local_hand(s.curl + nz.curl_offset[h]);
      const Eigen::Matrix3d orient =
          nz.tilt[h] * rest * Eigen::AngleAxisd(s.twist, Eigen::Vector3d::UnitX()).toRotationMatrix();
      const Eigen::Vector3d origin = kRestPosition[h] + nz.offset[h] + s.translation;
      for (std::size_t j = 0; j < kFullJoints; ++j) {
        Eigen::Vector3d p = local[j];
        if (h == 1) p.y() = -p.y();  // left hand mirrors the right
        Eigen::Vector3d w = origin + orient * p;
        for (std::size_t c = 0; c < 3; ++c) {
          double v = w[c];
          if (jitter_rng) v += jitter_sd * jitter_rng->normal();
          seq.at(t, h, j, c) = quantize(v);
        }
      }
    }
  }
}

}  // namespace

const char* verb_family_name(std::size_t verb) {
  static const char* const kNames[kVerbFamilies] = {
      "translate-up", "translate-down",     "screw-cw",    "screw-ccw",
      "oscillate",    "approach-and-grasp", "static-hold", "separate"};
  return kNames[verb % kVerbFamilies];
}

std::size_t max_time_shift(const SyntheticSpec& spec) { return spec.frames / 4; }

PoseSequence verb_prototype(const SyntheticSpec& spec, std::size_t verb, std::size_t frames) {
  PoseSequence seq(frames, JointLayout::full(), 3, spec.fps);
  render(seq, verb, Nuisance{}, spec.fps, nullptr, 0.0);
  return seq;
}

std::string synthetic_sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06zu", index);
  return buf;
}

SegmentSample generate_sample(const SyntheticSpec& spec, std::size_t verb, std::size_t object,
                              std::size_t index) {
  require(spec.verbs >= 2 && spec.objects >= 2, ErrorCode::kInvalidArgument,
          "synthetic data needs at least 2 verbs and 2 objects");
  require(verb < spec.verbs && object < spec.objects && index < spec.per_class,
          ErrorCode::kInvalidArgument, "synthetic class or index out of range");
  require(spec.frames >= 2 && spec.feature_stride >= 1 && spec.feature_dim >= 1,
          ErrorCode::kInvalidArgument, "synthetic spec needs frames >= 2 and positive feature sizes");
  const LabelSpace space{spec.verbs, spec.objects};
  const std::size_t action = space.compose(verb, object);
  const std::size_t global = action * spec.per_class + index;

  Rng rng(derive_seed(spec.seed, global));
  Nuisance nz;
  nz.shift = static_cast<std::size_t>(rng.next() % (max_time_shift(spec) + 1));
  const double n = spec.noise;
  nz.speed = std::max(0.2, 1.0 + 2.0 * n * rng.normal());
  for (std::size_t h = 0; h < kHands; ++h) {
    for (int c = 0; c < 3; ++c) nz.offset[h][c] = n * 0.2 * rng.normal();
    Eigen::Vector3d rot;
    for (int c = 0; c < 3; ++c) rot[c] = n * rng.normal();
    nz.tilt[h] = rotation_from_vector(rot);
    nz.curl_offset[h] = n * rng.normal();
  }

  SegmentSample sample;
  sample.id = synthetic_sample_id(global);
  sample.labels = ActionLabels{action, verb, object};
  sample.pose = PoseSequence(spec.frames, JointLayout::full(), 3, spec.fps);
  render(sample.pose, verb, nz, spec.fps, n > 0 ? &rng : nullptr, n * 0.05);

  const features::StubFeatureGenerator stub(spec.feature_dim, spec.feature_noise, spec.seed);
  const std::uint64_t key = features::sample_key(sample.id);
  for (std::size_t f = 0; f < spec.frames; f += spec.feature_stride) {
    sample.frame_features[f] = stub.feature(object, key, f, features::FeatureSource::kFull);
    std::vector<std::array<double, 3>> points;
    const double* row = sample.pose.frame_data(f);
    for (std::size_t i = 0; i < kHands * kFullJoints; ++i) {
      points.push_back({row[3 * i], row[3 * i + 1], row[3 * i + 2]});
    }
    const auto projected = features::project_pose_to_image(points, spec.camera);
    try {
      features::compute_hoi_crop(projected, spec.camera.width, spec.camera.height);
    } catch (const Error&) {
      continue;  // no crop: the full frame stands alone
    }
    sample.crop_features[f] = stub.feature(object, key, f, features::FeatureSource::kCrop);
  }
  return sample;
}

Dataset generate_synthetic_dataset(const SyntheticSpec& spec, std::size_t threads) {
  Dataset data;
  data.label_space = LabelSpace{spec.verbs, spec.objects};
  const std::size_t total = data.label_space.actions() * spec.per_class;
  data.samples.resize(total);
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t g = begin; g < total; g += step) {
      const std::size_t action = g / spec.per_class;
      data.samples[g] = generate_sample(spec, data.label_space.verb_of(action),
                                        data.label_space.object_of(action), g % spec.per_class);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, total));
  if (threads == 1) {
    work(0, 1);
    return data;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        work(w, threads);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return data;
}

}  // namespace handformer::pose
