#include "handformer/train/batch.hpp"

#include <exception>
#include <thread>

#include "handformer/error.hpp"
#include "handformer/pose/micro_action.hpp"
#include "handformer/pose/wrist_pose.hpp"

namespace handformer::train {

namespace {

// Layout restricted to `target`, expressed in the input sequence's joints.
pose::JointLayout subset_of(const pose::PoseSequence& seq, std::size_t joints) {
  const pose::JointLayout target = pose::JointLayout::for_count(joints);
  pose::JointLayout out = target;
  const auto& have = seq.layout().source;
  for (std::size_t i = 0; i < target.source.size(); ++i) {
    std::size_t pos = have.size();
    for (std::size_t j = 0; j < have.size(); ++j) {
      if (have[j] == target.source[i]) pos = j;
    }
    require(pos < have.size(), ErrorCode::kInvalidArgument,
            "pose input lacks joint '" + target.names[i] + "' needed for J=" + std::to_string(joints));
    out.source[i] = pos;
  }
  return out;
}

}  // namespace

PreparedSample prepare_sample(const pose::SegmentSample& segment, const model::ModelConfig& cfg,
                              const features::FrameFeatureProvider* provider) {
  require(segment.pose.coords() == cfg.coords, ErrorCode::kShapeMismatch,
          "segment " + segment.id + " has C=" + std::to_string(segment.pose.coords()) +
              ", model expects C=" + std::to_string(cfg.coords));
  const std::size_t t_prime = cfg.total_frames();
  pose::PoseSequence seq = pose::interpolate_sequence(pose::fill_missing_hands(segment.pose), t_prime);

  PreparedSample out;
  out.id = segment.id;
  out.labels = segment.labels;
  out.wrist.assign(model::kWristChannels * t_prime, 0.0);
  if (cfg.coords == 3) {
    const pose::Wrist6dSequence w = pose::derive_wrist_6d(seq);
    for (std::size_t t = 0; t < t_prime; ++t) {
      for (std::size_t h = 0; h < pose::kHands; ++h) {
        for (std::size_t c = 0; c < 6; ++c) out.wrist[(h * 6 + c) * t_prime + t] = w.at(t, h)[c];
      }
    }
  } else {
    // 2-D input: translation only, orientation channels stay zero.
    const std::size_t wrist = seq.layout().wrist;
    for (std::size_t t = 0; t < t_prime; ++t) {
      for (std::size_t h = 0; h < pose::kHands; ++h) {
        for (std::size_t c = 0; c < 2; ++c) out.wrist[(h * 6 + c) * t_prime + t] = seq.at(t, h, wrist, c);
      }
    }
  }

  seq = pose::select_joints(seq, subset_of(seq, cfg.joints));
  if (cfg.wrist_relative) seq = pose::make_wrist_relative(seq);

  std::vector<std::size_t> available;
  if (cfg.multimodal()) {
    for (const auto& [idx, _] : segment.frame_features) available.push_back(idx);
  }
  const auto blocks = pose::factorize_micro_actions(seq, available, cfg.frames_per_action, cfg.stride,
                                                    cfg.multimodal(), segment.pose.frames());
  const std::size_t j2 = 2 * cfg.joints, c_dim = cfg.coords, n = cfg.frames_per_action;
  out.joints.assign(blocks.size() * j2 * c_dim * n, 0.0);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& block = blocks[k].pose_block;  // [N, 2, J, C]
    for (std::size_t f = 0; f < n; ++f) {
      for (std::size_t hj = 0; hj < j2; ++hj) {
        for (std::size_t c = 0; c < c_dim; ++c) {
          out.joints[((k * j2 + hj) * c_dim + c) * n + f] = block[(f * j2 + hj) * c_dim + c];
        }
      }
    }
  }
  if (cfg.multimodal()) {
    require(provider != nullptr, ErrorCode::kMissingFeature, "multimodal preparation needs a feature provider");
    for (const auto& block : blocks) {
      const features::FrameFeature f = provider->provide_fused(segment, *block.rgb_frame_index);
      require(f.vector.size() == cfg.feature_dim, ErrorCode::kShapeMismatch,
              "segment " + segment.id + " has feature width " + std::to_string(f.vector.size()) +
                  ", model expects d_f=" + std::to_string(cfg.feature_dim));
      out.rgb.insert(out.rgb.end(), f.vector.begin(), f.vector.end());
      out.rgb_frames.push_back(*block.rgb_frame_index);
    }
  }
  return out;
}

std::vector<PreparedSample> prepare_samples(const std::vector<pose::SegmentSample>& segments,
                                            const model::ModelConfig& cfg,
                                            const features::FrameFeatureProvider* provider,
                                            std::size_t threads) {
  std::vector<PreparedSample> out(segments.size());
  threads = std::max<std::size_t>(1, std::min(threads, segments.size()));
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < segments.size(); i += threads) {
        out[i] = prepare_sample(segments[i], cfg, provider);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

template <typename T>
model::ModelBatch<T> make_batch(const std::vector<const PreparedSample*>& samples,
                                const model::ModelConfig& cfg) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const std::size_t b = samples.size(), k = cfg.micro_actions, t_prime = cfg.total_frames();
  model::ModelBatch<T> batch;
  batch.size = b;
  batch.joints = nn::Tensor<T>({b * k * 2 * cfg.joints, cfg.coords, cfg.frames_per_action});
  batch.wrist = nn::Tensor<T>({b, model::kWristChannels, t_prime});
  const std::size_t joint_len = batch.joints.size() / b, wrist_len = batch.wrist.size() / b;
  if (cfg.multimodal()) batch.rgb = nn::Tensor<T>({b, k, cfg.feature_dim});
  for (std::size_t i = 0; i < b; ++i) {
    const PreparedSample& s = *samples[i];
    require(s.joints.size() == joint_len && s.wrist.size() == wrist_len, ErrorCode::kShapeMismatch,
            "prepared sample " + s.id + " does not match the model configuration");
    std::copy(s.joints.begin(), s.joints.end(), batch.joints.data() + i * joint_len);
    std::copy(s.wrist.begin(), s.wrist.end(), batch.wrist.data() + i * wrist_len);
    if (batch.rgb) {
      require(s.rgb.size() == k * cfg.feature_dim, ErrorCode::kShapeMismatch,
              "prepared sample " + s.id + " lacks frame features");
      std::copy(s.rgb.begin(), s.rgb.end(), batch.rgb->data() + i * k * cfg.feature_dim);
    }
  }
  return batch;
}

BatchLabels batch_labels(const std::vector<const PreparedSample*>& samples) {
  BatchLabels labels;
  for (const PreparedSample* s : samples) {
    labels.action.push_back(s->labels.action);
    labels.verb.push_back(s->labels.verb);
    labels.object.push_back(s->labels.object);
  }
  return labels;
}

template model::ModelBatch<float> make_batch(const std::vector<const PreparedSample*>&,
                                             const model::ModelConfig&);
template model::ModelBatch<double> make_batch(const std::vector<const PreparedSample*>&,
                                              const model::ModelConfig&);

}  // namespace handformer::train
