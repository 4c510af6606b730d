#include "handformer/train/model_check.hpp"

#include <cmath>

#include "handformer/train/losses.hpp"

namespace handformer::train {

template <typename T>
model::ModelBatch<T> random_batch(const model::ModelConfig& cfg, std::size_t batch, Rng& rng) {
  model::ModelBatch<T> b;
  b.size = batch;
  b.joints = nn::Tensor<T>({batch * cfg.micro_actions * 2 * cfg.joints, cfg.coords, cfg.frames_per_action});
  for (auto& v : b.joints.values()) v = static_cast<T>(rng.normal());
  b.wrist = nn::Tensor<T>({batch, model::kWristChannels, cfg.total_frames()});
  for (auto& v : b.wrist.values()) v = static_cast<T>(rng.normal());
  if (cfg.multimodal()) {
    nn::Tensor<T> rgb({batch, cfg.micro_actions, cfg.feature_dim});
    for (std::size_t row = 0; row < batch * cfg.micro_actions; ++row) {
      T* p = rgb.data() + row * cfg.feature_dim;
      double norm = 0;
      for (std::size_t i = 0; i < cfg.feature_dim; ++i) {
        p[i] = static_cast<T>(rng.normal());
        norm += static_cast<double>(p[i]) * p[i];
      }
      for (std::size_t i = 0; i < cfg.feature_dim; ++i) p[i] = static_cast<T>(p[i] / std::sqrt(norm));
    }
    b.rgb = std::move(rgb);
  }
  return b;
}

BatchLabels random_labels(const model::ModelConfig& cfg, std::size_t batch, Rng& rng) {
  BatchLabels labels;
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t verb = rng.next() % cfg.verbs;
    const std::size_t object = rng.next() % cfg.objects;
    labels.verb.push_back(verb);
    labels.object.push_back(object);
    labels.action.push_back(verb * cfg.objects + object);
  }
  return labels;
}

nn::GradCheckReport check_model_gradients(const model::ModelConfig& cfg, std::uint64_t seed,
                                          std::size_t batch, std::size_t max_per_parameter, double eps) {
  model::HandFormer<double> net(cfg, seed);
  Rng rng(derive_seed(seed, 0x1a9b7));
  const auto inputs = random_batch<double>(cfg, batch, rng);
  const BatchLabels labels = random_labels(cfg, batch, rng);
  const LossWeights lambda = weights_of(cfg);
  auto loss = [&](nn::Tape<double>& tape) {
    return compute_losses(tape, net.forward(tape, inputs), labels, lambda, LossMode::kFull).total;
  };
  return nn::finite_diff_check(loss, net.parameters(), eps, 1e-4, max_per_parameter);
}

template model::ModelBatch<float> random_batch(const model::ModelConfig&, std::size_t, Rng&);
template model::ModelBatch<double> random_batch(const model::ModelConfig&, std::size_t, Rng&);

}  // namespace handformer::train
