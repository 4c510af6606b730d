#pragma once

#include <cstddef>
#include <string>

#include "handformer/numerics/layers.hpp"

namespace handformer::model {

using nn::Parameter;
using nn::Shape;
using nn::ParameterSet;
using nn::Tape;
using nn::Tensor;
using nn::Var;

inline constexpr std::size_t kWristChannels = 12;  // two hands x (translation, axis-angle)
inline constexpr std::size_t kTcnKernel = 3;

struct EncoderConfig {
  std::size_t joints = 6;           // J per hand; 0 leaves only the wrist token
  std::size_t frames = 15;          // N
  std::size_t coords = 3;           // C
  std::size_t token_dim = 32;       // d_t
  std::size_t attn_layers = 2;
  std::size_t out_dim = 64;         // d
  bool joint_identity_embeddings = false;

  std::size_t tokens() const { return 2 * joints + 1; }
  void validate() const;
};

// Temporal length after the three-layer TCN (strides 1, 2, 2; padding 1).
std::size_t tcn_output_length(std::size_t length);

// Conv(C -> d_t/2, stride 1) ReLU Conv(-> d_t, stride 2) ReLU Conv(-> d_t, stride 2).
template <typename T>
class TemporalConvNet {
 public:
  TemporalConvNet() = default;
  TemporalConvNet(const std::string& name, std::size_t in_channels, std::size_t width, Rng& rng);
  // [batch, C, L] -> [batch, d_t, L_t]
  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(ParameterSet<T>& params);

  nn::Conv1d<T> conv1, conv2, conv3;
};

// Per-micro-action pose encoder. Inputs are batched over B segments with K
// micro-actions each:
//   joints: [B*K*2J, C, N], joint trajectories ordered (segment, block, hand, joint)
//   wrist:  [B, 12, T'], the action-wide two-hand 6D sequence
template <typename T>
class TrajectoryEncoder {
 public:
  TrajectoryEncoder() = default;
  TrajectoryEncoder(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  // [B*K*2J, C, N] -> [B*K, 2J, L_t, d_t]
  Var<T> encode_joint_trajectories(Tape<T>& tape, Var<T> joints);
  // [B, 12, T'] -> [B, d_t], temporal mean of the wrist TCN output
  Var<T> encode_global_wrist(Tape<T>& tape, Var<T> wrist);
  // -> [B, K, d]
  Var<T> forward(Tape<T>& tape, Var<T> joints, Var<T> wrist, std::size_t batch,
                 std::size_t micro_actions);
  void collect(ParameterSet<T>& params);

  // Apply the frozen input standardization: (x - mean[c]) / std[c] along axis 1.
  Tensor<T> standardize_joints(const Tensor<T>& joints) const;  // [*, C, N]
  Tensor<T> standardize_wrist(const Tensor<T>& wrist) const;    // [B, 12, T']

  // Per-channel input statistics, identity until fitted to training data.
  // Frozen, but saved with the encoder so a reloaded encoder sees the same inputs.
  Parameter<T> joint_mean, joint_std;  // [C]
  Parameter<T> wrist_mean, wrist_std;  // [12]
  TemporalConvNet<T> joint_tcn;
  TemporalConvNet<T> wrist_tcn;
  Parameter<T> joint_embeddings;  // [2J, d_t], used when enabled
  std::vector<nn::LayerNorm<T>> norms;
  std::vector<nn::SelfAttention<T>> attention;
  nn::Linear<T> projection;

 private:
  EncoderConfig cfg_;
};

extern template class TemporalConvNet<float>;
extern template class TemporalConvNet<double>;
extern template class TrajectoryEncoder<float>;
extern template class TrajectoryEncoder<double>;

}  // namespace handformer::model
