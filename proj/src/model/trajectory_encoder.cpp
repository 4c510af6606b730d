#include "handformer/model/trajectory_encoder.hpp"

#include "handformer/error.hpp"

namespace handformer::model {

void EncoderConfig::validate() const {
  require(frames >= kTcnKernel, ErrorCode::kInvalidArgument,
          "micro-action length N=" + std::to_string(frames) + " is below the TCN kernel size " +
              std::to_string(kTcnKernel));
  require(coords == 2 || coords == 3, ErrorCode::kInvalidArgument, "coordinates must be 2-D or 3-D");
  require(token_dim >= 2 && token_dim % 2 == 0, ErrorCode::kInvalidArgument,
          "token width d_t must be even and at least 2");
  require(out_dim >= 1, ErrorCode::kInvalidArgument, "output width d must be positive");
  require(token_dim % nn::default_head_count(token_dim) == 0, ErrorCode::kInvalidArgument,
          "token width d_t must divide into attention heads");
}

std::size_t tcn_output_length(std::size_t length) {
  length = nn::conv_output_length(length, kTcnKernel, 1, 1);
  length = nn::conv_output_length(length, kTcnKernel, 2, 1);
  return nn::conv_output_length(length, kTcnKernel, 2, 1);
}

template <typename T>
TemporalConvNet<T>::TemporalConvNet(const std::string& name, std::size_t in_channels,
                                    std::size_t width, Rng& rng)
    : conv1(name + ".conv1", in_channels, width / 2, kTcnKernel, 1, 1, rng),
      conv2(name + ".conv2", width / 2, width, kTcnKernel, 2, 1, rng),
      conv3(name + ".conv3", width, width, kTcnKernel, 2, 1, rng) {}

template <typename T>
Var<T> TemporalConvNet<T>::forward(Tape<T>& tape, Var<T> x) {
  x = nn::relu(conv1.forward(tape, x));
  x = nn::relu(conv2.forward(tape, x));
  return conv3.forward(tape, x);
}

template <typename T>
void TemporalConvNet<T>::collect(ParameterSet<T>& params) {
  conv1.collect(params);
  conv2.collect(params);
  conv3.collect(params);
}

namespace {

template <typename T>
Tensor<T> standardize_channels(const Tensor<T>& x, const Tensor<T>& mean, const Tensor<T>& std) {
  require(x.rank() == 3 && x.dim(1) == mean.size(), ErrorCode::kShapeMismatch,
          "standardization expects [*, " + std::to_string(mean.size()) + ", L], got " +
              nn::shape_string(x.shape()));
  Tensor<T> out = x;
  const std::size_t channels = x.dim(1), length = x.dim(2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = (i / length) % channels;
    out[i] = (out[i] - mean[c]) / std[c];
  }
  return out;
}

template <typename T>
Parameter<T> frozen(const std::string& name, std::size_t size, T fill) {
  return Parameter<T>(name, Tensor<T>({size}, fill), false);
}

}  // namespace

template <typename T>
TrajectoryEncoder<T>::TrajectoryEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::string prefix = "trajectory_encoder.";
  joint_mean = frozen<T>(prefix + "input_norm.joint_mean", cfg_.coords, T{0});
  joint_std = frozen<T>(prefix + "input_norm.joint_std", cfg_.coords, T{1});
  wrist_mean = frozen<T>(prefix + "input_norm.wrist_mean", kWristChannels, T{0});
  wrist_std = frozen<T>(prefix + "input_norm.wrist_std", kWristChannels, T{1});
  if (cfg_.joints > 0) joint_tcn = TemporalConvNet<T>(prefix + "joint_tcn", cfg_.coords, cfg_.token_dim, rng);
  wrist_tcn = TemporalConvNet<T>(prefix + "wrist_tcn", kWristChannels, cfg_.token_dim, rng);
  if (cfg_.joint_identity_embeddings && cfg_.joints > 0) {
    Tensor<T> init({2 * cfg_.joints, cfg_.token_dim});
    for (T& v : init.values()) v = static_cast<T>(0.02 * rng.normal());
    joint_embeddings = Parameter<T>(prefix + "joint_embeddings", std::move(init));
  }
  const std::size_t heads = nn::default_head_count(cfg_.token_dim);
  for (std::size_t l = 0; l < cfg_.attn_layers; ++l) {
    const std::string layer = prefix + "attn" + std::to_string(l);
    norms.emplace_back(layer + ".norm", cfg_.token_dim);
    attention.emplace_back(layer + ".self_attention", cfg_.token_dim, heads, rng);
  }
  projection = nn::Linear<T>(prefix + "projection", cfg_.token_dim, cfg_.out_dim, rng);
}

template <typename T>
Var<T> TrajectoryEncoder<T>::encode_joint_trajectories(Tape<T>& tape, Var<T> joints) {
  const Shape& s = joints.shape();
  const std::size_t per_block = 2 * cfg_.joints;
  require(s.size() == 3 && s[1] == cfg_.coords && s[2] == cfg_.frames && s[0] % per_block == 0,
          ErrorCode::kShapeMismatch,
          "joint trajectories must be [blocks*2J, C, N], got " + nn::shape_string(s));
  const std::size_t blocks = s[0] / per_block;
  Var<T> y = joint_tcn.forward(tape, joints);  // [blocks*2J, d_t, L_t]
  const std::size_t lt = y.shape()[2];
  y = nn::reshape(y, {blocks, per_block, cfg_.token_dim, lt});
  return nn::permute(y, {0, 1, 3, 2});
}

template <typename T>
Var<T> TrajectoryEncoder<T>::encode_global_wrist(Tape<T>& tape, Var<T> wrist) {
  const Shape& s = wrist.shape();
  require(s.size() == 3 && s[1] == kWristChannels, ErrorCode::kShapeMismatch,
          "wrist sequence must be [B, 12, T'], got " + nn::shape_string(s));
  return nn::mean_axis(wrist_tcn.forward(tape, wrist), 2);
}

template <typename T>
Var<T> TrajectoryEncoder<T>::forward(Tape<T>& tape, Var<T> joints, Var<T> wrist,
                                     std::size_t batch, std::size_t micro_actions) {
  const std::size_t blocks = batch * micro_actions;
  const std::size_t dt = cfg_.token_dim;
  const std::size_t lt = tcn_output_length(cfg_.frames);
  require(wrist.shape()[0] == batch, ErrorCode::kShapeMismatch, "wrist batch mismatch");

  // Global token, shared by every micro-action of its segment and every
  // temporal index: [B, dt] -> [B*K, L_t, 1, dt].
  Var<T> global = encode_global_wrist(tape, wrist);
  global = nn::broadcast_axis(global, 1, micro_actions);
  global = nn::reshape(global, {blocks, dt});
  global = nn::broadcast_axis(global, 1, lt);
  global = nn::reshape(global, {blocks, lt, 1, dt});

  Var<T> tokens = global;
  if (cfg_.joints > 0) {
    Var<T> local = encode_joint_trajectories(tape, joints);  // [B*K, 2J, L_t, dt]
    require(local.shape()[0] == blocks, ErrorCode::kShapeMismatch,
            "joint trajectories do not match batch x micro-actions");
    if (cfg_.joint_identity_embeddings) {
      Var<T> emb = nn::broadcast_axis(tape.parameter(joint_embeddings), 1, lt);  // [2J, L_t, dt]
      local = nn::add_trailing(local, emb);
    }
    local = nn::permute(local, {0, 2, 1, 3});  // [B*K, L_t, 2J, dt]
    tokens = nn::concat<T>({local, global}, 2);
  }
  const std::size_t n = cfg_.tokens();
  const std::size_t count = cfg_.joints > 0 ? n : 1;
  // Joint attention at each temporal index independently.
  Var<T> x = nn::reshape(tokens, {blocks * lt, count, dt});
  for (std::size_t l = 0; l < attention.size(); ++l) {
    x = nn::add(x, attention[l].forward(tape, norms[l].forward(tape, x)));
  }
  x = nn::reshape(x, {blocks, lt * count, dt});
  Var<T> pooled = nn::mean_axis(x, 1);  // [B*K, dt]
  Var<T> out = projection.forward(tape, pooled);
  return nn::reshape(out, {batch, micro_actions, cfg_.out_dim});
}

template <typename T>
Tensor<T> TrajectoryEncoder<T>::standardize_joints(const Tensor<T>& joints) const {
  return standardize_channels(joints, joint_mean.value, joint_std.value);
}

template <typename T>
Tensor<T> TrajectoryEncoder<T>::standardize_wrist(const Tensor<T>& wrist) const {
  return standardize_channels(wrist, wrist_mean.value, wrist_std.value);
}

template <typename T>
void TrajectoryEncoder<T>::collect(ParameterSet<T>& params) {
  params.push_back(&joint_mean);
  params.push_back(&joint_std);
  params.push_back(&wrist_mean);
  params.push_back(&wrist_std);
  if (cfg_.joints > 0) joint_tcn.collect(params);
  wrist_tcn.collect(params);
  if (cfg_.joint_identity_embeddings && cfg_.joints > 0) params.push_back(&joint_embeddings);
  for (std::size_t l = 0; l < attention.size(); ++l) {
    norms[l].collect(params);
    attention[l].collect(params);
  }
  projection.collect(params);
}

template class TemporalConvNet<float>;
template class TemporalConvNet<double>;
template class TrajectoryEncoder<float>;
template class TrajectoryEncoder<double>;

}  // namespace handformer::model
