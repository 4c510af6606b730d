#include "handformer/model/handformer.hpp"

#include "handformer/error.hpp"

namespace handformer::model {

EncoderConfig ModelConfig::encoder() const {
  EncoderConfig e;
  e.joints = joints;
  e.frames = frames_per_action;
  e.coords = coords;
  e.token_dim = token_dim;
  e.attn_layers = attn_layers;
  e.out_dim = d;
  e.joint_identity_embeddings = joint_identity_embeddings;
  return e;
}

void ModelConfig::validate() const {
  require(verbs >= 1 && objects >= 1, ErrorCode::kInvalidArgument, "class counts must be positive");
  require(d >= 1 && micro_actions >= 1 && stride >= 1, ErrorCode::kInvalidArgument,
          "d, K and R must be positive");
  require(d % nn::default_head_count(d) == 0, ErrorCode::kInvalidArgument,
          "d must divide into attention heads");
  require(joints == 21 || joints == 11 || (joints >= 1 && joints <= 6), ErrorCode::kInvalidArgument,
          "joints per hand must be 21, 11, or between 1 and 6");
  require(feature_dim >= 1, ErrorCode::kInvalidArgument, "feature width must be positive");
  encoder().validate();
}

ModelConfig preset_config(const std::string& name) {
  ModelConfig c;
  if (name == "tiny") return c;
  if (name == "B" || name == "b") {
    c.d = 256;
    c.layers = 2;
    c.token_dim = 256;
    c.feature_dim = 256;
    return c;
  }
  if (name == "L" || name == "l") {
    c.d = 512;
    c.layers = 4;
    c.token_dim = 512;
    c.feature_dim = 512;
    return c;
  }
  if (name == "gradcheck") {
    c.verbs = 3;
    c.objects = 2;
    c.d = 8;
    c.layers = 1;
    c.token_dim = 8;
    c.attn_layers = 1;
    c.joints = 2;
    c.frames_per_action = 4;
    c.stride = 4;
    c.micro_actions = 2;
    c.feature_dim = 6;
    return c;
  }
  fail(ErrorCode::kInvalidArgument, "unknown preset '" + name + "' (use tiny, B, L or gradcheck)");
}

std::string parameter_section(const std::string& name) { return name.substr(0, name.find('.')); }

template <typename T>
HandFormer<T>::HandFormer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  // Separate streams keep each component's init independent of the others'
  // presence: pose-only and multimodal models share encoder weights, and a
  // model with the tokenizer shares everything else with one without it.
  Rng enc_rng(derive_seed(seed, 1));
  encoder = TrajectoryEncoder<T>(cfg_.encoder(), enc_rng);
  Rng rng(derive_seed(seed, 2));
  Rng frame_rng(derive_seed(seed, 3));
  Rng tok_rng(derive_seed(seed, 4));
  if (cfg_.multimodal()) {
    frame_projection = nn::Linear<T>("frame_projection.linear", cfg_.feature_dim, cfg_.d, frame_rng);
    if (cfg_.use_tokenizer) tokenizer = MultimodalTokenizer<T>(cfg_.d, tok_rng);
  }
  auto small = [&](const std::string& name, Shape shape) {
    Tensor<T> t(shape);
    for (T& v : t.values()) v = static_cast<T>(0.02 * rng.normal());
    return Parameter<T>(name, std::move(t));
  };
  class_tokens = small("class_tokens.embeddings", {kClassTokens, cfg_.d});
  modality_embeddings = small("modality_embeddings.table", {kModalities, cfg_.d});
  transformer = TemporalTransformer<T>(cfg_.d, cfg_.layers, rng);
  final_norm = nn::LayerNorm<T>("temporal_transformer.final_norm", cfg_.d);
  action_head = nn::Linear<T>("heads.action", cfg_.d, cfg_.actions(), rng);
  verb_head = nn::Linear<T>("heads.verb", cfg_.d, cfg_.verbs, rng);
  object_head = nn::Linear<T>("heads.object", cfg_.d, cfg_.objects, rng);
  if (cfg_.tokenizer_active()) {
    anticipation_head = nn::Linear<T>("heads.anticipation", cfg_.d, cfg_.feature_dim, tok_rng);
  }
}

template <typename T>
Var<T> anticipation_loss(Tape<T>& tape, Var<T> posergb, Var<T> rgb, nn::Linear<T>& phi) {
  const Shape s = posergb.shape();
  require(s.size() == 3 && rgb.shape().size() == 3 && rgb.shape()[0] == s[0] &&
              rgb.shape()[1] == s[1],
          ErrorCode::kShapeMismatch, "anticipation inputs must be [B, K, d] and [B, K, d_f]");
  const std::size_t batch = s[0], k = s[1];
  if (k < 2) return tape.constant(Tensor<T>::scalar(T{0}));
  Var<T> predicted = phi.forward(tape, nn::slice(posergb, 1, 0, k - 1));
  Var<T> target = nn::detach(nn::slice(rgb, 1, 1, k));
  return nn::scale(nn::l1_sum(nn::sub(predicted, target)), T(1) / static_cast<T>(batch));
}

template <typename T>
ModelOutput<T> HandFormer<T>::forward(Tape<T>& tape, const ModelBatch<T>& batch,
                                      std::vector<Tensor<T>>* attention_probe) {
  const std::size_t b = batch.size, k = cfg_.micro_actions;
  Var<T> pose = encoder.forward(tape, tape.constant(encoder.standardize_joints(batch.joints)),
                                tape.constant(encoder.standardize_wrist(batch.wrist)), b, k);
  std::optional<Var<T>> rgb;
  Var<T> ant = tape.constant(Tensor<T>::scalar(T{0}));
  if (cfg_.multimodal()) {
    require(batch.rgb.has_value(), ErrorCode::kMissingFeature,
            "multimodal model needs frame features");
    require(batch.rgb->shape() == Shape{b, k, cfg_.feature_dim}, ErrorCode::kShapeMismatch,
            "frame features must be [B, K, d_f], got " + nn::shape_string(batch.rgb->shape()));
    Var<T> frozen = tape.constant(*batch.rgb);
    Var<T> f_rgb = frame_projection.forward(tape, frozen);
    if (cfg_.use_tokenizer) {
      TokenizerOutput<T> tok = tokenizer.forward(tape, f_rgb, pose);
      ant = anticipation_loss(tape, tok.posergb, frozen, anticipation_head);
      pose = tok.pose;
      rgb = tok.rgb;
    } else {
      rgb = f_rgb;
    }
  }
  TokenSequence<T> seq = assemble_token_sequence(tape, pose, rgb, tape.parameter(class_tokens),
                                                 tape.parameter(modality_embeddings));
  Var<T> states = transformer.forward(tape, seq.tokens, seq.layout.mask, attention_probe);
  Var<T> normed = final_norm.forward(tape, states);
  auto token = [&](std::size_t index) {
    return nn::reshape(nn::slice(normed, 1, index, index + 1), {b, cfg_.d});
  };
  ModelOutput<T> out;
  out.action_logits = action_head.forward(tape, token(kClsToken));
  out.verb_logits = verb_head.forward(tape, token(kVerbToken));
  out.object_logits = object_head.forward(tape, token(kObjToken));
  out.anticipation = ant;
  if (cfg_.tokenizer_active() && k > 1) out.anticipation_terms = (k - 1) * cfg_.feature_dim;
  out.states = states;
  out.layout = std::move(seq.layout);
  return out;
}

template <typename T>
ParameterSet<T> HandFormer<T>::parameters() {
  ParameterSet<T> params;
  encoder.collect(params);
  if (cfg_.multimodal()) {
    frame_projection.collect(params);
    if (cfg_.use_tokenizer) tokenizer.collect(params);
  }
  params.push_back(&class_tokens);
  params.push_back(&modality_embeddings);
  transformer.collect(params);
  final_norm.collect(params);
  action_head.collect(params);
  verb_head.collect(params);
  object_head.collect(params);
  if (cfg_.tokenizer_active()) anticipation_head.collect(params);
  return params;
}

template class HandFormer<float>;
template class HandFormer<double>;
template Var<float> anticipation_loss(Tape<float>&, Var<float>, Var<float>, nn::Linear<float>&);
template Var<double> anticipation_loss(Tape<double>&, Var<double>, Var<double>, nn::Linear<double>&);

}  // namespace handformer::model
