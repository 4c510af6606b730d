#include "handformer/model/fusion.hpp"

#include <cmath>

#include "handformer/error.hpp"

namespace handformer::model {

std::vector<double> positional_encoding(std::size_t position, std::size_t dim) {
  std::vector<double> pe(dim);
  for (std::size_t i = 0; 2 * i < dim; ++i) {
    const double angle = static_cast<double>(position) /
                         std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
    pe[2 * i] = std::sin(angle);
    if (2 * i + 1 < dim) pe[2 * i + 1] = std::cos(angle);
  }
  return pe;
}

std::size_t TokenLayout::pose_index(std::size_t k) const {
  require(k >= 1 && k <= micro_actions, ErrorCode::kInvalidArgument, "micro-action index out of range");
  return kClassTokens + (multimodal ? 2 * (k - 1) : k - 1);
}

std::size_t TokenLayout::rgb_index(std::size_t k) const {
  require(multimodal, ErrorCode::kInvalidArgument, "pose-only layouts have no rgb tokens");
  return pose_index(k) + 1;
}

TokenLayout make_token_layout(std::size_t micro_actions, bool multimodal) {
  require(micro_actions >= 1, ErrorCode::kInvalidArgument, "need at least one micro-action");
  TokenLayout layout;
  layout.micro_actions = micro_actions;
  layout.multimodal = multimodal;
  for (std::size_t c = 0; c < kClassTokens; ++c) {
    layout.position_ids.push_back(0);
    layout.modality_ids.push_back(Modality::kCls);
  }
  for (std::size_t k = 1; k <= micro_actions; ++k) {
    layout.position_ids.push_back(k);
    layout.modality_ids.push_back(Modality::kPose);
    if (multimodal) {
      layout.position_ids.push_back(k);
      layout.modality_ids.push_back(Modality::kRgb);
    }
  }
  const std::size_t n = layout.size();
  layout.mask = AttentionMask(n, n, true);
  for (std::size_t j = 0; j < n; ++j) {
    layout.mask.set(kVerbToken, j, j == kVerbToken || layout.modality_ids[j] == Modality::kPose);
    layout.mask.set(kObjToken, j, j == kObjToken || layout.modality_ids[j] == Modality::kRgb);
  }
  layout.mask.validate();
  return layout;
}

template <typename T>
MultimodalTokenizer<T>::MultimodalTokenizer(std::size_t dim, Rng& rng)
    : shared("tokenizer.shared", 2 * dim, dim, rng), split("tokenizer.split", dim, 2 * dim, rng) {}

template <typename T>
TokenizerOutput<T> MultimodalTokenizer<T>::forward(Tape<T>& tape, Var<T> rgb, Var<T> pose) {
  require(rgb.shape() == pose.shape(), ErrorCode::kShapeMismatch,
          "tokenizer inputs differ in shape");
  const std::size_t axis = rgb.shape().size() - 1;
  const std::size_t d = rgb.shape()[axis];
  Var<T> hidden = nn::relu(shared.forward(tape, nn::concat<T>({rgb, pose}, axis)));
  Var<T> mixed = split.forward(tape, hidden);
  return TokenizerOutput<T>{nn::add(rgb, nn::slice(mixed, axis, 0, d)),
                            nn::add(pose, nn::slice(mixed, axis, d, 2 * d)), hidden};
}

template <typename T>
void MultimodalTokenizer<T>::collect(ParameterSet<T>& params) {
  shared.collect(params);
  split.collect(params);
}

template <typename T>
TokenSequence<T> assemble_token_sequence(Tape<T>& tape, Var<T> pose, std::optional<Var<T>> rgb,
                                         Var<T> class_tokens, Var<T> modality_embeddings) {
  const Shape ps = pose.shape();
  require(ps.size() == 3, ErrorCode::kShapeMismatch, "pose features must be [B, K, d]");
  const std::size_t batch = ps[0], k = ps[1], d = ps[2];
  if (rgb) {
    require(rgb->shape() == ps, ErrorCode::kShapeMismatch,
            "micro-action count mismatch: pose " + nn::shape_string(ps) + " vs rgb " +
                nn::shape_string(rgb->shape()));
  }
  require(class_tokens.shape() == Shape{kClassTokens, d}, ErrorCode::kShapeMismatch,
          "class tokens must be [3, d]");
  TokenSequence<T> seq;
  seq.layout = make_token_layout(k, rgb.has_value());

  Var<T> body = pose;
  if (rgb) {
    Var<T> p = nn::reshape(pose, {batch, k, 1, d});
    Var<T> r = nn::reshape(*rgb, {batch, k, 1, d});
    body = nn::reshape(nn::concat<T>({p, r}, 2), {batch, 2 * k, d});
  }
  Var<T> cls = nn::broadcast_axis(class_tokens, 0, batch);
  Var<T> tokens = nn::concat<T>({cls, body}, 1);

  const std::size_t n = seq.layout.size();
  Tensor<T> pe({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = positional_encoding(seq.layout.position_ids[i], d);
    for (std::size_t c = 0; c < d; ++c) pe[i * d + c] = static_cast<T>(row[c]);
  }
  std::vector<std::size_t> modality_rows;
  for (Modality m : seq.layout.modality_ids) modality_rows.push_back(static_cast<std::size_t>(m));
  Var<T> additive = nn::add(tape.constant(std::move(pe)), nn::gather_rows(modality_embeddings, modality_rows));
  seq.tokens = nn::add_trailing(tokens, additive);
  return seq;
}

template <typename T>
TemporalTransformer<T>::TemporalTransformer(std::size_t dim, std::size_t layers, Rng& rng) {
  const std::size_t heads = nn::default_head_count(dim);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string name = "temporal_transformer.layer" + std::to_string(l);
    attention_norms.emplace_back(name + ".attention_norm", dim);
    attention.emplace_back(name + ".self_attention", dim, heads, rng);
    ffn_norms.emplace_back(name + ".ffn_norm", dim);
    ffn.emplace_back(name + ".ffn", dim, 4 * dim, rng);
  }
}

template <typename T>
Var<T> TemporalTransformer<T>::forward(Tape<T>& tape, Var<T> x, const AttentionMask& mask,
                                       std::vector<Tensor<T>>* attention_probe) {
  for (std::size_t l = 0; l < attention.size(); ++l) {
    Tensor<T> weights;
    x = nn::add(x, attention[l].forward(tape, attention_norms[l].forward(tape, x), &mask,
                                        attention_probe ? &weights : nullptr));
    if (attention_probe) attention_probe->push_back(std::move(weights));
    x = nn::add(x, ffn[l].forward(tape, ffn_norms[l].forward(tape, x)));
  }
  return x;
}

template <typename T>
void TemporalTransformer<T>::collect(ParameterSet<T>& params) {
  for (std::size_t l = 0; l < attention.size(); ++l) {
    attention_norms[l].collect(params);
    attention[l].collect(params);
    ffn_norms[l].collect(params);
    ffn[l].collect(params);
  }
}

template class MultimodalTokenizer<float>;
template class MultimodalTokenizer<double>;
template class TemporalTransformer<float>;
template class TemporalTransformer<double>;
template TokenSequence<float> assemble_token_sequence(Tape<float>&, Var<float>, std::optional<Var<float>>,
                                                      Var<float>, Var<float>);
template TokenSequence<double> assemble_token_sequence(Tape<double>&, Var<double>,
                                                       std::optional<Var<double>>, Var<double>,
                                                       Var<double>);

}  // namespace handformer::model
