#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "handformer/numerics/layers.hpp"

namespace handformer::model {

using nn::AttentionMask;
using nn::Shape;
using nn::Parameter;
using nn::ParameterSet;
using nn::Tape;
using nn::Tensor;
using nn::Var;

enum class Modality : std::size_t { kPose = 0, kRgb = 1, kCls = 2 };
inline constexpr std::size_t kModalities = 3;
inline constexpr std::size_t kClassTokens = 3;  // [CLS], [VERB], [OBJ]
inline constexpr std::size_t kClsToken = 0;
inline constexpr std::size_t kVerbToken = 1;
inline constexpr std::size_t kObjToken = 2;

// Entry 2i = sin(p / 10000^(2i/d)), entry 2i+1 = cos(p / 10000^(2i/d)).
std::vector<double> positional_encoding(std::size_t position, std::size_t dim);

// Token order, position ids, modality ids and attention mask for K
// micro-actions: [CLS], [VERB], [OBJ], then pose_1, rgb_1, pose_2, rgb_2, ...
// (pose tokens only without rgb). Class tokens take position 0, micro-action
// k takes position k. [VERB] sees pose tokens and itself, [OBJ] sees rgb
// tokens and itself; every other row is unrestricted.
struct TokenLayout {
  std::size_t micro_actions = 0;
  bool multimodal = true;
  std::vector<std::size_t> position_ids;
  std::vector<Modality> modality_ids;
  AttentionMask mask;

  std::size_t size() const { return position_ids.size(); }
  std::size_t pose_index(std::size_t k) const;  // k is 1-based
  std::size_t rgb_index(std::size_t k) const;
};

TokenLayout make_token_layout(std::size_t micro_actions, bool multimodal);

template <typename T>
struct TokenizerOutput {
  Var<T> rgb;      // f_rgb + first half
  Var<T> pose;     // f_pose + second half
  Var<T> posergb;  // hidden bottleneck, [..., d]
};

// concat(f_rgb, f_pose) -> Linear(2d, d) -> ReLU (= f_posergb) -> Linear(d, 2d),
// split into halves that are added back to each modality.
template <typename T>
class MultimodalTokenizer {
 public:
  MultimodalTokenizer() = default;
  MultimodalTokenizer(std::size_t dim, Rng& rng);
  TokenizerOutput<T> forward(Tape<T>& tape, Var<T> rgb, Var<T> pose);
  void collect(ParameterSet<T>& params);

  nn::Linear<T> shared;  // 2d -> d
  nn::Linear<T> split;   // d -> 2d
};

template <typename T>
struct TokenSequence {
  Var<T> tokens;  // [B, n, d]
  TokenLayout layout;
};

// Interleaves per-micro-action features [B, K, d] behind the class tokens and
// adds positional and modality embeddings. `rgb` is absent in pose-only mode.
template <typename T>
TokenSequence<T> assemble_token_sequence(Tape<T>& tape, Var<T> pose, std::optional<Var<T>> rgb,
                                         Var<T> class_tokens, Var<T> modality_embeddings);

// Pre-norm encoder layers: x += Attn(LN(x)); x += FFN(LN(x)); the mask holds
// in every layer. Returns the final token states without a closing norm.
template <typename T>
class TemporalTransformer {
 public:
  TemporalTransformer() = default;
  TemporalTransformer(std::size_t dim, std::size_t layers, Rng& rng);
  // `attention_probe`, if set, receives each layer's [B, heads, n, n] weights.
  Var<T> forward(Tape<T>& tape, Var<T> x, const AttentionMask& mask,
                 std::vector<Tensor<T>>* attention_probe = nullptr);
  void collect(ParameterSet<T>& params);
  std::size_t layers() const { return attention.size(); }

  std::vector<nn::LayerNorm<T>> attention_norms;
  std::vector<nn::SelfAttention<T>> attention;
  std::vector<nn::LayerNorm<T>> ffn_norms;
  std::vector<nn::FeedForward<T>> ffn;
};

extern template class MultimodalTokenizer<float>;
extern template class MultimodalTokenizer<double>;
extern template class TemporalTransformer<float>;
extern template class TemporalTransformer<double>;

}  // namespace handformer::model
