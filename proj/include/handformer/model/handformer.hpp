#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "handformer/model/fusion.hpp"
#include "handformer/model/trajectory_encoder.hpp"

namespace handformer::model {

struct ModelConfig {
  std::size_t verbs = 8;
  std::size_t objects = 4;
  std::size_t d = 64;
  std::size_t layers = 2;             // T_n
  std::size_t token_dim = 32;         // d_t
  std::size_t attn_layers = 2;        // joint attention rounds in the encoder
  std::size_t joints = 6;             // J per hand
  std::size_t frames_per_action = 15; // N
  std::size_t stride = 15;            // R
  std::size_t micro_actions = 8;      // K
  std::size_t coords = 3;             // C
  std::size_t feature_dim = 32;       // d_f
  bool pose_only = false;
  bool use_tokenizer = true;
  bool wrist_relative = false;
  bool joint_identity_embeddings = false;
  double lambda_verb = 1.0;
  double lambda_object = 1.0;
  double lambda_ant = 1.0;

  std::size_t actions() const { return verbs * objects; }
  std::size_t total_frames() const { return (micro_actions - 1) * stride + frames_per_action; }  // T'
  bool multimodal() const { return !pose_only; }
  bool tokenizer_active() const { return !pose_only && use_tokenizer; }
  EncoderConfig encoder() const;
  void validate() const;
};

// "tiny", "B", "L" and "gradcheck".
ModelConfig preset_config(const std::string& name);

// One batch of prepared segments.
template <typename T>
struct ModelBatch {
  std::size_t size = 0;
  Tensor<T> joints;              // [B*K*2J, C, N]
  Tensor<T> wrist;               // [B, 12, T']
  std::optional<Tensor<T>> rgb;  // [B, K, d_f], fused unit-norm frame features
};

template <typename T>
struct ModelOutput {
  Var<T> action_logits;  // [B, A] from [CLS]
  Var<T> verb_logits;    // [B, V] from [VERB]
  Var<T> object_logits;  // [B, O] from [OBJ]
  Var<T> anticipation;   // scalar; zero without the tokenizer
  std::size_t anticipation_terms = 0;  // (K - 1) * d_f absolute differences per sample
  Var<T> states;         // [B, n, d] final token states
  TokenLayout layout;
};

template <typename T>
class HandFormer {
 public:
  HandFormer(const ModelConfig& cfg, std::uint64_t seed);
  HandFormer(const HandFormer&) = delete;
  HandFormer& operator=(const HandFormer&) = delete;

  const ModelConfig& config() const { return cfg_; }

  ModelOutput<T> forward(Tape<T>& tape, const ModelBatch<T>& batch,
                         std::vector<Tensor<T>>* attention_probe = nullptr);

  // Ordered parameter list; a name's section is its prefix before the first '.'.
  ParameterSet<T> parameters();

  TrajectoryEncoder<T> encoder;
  nn::Linear<T> frame_projection;  // d_f -> d, the trainable tail of the frame encoder
  MultimodalTokenizer<T> tokenizer;
  Parameter<T> class_tokens;         // [3, d]
  Parameter<T> modality_embeddings;  // [3, d]
  TemporalTransformer<T> transformer;
  nn::LayerNorm<T> final_norm;
  nn::Linear<T> action_head, verb_head, object_head;
  nn::Linear<T> anticipation_head;  // d -> d_f

 private:
  ModelConfig cfg_;
};

// Sum over k < K of |phi(posergb_k) - rgb_{k+1}|_1 averaged over the batch.
// Targets are detached. posergb: [B, K, d]; rgb: [B, K, d_f], the frozen
// frame features before the trainable projection.
template <typename T>
Var<T> anticipation_loss(Tape<T>& tape, Var<T> posergb, Var<T> rgb, nn::Linear<T>& phi);

std::string parameter_section(const std::string& name);

extern template class HandFormer<float>;
extern template class HandFormer<double>;

}  // namespace handformer::model
