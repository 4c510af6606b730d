#pragma once

#include "handformer/model/handformer.hpp"
#include "handformer/train/batch.hpp"

namespace handformer::train {

struct LossWeights {
  double verb = 1.0;
  double object = 1.0;
  double ant = 1.0;
};

struct LossBreakdown {
  double l_cls = 0, l_verb = 0, l_obj = 0, l_ant = 0, total = 0;
  LossWeights lambda;
};

// total = l_cls + lambda.verb l_verb + lambda.object l_obj + lambda.ant l_ant
LossBreakdown combine_losses(double l_cls, double l_verb, double l_obj, double l_ant,
                             const LossWeights& lambda);

// Single-sample form over raw logits.
template <typename T>
LossBreakdown total_loss(const nn::Tensor<T>& logits_action, const nn::Tensor<T>& logits_verb,
                         const nn::Tensor<T>& logits_obj, const pose::ActionLabels& labels,
                         double l_ant, const LossWeights& lambda);

enum class LossMode {
  kFull,      // all four terms
  kVerbOnly,  // trajectory-encoder pretraining
};

template <typename T>
struct LossTerms {
  nn::Var<T> cls, verb, obj, ant, total;
  LossWeights lambda;
  LossBreakdown breakdown() const;
};

template <typename T>
LossTerms<T> compute_losses(nn::Tape<T>& tape, const model::ModelOutput<T>& out,
                            const BatchLabels& labels, const LossWeights& lambda, LossMode mode);

LossWeights weights_of(const model::ModelConfig& cfg);

}  // namespace handformer::train
