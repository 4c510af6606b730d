#include "handformer/train/losses.hpp"

#include "handformer/numerics/kernels.hpp"

namespace handformer::train {

LossBreakdown combine_losses(double l_cls, double l_verb, double l_obj, double l_ant,
                             const LossWeights& lambda) {
  LossBreakdown b{l_cls, l_verb, l_obj, l_ant, 0.0, lambda};
  b.total = l_cls + lambda.verb * l_verb + lambda.object * l_obj + lambda.ant * l_ant;
  return b;
}

template <typename T>
LossBreakdown total_loss(const nn::Tensor<T>& logits_action, const nn::Tensor<T>& logits_verb,
                         const nn::Tensor<T>& logits_obj, const pose::ActionLabels& labels,
                         double l_ant, const LossWeights& lambda) {
  return combine_losses(nn::cross_entropy(logits_action, labels.action),
                        nn::cross_entropy(logits_verb, labels.verb),
                        nn::cross_entropy(logits_obj, labels.object), l_ant, lambda);
}

template <typename T>
LossBreakdown LossTerms<T>::breakdown() const {
  return combine_losses(cls.value().item(), verb.value().item(), obj.value().item(),
                        ant.value().item(), lambda);
}

template <typename T>
LossTerms<T> compute_losses(nn::Tape<T>& tape, const model::ModelOutput<T>& out,
                            const BatchLabels& labels, const LossWeights& lambda, LossMode mode) {
  LossTerms<T> terms;
  terms.lambda = lambda;
  terms.verb = nn::cross_entropy_mean(out.verb_logits, labels.verb);
  if (mode == LossMode::kVerbOnly) {
    const nn::Var<T> zero = tape.constant(nn::Tensor<T>::scalar(T{0}));
    terms.cls = terms.obj = terms.ant = zero;
    terms.lambda = LossWeights{1.0, 0.0, 0.0};
    terms.total = terms.verb;
    // l_cls is reported as 0 and the total is the verb loss alone.
    return terms;
  }
  terms.cls = nn::cross_entropy_mean(out.action_logits, labels.action);
  terms.obj = nn::cross_entropy_mean(out.object_logits, labels.object);
  // Mean absolute error per element; the summed form scales with (K - 1) * d_f.
  terms.ant = out.anticipation_terms > 0
                  ? nn::scale(out.anticipation, T(1) / static_cast<T>(out.anticipation_terms))
                  : out.anticipation;
  terms.total = nn::weighted_sum<T>({terms.cls, terms.verb, terms.obj, terms.ant},
                                    {T(1), static_cast<T>(lambda.verb), static_cast<T>(lambda.object),
                                     static_cast<T>(lambda.ant)});
  return terms;
}

LossWeights weights_of(const model::ModelConfig& cfg) {
  return LossWeights{cfg.lambda_verb, cfg.lambda_object, cfg.lambda_ant};
}

template LossBreakdown total_loss(const nn::Tensor<float>&, const nn::Tensor<float>&,
                                  const nn::Tensor<float>&, const pose::ActionLabels&, double,
                                  const LossWeights&);
template LossBreakdown total_loss(const nn::Tensor<double>&, const nn::Tensor<double>&,
                                  const nn::Tensor<double>&, const pose::ActionLabels&, double,
                                  const LossWeights&);
template struct LossTerms<float>;
template struct LossTerms<double>;
template LossTerms<float> compute_losses(nn::Tape<float>&, const model::ModelOutput<float>&,
                                         const BatchLabels&, const LossWeights&, LossMode);
template LossTerms<double> compute_losses(nn::Tape<double>&, const model::ModelOutput<double>&,
                                          const BatchLabels&, const LossWeights&, LossMode);

}  // namespace handformer::train
