#include "handformer/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "handformer/error.hpp"
#include "handformer/numerics/rng.hpp"

namespace handformer::train {

namespace {

std::size_t argmax_row(const nn::Tensor<float>& logits, std::size_t row) {
  const std::size_t cols = logits.shape()[1];
  const float* p = logits.data() + row * cols;
  return static_cast<std::size_t>(std::max_element(p, p + cols) - p);
}

std::vector<const PreparedSample*> gather(const std::vector<PreparedSample>& data,
                                          const std::vector<std::size_t>& order, std::size_t begin,
                                          std::size_t end) {
  std::vector<const PreparedSample*> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(&data[order[i]]);
  return out;
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

EvalReport evaluate(model::HandFormer<float>& model, const std::vector<PreparedSample>& data,
                    std::size_t batch_size) {
  require(!data.empty(), ErrorCode::kInvalidArgument, "evaluate: empty dataset");
  require(batch_size > 0, ErrorCode::kInvalidArgument, "evaluate: batch size must be positive");
  const model::ModelConfig& cfg = model.config();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t action = 0, verb = 0, object = 0, pair = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const auto samples = gather(data, order, begin, std::min(data.size(), begin + batch_size));
    for (const PreparedSample* s : samples) {
      require(s->labels.verb < cfg.verbs && s->labels.object < cfg.objects &&
                  s->labels.action < cfg.actions(),
              ErrorCode::kInvalidArgument, "evaluate: labels of " + s->id + " exceed the model's classes");
    }
    nn::Tape<float> tape;
    const auto out = model.forward(tape, make_batch<float>(samples, cfg));
    for (std::size_t b = 0; b < samples.size(); ++b) {
      const pose::ActionLabels& y = samples[b]->labels;
      const std::size_t pv = argmax_row(out.verb_logits.value(), b);
      const std::size_t po = argmax_row(out.object_logits.value(), b);
      action += argmax_row(out.action_logits.value(), b) == y.action;
      verb += pv == y.verb;
      object += po == y.object;
      pair += pv == y.verb && po == y.object;
    }
  }
  const double n = static_cast<double>(data.size());
  return EvalReport{100.0 * action / n, 100.0 * verb / n, 100.0 * object / n, 100.0 * pair / n,
                    data.size()};
}

Split stratified_split(const std::vector<std::size_t>& action_labels, double fraction,
                       std::uint64_t seed) {
  require(fraction >= 0.0 && fraction < 1.0, ErrorCode::kInvalidArgument,
          "held-out fraction must lie in [0, 1)");
  std::map<std::size_t, std::vector<std::size_t>> by_action;
  for (std::size_t i = 0; i < action_labels.size(); ++i) by_action[action_labels[i]].push_back(i);
  Split split;
  for (auto& [action, members] : by_action) {
    Rng rng(derive_seed(seed, 0x5b117000 + action));
    std::shuffle(members.begin(), members.end(), rng.engine());
    std::size_t held = static_cast<std::size_t>(std::lround(fraction * members.size()));
    if (fraction > 0 && held == 0 && members.size() >= 2) held = 1;
    split.held_out.insert(split.held_out.end(), members.begin(), members.begin() + held);
    split.train.insert(split.train.end(), members.begin() + held, members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.held_out.begin(), split.held_out.end());
  return split;
}

void fit_input_standardization(model::HandFormer<float>& model, const std::vector<PreparedSample>& data) {
  require(!data.empty(), ErrorCode::kInvalidArgument, "cannot fit input statistics to no data");
  const model::ModelConfig& cfg = model.config();
  const std::size_t n = cfg.frames_per_action, t_prime = cfg.total_frames();
  auto fit = [](std::vector<double>& sum, std::vector<double>& sq, double count, nn::Parameter<float>& mean,
                nn::Parameter<float>& std) {
    for (std::size_t c = 0; c < sum.size(); ++c) {
      const double m = sum[c] / count;
      const double var = std::max(0.0, sq[c] / count - m * m);
      mean.value[c] = static_cast<float>(m);
      std.value[c] = var > 1e-12 ? static_cast<float>(std::sqrt(var)) : 1.0f;
    }
  };
  std::vector<double> js(cfg.coords), jq(cfg.coords), ws(model::kWristChannels), wq(model::kWristChannels);
  double joint_count = 0;
  for (const PreparedSample& s : data) {
    for (std::size_t i = 0; i < s.joints.size(); ++i) {
      const std::size_t c = (i / n) % cfg.coords;
      js[c] += s.joints[i];
      jq[c] += s.joints[i] * s.joints[i];
    }
    joint_count += static_cast<double>(s.joints.size() / cfg.coords);
    for (std::size_t i = 0; i < s.wrist.size(); ++i) {
      const std::size_t c = i / t_prime;
      ws[c] += s.wrist[i];
      wq[c] += s.wrist[i] * s.wrist[i];
    }
  }
  fit(js, jq, joint_count, model.encoder.joint_mean, model.encoder.joint_std);
  fit(ws, wq, static_cast<double>(data.size() * t_prime), model.encoder.wrist_mean, model.encoder.wrist_std);
}

model::ModelConfig effective_config(model::ModelConfig cfg, TrainMode mode) {
  if (mode == TrainMode::kPosePretrain) cfg.pose_only = true;
  return cfg;
}

TrainResult train_model(model::HandFormer<float>& model, const std::vector<PreparedSample>& train_set,
                        const std::vector<PreparedSample>& eval_set, const TrainOptions& options,
                        const EpochCallback& on_epoch) {
  require(!train_set.empty(), ErrorCode::kInvalidArgument, "train: empty training set");
  require(options.batch_size > 0, ErrorCode::kInvalidArgument, "train: batch size must be positive");
  require(options.lr > 0, ErrorCode::kInvalidArgument, "train: learning rate must be positive");
  const model::ModelConfig& cfg = model.config();
  if (options.mode == TrainMode::kPosePretrain) {
    require(cfg.pose_only, ErrorCode::kInvalidArgument, "pretraining needs a pose-only model");
  }
  const LossMode loss_mode =
      options.mode == TrainMode::kPosePretrain ? LossMode::kVerbOnly : LossMode::kFull;
  const LossWeights lambda = weights_of(cfg);

  nn::ParameterSet<float> params = model.parameters();
  if (options.init_trajectory) {
    load_parameters(read_checkpoint(*options.init_trajectory), params,
                    std::set<std::string>{"trajectory_encoder"});
  } else {
    fit_input_standardization(model, train_set);
  }
  TrainResult result;
  result.optimizer = nn::OptimizerState<float>::for_parameters(params);
  result.optimizer.lr = options.lr;
  result.optimizer.momentum = options.momentum;
  result.optimizer.decay_epochs = options.decay_epochs;

  Rng shuffle_rng(derive_seed(options.seed, 0x5f0ff1e));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    LossBreakdown sum;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const auto samples =
          gather(train_set, order, begin, std::min(order.size(), begin + options.batch_size));
      nn::Tape<float> tape;
      const auto out = model.forward(tape, make_batch<float>(samples, cfg));
      const LossTerms<float> terms = compute_losses(tape, out, batch_labels(samples), lambda, loss_mode);
      const LossBreakdown b = terms.breakdown();
      if (!std::isfinite(b.total)) {
        fail(ErrorCode::kNumerical, "non-finite loss at epoch " + std::to_string(epoch + 1) +
                                        " batch " + std::to_string(batches + 1));
      }
      nn::zero_grads(params);
      tape.backward(terms.total);
      nn::sgd_momentum_step(params, result.optimizer, static_cast<int>(epoch));
      sum.l_cls += b.l_cls;
      sum.l_verb += b.l_verb;
      sum.l_obj += b.l_obj;
      sum.l_ant += b.l_ant;
      sum.total += b.total;
      sum.lambda = b.lambda;
      ++batches;
    }
    EpochMetrics m;
    m.epoch = static_cast<int>(epoch + 1);
    const double n = static_cast<double>(batches);
    m.loss = LossBreakdown{sum.l_cls / n, sum.l_verb / n, sum.l_obj / n, sum.l_ant / n, sum.total / n,
                           sum.lambda};
    if (!eval_set.empty()) m.eval = evaluate(model, eval_set);
    result.history.push_back(m);
    result.last = m.eval;
    if (epoch == 0 || m.eval.verb_acc > result.best.verb_acc) result.best_verb_epoch = m.epoch;
    result.best.action_acc = std::max(result.best.action_acc, m.eval.action_acc);
    result.best.verb_acc = std::max(result.best.verb_acc, m.eval.verb_acc);
    result.best.object_acc = std::max(result.best.object_acc, m.eval.object_acc);
    result.best.pair_action_acc = std::max(result.best.pair_action_acc, m.eval.pair_action_acc);
    result.best.samples = m.eval.samples;
    if (on_epoch) on_epoch(m);
    if (options.stop_after && options.stop_after(m)) break;
  }
  return result;
}

std::string metrics_csv_header() {
  return "epoch,l_cls,l_verb,l_obj,l_ant,total,action_acc,verb_acc,object_acc";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + real(m.loss.l_cls) + "," + real(m.loss.l_verb) + "," +
         real(m.loss.l_obj) + "," + real(m.loss.l_ant) + "," + real(m.loss.total) + "," +
         real(m.eval.action_acc) + "," + real(m.eval.verb_acc) + "," + real(m.eval.object_acc);
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << metrics_csv_header() << "\n";
  for (const EpochMetrics& m : history) out << metrics_csv_row(m) << "\n";
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

namespace {

#define HANDFORMER_CONFIG_FIELDS(X)                                                            \
  X(verbs) X(objects) X(d) X(layers) X(token_dim) X(attn_layers) X(joints) X(frames_per_action) \
  X(stride) X(micro_actions) X(coords) X(feature_dim)
#define HANDFORMER_CONFIG_FLAGS(X) \
  X(pose_only) X(use_tokenizer) X(wrist_relative) X(joint_identity_embeddings)
#define HANDFORMER_CONFIG_REALS(X) X(lambda_verb) X(lambda_object) X(lambda_ant)

}  // namespace

std::map<std::string, std::string> config_meta(const model::ModelConfig& cfg) {
  std::map<std::string, std::string> meta;
#define X(f) meta["config." #f] = std::to_string(cfg.f);
  HANDFORMER_CONFIG_FIELDS(X)
  HANDFORMER_CONFIG_FLAGS(X)
#undef X
#define X(f)                                  \
  {                                           \
    char buf[64];                             \
    std::snprintf(buf, sizeof buf, "%.17g", cfg.f); \
    meta["config." #f] = buf;                 \
  }
  HANDFORMER_CONFIG_REALS(X)
#undef X
  return meta;
}

model::ModelConfig config_from_meta(const std::map<std::string, std::string>& meta) {
  auto get = [&](const char* key) -> const std::string& {
    auto it = meta.find(std::string("config.") + key);
    require(it != meta.end(), ErrorCode::kMalformedHeader, std::string("checkpoint lacks config.") + key);
    return it->second;
  };
  model::ModelConfig cfg;
#define X(f) cfg.f = std::stoul(get(#f));
  HANDFORMER_CONFIG_FIELDS(X)
#undef X
#define X(f) cfg.f = get(#f) == "1";
  HANDFORMER_CONFIG_FLAGS(X)
#undef X
#define X(f) cfg.f = std::stod(get(#f));
  HANDFORMER_CONFIG_REALS(X)
#undef X
  cfg.validate();
  return cfg;
}

}  // namespace handformer::train
