#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "handformer/model/handformer.hpp"
#include "handformer/train/batch.hpp"
#include "handformer/train/checkpoint.hpp"
#include "handformer/train/losses.hpp"

namespace handformer::train {

// Top-1 accuracies in percent. pair_action_acc takes the action to be the
// (argmax verb, argmax object) pair, so it never exceeds either of those.
struct EvalReport {
  double action_acc = 0;
  double verb_acc = 0;
  double object_acc = 0;
  double pair_action_acc = 0;
  std::size_t samples = 0;
};

EvalReport evaluate(model::HandFormer<float>& model, const std::vector<PreparedSample>& data,
                    std::size_t batch_size = 64);

// Deterministic per-action split: round(fraction * n_a) samples of each action
// go to `held_out`, at least one whenever that action has two or more samples.
struct Split {
  std::vector<std::size_t> train, held_out;
};
Split stratified_split(const std::vector<std::size_t>& action_labels, double fraction,
                       std::uint64_t seed);

enum class TrainMode {
  kMultimodal,      // all losses, pose and frame features per the config
  kPosePretrain,    // pose-only, verb loss only
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  LossBreakdown loss;  // means over the epoch's batches
  EvalReport eval;
};

struct TrainOptions {
  TrainMode mode = TrainMode::kMultimodal;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 0.025;
  double momentum = 0.9;
  std::set<int> decay_epochs{25, 40};
  std::uint64_t seed = 7;
  std::optional<std::filesystem::path> init_trajectory;  // checkpoint; loads section trajectory_encoder
  // Ends training after any epoch for which this returns true.
  std::function<bool(const EpochMetrics&)> stop_after;
};


struct TrainResult {
  std::vector<EpochMetrics> history;
  EvalReport last;
  EvalReport best;  // per-column maximum over epochs
  int best_verb_epoch = 0;
  nn::OptimizerState<float> optimizer;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Runs SGD with momentum over `train_set`, evaluating on `eval_set` after
// every epoch. Input statistics are fitted to `train_set` unless the encoder
// comes from `init_trajectory`. Throws kNumerical on a non-finite loss.
TrainResult train_model(model::HandFormer<float>& model, const std::vector<PreparedSample>& train_set,
                        const std::vector<PreparedSample>& eval_set, const TrainOptions& options,
                        const EpochCallback& on_epoch = {});

// Sets the encoder's frozen input statistics from `data`: a mean and std per
// joint coordinate and per wrist channel. Channels without spread keep std 1.
void fit_input_standardization(model::HandFormer<float>& model, const std::vector<PreparedSample>& data);

// The config a mode actually trains: pretraining forces pose-only.
model::ModelConfig effective_config(model::ModelConfig cfg, TrainMode mode);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);
void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::filesystem::path& path);

// ModelConfig <-> checkpoint meta ("config.<field>").
std::map<std::string, std::string> config_meta(const model::ModelConfig& cfg);
model::ModelConfig config_from_meta(const std::map<std::string, std::string>& meta);

}  // namespace handformer::train
