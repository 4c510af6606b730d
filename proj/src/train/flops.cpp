#include "handformer/train/flops.hpp"

#include <cstdio>
#include <numeric>

#include "handformer/numerics/kernels.hpp"

namespace handformer::train {

namespace {

constexpr double kGiga = 1e9;

double linear_flops(double in, double out, double rows) { return 2.0 * in * out * rows; }

double conv_flops(double cin, double cout, double lout) {
  return 2.0 * cin * static_cast<double>(model::kTcnKernel) * cout * lout;
}

// Three-layer TCN over a length-`length` sequence.
double tcn_flops(double cin, double dt, std::size_t length) {
  const std::size_t l1 = nn::conv_output_length(length, model::kTcnKernel, 1, 1);
  const std::size_t l2 = nn::conv_output_length(l1, model::kTcnKernel, 2, 1);
  const std::size_t l3 = nn::conv_output_length(l2, model::kTcnKernel, 2, 1);
  return conv_flops(cin, dt / 2, l1) + conv_flops(dt / 2, dt, l2) + conv_flops(dt, dt, l3);
}

// Pre-LN self-attention over n tokens of width d: four projections plus the
// score and weighted-value products.
double attention_flops(double n, double d) { return 4.0 * linear_flops(d, d, n) + 4.0 * n * n * d; }

std::string real(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

double FlopsLedger::total() const {
  return std::accumulate(entries.begin(), entries.end(), 0.0,
                         [](double acc, const FlopsEntry& e) { return acc + e.total(); });
}

double FlopsLedger::subtotal(const std::string& prefix) const {
  double sum = 0;
  for (const FlopsEntry& e : entries) {
    if (e.component.rfind(prefix, 0) == 0) sum += e.total();
  }
  return sum;
}

FlopsLedger paper_flops_table() {
  return FlopsLedger{"HandFormer-B/21",
                     {{"pose_estimator", 0.30, 162},
                      {"frame_encoder", 4.12, 8},
                      {"trajectory_encoder", 0.29, 8},
                      {"multimodal_tokenizer", 0.01, 8},
                      {"temporal_transformer", 0.05, 1}}};
}

FlopsLedger tsm_flops_table() { return FlopsLedger{"TSM", {{"tsm", 669.79, 1}}}; }

FlopsLedger count_model_flops(const model::ModelConfig& cfg) {
  cfg.validate();
  const double K = static_cast<double>(cfg.micro_actions);
  const double d = static_cast<double>(cfg.d);
  const double dt = static_cast<double>(cfg.token_dim);
  const double joints = 2.0 * static_cast<double>(cfg.joints);
  const std::size_t lt = model::tcn_output_length(cfg.frames_per_action);
  const double encoder_tokens = joints + 1.0;

  FlopsLedger ledger;
  ledger.method = "model";
  auto add = [&](std::string name, double flops, double count) {
    ledger.entries.push_back({std::move(name), flops / kGiga, count});
  };
  add("trajectory_encoder.joint_tcn", joints * tcn_flops(static_cast<double>(cfg.coords), dt,
                                                         cfg.frames_per_action),
      K);
  add("trajectory_encoder.wrist_tcn",
      tcn_flops(static_cast<double>(model::kWristChannels), dt, cfg.total_frames()), 1);
  add("trajectory_encoder.joint_attention",
      static_cast<double>(cfg.attn_layers * lt) * attention_flops(encoder_tokens, dt), K);
  add("trajectory_encoder.projection", linear_flops(dt, d, 1), K);

  if (cfg.multimodal()) {
    add("frame_projection", linear_flops(static_cast<double>(cfg.feature_dim), d, 1), K);
  }
  if (cfg.tokenizer_active()) {
    add("multimodal_tokenizer", linear_flops(2 * d, d, 1) + linear_flops(d, 2 * d, 1), K);
  }
  const double n = static_cast<double>(model::make_token_layout(cfg.micro_actions, cfg.multimodal()).size());
  add("temporal_transformer",
      static_cast<double>(cfg.layers) * (attention_flops(n, d) + linear_flops(d, 4 * d, n) +
                                         linear_flops(4 * d, d, n)),
      1);
  add("heads", linear_flops(d, static_cast<double>(cfg.actions() + cfg.verbs + cfg.objects), 1), 1);
  return ledger;
}

std::string format_ledger(const FlopsLedger& ledger) {
  std::string out = "component,gflops,count,total\n";
  for (const FlopsEntry& e : ledger.entries) {
    out += e.component + "," + real(e.gflops, "%.6g") + "," + real(e.count, "%g") + "," +
           real(e.total(), "%.6g") + "\n";
  }
  out += "TOTAL,,," + real(ledger.total(), "%.2f") + "\n";
  return out;
}

}  // namespace handformer::train
