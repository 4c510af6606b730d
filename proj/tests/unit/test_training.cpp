#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>

#include "handformer/error.hpp"
#include "handformer/pose/synthetic.hpp"
#include "handformer/train/batch.hpp"
#include "handformer/train/checkpoint.hpp"
#include "handformer/train/flops.hpp"
#include "handformer/train/losses.hpp"
#include "handformer/train/trainer.hpp"

using handformer::Error;
using handformer::ErrorCode;
using namespace handformer;
using namespace handformer::train;

namespace {

model::ModelConfig small_config(bool pose_only = false) {
  model::ModelConfig c;
  c.verbs = 2;
  c.objects = 2;
  c.d = 8;
  c.layers = 1;
  c.token_dim = 8;
  c.attn_layers = 1;
  c.joints = 2;
  c.frames_per_action = 4;
  c.stride = 4;
  c.micro_actions = 3;
  c.feature_dim = 8;
  c.pose_only = pose_only;
  return c;
}

const std::vector<PreparedSample>& small_data() {
  static const std::vector<PreparedSample> data = [] {
    pose::SyntheticSpec spec;
    spec.verbs = 2;
    spec.objects = 2;
    spec.per_class = 3;
    spec.feature_dim = 8;
    const auto ds = pose::generate_synthetic_dataset(spec);
    const auto provider = features::FrameFeatureProvider::from_files();
    return prepare_samples(ds.samples, small_config(), &provider, 1);
  }();
  return data;
}

std::vector<const PreparedSample*> pointers(const std::vector<PreparedSample>& data) {
  std::vector<const PreparedSample*> out;
  for (const auto& s : data) out.push_back(&s);
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("handformer_training_" + name);
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_values(const nn::Tensor<float>& a, const nn::Tensor<float>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

nn::Tensor<float> action_logits(model::HandFormer<float>& net, const std::vector<PreparedSample>& data) {
  nn::Tape<float> tape;
  return net.forward(tape, make_batch<float>(pointers(data), net.config())).action_logits.value();
}

double log_softmax_at(const std::vector<double>& z, std::size_t i) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0;
  for (double v : z) s += std::exp(v - m);
  return z[i] - m - std::log(s);
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("total loss combines the weighted terms") {
    const LossBreakdown b = combine_losses(1.0, 0.5, 0.25, 0.1, LossWeights{1, 1, 1});
    CHECK(b.total == doctest::Approx(1.85));
    const LossBreakdown zero = combine_losses(1.3, 0.5, 0.25, 0.1, LossWeights{0, 0, 0});
    CHECK(zero.total == 1.3);
    const LossBreakdown w = combine_losses(2.0, 3.0, 5.0, 7.0, LossWeights{0.5, 0.25, 0.125});
    CHECK(w.total == doctest::Approx(2.0 + 1.5 + 1.25 + 0.875));
  }

  TEST_CASE("single-sample loss matches a log-softmax oracle") {
    const std::vector<double> za{0.3, -1.2, 2.0, 0.1}, zv{1.0, -0.5}, zo{0.0, 0.7};
    nn::Tensor<double> a({4}), v({2}), o({2});
    std::copy(za.begin(), za.end(), a.data());
    std::copy(zv.begin(), zv.end(), v.data());
    std::copy(zo.begin(), zo.end(), o.data());
    const pose::ActionLabels labels{2, 1, 0};
    const LossBreakdown b = total_loss(a, v, o, labels, 0.4, LossWeights{0.5, 2.0, 1.5});
    CHECK(b.l_cls == doctest::Approx(-log_softmax_at(za, 2)).epsilon(1e-12));
    CHECK(b.l_verb == doctest::Approx(-log_softmax_at(zv, 1)).epsilon(1e-12));
    CHECK(b.l_obj == doctest::Approx(-log_softmax_at(zo, 0)).epsilon(1e-12));
    CHECK(b.total == doctest::Approx(b.l_cls + 0.5 * b.l_verb + 2.0 * b.l_obj + 1.5 * 0.4).epsilon(1e-12));
  }

  TEST_CASE("training objective reports anticipation as a per-element mean") {
    const auto cfg = small_config();
    model::HandFormer<float> net(cfg, 3);
    const auto& data = small_data();
    nn::Tape<float> tape;
    const auto out = net.forward(tape, make_batch<float>(pointers(data), cfg));
    const auto terms = compute_losses(tape, out, batch_labels(pointers(data)), weights_of(cfg), LossMode::kFull);
    const LossBreakdown b = terms.breakdown();
    CHECK(out.anticipation_terms == (cfg.micro_actions - 1) * cfg.feature_dim);
    CHECK(b.l_ant == doctest::Approx(out.anticipation.value().item() / out.anticipation_terms).epsilon(1e-6));
    CHECK(b.total == doctest::Approx(b.l_cls + b.l_verb + b.l_obj + b.l_ant).epsilon(1e-6));
  }

  TEST_CASE("verb-only mode trains the verb term alone") {
    const auto cfg = small_config(true);
    model::HandFormer<float> net(cfg, 3);
    const auto& data = small_data();
    nn::Tape<float> tape;
    const auto out = net.forward(tape, make_batch<float>(pointers(data), cfg));
    const auto b =
        compute_losses(tape, out, batch_labels(pointers(data)), weights_of(cfg), LossMode::kVerbOnly).breakdown();
    CHECK(b.l_cls == 0.0);
    CHECK(b.l_obj == 0.0);
    CHECK(b.l_ant == 0.0);
    CHECK(b.total == b.l_verb);
    CHECK(b.l_verb > 0.0);
  }

  TEST_CASE("evaluation rejects empty data and bounds the pair accuracy") {
    const auto cfg = small_config();
    model::HandFormer<float> net(cfg, 4);
    CHECK_THROWS_AS(evaluate(net, {}), Error);
    const EvalReport r = evaluate(net, small_data(), 5);
    CHECK(r.samples == small_data().size());
    CHECK(r.pair_action_acc <= std::min(r.verb_acc, r.object_acc));
    for (double acc : {r.action_acc, r.verb_acc, r.object_acc}) {
      CHECK(acc >= 0.0);
      CHECK(acc <= 100.0);
    }
  }

  TEST_CASE("stratified split holds out a fixed share of every action") {
    std::vector<std::size_t> labels;
    for (std::size_t a = 0; a < 4; ++a) labels.insert(labels.end(), 10 + a, a);
    const Split s = stratified_split(labels, 0.2, 7);
    CHECK(s.train.size() + s.held_out.size() == labels.size());
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.held_out.begin(), s.held_out.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(labels.size());
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(all == expected);
    CHECK(std::is_sorted(s.held_out.begin(), s.held_out.end()));
    for (std::size_t a = 0; a < 4; ++a) {
      const auto n = static_cast<std::size_t>(std::count_if(
          s.held_out.begin(), s.held_out.end(), [&](std::size_t i) { return labels[i] == a; }));
      CHECK(n == static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(10 + a))));
    }
    CHECK(stratified_split(labels, 0.2, 7).held_out == s.held_out);
    CHECK(stratified_split(labels, 0.2, 8).held_out != s.held_out);
    CHECK(stratified_split({0, 0, 1, 1}, 0.1, 1).held_out.size() == 2);
  }

  TEST_CASE("input standardization is the identity until fitted") {
    const auto cfg = small_config(true);
    model::HandFormer<float> net(cfg, 5);
    const auto batch = make_batch<float>(pointers(small_data()), cfg);
    CHECK(same_values(net.encoder.standardize_joints(batch.joints), batch.joints));
    CHECK(same_values(net.encoder.standardize_wrist(batch.wrist), batch.wrist));
  }

  TEST_CASE("fitted statistics standardize the training inputs") {
    const auto cfg = small_config(true);
    model::HandFormer<float> net(cfg, 5);
    fit_input_standardization(net, small_data());
    const auto batch = make_batch<float>(pointers(small_data()), cfg);
    const auto joints = net.encoder.standardize_joints(batch.joints);
    const std::size_t n = cfg.frames_per_action, c = cfg.coords;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, q = 0, count = 0;
      for (std::size_t i = 0; i < joints.size(); ++i) {
        if ((i / n) % c != ch) continue;
        s += joints[i];
        q += static_cast<double>(joints[i]) * joints[i];
        ++count;
      }
      CHECK(std::abs(s / count) < 1e-4);
      CHECK(q / count == doctest::Approx(1.0).epsilon(1e-3));
    }
    const auto wrist = net.encoder.standardize_wrist(batch.wrist);
    const std::size_t t = cfg.total_frames();
    for (std::size_t ch = 0; ch < model::kWristChannels; ++ch) {
      double s = 0;
      for (std::size_t b = 0; b < batch.size; ++b) {
        for (std::size_t f = 0; f < t; ++f) s += wrist[(b * model::kWristChannels + ch) * t + f];
      }
      CHECK(std::abs(s / static_cast<double>(batch.size * t)) < 1e-4);
    }
    CHECK_THROWS_AS(fit_input_standardization(net, {}), Error);
  }

  TEST_CASE("one small SGD step lowers the batch loss") {
    for (double lr : {1e-3, 1e-4}) {
      const auto cfg = small_config();
      model::HandFormer<float> net(cfg, 6);
      fit_input_standardization(net, small_data());
      const auto samples = pointers(small_data());
      const auto batch = make_batch<float>(samples, cfg);
      const auto labels = batch_labels(samples);
      auto params = net.parameters();
      auto loss = [&] {
        nn::Tape<float> tape;
        const auto terms = compute_losses(tape, net.forward(tape, batch), labels, weights_of(cfg), LossMode::kFull);
        nn::zero_grads(params);
        tape.backward(terms.total);
        return terms.total.value().item();
      };
      const float before = loss();
      auto state = nn::OptimizerState<float>::for_parameters(params);
      state.lr = lr;
      nn::sgd_momentum_step(params, state, 0);
      CHECK(loss() < before);
    }
  }

  TEST_CASE("checkpoint round trip reproduces logits bitwise") {
    const auto cfg = small_config();
    model::HandFormer<float> a(cfg, 8);
    fit_input_standardization(a, small_data());
    auto state = nn::OptimizerState<float>::for_parameters(a.parameters());
    state.lr = 0.0125;
    state.last_epoch = 3;
    for (auto& v : state.velocity) v.fill(0.5f);
    const auto path = temp_path("roundtrip.hfck");
    save_checkpoint(make_checkpoint(a.parameters(), &state, config_meta(cfg)), path);

    const Checkpoint ckpt = read_checkpoint(path);
    const auto cfg2 = config_from_meta(ckpt.meta);
    model::HandFormer<float> b(cfg2, 99);
    CHECK(load_parameters(ckpt, b.parameters()) == a.parameters().size());
    CHECK(same_values(action_logits(a, small_data()), action_logits(b, small_data())));
    CHECK(same_values(b.encoder.joint_mean.value, a.encoder.joint_mean.value));

    auto restored = nn::OptimizerState<float>::for_parameters(b.parameters());
    load_optimizer(ckpt, b.parameters(), restored);
    CHECK(restored.lr == doctest::Approx(0.0125));
    CHECK(restored.last_epoch == 3);
    CHECK(restored.velocity.front()[0] == 0.5f);
    std::filesystem::remove(path);
  }

  TEST_CASE("section filter loads only the trajectory encoder") {
    const auto cfg = small_config(true);
    model::HandFormer<float> pre(cfg, 1);
    fit_input_standardization(pre, small_data());
    const auto path = temp_path("section.hfck");
    save_checkpoint(make_checkpoint(pre.parameters(), nullptr, config_meta(cfg)), path);

    model::HandFormer<float> mm(small_config(), 2);
    const model::HandFormer<float> untouched(small_config(), 2);
    const std::size_t loaded =
        load_parameters(read_checkpoint(path), mm.parameters(), std::set<std::string>{"trajectory_encoder"});
    std::size_t encoder_params = 0;
    auto mp = mm.parameters();
    auto up = const_cast<model::HandFormer<float>&>(untouched).parameters();
    auto pp = pre.parameters();
    for (std::size_t i = 0; i < mp.size(); ++i) {
      if (model::parameter_section(mp[i]->name) == "trajectory_encoder") {
        ++encoder_params;
        const auto it = std::find_if(pp.begin(), pp.end(), [&](auto* p) { return p->name == mp[i]->name; });
        REQUIRE(it != pp.end());
        CHECK(same_values(mp[i]->value, (*it)->value));
      } else {
        CHECK(same_values(mp[i]->value, up[i]->value));
      }
    }
    CHECK(loaded == encoder_params);
    std::filesystem::remove(path);
  }

  TEST_CASE("checkpoint loading rejects mismatches and damage") {
    const auto path = temp_path("bad.hfck");
    model::HandFormer<float> small(small_config(), 1);
    save_checkpoint(make_checkpoint(small.parameters(), nullptr, {}), path);
    auto wider_cfg = small_config();
    wider_cfg.d = 16;
    wider_cfg.token_dim = 16;
    model::HandFormer<float> wider(wider_cfg, 1);
    try {
      load_parameters(read_checkpoint(path), wider.parameters());
      FAIL("expected a shape error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kShapeMismatch);
    }
    model::HandFormer<float> pose_only(small_config(true), 1);
    CHECK_NOTHROW(load_parameters(read_checkpoint(path), pose_only.parameters()));
    model::HandFormer<float> mm(small_config(), 1);
    save_checkpoint(make_checkpoint(pose_only.parameters(), nullptr, {}), path);
    CHECK_THROWS_AS(load_parameters(read_checkpoint(path), mm.parameters()), Error);

    const std::string bytes = file_bytes(path);
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_AS(read_checkpoint(path), Error);
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << "HFCX 1\n" << bytes.substr(bytes.find('\n') + 1);
    }
    CHECK_THROWS_AS(read_checkpoint(path), Error);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_checkpoint(path), Error);
  }

  TEST_CASE("config survives checkpoint metadata") {
    model::ModelConfig c = small_config();
    c.lambda_ant = 0.25;
    c.wrist_relative = true;
    c.joint_identity_embeddings = true;
    c.use_tokenizer = false;
    const model::ModelConfig back = config_from_meta(config_meta(c));
    CHECK(config_meta(back) == config_meta(c));
    CHECK(back.lambda_ant == 0.25);
    CHECK(back.wrist_relative);
    CHECK_FALSE(back.use_tokenizer);
  }

  TEST_CASE("same seed gives identical losses and checkpoints") {
    const auto& data = small_data();
    TrainOptions opt;
    opt.epochs = 2;
    opt.batch_size = 4;
    opt.seed = 21;
    std::string bytes[2];
    double loss[2];
    for (int run = 0; run < 2; ++run) {
      model::HandFormer<float> net(small_config(), 21);
      const TrainResult r = train_model(net, data, data, opt);
      REQUIRE(r.history.size() == 2);
      loss[run] = r.history[1].loss.total;
      const auto path = temp_path("det" + std::to_string(run) + ".hfck");
      save_checkpoint(make_checkpoint(net.parameters(), &r.optimizer, config_meta(net.config())), path);
      bytes[run] = file_bytes(path);
      std::filesystem::remove(path);
    }
    CHECK(loss[0] == loss[1]);
    CHECK(bytes[0] == bytes[1]);
  }

  TEST_CASE("training stops after the epoch the stop rule accepts") {
    model::HandFormer<float> net(small_config(), 2);
    TrainOptions opt;
    opt.epochs = 5;
    opt.batch_size = 8;
    opt.stop_after = [](const EpochMetrics& m) { return m.epoch == 2; };
    CHECK(train_model(net, small_data(), small_data(), opt).history.size() == 2);
  }

  TEST_CASE("a non-finite loss aborts with its position") {
    std::vector<PreparedSample> data = small_data();
    data.front().rgb.assign(data.front().rgb.size(), std::numeric_limits<double>::quiet_NaN());
    model::HandFormer<float> net(small_config(), 2);
    TrainOptions opt;
    opt.epochs = 1;
    opt.batch_size = static_cast<std::size_t>(data.size());
    try {
      train_model(net, data, {}, opt);
      FAIL("expected a numerical error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNumerical);
      CHECK(std::string(e.what()).find("non-finite loss at epoch 1 batch 1") != std::string::npos);
    }
  }

  TEST_CASE("pretraining needs a pose-only model") {
    model::HandFormer<float> net(small_config(), 2);
    TrainOptions opt;
    opt.mode = TrainMode::kPosePretrain;
    CHECK_THROWS_AS(train_model(net, small_data(), {}, opt), Error);
    CHECK(effective_config(small_config(), TrainMode::kPosePretrain).pose_only);
  }

  TEST_CASE("metrics CSV has one row per epoch") {
    EpochMetrics m;
    m.epoch = 3;
    m.loss = combine_losses(1.0, 0.5, 0.25, 0.125, LossWeights{});
    m.eval.action_acc = 50;
    m.eval.verb_acc = 75;
    m.eval.object_acc = 100;
    CHECK(metrics_csv_header() == "epoch,l_cls,l_verb,l_obj,l_ant,total,action_acc,verb_acc,object_acc");
    CHECK(metrics_csv_row(m) == "3,1.000000,0.500000,0.250000,0.125000,1.875000,50.000000,75.000000,100.000000");
    const auto path = temp_path("metrics.csv");
    write_metrics_csv({m, m}, path);
    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 3);
    std::filesystem::remove(path);
  }
}

TEST_SUITE("flops") {
  TEST_CASE("published table totals") {
    const FlopsLedger paper = paper_flops_table();
    CHECK(paper.entries.size() == 5);
    CHECK(std::abs(paper.total() - 84.01) < 1e-9);
    CHECK(std::abs(paper.subtotal("pose_estimator") - 48.6) < 1e-9);
    CHECK(std::abs(tsm_flops_table().total() - 669.79) < 1e-9);
    const std::string text = format_ledger(paper);
    CHECK(text.find("TOTAL,,,84.01") != std::string::npos);
  }

  TEST_CASE("B/6-like pose-only forward is within 3x of 1.33 GFLOPs") {
    model::ModelConfig c = model::preset_config("B");
    c.pose_only = true;
    c.joints = 6;
    c.frames_per_action = 15;
    c.stride = 7;
    c.micro_actions = 16;
    REQUIRE(c.total_frames() == 120);
    const FlopsLedger l = count_model_flops(c);
    CHECK(l.total() > 1.33 / 3);
    CHECK(l.total() < 1.33 * 3);
    CHECK(l.subtotal("trajectory_encoder") > 0);
    CHECK(l.subtotal("temporal_transformer") > 0);
    CHECK(l.subtotal("frame_projection") == 0);
    CHECK(std::abs(l.subtotal("") - l.total()) < 1e-12);
  }

  TEST_CASE("transformer and head counts match a direct formula") {
    for (bool pose_only : {true, false}) {
      model::ModelConfig c;
      c.pose_only = pose_only;
      const double d = static_cast<double>(c.d);
      const double n = 3.0 + static_cast<double>(c.micro_actions) * (pose_only ? 1.0 : 2.0);
      const double per_layer = 4 * (2 * d * d * n) + 4 * n * n * d + 2 * (2 * d * 4 * d * n);
      const FlopsLedger l = count_model_flops(c);
      CHECK(l.subtotal("temporal_transformer") * 1e9 ==
            doctest::Approx(static_cast<double>(c.layers) * per_layer).epsilon(1e-12));
      const double heads = 2 * d * static_cast<double>(c.verbs * c.objects + c.verbs + c.objects);
      CHECK(l.subtotal("heads") * 1e9 == doctest::Approx(heads).epsilon(1e-12));
      CHECK((l.subtotal("multimodal_tokenizer") > 0) == !pose_only);
    }
  }

  TEST_CASE("zero transformer layers count nothing") {
    model::ModelConfig c;
    c.layers = 0;
    CHECK(count_model_flops(c).subtotal("temporal_transformer") == 0.0);
    CHECK(FlopsLedger{}.total() == 0.0);
  }

  TEST_CASE("counts scale with micro-actions and layers") {
    model::ModelConfig a;
    a.pose_only = true;
    model::ModelConfig b = a;
    b.layers = 2 * a.layers;
    CHECK(count_model_flops(b).subtotal("temporal_transformer") ==
          doctest::Approx(2 * count_model_flops(a).subtotal("temporal_transformer")));
    CHECK(count_model_flops(b).subtotal("trajectory_encoder.joint_tcn") ==
          count_model_flops(a).subtotal("trajectory_encoder.joint_tcn"));
  }
}
