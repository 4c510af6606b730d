#include <doctest.h>

#include <cmath>
#include <numeric>

#include "handformer/error.hpp"
#include "handformer/model/handformer.hpp"
#include "handformer/pose/synthetic.hpp"
#include "handformer/train/batch.hpp"
#include "handformer/train/losses.hpp"
#include "handformer/train/model_check.hpp"

using handformer::Error;
using handformer::Rng;
using namespace handformer::model;
namespace nn = handformer::nn;
namespace train = handformer::train;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

EncoderConfig small_encoder(std::size_t joints, bool embeddings) {
  EncoderConfig e;
  e.joints = joints;
  e.frames = 8;
  e.token_dim = 8;
  e.attn_layers = 2;
  e.out_dim = 8;
  e.joint_identity_embeddings = embeddings;
  return e;
}

// Runs the encoder on [K*2J, C, N] joints and [1, 12, T'] wrist.
Tensor<double> encode(TrajectoryEncoder<double>& enc, const Tensor<double>& joints,
                      const Tensor<double>& wrist, std::size_t k) {
  Tape<double> tape;
  return enc.forward(tape, tape.constant(joints), tape.constant(wrist), 1, k).value();
}

// Swaps joint trajectories a and b inside every block.
Tensor<double> swap_joints(const Tensor<double>& joints, std::size_t per_block, std::size_t a,
                           std::size_t b) {
  Tensor<double> out = joints;
  const std::size_t row = joints.shape()[1] * joints.shape()[2];
  for (std::size_t block = 0; block < joints.shape()[0] / per_block; ++block) {
    for (std::size_t i = 0; i < row; ++i) {
      std::swap(out[(block * per_block + a) * row + i], out[(block * per_block + b) * row + i]);
    }
  }
  return out;
}

bool identical(const Tensor<double>& a, const Tensor<double>& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

void zero_param(Parameter<double>& p) { p.value.fill(0.0); }

void zero_linear(nn::Linear<double>& l) {
  zero_param(l.weight);
  if (l.has_bias) zero_param(l.bias);
}

ModelConfig small_model() {
  ModelConfig c = preset_config("gradcheck");
  c.micro_actions = 3;
  return c;
}

}  // namespace

TEST_SUITE("trajectory_encoder") {
  TEST_CASE("TCN output lengths follow strides 1, 2, 2") {
    CHECK(tcn_output_length(15) == 4);
    CHECK(tcn_output_length(4) == 1);
    CHECK(tcn_output_length(120) == 30);
  }

  TEST_CASE("21 joints per hand give 42 local tokens plus the wrist token") {
    EncoderConfig e = small_encoder(21, false);
    CHECK(e.tokens() == 43);
    Rng rng(1);
    TrajectoryEncoder<double> enc(e, rng);
    const Tensor<double> joints = random_tensor({2 * 42, 3, 8}, rng);
    const Tensor<double> wrist = random_tensor({1, 12, 20}, rng);
    CHECK(encode(enc, joints, wrist, 2).shape() == Shape{1, 2, 8});
  }

  TEST_CASE("without identity embeddings the encoder is invariant to joint order") {
    Rng rng(2);
    TrajectoryEncoder<double> enc(small_encoder(3, false), rng);
    const Tensor<double> joints = random_tensor({2 * 6, 3, 8}, rng);
    const Tensor<double> wrist = random_tensor({1, 12, 16}, rng);
    const auto base = encode(enc, joints, wrist, 2);
    const auto swapped = encode(enc, swap_joints(joints, 6, 0, 4), wrist, 2);
    CHECK(max_abs_diff(base, swapped) < 1e-12);
  }

  TEST_CASE("identity embeddings make the encoder joint-order sensitive") {
    Rng rng(2);
    TrajectoryEncoder<double> enc(small_encoder(3, true), rng);
    const Tensor<double> joints = random_tensor({2 * 6, 3, 8}, rng);
    const Tensor<double> wrist = random_tensor({1, 12, 16}, rng);
    const auto base = encode(enc, joints, wrist, 2);
    const auto swapped = encode(enc, swap_joints(joints, 6, 0, 4), wrist, 2);
    CHECK(max_abs_diff(base, swapped) > 1e-6);
  }

  TEST_CASE("a block's output depends only on its own joints and the shared wrist") {
    Rng rng(3);
    TrajectoryEncoder<double> enc(small_encoder(2, false), rng);
    Tensor<double> joints = random_tensor({3 * 4, 3, 8}, rng);
    const Tensor<double> wrist = random_tensor({1, 12, 24}, rng);
    const auto base = encode(enc, joints, wrist, 3);
    for (std::size_t i = 4 * 24; i < 8 * 24; ++i) joints[i] += 0.5;  // block 1 only
    const auto moved = encode(enc, joints, wrist, 3);
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(moved[0 * 8 + j] == base[0 * 8 + j]);
      CHECK(moved[2 * 8 + j] == base[2 * 8 + j]);
    }
    double diff = 0;
    for (std::size_t j = 0; j < 8; ++j) diff = std::max(diff, std::abs(moved[8 + j] - base[8 + j]));
    CHECK(diff > 1e-6);
  }

  TEST_CASE("the wrist token changes every block") {
    Rng rng(4);
    TrajectoryEncoder<double> enc(small_encoder(2, false), rng);
    const Tensor<double> joints = random_tensor({2 * 4, 3, 8}, rng);
    Tensor<double> wrist = random_tensor({1, 12, 16}, rng);
    const auto base = encode(enc, joints, wrist, 2);
    for (auto& v : wrist.values()) v *= 1.5;
    const auto moved = encode(enc, joints, wrist, 2);
    for (std::size_t k = 0; k < 2; ++k) {
      double diff = 0;
      for (std::size_t j = 0; j < 8; ++j) diff = std::max(diff, std::abs(moved[k * 8 + j] - base[k * 8 + j]));
      CHECK(diff > 1e-6);
    }
  }

  TEST_CASE("absolute joint positions matter without wrist-relative coordinates") {
    Rng rng(5);
    TrajectoryEncoder<double> enc(small_encoder(2, false), rng);
    Tensor<double> joints = random_tensor({4, 3, 8}, rng);
    const Tensor<double> wrist = random_tensor({1, 12, 8}, rng);
    const auto base = encode(enc, joints, wrist, 1);
    for (auto& v : joints.values()) v += 0.1;
    CHECK(max_abs_diff(base, encode(enc, joints, wrist, 1)) > 1e-6);
  }

  TEST_CASE("with no joints the encoder sees only the wrist token") {
    Rng rng(6);
    TrajectoryEncoder<double> enc(small_encoder(0, false), rng);
    const Tensor<double> wrist = random_tensor({1, 12, 16}, rng);
    Tape<double> tape;
    // The joint input is ignored when there are no joints.
    const auto out = enc.forward(tape, tape.constant(Tensor<double>({1, 3, 8})), tape.constant(wrist), 1, 2).value();
    REQUIRE(out.shape() == Shape{1, 2, 8});
    for (std::size_t j = 0; j < 8; ++j) CHECK(out[j] == out[8 + j]);
  }

  TEST_CASE("clockwise and counter-clockwise screws give different wrist tokens") {
    handformer::pose::SyntheticSpec spec;
    spec.noise = 0.0;
    ModelConfig cfg;
    cfg.pose_only = true;
    const auto cw = train::prepare_sample(handformer::pose::generate_sample(spec, 2, 0, 0), cfg, nullptr);
    const auto ccw = train::prepare_sample(handformer::pose::generate_sample(spec, 3, 0, 0), cfg, nullptr);
    Rng rng(7);
    TrajectoryEncoder<double> enc(cfg.encoder(), rng);
    auto token = [&](const train::PreparedSample& s) {
      Tensor<double> w({1, kWristChannels, cfg.total_frames()});
      std::copy(s.wrist.begin(), s.wrist.end(), w.values().begin());
      Tape<double> tape;
      return enc.encode_global_wrist(tape, tape.constant(w)).value();
    };
    CHECK(max_abs_diff(token(cw), token(ccw)) > 1e-3);
  }

  TEST_CASE("encoder rejects misshapen inputs") {
    Rng rng(8);
    TrajectoryEncoder<double> enc(small_encoder(2, false), rng);
    Tape<double> tape;
    CHECK_THROWS_AS(enc.forward(tape, tape.constant(Tensor<double>({4, 3, 7})),
                                tape.constant(Tensor<double>({1, 12, 8})), 1, 1),
                    Error);
    CHECK_THROWS_AS(enc.forward(tape, tape.constant(Tensor<double>({4, 3, 8})),
                                tape.constant(Tensor<double>({1, 6, 8})), 1, 1),
                    Error);
    EncoderConfig odd = small_encoder(2, false);
    odd.token_dim = 7;
    CHECK_THROWS_AS(odd.validate(), Error);
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("positional encoding interleaves sin and cos") {
    const auto p1 = positional_encoding(1, 8);
    CHECK(p1[0] == doctest::Approx(0.841471).epsilon(1e-6));
    CHECK(p1[1] == doctest::Approx(0.540302).epsilon(1e-6));
    const auto p0 = positional_encoding(0, 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(p0[i] == (i % 2 ? 1.0 : 0.0));
    const auto p5 = positional_encoding(5, 16);
    for (std::size_t i = 0; i < 8; ++i) {
      const double angle = 5.0 / std::pow(10000.0, 2.0 * i / 16.0);
      CHECK(p5[2 * i] == doctest::Approx(std::sin(angle)).epsilon(1e-12));
      CHECK(p5[2 * i + 1] == doctest::Approx(std::cos(angle)).epsilon(1e-12));
    }
  }

  TEST_CASE("token layout for K = 8") {
    const TokenLayout mm = make_token_layout(8, true);
    CHECK(mm.size() == 19);
    CHECK(mm.pose_index(1) == 3);
    CHECK(mm.rgb_index(1) == 4);
    CHECK(mm.pose_index(8) == 17);
    CHECK(mm.position_ids[kClsToken] == 0);
    CHECK(mm.position_ids[mm.rgb_index(5)] == 5);
    CHECK(mm.mask.row_count(kVerbToken) == 9);
    CHECK(mm.mask.row_count(kObjToken) == 9);
    CHECK(mm.mask.row_count(kClsToken) == 19);
    for (std::size_t k = 1; k <= 8; ++k) {
      CHECK(mm.mask.allowed(kVerbToken, mm.pose_index(k)));
      CHECK_FALSE(mm.mask.allowed(kVerbToken, mm.rgb_index(k)));
      CHECK(mm.mask.allowed(kObjToken, mm.rgb_index(k)));
      CHECK_FALSE(mm.mask.allowed(kObjToken, mm.pose_index(k)));
      CHECK(mm.modality_ids[mm.pose_index(k)] == Modality::kPose);
      CHECK(mm.modality_ids[mm.rgb_index(k)] == Modality::kRgb);
    }
    const TokenLayout po = make_token_layout(8, false);
    CHECK(po.size() == 11);
    CHECK(po.mask.row_count(kObjToken) == 1);
    CHECK_THROWS_AS(po.rgb_index(1), Error);
  }

  TEST_CASE("tokenizer with a zero output layer is the identity") {
    Rng rng(10);
    MultimodalTokenizer<double> tok(8, rng);
    zero_linear(tok.split);
    Tape<double> tape;
    const auto rgb = random_tensor({2, 3, 8}, rng);
    const auto pose = random_tensor({2, 3, 8}, rng);
    const auto out = tok.forward(tape, tape.constant(rgb), tape.constant(pose));
    CHECK(identical(out.rgb.value(), rgb));
    CHECK(identical(out.pose.value(), pose));
  }

  TEST_CASE("tokenizer matches a direct two-layer oracle") {
    Rng rng(11);
    const std::size_t d = 4;
    MultimodalTokenizer<double> tok(d, rng);
    Tape<double> tape;
    const auto rgb = random_tensor({1, 1, d}, rng);
    const auto pose = random_tensor({1, 1, d}, rng);
    const auto out = tok.forward(tape, tape.constant(rgb), tape.constant(pose));
    std::vector<double> x(rgb.values().begin(), rgb.values().end());
    x.insert(x.end(), pose.values().begin(), pose.values().end());
    std::vector<double> hidden(d), mixed(2 * d);
    for (std::size_t j = 0; j < d; ++j) {
      double s = tok.shared.bias.value[j];
      for (std::size_t i = 0; i < 2 * d; ++i) s += x[i] * tok.shared.weight.value[i * d + j];
      hidden[j] = std::max(0.0, s);
    }
    for (std::size_t j = 0; j < 2 * d; ++j) {
      double s = tok.split.bias.value[j];
      for (std::size_t i = 0; i < d; ++i) s += hidden[i] * tok.split.weight.value[i * 2 * d + j];
      mixed[j] = s;
    }
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(out.posergb.value()[j] == doctest::Approx(hidden[j]).epsilon(1e-12));
      CHECK(out.rgb.value()[j] == doctest::Approx(rgb[j] + mixed[j]).epsilon(1e-12));
      CHECK(out.pose.value()[j] == doctest::Approx(pose[j] + mixed[d + j]).epsilon(1e-12));
    }
  }

  TEST_CASE("a zero tokenizer output layer reproduces the bypassed model's logits exactly") {
    ModelConfig with = small_model();
    ModelConfig without = with;
    without.use_tokenizer = false;
    HandFormer<double> a(with, 5), b(without, 5);
    zero_linear(a.tokenizer.split);
    Rng rng(12);
    const auto batch = train::random_batch<double>(with, 2, rng);
    Tape<double> ta, tb;
    const auto oa = a.forward(ta, batch);
    const auto ob = b.forward(tb, batch);
    CHECK(identical(oa.action_logits.value(), ob.action_logits.value()));
    CHECK(identical(oa.verb_logits.value(), ob.verb_logits.value()));
    CHECK(identical(oa.object_logits.value(), ob.object_logits.value()));
  }

  TEST_CASE("token assembly adds class, positional and modality terms") {
    Rng rng(13);
    const std::size_t d = 6, k = 2;
    Tape<double> tape;
    const auto pose = random_tensor({1, k, d}, rng);
    const auto rgb = random_tensor({1, k, d}, rng);
    const auto cls = random_tensor({kClassTokens, d}, rng);
    const auto mod = random_tensor({kModalities, d}, rng);
    const auto seq = assemble_token_sequence(tape, tape.constant(pose),
                                             std::optional<Var<double>>(tape.constant(rgb)),
                                             tape.constant(cls), tape.constant(mod));
    const Tensor<double>& t = seq.tokens.value();
    REQUIRE(t.shape() == Shape{1, 7, d});
    const auto pe0 = positional_encoding(0, d), pe2 = positional_encoding(2, d);
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(t[kVerbToken * d + j] == doctest::Approx(cls[kVerbToken * d + j] + pe0[j] + mod[2 * d + j]));
      const std::size_t rgb2 = seq.layout.rgb_index(2);
      CHECK(t[rgb2 * d + j] == doctest::Approx(rgb[d + j] + pe2[j] + mod[d + j]));
      const std::size_t pose2 = seq.layout.pose_index(2);
      CHECK(t[pose2 * d + j] == doctest::Approx(pose[d + j] + pe2[j] + mod[j]));
    }
    CHECK_THROWS_AS(assemble_token_sequence(tape, tape.constant(pose),
                                            std::optional<Var<double>>(tape.constant(random_tensor({1, 3, d}, rng))),
                                            tape.constant(cls), tape.constant(mod)),
                    Error);
  }

  TEST_CASE("zero transformer weights pass tokens through unchanged") {
    Rng rng(14);
    TemporalTransformer<double> tr(8, 2, rng);
    ParameterSet<double> params;
    tr.collect(params);
    for (auto* p : params) {
      if (p->name.find("norm") == std::string::npos) zero_param(*p);
    }
    const auto x = random_tensor({2, 7, 8}, rng);
    Tape<double> tape;
    const auto y = tr.forward(tape, tape.constant(x), make_token_layout(2, true).mask).value();
    CHECK(identical(y, x));
  }

  TEST_CASE("masked entries get exactly zero weight and rows sum to one") {
    Rng rng(15);
    TemporalTransformer<double> tr(8, 2, rng);
    const TokenLayout layout = make_token_layout(3, true);
    const auto x = random_tensor({2, layout.size(), 8}, rng);
    Tape<double> tape;
    std::vector<Tensor<double>> probe;
    tr.forward(tape, tape.constant(x), layout.mask, &probe);
    REQUIRE(probe.size() == 2);
    const std::size_t n = layout.size();
    for (const auto& w : probe) {
      const std::size_t rows = w.size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t q = r % n;
        double sum = 0;
        for (std::size_t c = 0; c < n; ++c) {
          const double v = w[r * n + c];
          if (!layout.mask.allowed(q, c)) CHECK(v == 0.0);
          sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("with one layer the verb token ignores rgb tokens and the object token ignores pose tokens") {
    Rng rng(16);
    TemporalTransformer<double> tr(8, 1, rng);
    const TokenLayout layout = make_token_layout(4, true);
    const std::size_t n = layout.size(), d = 8;
    const auto x = random_tensor({2, n, d}, rng);
    auto run = [&](const Tensor<double>& in) {
      Tape<double> tape;
      return tr.forward(tape, tape.constant(in), layout.mask).value();
    };
    const auto base = run(x);
    auto perturbed = [&](Modality m) {
      Tensor<double> y = x;
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t t = 0; t < n; ++t) {
          if (layout.modality_ids[t] != m) continue;
          for (std::size_t j = 0; j < d; ++j) y[(b * n + t) * d + j] += 10.0 * rng.normal();
        }
      }
      return run(y);
    };
    const auto rgb_moved = perturbed(Modality::kRgb);
    const auto pose_moved = perturbed(Modality::kPose);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(rgb_moved[(b * n + kVerbToken) * d + j] == base[(b * n + kVerbToken) * d + j]);
        CHECK(pose_moved[(b * n + kObjToken) * d + j] == base[(b * n + kObjToken) * d + j]);
      }
    }
    CHECK(max_abs_diff(rgb_moved, base) > 1e-3);
  }

  TEST_CASE("reordering micro-actions changes the action logits") {
    ModelConfig cfg = small_model();
    HandFormer<double> net(cfg, 3);
    Rng rng(17);
    auto batch = train::random_batch<double>(cfg, 1, rng);
    Tape<double> t1;
    const auto base = net.forward(t1, batch).action_logits.value();
    // Swap blocks 0 and 2 in every input that is laid out per micro-action.
    const std::size_t jrow = batch.joints.size() / cfg.micro_actions;
    for (std::size_t i = 0; i < jrow; ++i) std::swap(batch.joints[i], batch.joints[2 * jrow + i]);
    const std::size_t frow = cfg.feature_dim;
    for (std::size_t i = 0; i < frow; ++i) std::swap((*batch.rgb)[i], (*batch.rgb)[2 * frow + i]);
    Tape<double> t2;
    CHECK(max_abs_diff(base, net.forward(t2, batch).action_logits.value()) > 1e-6);
  }

  TEST_CASE("model output shapes and missing features") {
    ModelConfig cfg = small_model();
    HandFormer<double> net(cfg, 3);
    Rng rng(18);
    auto batch = train::random_batch<double>(cfg, 2, rng);
    Tape<double> tape;
    const auto out = net.forward(tape, batch);
    CHECK(out.action_logits.shape() == Shape{2, cfg.actions()});
    CHECK(out.verb_logits.shape() == Shape{2, cfg.verbs});
    CHECK(out.object_logits.shape() == Shape{2, cfg.objects});
    CHECK(out.states.shape() == Shape{2, out.layout.size(), cfg.d});
    batch.rgb.reset();
    try {
      net.forward(tape, batch);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == handformer::ErrorCode::kMissingFeature);
    }
  }

  TEST_CASE("pose-only and multimodal models share encoder weights") {
    ModelConfig mm = small_model();
    ModelConfig po = mm;
    po.pose_only = true;
    HandFormer<double> a(mm, 9), b(po, 9);
    ParameterSet<double> pa, pb;
    a.encoder.collect(pa);
    b.encoder.collect(pb);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(identical(pa[i]->value, pb[i]->value));
    for (auto* p : b.parameters()) {
      const auto section = parameter_section(p->name);
      CHECK(section != "tokenizer");
      CHECK(section != "frame_projection");
    }
  }
}

TEST_SUITE("training") {
  TEST_CASE("anticipation loss examples") {
    Tape<double> tape;
    Rng rng(20);
    nn::Linear<double> phi("phi", 2, 2, rng);
    phi.weight.value = Tensor<double>({2, 2}, {1, 0, 0, 1});
    zero_param(phi.bias);
    const auto posergb = tape.constant(Tensor<double>({1, 2, 2}, {1, 1, 5, 5}));
    const auto rgb = tape.constant(Tensor<double>({1, 2, 2}, {9, 9, 0, 3}));
    CHECK(anticipation_loss(tape, posergb, rgb, phi).value().item() == doctest::Approx(3.0));
    const auto one = tape.constant(Tensor<double>({1, 1, 2}, {1, 1}));
    CHECK(anticipation_loss(tape, one, one, phi).value().item() == 0.0);
    const auto exact = tape.constant(Tensor<double>({1, 2, 2}, {4, 4, 1, 1}));
    const auto target = tape.constant(Tensor<double>({1, 2, 2}, {0, 0, 4, 4}));
    CHECK(anticipation_loss(tape, exact, target, phi).value().item() == 0.0);
  }

  TEST_CASE("anticipation targets carry no gradient") {
    Rng rng(21);
    nn::Linear<double> phi("phi", 3, 3, rng);
    Parameter<double> posergb("posergb", random_tensor({2, 3, 3}, rng));
    Parameter<double> rgb("rgb", random_tensor({2, 3, 3}, rng));
    Tape<double> tape;
    const auto loss = anticipation_loss(tape, tape.parameter(posergb), tape.parameter(rgb), phi);
    nn::zero_grads<double>({&posergb, &rgb, &phi.weight});
    tape.backward(loss);
    for (double g : rgb.grad.values()) CHECK(g == 0.0);
    double total = 0;
    for (double g : phi.weight.grad.values()) total += std::abs(g);
    CHECK(total > 0);
  }

  TEST_CASE("full gradcheck model passes finite differences") {
    const auto report = train::check_model_gradients(preset_config("gradcheck"), 11);
    if (!report.passed()) {
      for (const auto& e : report.entries) MESSAGE(e.name << " " << e.max_rel_error);
    }
    INFO("max rel error " << report.max_rel_error);
    CHECK(report.passed());
  }

  TEST_CASE("pose-only and tokenizer-free variants pass finite differences") {
    ModelConfig po = preset_config("gradcheck");
    po.pose_only = true;
    CHECK(train::check_model_gradients(po, 12).passed());
    ModelConfig plain = preset_config("gradcheck");
    plain.use_tokenizer = false;
    plain.joint_identity_embeddings = true;
    CHECK(train::check_model_gradients(plain, 13).passed());
  }

  TEST_CASE("presets") {
    CHECK(preset_config("tiny").d == 64);
    CHECK(preset_config("B").d == 256);
    CHECK(preset_config("L").layers == 4);
    CHECK(preset_config("tiny").total_frames() == 120);
    CHECK_THROWS_AS(preset_config("XL"), Error);
  }
}
