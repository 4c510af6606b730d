#include <doctest.h>

#include <cmath>
#include <functional>

#include "handformer/numerics/gradcheck.hpp"
#include "handformer/numerics/layers.hpp"

using handformer::Error;
using handformer::Rng;
using namespace handformer::nn;

namespace {

Parameter<double> random_param(const std::string& name, Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = scale * rng.normal();
  return Parameter<double>(name, t);
}

// Random linear readout so every output element carries a distinct weight.
Var<double> readout(Tape<double>& tape, Var<double> y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> r(y.shape());
  for (auto& v : r.values()) v = rng.normal();
  return sum_all(mul(y, tape.constant(r)));
}

ParameterSet<double> params_of(Parameter<double>& p) { return {&p}; }

void check_grads(const std::function<Var<double>(Tape<double>&)>& f, ParameterSet<double> params) {
  const auto report = finite_diff_check(f, params, 1e-5, 1e-4);
  if (!report.passed()) {
    for (const auto& e : report.entries) MESSAGE(e.name << " " << e.max_rel_error);
  }
  INFO("max rel error " << report.max_rel_error);
  CHECK(report.passed());
}

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("gradcheck of a quadratic is exact") {
    Parameter<double> theta("theta", Tensor<double>({1}, 3.0));
    auto f = [&](Tape<double>& tape) {
      auto t = tape.parameter(theta);
      return sum_all(mul(t, t));
    };
    const auto report = finite_diff_check(f, {&theta});
    CHECK(report.max_rel_error < 1e-10);
    zero_grads<double>(params_of(theta));
    Tape<double> tape;
    tape.backward(f(tape));
    CHECK(theta.grad[0] == doctest::Approx(6.0).epsilon(1e-14));
  }

  TEST_CASE("gradcheck of a sum gives all-ones gradient") {
    Rng rng(1);
    auto theta = random_param("theta", {7}, rng);
    auto f = [&](Tape<double>& tape) { return sum_all(tape.parameter(theta)); };
    const auto report = finite_diff_check(f, {&theta});
    CHECK(report.max_rel_error < 1e-10);
    zero_grads<double>(params_of(theta));
    Tape<double> tape;
    tape.backward(f(tape));
    for (double g : theta.grad.values()) CHECK(g == 1.0);
  }

  TEST_CASE("gradcheck reports non-finite losses") {
    Parameter<double> theta("theta", Tensor<double>({1}, 1.0));
    auto f = [&](Tape<double>& tape) {
      auto t = tape.parameter(theta);
      return scale(sum_all(t), std::numeric_limits<double>::infinity());
    };
    CHECK_THROWS_AS(finite_diff_check(f, {&theta}), Error);
  }

  TEST_CASE("elementwise ops pass gradcheck") {
    Rng rng(2);
    auto a = random_param("a", {3, 4}, rng);
    auto b = random_param("b", {3, 4}, rng);
    auto c = random_param("c", {4}, rng);
    check_grads(
        [&](Tape<double>& t) {
          auto x = t.parameter(a), y = t.parameter(b), z = t.parameter(c);
          auto e = add_trailing(relu(sub(mul(x, y), scale(add(x, y), 0.5))), z);
          return readout(t, e, 9);
        },
        {&a, &b, &c});
  }

  TEST_CASE("matmul and layer norm pass gradcheck") {
    Rng rng(3);
    auto x = random_param("x", {2, 3, 5}, rng);
    auto w = random_param("w", {5, 4}, rng);
    auto g = random_param("g", {4}, rng);
    auto bt = random_param("b", {4}, rng);
    check_grads(
        [&](Tape<double>& t) {
          auto y = matmul(t.parameter(x), t.parameter(w));
          return readout(t, layer_norm(y, t.parameter(g), t.parameter(bt)), 4);
        },
        {&x, &w, &g, &bt});
  }

  TEST_CASE("conv1d passes gradcheck with stride and padding") {
    Rng rng(4);
    auto x = random_param("x", {2, 3, 7}, rng);
    auto k = random_param("k", {4, 3, 3}, rng);
    auto b = random_param("b", {4}, rng);
    for (std::size_t stride : {1u, 2u}) {
      check_grads(
          [&](Tape<double>& t) {
            return readout(t, conv1d(t.parameter(x), t.parameter(k), t.parameter(b), stride, 1), 5);
          },
          {&x, &k, &b});
    }
  }

  TEST_CASE("masked multi-head attention passes gradcheck") {
    Rng rng(5);
    auto q = random_param("q", {2, 4, 6}, rng);
    auto k = random_param("k", {2, 5, 6}, rng);
    auto v = random_param("v", {2, 5, 6}, rng);
    AttentionMask mask(4, 5, true);
    mask.set(0, 1, false);
    mask.set(0, 3, false);
    mask.set(2, 4, false);
    check_grads(
        [&](Tape<double>& t) {
          return readout(t, attention(t.parameter(q), t.parameter(k), t.parameter(v), 2, &mask), 6);
        },
        {&q, &k, &v});
  }

  TEST_CASE("shape ops pass gradcheck") {
    Rng rng(6);
    auto a = random_param("a", {2, 3, 4}, rng);
    auto b = random_param("b", {2, 1, 4}, rng);
    auto table = random_param("table", {5, 4}, rng);
    check_grads(
        [&](Tape<double>& t) {
          auto x = t.parameter(a);
          auto cat = concat<double>({x, t.parameter(b)}, 1);             // [2,4,4]
          auto p = permute(cat, {2, 0, 1});                              // [4,2,4]
          auto s = slice(p, 2, 1, 3);                                    // [4,2,2]
          auto r = reshape(s, {8, 2});
          auto m = mean_axis(reshape(x, {2, 3, 4}), 1);                  // [2,4]
          auto bc = broadcast_axis(m, 1, 3);                             // [2,3,4]
          auto rows = gather_rows(t.parameter(table), {4, 0, 4, 2});    // [4,4]
          return weighted_sum<double>(
              {readout(t, r, 1), readout(t, bc, 2), readout(t, rows, 3)}, {1.0, 0.5, 2.0});
        },
        {&a, &b, &table});
  }

  TEST_CASE("losses pass gradcheck") {
    Rng rng(7);
    auto logits = random_param("logits", {3, 5}, rng);
    auto pred = random_param("pred", {6}, rng);
    check_grads(
        [&](Tape<double>& t) {
          auto ce = cross_entropy_mean(t.parameter(logits), {1, 4, 0});
          auto l1 = l1_sum(t.parameter(pred));
          return weighted_sum<double>({ce, l1}, {1.0, 0.3});
        },
        {&logits, &pred});
  }

  TEST_CASE("cross_entropy_mean equals the batch mean of per-row losses") {
    Tensor<double> logits({2, 3}, std::vector<double>{2, 1, 0, 0, 0, 5});
    Tape<double> tape;
    auto l = cross_entropy_mean(tape.constant(logits), {0, 1});
    const double r0 = std::log(std::exp(2.0) + std::exp(1.0) + 1.0) - 2.0;
    const double r1 = std::log(2.0 + std::exp(5.0));
    CHECK(l.value().item() == doctest::Approx(0.5 * (r0 + r1)).epsilon(1e-14));
  }

  TEST_CASE("detach blocks gradient flow") {
    Rng rng(8);
    auto a = random_param("a", {4}, rng);
    Tape<double> tape;
    auto x = tape.parameter(a);
    auto loss = sum_all(mul(x, detach(x)));
    tape.backward(loss);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.grad[i] == doctest::Approx(a.value[i]).epsilon(1e-15));
  }

  TEST_CASE("every layer passes gradcheck on randomized small shapes") {
    Rng init(9);
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t d = 4 + 2 * trial;
      Linear<double> lin("lin", d, d + 1, init);
      LayerNorm<double> ln("ln", d + 1);
      for (auto& v : ln.gamma.value.values()) v = 1.0 + 0.3 * init.normal();
      for (auto& v : ln.beta.value.values()) v = 0.3 * init.normal();
      Conv1d<double> conv("conv", 2, 3, 3, 1 + trial % 2, 1, init);
      SelfAttention<double> attn("attn", d, trial == 2 ? 2 : 1, init);
      FeedForward<double> ff("ff", d, 2 * d, init);
      for (auto& v : ff.expand.bias.value.values()) v = 0.1 * init.normal();
      auto x = random_param("x", {2, 3, d}, init);
      auto sig = random_param("sig", {2, 2, 6}, init);
      ParameterSet<double> params{&x, &sig};
      lin.collect(params);
      ln.collect(params);
      conv.collect(params);
      attn.collect(params);
      ff.collect(params);
      check_grads(
          [&](Tape<double>& t) {
            auto in = t.parameter(x);
            auto a = attn.forward(t, in);
            auto f = ff.forward(t, a);
            auto l = ln.forward(t, lin.forward(t, f));
            auto c = conv.forward(t, t.parameter(sig));
            return weighted_sum<double>({readout(t, l, 11), readout(t, c, 12)}, {1.0, 1.0});
          },
          params);
    }
  }

  TEST_CASE("glorot init stays within its bound and is seed-deterministic") {
    Rng a(42), b(42);
    auto wa = glorot_uniform<float>({16, 8}, 16, 8, a);
    auto wb = glorot_uniform<float>({16, 8}, 16, 8, b);
    CHECK(wa == wb);
    const double bound = std::sqrt(6.0 / 24.0);
    for (float v : wa.values()) CHECK(std::abs(v) <= bound);
  }

  TEST_CASE("head count rule") {
    CHECK(default_head_count(8) == 1);
    CHECK(default_head_count(64) == 1);
    CHECK(default_head_count(256) == 4);
    CHECK(default_head_count(512) == 8);
  }
}
