#include <doctest.h>

#include "handformer/numerics/optim.hpp"

using namespace handformer::nn;

TEST_SUITE("numerics") {
  TEST_CASE("first step from zero velocity moves by lr times grad") {
    Parameter<double> p("p", Tensor<double>({2}, std::vector<double>{1.0, -1.0}));
    p.grad = Tensor<double>({2}, std::vector<double>{0.4, 2.0});
    ParameterSet<double> params{&p};
    auto state = OptimizerState<double>::for_parameters(params);
    sgd_momentum_step(params, state, 0);
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.025 * 0.4).epsilon(1e-15));
    CHECK(p.value[1] == doctest::Approx(-1.0 - 0.025 * 2.0).epsilon(1e-15));
  }

  TEST_CASE("second step with constant grad uses the momentum recurrence") {
    Parameter<double> p("p", Tensor<double>({1}, 0.0));
    p.grad = Tensor<double>({1}, 1.0);
    ParameterSet<double> params{&p};
    auto state = OptimizerState<double>::for_parameters(params);
    sgd_momentum_step(params, state, 0);
    const double after_first = p.value[0];
    sgd_momentum_step(params, state, 0);
    CHECK(after_first - p.value[0] == doctest::Approx(0.025 * 1.9).epsilon(1e-14));
  }

  TEST_CASE("learning rate decays at epochs 25 and 40 only") {
    Parameter<double> p("p", Tensor<double>({1}, 0.0));
    ParameterSet<double> params{&p};
    auto state = OptimizerState<double>::for_parameters(params);
    double prev = state.lr;
    for (int epoch = 0; epoch < 50; ++epoch) {
      for (int step = 0; step < 3; ++step) {
        sgd_momentum_step(params, state, epoch);
        if (step > 0) CHECK(state.lr == prev);
        prev = state.lr;
      }
      if (epoch == 24) CHECK(state.lr == doctest::Approx(0.025));
      if (epoch == 25) CHECK(state.lr == doctest::Approx(0.0025));
      if (epoch == 39) CHECK(state.lr == doctest::Approx(0.0025));
      if (epoch == 40) CHECK(state.lr == doctest::Approx(0.00025));
    }
  }

  TEST_CASE("frozen parameters are not updated") {
    Parameter<double> p("p", Tensor<double>({1}, 3.0), false);
    p.grad = Tensor<double>({1}, 1.0);
    ParameterSet<double> params{&p};
    auto state = OptimizerState<double>::for_parameters(params);
    sgd_momentum_step(params, state, 0);
    CHECK(p.value[0] == 3.0);
  }

  TEST_CASE("zero_grads clears every gradient") {
    Parameter<float> a("a", Tensor<float>({3}, 1.0f));
    a.grad.fill(5.0f);
    zero_grads<float>({&a});
    for (float g : a.grad.values()) CHECK(g == 0.0f);
  }
}
