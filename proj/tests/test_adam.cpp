#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "augsched/adam.hpp"
#include "augsched/network.hpp"

using namespace augsched;

namespace {
NetworkSpec micro_spec() {
  NetworkSpec s;
  s.in_h = 4;
  s.in_w = 4;
  s.in_c = 1;
  s.num_actions = 2;
  s.layers = {{LayerSpec::Kind::flatten}, {LayerSpec::Kind::dense, 0, 0, 0, 3}};
  return s;
}
}  // namespace

TEST_CASE("zero gradients leave parameters unchanged and advance the step") {
  ParameterSet p = init_params(micro_spec(), 3, 0.1);
  ParameterSet before = p;
  AdamState st = AdamState::init(p);
  GradientSet g = GradientSet::zeros_like(p);
  adam_step(p, g, st, 5e-4);
  REQUIRE(st.step == 1);
  REQUIRE(bitwise_equal(p, before));
}

TEST_CASE("adam update is deterministic") {
  ParameterSet p1 = init_params(micro_spec(), 9, 0.1);
  ParameterSet p2 = init_params(micro_spec(), 9, 0.1);
  AdamState s1 = AdamState::init(p1), s2 = AdamState::init(p2);
  GradientSet g = GradientSet::zeros_like(p1);
  for (Tensor& t : g.tensors)
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = 0.01 * static_cast<double>(i + 1);
  adam_step(p1, g, s1, 1e-3);
  adam_step(p2, g, s2, 1e-3);
  REQUIRE(bitwise_equal(p1, p2));
  REQUIRE(s1.step == s2.step);
}

TEST_CASE("constant gradient drives per-coordinate update magnitude toward lr") {
  // closed-form fixed point: with g constant, m_hat -> g and v_hat -> g^2,
  // so |delta| -> lr * |g| / (|g| + eps) ~= lr
  ParameterSet p = init_params(micro_spec(), 1, 0.0);
  AdamState st = AdamState::init(p);
  GradientSet g = GradientSet::zeros_like(p);
  for (Tensor& t : g.tensors)
    for (double& v : t.data) v = 0.37;
  const double lr = 5e-4;
  double prev = p.tensors[0].data[0];
  double delta = 0.0;
  for (int i = 0; i < 2000; ++i) {
    adam_step(p, g, st, lr);
    delta = std::abs(p.tensors[0].data[0] - prev);
    prev = p.tensors[0].data[0];
  }
  REQUIRE(delta == Catch::Approx(lr).epsilon(1e-4));
}

TEST_CASE("NaN gradients are rejected before any mutation") {
  ParameterSet p = init_params(micro_spec(), 4, 0.1);
  ParameterSet before = p;
  AdamState st = AdamState::init(p);
  GradientSet g = GradientSet::zeros_like(p);
  g.tensors[0].data[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(adam_step(p, g, st, 1e-3), std::runtime_error);
  REQUIRE(bitwise_equal(p, before));
  REQUIRE(st.step == 0);
}

TEST_CASE("shape mismatches are rejected") {
  ParameterSet p = init_params(micro_spec(), 4, 0.1);
  AdamState st = AdamState::init(p);
  GradientSet g = GradientSet::zeros_like(p);
  g.tensors[0] = Tensor({2, 2});
  REQUIRE_THROWS_AS(adam_step(p, g, st, 1e-3), std::invalid_argument);
}
