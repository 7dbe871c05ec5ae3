#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "augsched/network.hpp"
#include "augsched/rng.hpp"

using namespace augsched;

namespace {

NetworkSpec tiny_spec() {
  NetworkSpec s;
  s.in_h = 6;
  s.in_w = 6;
  s.in_c = 2;
  s.num_actions = 4;
  s.layers = {
      {LayerSpec::Kind::conv, 3, 3, 1, 0}, {LayerSpec::Kind::relu},
      {LayerSpec::Kind::flatten},          {LayerSpec::Kind::dense, 0, 0, 0, 5},
      {LayerSpec::Kind::relu},
  };
  return s;
}

// Straight-line re-implementation of the tiny network above, written with
// plain nested loops and no shared code with the library kernels.
void reference_eval(const ParameterSet& p, const double* obs /*6x6x2*/, double* logits_out,
                    double* value_out) {
  const Tensor& cw = p.at("l0.conv.w");  // (3,3,2,3)
  const Tensor& cb = p.at("l0.conv.b");
  double conv[4][4][3];
  for (int oh = 0; oh < 4; ++oh)
    for (int ow = 0; ow < 4; ++ow)
      for (int co = 0; co < 3; ++co) {
        double acc = cb.data[static_cast<std::size_t>(co)];
        for (int kh = 0; kh < 3; ++kh)
          for (int kw = 0; kw < 3; ++kw)
            for (int ci = 0; ci < 2; ++ci) {
              const double xv = obs[((oh + kh) * 6 + (ow + kw)) * 2 + ci];
              const double wv = cw.data[static_cast<std::size_t>(((kh * 3 + kw) * 2 + ci) * 3 + co)];
              acc += xv * wv;
            }
        conv[oh][ow][co] = acc > 0.0 ? acc : 0.0;
      }
  double flat[48];
  int idx = 0;
  for (int oh = 0; oh < 4; ++oh)
    for (int ow = 0; ow < 4; ++ow)
      for (int co = 0; co < 3; ++co) flat[idx++] = conv[oh][ow][co];

  const Tensor& dw = p.at("l3.dense.w");  // (48,5)
  const Tensor& db = p.at("l3.dense.b");
  double hidden[5];
  for (int o = 0; o < 5; ++o) {
    double acc = db.data[static_cast<std::size_t>(o)];
    for (int d = 0; d < 48; ++d) acc += flat[d] * dw.data[static_cast<std::size_t>(d * 5 + o)];
    hidden[o] = acc > 0.0 ? acc : 0.0;
  }

  const Tensor& pw = p.at("policy.w");
  const Tensor& pb = p.at("policy.b");
  for (int a = 0; a < 4; ++a) {
    double acc = pb.data[static_cast<std::size_t>(a)];
    for (int d = 0; d < 5; ++d) acc += hidden[d] * pw.data[static_cast<std::size_t>(d * 4 + a)];
    logits_out[a] = acc;
  }
  const Tensor& vw = p.at("value.w");
  const Tensor& vb = p.at("value.b");
  double acc = vb.data[0];
  for (int d = 0; d < 5; ++d) acc += hidden[d] * vw.data[static_cast<std::size_t>(d)];
  *value_out = acc;
}

}  // namespace

TEST_CASE("init_params draws uniform weights and zero biases, deterministically") {
  NetworkSpec spec = tiny_spec();
  ParameterSet a = init_params(spec, 11, 0.05);
  ParameterSet b = init_params(spec, 11, 0.05);
  REQUIRE(bitwise_equal(a, b));

  ParameterSet c = init_params(spec, 12, 0.05);
  REQUIRE_FALSE(bitwise_equal(a, c));

  double max_abs = 0.0, sum = 0.0;
  long long n_weights = 0;
  for (std::size_t i = 0; i < a.names.size(); ++i) {
    const bool is_bias = a.names[i].ends_with(".b");
    for (double v : a.tensors[i].data) {
      if (is_bias) {
        REQUIRE(v == 0.0);
      } else {
        max_abs = std::max(max_abs, std::abs(v));
        sum += v;
        ++n_weights;
      }
    }
  }
  REQUIRE(max_abs <= 0.05);
  // mean of n uniform(-s,s) draws is within 3 sigma of zero, sigma = s/sqrt(3n)
  const double sigma = 0.05 / std::sqrt(3.0 * static_cast<double>(n_weights));
  REQUIRE(std::abs(sum / static_cast<double>(n_weights)) <= 3.0 * sigma);
}

TEST_CASE("init scale zero gives the all-zero network") {
  ParameterSet p = init_params(tiny_spec(), 5, 0.0);
  for (const Tensor& t : p.tensors)
    for (double v : t.data) REQUIRE(v == 0.0);
  REQUIRE_THROWS_AS(init_params(tiny_spec(), 5, -0.1), std::invalid_argument);
}

TEST_CASE("zero network outputs uniform logits and zero value") {
  NetworkSpec spec = tiny_spec();
  ParameterSet p = init_params(spec, 5, 0.0);
  Rng rng(8);
  Tensor obs = Tensor::uniform({3, 6, 6, 2}, 0.0, 1.0, rng);
  ActorCriticOutput out = forward(p, spec, obs);
  for (double v : out.logits.data) REQUIRE(v == 0.0);
  for (double v : out.values.data) REQUIRE(v == 0.0);
}

TEST_CASE("forward matches independent straight-line reference") {
  NetworkSpec spec = tiny_spec();
  ParameterSet p = init_params(spec, 99, 0.2);
  Rng rng(100);
  Tensor obs = Tensor::uniform({4, 6, 6, 2}, 0.0, 1.0, rng);
  ActorCriticOutput out = forward(p, spec, obs);
  for (int n = 0; n < 4; ++n) {
    double logits[4], value;
    reference_eval(p, &obs.data[static_cast<std::size_t>(n) * 72], logits, &value);
    for (int a = 0; a < 4; ++a)
      REQUIRE(out.logits.data[static_cast<std::size_t>(n) * 4 + a] ==
              Catch::Approx(logits[a]).margin(1e-12));
    REQUIRE(out.values.data[static_cast<std::size_t>(n)] == Catch::Approx(value).margin(1e-12));
  }
}

TEST_CASE("taped forward agrees with plain forward") {
  NetworkSpec spec = tiny_spec();
  ParameterSet p = init_params(spec, 21, 0.3);
  Rng rng(22);
  Tensor obs = Tensor::uniform({5, 6, 6, 2}, 0.0, 1.0, rng);
  ActorCriticOutput plain = forward(p, spec, obs);
  Tape tape;
  TapedNet net = forward_tape(tape, p, spec, obs);
  REQUIRE(bitwise_equal(tape.value(net.logits), plain.logits));
  REQUIRE(bitwise_equal(tape.value(net.values), plain.values));
}

TEST_CASE("forward is pure and batch-order equivariant") {
  NetworkSpec spec = tiny_spec();
  ParameterSet p = init_params(spec, 33, 0.2);
  Rng rng(34);
  Tensor one = Tensor::uniform({1, 6, 6, 2}, 0.0, 1.0, rng);

  // batch of identical observations -> identical rows
  Tensor batch({3, 6, 6, 2});
  for (int n = 0; n < 3; ++n)
    for (int i = 0; i < 72; ++i)
      batch.data[static_cast<std::size_t>(n) * 72 + i] = one.data[static_cast<std::size_t>(i)];
  ActorCriticOutput out = forward(p, spec, batch);
  for (int n = 1; n < 3; ++n)
    for (int a = 0; a < 4; ++a)
      REQUIRE(out.logits.data[static_cast<std::size_t>(n) * 4 + a] == out.logits.data[a]);

  // permuting the batch permutes the outputs
  Tensor two = Tensor::uniform({1, 6, 6, 2}, 0.0, 1.0, rng);
  Tensor ab({2, 6, 6, 2}), ba({2, 6, 6, 2});
  for (int i = 0; i < 72; ++i) {
    ab.data[static_cast<std::size_t>(i)] = one.data[static_cast<std::size_t>(i)];
    ab.data[static_cast<std::size_t>(72 + i)] = two.data[static_cast<std::size_t>(i)];
    ba.data[static_cast<std::size_t>(i)] = two.data[static_cast<std::size_t>(i)];
    ba.data[static_cast<std::size_t>(72 + i)] = one.data[static_cast<std::size_t>(i)];
  }
  ActorCriticOutput oab = forward(p, spec, ab);
  ActorCriticOutput oba = forward(p, spec, ba);
  for (int a = 0; a < 4; ++a) {
    REQUIRE(oab.logits.data[static_cast<std::size_t>(a)] ==
            oba.logits.data[static_cast<std::size_t>(4 + a)]);
    REQUIRE(oab.logits.data[static_cast<std::size_t>(4 + a)] ==
            oba.logits.data[static_cast<std::size_t>(a)]);
  }

  // repeated call gives identical output
  ActorCriticOutput out2 = forward(p, spec, batch);
  REQUIRE(bitwise_equal(out.logits, out2.logits));
  REQUIRE(bitwise_equal(out.values, out2.values));
}

TEST_CASE("forward rejects shape and range violations") {
  NetworkSpec spec = tiny_spec();
  ParameterSet p = init_params(spec, 1, 0.1);
  Tensor bad_shape({1, 5, 6, 2});
  REQUIRE_THROWS_AS(forward(p, spec, bad_shape), std::invalid_argument);
  Tensor bad_range({1, 6, 6, 2});
  bad_range.data[0] = 1.5;
  REQUIRE_THROWS_AS(forward(p, spec, bad_range), std::invalid_argument);
}

TEST_CASE("network spec validation catches inconsistent chains") {
  NetworkSpec s = tiny_spec();
  REQUIRE_NOTHROW(s.validate());

  NetworkSpec no_flatten = s;
  no_flatten.layers = {{LayerSpec::Kind::conv, 3, 3, 1, 0}};
  REQUIRE_THROWS_AS(no_flatten.validate(), std::invalid_argument);

  NetworkSpec conv_after_flatten = s;
  conv_after_flatten.layers.push_back({LayerSpec::Kind::conv, 2, 2, 1, 0});
  REQUIRE_THROWS_AS(conv_after_flatten.validate(), std::invalid_argument);

  NetworkSpec kernel_too_big = s;
  kernel_too_big.layers[0].kernel = 9;
  REQUIRE_THROWS_AS(kernel_too_big.validate(), std::invalid_argument);

  REQUIRE_THROWS_AS(init_params(kernel_too_big, 0, 0.1), std::invalid_argument);

  // hash ignores nothing relevant: distinct topologies hash apart
  NetworkSpec wider = s;
  wider.layers[3].out_dim = 6;
  REQUIRE(s.hash() != wider.hash());
  REQUIRE(s.hash() == tiny_spec().hash());
}
