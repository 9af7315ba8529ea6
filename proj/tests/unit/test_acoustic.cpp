#include <cmath>

#include "doctest.h"
#include "voxadapt/acoustic.hpp"
#include "voxadapt/adam.hpp"
#include "voxadapt/error.hpp"
#include "voxadapt/model.hpp"
#include "voxadapt/random.hpp"

using namespace voxadapt;

namespace {

ModelConfig small_config() {
  ModelConfig c = ModelConfig::toy();
  c.hidden = 8;
  c.ffn_filter = 16;
  c.variance_filter = 8;
  c.utterance_filter = 8;
  c.phoneme_filter = 8;
  c.mel_dim = 6;
  return c;
}

Tensor<double> random_rows(Rng& rng, std::size_t r, std::size_t c) {
  Tensor<double> t({r, c});
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

Tensor<double> mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor<double>({r, c}, std::move(v)); }

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("acoustic") {

TEST_CASE("phoneme_average examples") {
  Tape<double> t;
  CHECK(phoneme_average(t.constant(mat(3, 1, {1, 3, 5})), std::vector<int>{2, 1}).value().storage() == std::vector<double>{2, 5});
  const auto x = mat(3, 2, {1, 2, 3, 4, 5, 6});
  CHECK(phoneme_average(t.constant(x), std::vector<int>{1, 1, 1}).value().storage() == x.storage());
  CHECK(phoneme_average(t.constant(mat(3, 1, {1, 2, 3})), std::vector<int>{0, 3}).value().storage() == std::vector<double>{0, 2});
  CHECK_THROWS_AS(phoneme_average(t.constant(mat(3, 1, {1, 2, 3})), std::vector<int>{1, 1}), Error);
}

TEST_CASE("averaging then broadcasting is lossless on span-constant frames") {
  Rng rng(1);
  for (int s = 0; s < 50; ++s) {
    const int L = 1 + static_cast<int>(rng.uniform_int(0, 6));
    std::vector<int> d;
    for (int i = 0; i < L; ++i) d.push_back(1 + static_cast<int>(rng.uniform_int(0, 4)));
    Tape<double> t;
    const auto values = t.constant(random_rows(rng, static_cast<std::size_t>(L), 3));
    const auto frames = length_regulate(values, d);
    const auto back = length_regulate(phoneme_average(frames, d), d);
    CHECK(back.value().storage() == frames.value().storage());
  }
}

TEST_CASE("utterance_encode shape, errors and length invariance") {
  const ModelConfig c = small_config();
  const auto params = init_model_params<double>(c, 2);
  const AcousticConditioner<double> ac(c, params);
  Rng rng(2);
  Tape<double> t;
  for (std::size_t T = 1; T <= 10; ++T)
    CHECK(ac.utterance_encode(t.constant(random_rows(rng, T, 6)), nullptr).shape() == Shape{1, 8});
  CHECK_THROWS_AS(ac.utterance_encode(t.constant(Tensor<double>::matrix(0, 6)), nullptr), Error);

  // Constant input: only zero-padded boundary frames differ between lengths T
  // and 2T, so the gap shrinks in proportion to 1/T.
  const Tensor<double> frame = random_rows(rng, 1, 6);
  const auto encode_constant = [&](std::size_t T) {
    Tensor<double> m({T, 6});
    for (std::size_t r = 0; r < T; ++r)
      for (std::size_t k = 0; k < 6; ++k) m[r * 6 + k] = frame[k];
    return ac.utterance_encode(t.constant(m), nullptr).value();
  };
  const double gap_60 = max_abs_diff(encode_constant(60), encode_constant(120));
  const double gap_600 = max_abs_diff(encode_constant(600), encode_constant(1200));
  const double gap_6000 = max_abs_diff(encode_constant(6000), encode_constant(12000));
  CHECK(gap_600 < gap_60 / 5);
  CHECK(gap_6000 < gap_600 / 5);
}

TEST_CASE("phoneme encoder and predictor shapes and zero output layer") {
  const ModelConfig c = small_config();
  auto params = init_model_params<double>(c, 3);
  Rng rng(3);
  Tape<double> t;
  {
    const AcousticConditioner<double> ac(c, params);
    CHECK(ac.phoneme_encode(t.constant(random_rows(rng, 5, 6)), nullptr).shape() == Shape{5, 4});
    CHECK(ac.phoneme_predict(t.constant(random_rows(rng, 5, 8)), nullptr).shape() == Shape{5, 4});
    CHECK_THROWS_AS(ac.phoneme_encode(t.constant(Tensor<double>::matrix(0, 6)), nullptr), Error);
    CHECK_THROWS_AS(ac.phoneme_predict(t.constant(Tensor<double>::matrix(0, 8)), nullptr), Error);
  }
  for (auto& [name, p] : params)
    if (name.rfind("acoustic.phoneme_encoder.out.", 0) == 0) p.value.storage().assign(p.value.size(), 0.0);
  const AcousticConditioner<double> ac(c, params);
  for (double v : ac.phoneme_encode(t.constant(random_rows(rng, 5, 6)), nullptr).value().storage()) CHECK(v == 0.0);
}

TEST_CASE("predictor memorises one fixed pair and the stop-gradient holds") {
  const ModelConfig c = small_config();
  auto params = init_model_params<double>(c, 4);
  params.set_trainable([](const std::string& n) {
    return n.rfind("acoustic.phoneme_predictor.", 0) == 0 || n.rfind("acoustic.phoneme_encoder.", 0) == 0;
  });
  Rng rng(4);
  const Tensor<double> hiddens = random_rows(rng, 5, 8);
  const Tensor<double> phoneme_mel = random_rows(rng, 5, 6);
  AdamSettings settings;
  settings.learning_rate = 3e-3;
  auto state = AdamState<double>::init(params, settings);
  double loss = 0;
  for (int step = 0; step < 1500; ++step) {
    params.zero_grad();
    Tape<double> t;
    const AcousticConditioner<double> ac(c, params);
    const auto target = t.detach(ac.phoneme_encode(t.constant(phoneme_mel), nullptr));
    const auto l = ops::mse(ac.phoneme_predict(t.constant(hiddens), nullptr), target);
    t.backward(l, params);
    for (const auto& [name, p] : params)
      if (name.rfind("acoustic.phoneme_encoder.", 0) == 0)
        for (double g : p.grad.storage()) REQUIRE(g == 0.0);
    loss = l.value()[0];
    adam_step(params, state);
  }
  CHECK(loss <= 1e-3);
}

TEST_CASE("combine_conditions identities and gradient flow") {
  Rng rng(5);
  Tape<double> t;
  const auto h = t.constant(random_rows(rng, 3, 8));
  const auto zu = t.constant(Tensor<double>::matrix(1, 8));
  const auto zp = t.constant(Tensor<double>::matrix(3, 4));
  const auto zs = t.constant(Tensor<double>::matrix(1, 8));
  const auto P = t.constant(random_rows(rng, 4, 8));
  CHECK(combine_conditions(h, std::optional(zu), std::optional(zp), zs, std::optional(P)).value().storage() ==
        h.value().storage());

  const auto u = t.constant(random_rows(rng, 1, 8));
  const auto p = t.constant(random_rows(rng, 3, 4));
  const auto a = combine_conditions(h, std::optional(u), std::optional(zp), zs, std::optional(P)).value();
  const auto b = combine_conditions(h, std::optional(zu), std::optional(p), zs, std::optional(P)).value();
  const auto both = combine_conditions(h, std::optional(u), std::optional(p), zs, std::optional(P)).value();
  for (std::size_t i = 0; i < both.size(); ++i) CHECK(a[i] + b[i] - h.value()[i] == doctest::Approx(both[i]).epsilon(1e-12));

  CHECK_THROWS_AS(combine_conditions(h, std::optional(t.constant(random_rows(rng, 1, 5))), std::optional(p), zs, std::optional(P)),
                  Error);

  Tape<double> g;
  const auto vh = g.variable(random_rows(rng, 3, 8));
  const auto vu = g.variable(random_rows(rng, 1, 8));
  const auto vp = g.variable(random_rows(rng, 3, 4));
  const auto vs = g.variable(random_rows(rng, 1, 8));
  const auto vP = g.variable(random_rows(rng, 4, 8));
  const auto out = combine_conditions(vh, std::optional(vu), std::optional(vp), vs, std::optional(vP));
  g.backward(ops::weighted_sum(out, random_rows(rng, 3, 8)));
  for (const auto& v : {vh, vu, vp, vs, vP}) {
    double norm = 0;
    for (double x : g.grad(v).storage()) norm += x * x;
    CHECK(norm > 0);
  }
}

}  // TEST_SUITE
