#include <cmath>
#include <numeric>

#include "doctest.h"
#include "stackvs/grad_check.hpp"
#include "stackvs/recurrent.hpp"
#include "test_util.hpp"

using namespace stackvs;
using stackvs::test::random_dim;
using stackvs::test::random_simplex;
using stackvs::test::random_tensor;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LstmParamsT<Vard> bind_lstm(Taped& tape, const LstmParams& p) {
  return {tape.leaf(p.input_weights), tape.leaf(p.recurrent_weights), tape.leaf(p.bias)};
}

AttentionParamsT<Vard> bind_attention(Taped& tape, const AttentionParams& p) {
  return {tape.leaf(p.score), tape.leaf(p.feature_map), tape.leaf(p.prev_map), tape.leaf(p.hidden_v_map),
          tape.leaf(p.hidden_s_map)};
}

}  // namespace

TEST_CASE("lstm_step with zero parameters") {
  Taped tape;
  auto p = bind_lstm(tape, zero_lstm(3, 2));
  auto x = tape.leaf(Tensord::vector({0.3, -1.0, 2.0}));
  auto s = lstm_step(p, zero_lstm_state(tape, 2), x);
  CHECK(s.h.value() == Tensord::zeros({2}));
  CHECK(s.c.value() == Tensord::zeros({2}));

  LstmState s0{tape.leaf(Tensord::zeros({2})), tape.leaf(Tensord::vector({1.5, -0.4}))};
  auto s1 = lstm_step(p, s0, x);
  CHECK(s1.c.value()[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(s1.c.value()[1] == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(s1.h.value()[0] == doctest::Approx(0.5 * std::tanh(0.75)).epsilon(1e-15));
  CHECK(s1.h.value()[1] == doctest::Approx(0.5 * std::tanh(-0.2)).epsilon(1e-15));
}

TEST_CASE("lstm_step matches a scalar recurrence with d_h = 1") {
  // Gate rows: input, forget, candidate, output.
  const double wi[4] = {0.4, -0.3, 0.9, 0.2}, wx2[4] = {-0.1, 0.5, 0.25, -0.7};
  const double wh[4] = {0.6, 0.1, -0.8, 0.3}, b[4] = {0.05, 1.0, -0.2, 0.1};
  LstmParams p{Tensord::matrix(4, 2, {wi[0], wx2[0], wi[1], wx2[1], wi[2], wx2[2], wi[3], wx2[3]}),
               Tensord::matrix(4, 1, {wh[0], wh[1], wh[2], wh[3]}), Tensord::vector({b[0], b[1], b[2], b[3]})};
  double h = 0.2, c = -0.5;
  Taped tape;
  auto bound = bind_lstm(tape, p);
  LstmState s{tape.leaf(Tensord::vector({h})), tape.leaf(Tensord::vector({c}))};
  const double xs[3][2] = {{1.0, -2.0}, {0.3, 0.7}, {-1.2, 0.1}};
  for (auto& x : xs) {
    double z[4];
    for (int g = 0; g < 4; ++g) z[g] = wi[g] * x[0] + wx2[g] * x[1] + wh[g] * h + b[g];
    c = sig(z[1]) * c + sig(z[0]) * std::tanh(z[2]);
    h = sig(z[3]) * std::tanh(c);
    s = lstm_step(bound, s, tape.leaf(Tensord::vector({x[0], x[1]})));
    CHECK(std::abs(s.h.value()[0] - h) < 1e-12);
    CHECK(std::abs(s.c.value()[0] - c) < 1e-12);
  }
}

TEST_CASE("lstm_step rejects dimension mismatch") {
  Taped tape;
  auto p = bind_lstm(tape, zero_lstm(3, 2));
  CHECK_THROWS_AS(lstm_step(p, zero_lstm_state(tape, 2), tape.leaf(Tensord::zeros({4}))), ShapeError);
  CHECK_THROWS_AS(lstm_step(p, zero_lstm_state(tape, 3), tape.leaf(Tensord::zeros({3}))), ShapeError);
}

TEST_CASE("lstm hidden output stays inside (-1, 1)") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    Taped tape;
    LstmParams p{random_tensor({8, 3}, rng, -5, 5), random_tensor({8, 2}, rng, -5, 5), random_tensor({8}, rng, -5, 5)};
    auto bound = bind_lstm(tape, p);
    LstmState s{tape.leaf(random_tensor({2}, rng)), tape.leaf(random_tensor({2}, rng, -20, 20))};
    for (int t = 0; t < 5; ++t) {
      s = lstm_step(bound, s, tape.leaf(random_tensor({3}, rng, -10, 10)));
      CHECK(s.h.value().values().cwiseAbs().maxCoeff() < 1.0);
    }
  }
}

TEST_CASE("attention_logits examples") {
  Rng rng(8);
  Taped tape;
  auto feats = tape.leaf(random_tensor({3, 4}, rng));
  auto prev = tape.leaf(random_tensor({4}, rng));
  auto hv = tape.leaf(random_tensor({2}, rng));
  auto hs = tape.leaf(random_tensor({2}, rng));

  auto zero = bind_attention(tape, zero_attention(4, 2, 5));
  CHECK(attention_logits(zero, feats, prev, hv, hs).value() == Tensord::zeros({3}));

  auto p = bind_attention(tape, init_attention(4, 2, 5, rng));
  Tensord dup = random_tensor({3, 4}, rng);
  for (int j = 0; j < 4; ++j) dup.values()(2, j) = dup.values()(0, j);
  auto logits = attention_logits(p, tape.leaf(dup), prev, hv, hs).value();
  CHECK(logits[0] == logits[2]);

  // d_a = 1, d_f = 1, d_h = 1: a_k = w tanh(wf f_k + wp p + wv hv + ws hs)
  AttentionParams s{Tensord::matrix(1, 1, {1.5}), Tensord::matrix(1, 1, {0.7}), Tensord::matrix(1, 1, {-0.2}),
                    Tensord::matrix(1, 1, {0.4}), Tensord::matrix(1, 1, {-0.9})};
  auto sb = bind_attention(tape, s);
  auto f = tape.leaf(Tensord::matrix(2, 1, {0.5, -1.0}));
  auto out = attention_logits(sb, f, tape.leaf(Tensord::vector({0.3})), tape.leaf(Tensord::vector({0.8})),
                              tape.leaf(Tensord::vector({-0.6})))
                 .value();
  const double q = -0.2 * 0.3 + 0.4 * 0.8 + -0.9 * -0.6;
  CHECK(std::abs(out[0] - 1.5 * std::tanh(0.7 * 0.5 + q)) < 1e-12);
  CHECK(std::abs(out[1] - 1.5 * std::tanh(0.7 * -1.0 + q)) < 1e-12);
}

TEST_CASE("attention_logits rejects empty feature sets and width mismatch") {
  CHECK_THROWS_AS(Tensord(Shape{0, 4}), ShapeError);
  Taped tape;
  auto p = bind_attention(tape, zero_attention(4, 2, 3));
  auto bad = tape.leaf(Tensord::zeros({2, 3}));
  auto prev = tape.leaf(Tensord::zeros({4}));
  auto h = tape.leaf(Tensord::zeros({2}));
  CHECK_THROWS_AS(attention_logits(p, bad, prev, h, h), ShapeError);
}

TEST_CASE("attention_weights examples") {
  Taped tape;
  auto u = attention_weights(tape.leaf(Tensord::vector({0.7, 0.7, 0.7, 0.7}))).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(u[i] == doctest::Approx(0.25).epsilon(1e-15));

  auto w = attention_weights(tape.leaf(Tensord::vector({0.0, std::log(3.0)}))).value();
  CHECK(std::abs(w[0] - 0.25) < 1e-15);
  CHECK(std::abs(w[1] - 0.75) < 1e-15);

  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto logits = random_tensor({6}, rng, -3, 3);
    auto weights = attention_weights(tape.leaf(logits)).value();
    Eigen::Index a, b, col;
    logits.values().maxCoeff(&a, &col);
    weights.values().maxCoeff(&b, &col);
    CHECK(a == b);
  }
}

TEST_CASE("attend examples") {
  Rng rng(14);
  Taped tape;
  auto feats_t = random_tensor({3, 4}, rng);
  auto feats = tape.leaf(feats_t);

  auto one_hot = attend(tape.leaf(Tensord::vector({0, 1, 0})), feats).value();
  for (std::size_t j = 0; j < 4; ++j) CHECK(one_hot[j] == feats_t.values()(1, static_cast<Eigen::Index>(j)));

  auto mean = attend(tape.leaf(Tensord::vector({1.0 / 3, 1.0 / 3, 1.0 / 3})), feats).value();
  Vectord expected = feats_t.values().colwise().mean().transpose();
  for (std::size_t j = 0; j < 4; ++j) CHECK(mean[j] == doctest::Approx(expected(Eigen::Index(j))).epsilon(1e-14));

  auto w = random_simplex(3, rng);
  auto out = attend(tape.leaf(w), feats).value();
  for (std::size_t j = 0; j < 4; ++j) {
    double direct = 0.0;
    for (std::size_t k = 0; k < 3; ++k) direct += w[k] * feats_t.values()(Eigen::Index(k), Eigen::Index(j));
    CHECK(std::abs(out[j] - direct) < 1e-14);
  }

  CHECK_THROWS_AS(attend(tape.leaf(Tensord::vector({0.5, 0.5})), feats), ShapeError);
}

TEST_CASE("attend stays within the convex hull and is permutation invariant") {
  Rng rng(15);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = random_dim(rng, 1, 6), d = random_dim(rng, 1, 5);
    auto feats_t = random_tensor({n, d}, rng, -4, 4);
    auto logits_t = random_tensor({n}, rng, -3, 3);
    Taped tape;
    auto w = attention_weights(tape.leaf(logits_t));
    auto out = attend(w, tape.leaf(feats_t)).value();
    for (std::size_t j = 0; j < d; ++j) {
      const auto col = feats_t.values().col(Eigen::Index(j));
      CHECK(out[j] >= col.minCoeff() - 1e-12);
      CHECK(out[j] <= col.maxCoeff() + 1e-12);
    }

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    Tensord pf(Shape{n, d}), pl(Shape{n});
    for (std::size_t k = 0; k < n; ++k) {
      pf.values().row(Eigen::Index(k)) = feats_t.values().row(Eigen::Index(perm[k]));
      pl[k] = logits_t[perm[k]];
    }
    auto pw = attention_weights(tape.leaf(pl));
    auto pout = attend(pw, tape.leaf(pf)).value();
    for (std::size_t k = 0; k < n; ++k) CHECK(pw.value()[k] == doctest::Approx(w.value()[perm[k]]).epsilon(1e-14));
    for (std::size_t j = 0; j < d; ++j) CHECK(pout[j] == doctest::Approx(out[j]).epsilon(1e-12));
  }
}

TEST_CASE("full attention head passes gradient checks for all five maps") {
  Rng rng(16);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = random_dim(rng, 1, 4), d_f = random_dim(rng, 1, 4), d_h = random_dim(rng, 1, 3),
                      d_a = random_dim(rng, 1, 4);
    auto feats = random_tensor({n, d_f}, rng);
    auto prev = random_tensor({d_f}, rng);
    auto hv = random_tensor({d_h}, rng);
    auto hs = random_tensor({d_h}, rng);
    auto target = random_tensor({d_f}, rng);
    auto p = init_attention(d_f, d_h, d_a, rng);
    auto build = [&](Taped& tape, std::span<const Vard> a) {
      AttentionParamsT<Vard> bp{a[0], a[1], a[2], a[3], a[4]};
      auto w = attention_weights(attention_logits(bp, tape.leaf(feats), tape.leaf(prev), tape.leaf(hv), tape.leaf(hs)));
      return sum(mul(attend(w, tape.leaf(feats)), tape.leaf(target)));
    };
    worst = std::max(worst,
                     grad_check<Real>(build, {p.score, p.feature_map, p.prev_map, p.hidden_v_map, p.hidden_s_map}, 1e-5)
                         .max_rel_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("initialisation follows the fan-in rule with forget bias one") {
  Rng rng(17);
  auto p = init_lstm(9, 4, rng);
  CHECK(p.input_weights.values().cwiseAbs().maxCoeff() <= 1.0 / 3.0);
  CHECK(p.recurrent_weights.values().cwiseAbs().maxCoeff() <= 0.5);
  for (std::size_t j = 0; j < 16; ++j) CHECK(p.bias[j] == ((j >= 4 && j < 8) ? 1.0 : 0.0));
}
