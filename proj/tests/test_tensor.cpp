#include <cmath>
#include <functional>
#include <numbers>

#include "doctest.h"
#include "stackvs/grad_check.hpp"
#include "stackvs/selfcheck.hpp"
#include "test_util.hpp"

using namespace stackvs;
using stackvs::test::naive_matmul;
using stackvs::test::random_dim;
using stackvs::test::random_tensor;

namespace {

using Build = std::function<Vard(Taped&, std::span<const Vard>)>;

// Contracts an op's output against fixed random weights so every output
// coordinate carries a distinct gradient.
Vard contract(const Vard& out, Rng& rng) {
  Vard w = out.tape().leaf(random_tensor(out.shape(), rng));
  return sum(mul(out, w));
}

double check(const Build& build, const std::vector<Tensord>& point) {
  return grad_check<Real>(build, point, 1e-5).max_rel_error;
}

}  // namespace

TEST_CASE("matmul examples") {
  Taped tape;
  auto eye = tape.leaf(Tensord::matrix(2, 2, {1, 0, 0, 1}));
  auto col = tape.leaf(Tensord::matrix(2, 1, {5, 7}));
  CHECK(matmul(eye, col).value() == Tensord::matrix(2, 1, {5, 7}));

  auto a = tape.leaf(Tensord::matrix(2, 2, {1, 2, 3, 4}));
  auto ones = tape.leaf(Tensord::matrix(2, 1, {1, 1}));
  CHECK(matmul(a, ones).value() == Tensord::matrix(2, 1, {3, 7}));

  Rng rng(7);
  auto x = random_tensor({3, 2}, rng);
  auto y = random_tensor({2, 4}, rng);
  auto prod = matmul(tape.leaf(x), tape.leaf(y));
  CHECK(prod.value().values() == naive_matmul(x.values(), y.values()));
}

TEST_CASE("matmul rejects mismatched shapes and names both") {
  Taped tape;
  auto a = tape.leaf(Tensord::zeros({2, 3}));
  auto b = tape.leaf(Tensord::zeros({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  Taped tape;
  auto u = softmax(tape.leaf(Tensord::vector({0, 0, 0}))).value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));

  auto p = softmax(tape.leaf(Tensord::vector({std::log(1.0), std::log(2.0), std::log(3.0)}))).value();
  CHECK(std::abs(p[0] - 1.0 / 6) < 1e-15);
  CHECK(std::abs(p[1] - 2.0 / 6) < 1e-15);
  CHECK(std::abs(p[2] - 3.0 / 6) < 1e-15);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({5}, rng, -4, 4);
    Tensord shifted = x;
    const double c = rng.uniform(-50, 50);
    for (std::size_t i = 0; i < 5; ++i) shifted[i] += c;
    auto a = softmax(tape.leaf(x)).value();
    auto b = softmax(tape.leaf(shifted)).value();
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("softmax output is a simplex point even for extreme logits") {
  Rng rng(11);
  Taped tape;
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({random_dim(rng, 1, 9)}, rng, -700, 700);
    auto p = softmax(tape.leaf(x)).value();
    CHECK(p.values().minCoeff() >= 0.0);
    CHECK(std::abs(p.values().sum() - 1.0) <= 1e-12);
  }
  auto rows = softmax(tape.leaf(random_tensor({4, 6}, rng, -30, 30))).value();
  for (Eigen::Index r = 0; r < 4; ++r) CHECK(std::abs(rows.values().row(r).sum() - 1.0) <= 1e-12);
}

TEST_CASE("tensors reject empty and zero-sized shapes") {
  CHECK_THROWS_AS(Tensord(Shape{0}), ShapeError);
  CHECK_THROWS_AS(Tensord(Shape{}), ShapeError);
  CHECK_THROWS_AS(Tensord(Shape{2, 3, 4}), ShapeError);
}

TEST_CASE("backward identities") {
  Rng rng(5);
  auto x0 = random_tensor({4}, rng);
  {
    Taped tape;
    auto x = tape.leaf(x0);
    tape.backward(sum(x));
    CHECK(tape.grad(x).values() == Matrixd::Ones(4, 1));
  }
  {
    Taped tape;
    auto x = tape.leaf(x0);
    tape.backward(scale(sum(mul(x, x)), 0.5));
    CHECK(tape.grad(x).values().isApprox(x0.values(), 1e-15));
  }
}

TEST_CASE("backward rejects non-scalar loss and leaves unreachable nodes at zero") {
  Taped tape;
  auto x = tape.leaf(Tensord::vector({1, 2}));
  auto unused = tape.leaf(Tensord::vector({3, 4, 5}));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
  tape.backward(sum(x));
  CHECK(tape.grad(unused) == Tensord::zeros({3}));
}

TEST_CASE("cross-entropy of softmax(Wx) matches finite differences") {
  Rng rng(21);
  auto w = random_tensor({5, 3}, rng);
  auto x = random_tensor({3}, rng);
  Build build = [](Taped&, std::span<const Vard> a) { return nll_gather(softmax(matmul(a[0], a[1])), 2); };
  CHECK(check(build, {w, x}) < 1e-6);
}

TEST_CASE("grad_check examples") {
  Rng rng(2);
  Build quad = [](Taped&, std::span<const Vard> a) { return scale(sum(mul(a[0], a[0])), 0.5); };
  CHECK(grad_check<Real>(quad, {random_tensor({6}, rng)}, 1e-5).max_rel_error < 1e-8);

  CHECK_THROWS_AS(grad_check<Real>(quad, {random_tensor({2}, rng)}, 1e-2), ConfigError);
  CHECK_THROWS_AS(grad_check<Real>(quad, {random_tensor({2}, rng)}, 1e-9), ConfigError);
}

TEST_CASE("grad_check detects an analytic gradient scaled by two") {
  Rng rng(4);
  auto x = random_tensor({5}, rng, 0.5, 1.5);
  Build build = [](Taped&, std::span<const Vard> a) { return sum(tanh(a[0])); };
  testing::gradient_corruption = testing::GradientCorruption{OpKind::Tanh, 2.0};
  const auto err = grad_check<Real>(build, {x}, 1e-5).max_rel_error;
  testing::gradient_corruption.reset();
  // |2g - g| / max(|2g|, |g|) = 1/2
  CHECK(err > 0.1);
  CHECK(err == doctest::Approx(0.5).epsilon(1e-6));

  const std::vector<Tensord> analytic{Tensord::vector({2.0})};
  const std::vector<Tensord> numeric{Tensord::vector({1.0})};
  CHECK(max_relative_error<Real>(analytic, numeric).max_rel_error == doctest::Approx(0.5));
}

TEST_CASE("grad_check reports NaN with the coordinate") {
  Build build = [](Taped&, std::span<const Vard> a) { return sum(a[0]); };
  const std::vector<Tensord> analytic{Tensord::vector({1.0, std::nan("")})};
  const std::vector<Tensord> numeric{Tensord::vector({1.0, 1.0})};
  try {
    max_relative_error<Real>(analytic, numeric);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("coordinate 1") != std::string::npos);
  }
}

TEST_CASE("every op passes randomized gradient checks") {
  for (const auto& outcome : op_gradient_suite(1234)) {
    INFO(outcome.name << ": " << outcome.detail);
    CHECK(outcome.passed);
  }
}

TEST_CASE("forward is bitwise deterministic") {
  Rng rng(9);
  auto w = random_tensor({4, 3}, rng);
  auto x = random_tensor({3}, rng);
  auto run = [&] {
    Taped tape;
    return softmax(tanh(matmul(tape.leaf(w), tape.leaf(x)))).value();
  };
  CHECK(run() == run());
}

TEST_CASE("overflow is reported, not propagated as Inf") {
  Taped tape;
  auto big = tape.leaf(Tensord::vector({1e308, 1e308}));
  CHECK_THROWS_AS(scale(big, 10.0), NumericError);
  CHECK_THROWS_AS(tape.leaf(Tensord::vector({std::numeric_limits<double>::infinity()})), NumericError);
}

TEST_CASE("log clamps at the documented floor") {
  Taped tape;
  auto p = tape.leaf(Tensord::vector({0.0, 1.0}));
  auto nll = nll_gather(p, 0);
  CHECK(nll.value().item() == doctest::Approx(-std::log(kLogClamp)));
  tape.backward(nll);
  CHECK(tape.grad(p) == Tensord::zeros({2}));
}
