#include <doctest.h>

#include <cmath>
#include <random>

#include "ipo/autodiff.hpp"
#include "gradient_suite.hpp"
#include "support.hpp"

using namespace ipo;
using ipo::testing::check_gradient;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

std::vector<double> grad_of(const GradientMap& g, std::uint32_t id) {
  const auto v = g.at(ParamId{id}).values();
  return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("tensor construction validates shape and finiteness") {
  CHECK(Tensor().is_scalar());
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor({1}, {INFINITY}), NumericError);
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(m.at(1, 0) == 3.0);
}

TEST_CASE("matmul values") {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var b = tape.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  const Tensor product = matmul(eye, b).value();
  CHECK(product == b.value());

  Var row = tape.constant(Tensor::matrix(1, 2, {1, 2}));
  Var col = tape.constant(Tensor::matrix(2, 1, {3, 4}));
  CHECK(matmul(row, col).value().values()[0] == 11.0);

  CHECK_THROWS_AS(matmul(row, row), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = check_gradient(
        [](Tape&, const std::vector<Var>& p) { return sum(matmul(p[0], p[1])); },
        {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
    CHECK(r.rel_error <= 1e-5);
  }
}

TEST_CASE("elementwise values and derivatives") {
  Tape tape;
  CHECK(log(tape.constant(1.0)).value().item() == 0.0);
  CHECK(tanh(tape.constant(0.0)).value().item() == 0.0);
  CHECK_THROWS_AS(log(tape.constant(0.0)), DomainError);
  CHECK_THROWS_AS(log(tape.constant(-1.0)), DomainError);

  Tape t2;
  Var x = t2.param(Tensor::scalar(0.5), ParamId{0});
  const auto g = t2.backward(log(x));
  CHECK(g.at(ParamId{0}).item() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("exp overflow raises instead of propagating") {
  Tape tape;
  CHECK_THROWS_AS(exp(tape.constant(1000.0)), NumericError);
}

TEST_CASE("binary ops broadcast scalars but reject other shapes") {
  Tape tape;
  Var v = tape.constant(Tensor::vector({1, 2, 3}));
  Var s = tape.constant(2.0);
  CHECK((v * s).value() == Tensor::vector({2, 4, 6}));
  CHECK((s - v).value() == Tensor::vector({1, 0, -1}));
  CHECK((v + 1.0).value() == Tensor::vector({2, 3, 4}));
  CHECK_THROWS_AS(v + tape.constant(Tensor::vector({1, 2})), DimensionError);
}

TEST_CASE("reductions") {
  Tape tape;
  CHECK(mean(tape.constant(Tensor::vector({2, 4, 6}))).value().item() == 4.0);
  CHECK(sum(tape.constant(Tensor::vector({2, 4, 6}))).value().item() == 12.0);
  CHECK_THROWS_AS(mean(tape.constant(Tensor({0}))), DomainError);
  Var m = min_pair(tape.constant(Tensor::vector({1, 5})), tape.constant(Tensor::vector({3, 2})));
  CHECK(m.value() == Tensor::vector({1, 2}));
}

TEST_CASE("min_pair ties route the gradient to the first argument") {
  Tape tape;
  Var a = tape.param(Tensor::vector({3}), ParamId{0});
  Var b = tape.param(Tensor::vector({3}), ParamId{1});
  const auto g = tape.backward(sum(min_pair(a, b)));
  CHECK(grad_of(g, 0) == std::vector<double>{1.0});
  CHECK(grad_of(g, 1) == std::vector<double>{0.0});
}

TEST_CASE("clip values and gradient convention") {
  auto clip_grad = [](double x) {
    Tape tape;
    Var v = tape.param(Tensor::scalar(x), ParamId{0});
    Var c = clip(v, 0.8, 1.2);
    return std::pair{c.value().item(), tape.backward(c).at(ParamId{0}).item()};
  };
  CHECK(clip_grad(1.5) == std::pair{1.2, 0.0});
  CHECK(clip_grad(1.0) == std::pair{1.0, 1.0});
  CHECK(clip_grad(0.5) == std::pair{0.8, 0.0});
  CHECK(clip_grad(0.8).second == 1.0);
  CHECK(clip_grad(1.2).second == 1.0);

  Tape tape;
  CHECK_THROWS_AS(clip(tape.constant(1.0), 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(clip(tape.constant(1.0), 2.0, 1.0), ConfigError);
}

TEST_CASE("backward basics") {
  Tape tape;
  Var p = tape.param(Tensor::vector({1, 2}), ParamId{0});
  Var q = tape.param(Tensor::vector({5, 5}), ParamId{1});
  const auto g = tape.backward(sum(square(p)));
  CHECK(grad_of(g, 0) == std::vector<double>{2.0, 4.0});
  // Unreachable leaves get zeros.
  CHECK(grad_of(g, 1) == std::vector<double>{0.0, 0.0});

  Tape t2;
  Var r = t2.param(Tensor({2, 3}), ParamId{0});
  const auto ones = t2.backward(sum(r));
  for (double v : ones.at(ParamId{0}).values()) CHECK(v == 1.0);

  CHECK_THROWS_AS(t2.backward(r), ContractError);
}

TEST_CASE("repeated bindings of one id sum their gradients") {
  Tape tape;
  Var a = tape.param(Tensor::scalar(3.0), ParamId{4});
  Var b = tape.param(Tensor::scalar(3.0), ParamId{4});
  const auto g = tape.backward(a * b);
  CHECK(g.size() == 1);
  CHECK(g.at(ParamId{4}).item() == 6.0);
}

TEST_CASE("backward is linear") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({5}, rng);
  auto grads = [&](double a, double b) {
    Tape tape;
    Var p = tape.param(x, ParamId{0});
    Var f = sum(tanh(p));
    Var g = sum(square(p));
    return grad_of(tape.backward(a * f + b * g), 0);
  };
  const auto gf = grads(1.0, 0.0), gg = grads(0.0, 1.0), mix = grads(2.5, -1.5);
  for (std::size_t i = 0; i < gf.size(); ++i) {
    CHECK(mix[i] == doctest::Approx(2.5 * gf[i] - 1.5 * gg[i]).epsilon(1e-14));
  }
}

TEST_CASE("forward passes are bitwise deterministic") {
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor({4, 6}, rng), b = random_tensor({6, 3}, rng);
  auto run = [&] {
    Tape tape;
    Var y = log_softmax(tanh(matmul(tape.constant(a), tape.constant(b))));
    return y.value();
  };
  CHECK(run() == run());
}

TEST_CASE("structural ops") {
  Tape tape;
  Var v = tape.constant(Tensor::vector({1, 2}));
  Var m = broadcast_rows(v, 3);
  CHECK(m.shape() == Shape{3, 2});
  CHECK(row_sum(m).value() == Tensor::vector({3, 3, 3}));
  CHECK(transpose(tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}))).value() ==
        Tensor::matrix(3, 2, {1, 4, 2, 5, 3, 6}));
  Var ls = log_softmax(tape.constant(Tensor::matrix(1, 2, {0, 0})));
  CHECK(ls.value().values()[0] == doctest::Approx(std::log(0.5)));
  Var pk = pick(tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})), {1, 0});
  CHECK(pk.value() == Tensor::vector({2, 3}));
  CHECK_THROWS_AS(pick(tape.constant(Tensor::matrix(1, 2, {1, 2})), {2}), DimensionError);
}

TEST_CASE("every op matches central differences at random interior points") {
  std::mt19937_64 rng(2024);
  for (const auto& r : ipo::testing::op_gradient_sweep(rng)) {
    CAPTURE(r.name);
    CHECK(r.points == 100);
    CHECK(r.worst_rel_error <= 1e-4);
  }

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = check_gradient(
        [](Tape& t, const std::vector<Var>& p) {
          return sum(p[0] * t.constant(3.0)) + mean(p[1] * p[0].tape().constant(-2.0));
        },
        {random_tensor({}, rng), random_tensor({4}, rng)});
    worst = std::max(worst, r.rel_error);
  }
  CHECK(worst <= 1e-4);
}
