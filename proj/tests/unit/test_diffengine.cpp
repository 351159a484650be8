#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "spde/diffengine.hpp"
#include "spde/stochastics.hpp"

using namespace spde;
using namespace spde::ad;

namespace {

Array random_array(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RandomStream rs(seed, {0});
  Array a(r, c);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = lo + (hi - lo) * rs.uniform();
  return a;
}

// Builds a scalar from the given leaves.
using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

// Central-difference check of every coordinate of every input against Tape::backward.
double max_fd_error(const Builder& build, std::vector<Array> inputs, double h = 1e-5) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& a : inputs) leaves.push_back(tape.variable(a));
  const Var root = build(tape, leaves);
  tape.backward(root);
  std::vector<Array> analytic;
  for (const auto& v : leaves) analytic.push_back(v.grad());

  auto evaluate = [&](const std::vector<Array>& xs) {
    Tape t;
    std::vector<Var> ls;
    for (const auto& a : xs) ls.push_back(t.constant(a));
    return build(t, ls).scalar();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index j = 0; j < inputs[i].size(); ++j) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i].data()[j] += h;
      minus[i].data()[j] -= h;
      const double fd = (evaluate(plus) - evaluate(minus)) / (2.0 * h);
      const double an = analytic[i].data()[j];
      const double err = std::abs(fd - an) / std::max(1.0, std::max(std::abs(fd), std::abs(an)));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("diffengine") {

TEST_CASE("forward values") {
  Tape t;
  const Var zero = t.constant(Array::Zero(1, 1));
  const Var one = t.constant(Array::Ones(1, 1));
  CHECK(gaussian_log_density(zero, zero, one).scalar() == doctest::Approx(-0.9189385332).epsilon(1e-10));
  CHECK(softplus(zero).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const Array x = random_array(3, 4, 1);
  const Var xv = t.constant(x);
  CHECK(matmul(xv, t.constant(Array::Identity(4, 4))).value() == x);
  CHECK(sum(xv).scalar() == doctest::Approx(x.sum()));
  CHECK(mean(xv).scalar() == doctest::Approx(x.mean()));
  CHECK(softplus(t.constant(Array::Constant(1, 1, 800.0))).scalar() == 800.0);
}

TEST_CASE("simple gradients") {
  Tape t;
  const Var x = t.variable(Array::Constant(1, 1, 3.0));
  t.backward(square(x));
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
  Tape t2;
  const Var a = t2.variable(Array::Constant(1, 1, 2.0));
  const Var b = t2.variable(Array::Constant(1, 1, 5.0));
  t2.backward(a * b);
  CHECK(a.grad()(0, 0) == doctest::Approx(5.0));
  CHECK(b.grad()(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("finite-difference check of every differentiable op") {
  const double tol = 1e-5;
  const Array A = random_array(3, 4, 2);
  const Array B = random_array(3, 4, 3);
  const Array P = random_array(3, 4, 4, 0.5, 2.0);
  const Array row = random_array(1, 4, 5);
  const Array col = random_array(3, 1, 6);
  const Array S = random_array(1, 1, 7);
  const Array W = random_array(4, 2, 8);
  const Array b2 = random_array(1, 2, 9);
  const Array wts = random_array(3, 4, 10);
  auto weigh = [&](Tape& t, Var v) { return sum(mul(v, t.constant(wts.topLeftCorner(v.rows(), v.cols())))); };

  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, add(v[0], v[1])); }, {A, B}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, add(v[0], v[1])); }, {A, row}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, sub(v[0], v[1])); }, {A, col}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, mul(v[0], v[1])); }, {A, S}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, mul(v[0], v[1])); }, {A, B}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, div(v[0], v[1])); }, {A, P}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, div(v[0], v[1])); }, {A, Array(P.row(0))}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, neg(v[0])); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, scale(v[0], -1.7)); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, add_scalar(v[0], 0.4)); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, matmul(v[0], v[1])); }, {A, W}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, affine(v[0], v[1], v[2])); }, {A, W, b2}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, exp(v[0])); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, log(v[0])); }, {P}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, tanh(v[0])); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, softplus(v[0])); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, sqrt(v[0])); }, {P}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, square(v[0])); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, clamp(v[0], -0.5, 0.5)); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape&, std::vector<Var>& v) { return sum(v[0]); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape&, std::vector<Var>& v) { return mean(v[0]); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape&, std::vector<Var>& v) { return gaussian_log_density(v[0], v[1], v[2]); }, {A, B, P}) < tol);
  CHECK(max_fd_error([&](Tape&, std::vector<Var>& v) { return gaussian_log_density(v[0], v[1], v[2]); }, {A, row, Array(P.row(1))}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, slice_cols(v[0], 1, 2)); }, {A}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, concat_cols(v[0], v[1])); }, {col, Array(A.leftCols(3))}) < tol);
  CHECK(max_fd_error([&](Tape& t, std::vector<Var>& v) { return weigh(t, reshape(v[0], 2, 6)); }, {A}) < tol);
}

TEST_CASE("three-layer tanh network gradient") {
  // 2 -> 3 -> 2 -> 1 with biases: 9 + 8 + 3 = 20 parameters.
  const Array x = random_array(5, 2, 11);
  const Array y = random_array(5, 1, 12);
  const Builder net = [&](Tape& t, std::vector<Var>& v) {
    const Var h1 = tanh(affine(t.constant(x), v[0], v[1]));
    const Var h2 = tanh(affine(h1, v[2], v[3]));
    const Var out = affine(h2, v[4], v[5]);
    return mean(square(sub(out, t.constant(y))));
  };
  const std::vector<Array> params = {random_array(2, 3, 13), random_array(1, 3, 14), random_array(3, 2, 15),
                                     random_array(1, 2, 16), random_array(2, 1, 17), random_array(1, 1, 18)};
  Eigen::Index count = 0;
  for (const auto& p : params) count += p.size();
  CHECK(count == 20);
  CHECK(max_fd_error(net, params) < 1e-5);
}

TEST_CASE("parameter leaves accumulate into their gradients") {
  Parameter p{"w", Array::Constant(1, 2, 1.5), Array::Zero(1, 2), 0};
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    t.backward(sum(square(t.parameter(p))));
  }
  CHECK(p.grad(0, 0) == doctest::Approx(6.0));
  p.zero_grad();
  CHECK(p.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("learning-rate schedule") {
  const int warmup = 10;
  const int total = 110;
  CHECK(lr_schedule(0, 1.0, warmup, total) == doctest::Approx(0.1));
  CHECK(lr_schedule(warmup - 1, 2e-2, warmup, total) == doctest::Approx(2e-2));
  CHECK(lr_schedule(warmup + (total - warmup) / 2, 2e-2, warmup, total) == doctest::Approx(1e-2));
  const double tail = 0.5 * (1.0 + std::cos(std::numbers::pi * (1.0 - 1.0 / (total - warmup))));
  CHECK(lr_schedule(total - 1, 1.0, warmup, total) <= tail + 1e-15);
  for (int e = warmup; e + 1 < total; ++e) {
    CHECK(lr_schedule(e + 1, 1.0, warmup, total) <= lr_schedule(e, 1.0, warmup, total));
  }
}

TEST_CASE("adam steps") {
  SUBCASE("zero gradient and no decay leaves parameters unchanged") {
    std::vector<Parameter> ps{{"a", Array::Constant(2, 2, 0.7), Array::Zero(2, 2), 0}};
    auto st = make_optimizer(ps, {1e-2}, 0, 10, AdamSettings{0.9, 0.999, 1e-8, 0.0});
    for (int e = 0; e < 5; ++e) adam_step(st, ps, e);
    CHECK(ps[0].value == Array::Constant(2, 2, 0.7));
  }
  SUBCASE("bias-corrected first step has magnitude lr") {
    std::vector<Parameter> ps{{"a", Array::Zero(1, 3), Array::Zero(1, 3), 0}};
    ps[0].grad << 2.0, -0.01, 5.0;
    auto st = make_optimizer(ps, {1e-2}, 0, 10, AdamSettings{0.9, 0.999, 1e-8, 0.0});
    adam_step(st, ps, 0);
    CHECK(ps[0].value(0, 0) == doctest::Approx(-1e-2).epsilon(1e-5));
    CHECK(ps[0].value(0, 1) == doctest::Approx(1e-2).epsilon(1e-5));
    CHECK(ps[0].value(0, 2) == doctest::Approx(-1e-2).epsilon(1e-5));
    CHECK(st.step == 1);
  }
  SUBCASE("quadratic objective decreases monotonically after warmup") {
    std::vector<Parameter> ps{{"x", Array::Constant(1, 1, 3.0), Array::Zero(1, 1), 0}};
    const int warmup = 5;
    auto st = make_optimizer(ps, {1e-2}, warmup, 100);
    double prev = 9.0;
    for (int e = 0; e < 100; ++e) {
      ps[0].grad(0, 0) = 2.0 * ps[0].value(0, 0);
      adam_step(st, ps, e);
      const double f = ps[0].value(0, 0) * ps[0].value(0, 0);
      if (e >= warmup) CHECK(f < prev);
      prev = f;
    }
    CHECK(prev < 9.0);
  }
}

}
