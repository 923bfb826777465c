#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "kanforge/error.hpp"
#include "kanforge/ops.hpp"
#include "kanforge/random.hpp"
#include "kanforge/tensor.hpp"
#include "oracles.hpp"

using namespace kanforge;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Shape random_shape(Rng& rng) {
  Shape s(1 + rng.below(3));
  for (auto& d : s) d = 1 + rng.below(4);
  return s;
}

}  // namespace

TEST_CASE("construction checks element count") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at({1, 2}) == 6.0);
  CHECK_THROWS_AS(t.at({2, 0}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("copies alias, clone does not") {
  Tensor a = Tensor::vector({1, 2}, true);
  Tensor b = a;
  Tensor c = a.clone();
  CHECK(b.same_storage(a));
  CHECK_FALSE(c.same_storage(a));
  CHECK(c.requires_grad());
  CHECK_FALSE(a.detach().requires_grad());
}

TEST_CASE("elementwise examples") {
  CHECK(silu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(arctan(Tensor::scalar(1.0)).item() == doctest::Approx(0.7853981634).epsilon(1e-10));
  CHECK(values(add(Tensor::vector({1, 2}), Tensor::vector({3, 4}))) == std::vector<double>{4, 6});
}

TEST_CASE("broadcasting aligns trailing axes") {
  CHECK(broadcast_shapes({2, 3}, {3}) == Shape{2, 3});
  CHECK(broadcast_shapes({4, 1, 3}, {2, 1}) == Shape{4, 2, 3});
  CHECK_THROWS_AS(broadcast_shapes({2, 3}, {2}), ShapeError);
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::vector({10, 20});
  CHECK(values(add(a, b)) == std::vector<double>{11, 22, 13, 24});
}

TEST_CASE("shape mismatch message names both shapes") {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({4}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
}

TEST_CASE("matmul examples") {
  Tensor id({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(values(matmul(id, m)) == values(m));
  CHECK(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item() == 11.0);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(matmul(Tensor::zeros({3}), Tensor::zeros({3, 1})), ShapeError);
}

TEST_CASE("matmul gradient of sum is ones . b^T") {
  Rng rng(7);
  Tensor a = oracle::random_tensor({5, 4}, rng);
  Tensor b = oracle::random_tensor({4, 3}, rng, -1, 1, false);
  backward(sum_all(matmul(a, b)));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 3; ++j) expect += b.at({k, j});
      CHECK(a.grad()[i * 4 + k] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  CHECK(grad_check([&](const Tensor& x) { return sum_all(matmul(x, b)); }, a) < 1e-6);
}

TEST_CASE("matmul_transposed matches matmul with explicit transpose") {
  Rng rng(8);
  Tensor a = oracle::random_tensor({6, 5}, rng, -1, 1, false);
  Tensor w = oracle::random_tensor({9, 5}, rng, -1, 1, false);
  Tensor lhs = matmul_transposed(a, w);
  Tensor rhs = matmul(a, permute(w, {1, 0}));
  for (std::size_t i = 0; i < lhs.numel(); ++i) CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-13));
}

TEST_CASE("reduce examples") {
  CHECK(mean(Tensor::vector({2, 4, 6}), 0).item() == 4.0);
  CHECK(sum_all(Tensor::zeros({3, 3})).item() == 0.0);
  Tensor x = Tensor::vector({1, 3, 3}, true);
  Tensor m = max(x, 0);
  CHECK(m.item() == 3.0);
  backward(m);
  CHECK(values(Tensor({3}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{0, 1, 0});
  CHECK_THROWS_AS(sum(Tensor::zeros({2, 2}), 2), ShapeError);
  Tensor r({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(values(sum(r, 0)) == std::vector<double>{5, 7, 9});
  CHECK(values(sum(r, 1)) == std::vector<double>{6, 15});
  CHECK(max(r, 1).shape() == Shape{2});
}

TEST_CASE("softmax cross entropy examples") {
  const std::vector<int> labels{2};
  CHECK(softmax_cross_entropy(Tensor({1, 4}, {0.3, 0.3, 0.3, 0.3}), labels).item() ==
        doctest::Approx(1.3862943611).epsilon(1e-10));
  const std::vector<int> first{0};
  // -log sigmoid(20), evaluated with log1p for accuracy.
  const double expect = std::log1p(std::exp(-20.0));
  const double loss = softmax_cross_entropy(Tensor({1, 2}, {10, -10}), first).item();
  CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK(loss == doctest::Approx(2.061e-9).epsilon(1e-3));
  const std::vector<int> bad{4};
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({1, 4}), bad), DataError);
  CHECK(std::isfinite(softmax_cross_entropy(Tensor({1, 2}, {1000, -1000}), first).item()));
}

TEST_CASE("softmax cross entropy gradient on random 3x5 logits") {
  Rng rng(11);
  const std::vector<int> labels{0, 4, 2};
  for (int trial = 0; trial < 5; ++trial) {
    Tensor logits = oracle::random_tensor({3, 5}, rng, -3, 3);
    CHECK(grad_check([&](const Tensor& z) { return softmax_cross_entropy(z, labels); }, logits) < 1e-6);
  }
}

TEST_CASE("backward examples") {
  Tensor x = Tensor::vector({0.5, -1, 2}, true);
  backward(sum_all(x));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1, 1});
  Tensor y = Tensor::vector({1, 2}, true);
  backward(sum_all(mul(y, y)));
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == std::vector<double>{2, 4});
  Tensor z = Tensor::vector({1, 2}, true);
  CHECK_THROWS_AS(backward(mul(z, z)), AutogradError);
}

TEST_CASE("backward twice raises instead of accumulating") {
  Tensor x = Tensor::vector({1, 2}, true);
  Tensor loss = sum_all(square(x));
  backward(loss);
  const std::vector<double> first(x.grad().begin(), x.grad().end());
  CHECK_THROWS_AS(backward(loss), AutogradError);
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == first);
  CHECK(Tape::current().size() == 0);
}

TEST_CASE("every tensor reachable from the loss gets a gradient") {
  Tensor a = Tensor::vector({1, 2}, true);
  Tensor b = Tensor::vector({3, 4}, true);
  Tensor c = Tensor::vector({5, 6}, true);
  Tensor unused = Tensor::vector({1, 1}, true);
  backward(sum_all(mul(add(a, b), exp(c))));
  CHECK(a.has_grad());
  CHECK(b.has_grad());
  CHECK(c.has_grad());
  CHECK_FALSE(unused.has_grad());
}

TEST_CASE("no grad guard suppresses recording") {
  Tensor x = Tensor::vector({1, 2}, true);
  {
    NoGradGuard guard;
    Tensor y = square(x);
    CHECK_FALSE(y.requires_grad());
    CHECK(Tape::current().size() == 0);
  }
  CHECK(grad_enabled());
  CHECK(square(x).requires_grad());
  Tape::current().clear();
}

TEST_CASE("grad_check examples") {
  Rng rng(3);
  Tensor x = oracle::random_tensor({4, 3}, rng);
  // Dyadic entries and step keep every sum exact.
  Tensor d({2, 3}, {0.5, -1.25, 3.0, 0.0625, -2.0, 1.75}, true);
  CHECK(grad_check([](const Tensor& t) { return sum_all(t); }, d, 0x1p-16) < 1e-12);
  Tensor one = Tensor::vector({0.7318}, true);
  CHECK(grad_check([](const Tensor& t) { return sum_all(t); }, one) < 1e-12);
  // General inputs: only the rounding of the sum itself remains.
  CHECK(grad_check([](const Tensor& t) { return sum_all(t); }, x) < 1e-10);
  CHECK(grad_check([](const Tensor& t) { return sum_all(sin(t)); }, x) < 1e-7);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(std::isnan(grad_check([&](const Tensor& t) { return sum_all(add(t, Tensor::scalar(nan))); }, x)));
}

TEST_CASE("composite two-layer net matches finite differences") {
  Rng rng(5);
  Tensor x = oracle::random_tensor({4, 3}, rng, -1, 1, false);
  Tensor w1 = oracle::random_tensor({5, 3}, rng);
  Tensor b1 = oracle::random_tensor({5}, rng);
  Tensor w2 = oracle::random_tensor({2, 5}, rng);
  const std::vector<Tensor> leaves{w1, b1, w2};
  auto f = [&] { return mean_all(square(matmul_transposed(silu(add(matmul_transposed(x, w1), b1)), w2))); };
  CHECK(grad_check(f, leaves) < 1e-4);
}

TEST_CASE("gradient check for every operation") {
  Rng rng(2024);
  const UnaryOp unary[] = {UnaryOp::Neg,  UnaryOp::Exp,  UnaryOp::Sin,    UnaryOp::Cos, UnaryOp::Arctan,
                           UnaryOp::Silu, UnaryOp::Relu, UnaryOp::Square, UnaryOp::Sqrt};
  const BinaryOp binary[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div};
  for (int trial = 0; trial < 5; ++trial) {
    CAPTURE(trial);
    for (UnaryOp op : unary) {
      CAPTURE(static_cast<int>(op));
      const double lo = op == UnaryOp::Sqrt ? 0.5 : -2.0;
      Tensor x = oracle::random_tensor({3, 4}, rng, lo, 2.0);
      Tensor weights = oracle::random_tensor({3, 4}, rng, -1, 1, false);
      CHECK(grad_check([&](const Tensor& t) { return sum_all(mul(elementwise(op, t), weights)); }, x) < 1e-4);
    }
    for (BinaryOp op : binary) {
      CAPTURE(static_cast<int>(op));
      Tensor a = oracle::random_tensor({3, 4}, rng);
      Tensor b = oracle::random_tensor({4}, rng, 0.5, 2.0);
      const std::vector<Tensor> leaves{a, b};
      CHECK(grad_check([&] { return sum_all(square(elementwise(op, a, b))); }, leaves) < 1e-4);
    }
    Tensor a = oracle::random_tensor({3, 4}, rng);
    Tensor b = oracle::random_tensor({4, 2}, rng);
    Tensor w = oracle::random_tensor({5, 4}, rng);
    const std::vector<Tensor> mm{a, b};
    CHECK(grad_check([&] { return sum_all(square(matmul(a, b))); }, mm) < 1e-4);
    const std::vector<Tensor> mt{a, w};
    CHECK(grad_check([&] { return sum_all(square(matmul_transposed(a, w))); }, mt) < 1e-4);
    Tensor c = oracle::random_tensor({2, 3, 4}, rng);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      CHECK(grad_check([&](const Tensor& t) { return sum_all(square(sum(t, axis))); }, c) < 1e-4);
      CHECK(grad_check([&](const Tensor& t) { return sum_all(square(mean(t, axis))); }, c) < 1e-4);
      CHECK(grad_check([&](const Tensor& t) { return sum_all(square(max(t, axis))); }, c) < 1e-4);
    }
    CHECK(grad_check([](const Tensor& t) { return square(mean_all(t)); }, c) < 1e-4);
    CHECK(grad_check([](const Tensor& t) { return sum_all(square(affine(t, 1.5, -0.25))); }, c) < 1e-4);
    CHECK(grad_check([](const Tensor& t) { return sum_all(sin(reshape(t, {6, 4}))); }, c) < 1e-4);
    Tensor weights = oracle::random_tensor({4, 2, 3}, rng, -1, 1, false);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(mul(permute(t, {2, 0, 1}), weights)); }, c) < 1e-4);
    Tensor d = oracle::random_tensor({2, 3, 2}, rng);
    const std::vector<Tensor> cat{c, d};
    CHECK(grad_check([&] { return sum_all(square(concat_last(c, d))); }, cat) < 1e-4);
    Tensor target = oracle::random_tensor({3, 4}, rng, -1, 1, false);
    Tensor p = oracle::random_tensor({3, 4}, rng);
    CHECK(grad_check([&](const Tensor& t) { return mse_loss(t, target); }, p) < 1e-4);
  }
}

TEST_CASE("permute and concat values") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(values(permute(t, {1, 0})) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK_THROWS_AS(permute(t, {0, 0}), ShapeError);
  Tensor u({2, 1}, {7, 8});
  CHECK(values(concat_last(t, u)) == std::vector<double>{1, 2, 3, 7, 4, 5, 6, 8});
  CHECK_THROWS_AS(concat_last(t, Tensor::zeros({3, 1})), ShapeError);
  CHECK_THROWS_AS(reshape(t, {4}), ShapeError);
}

TEST_CASE("random shape pairs only raise typed errors") {
  Rng rng(99);
  int failures = 0;
  for (int i = 0; i < 100; ++i) {
    const Shape sa = random_shape(rng);
    const Shape sb = random_shape(rng);
    Tensor a = Tensor::zeros(sa);
    Tensor b = Tensor::zeros(sb);
    try {
      Tensor c = mul(a, b);
      CHECK(c.shape() == broadcast_shapes(sa, sb));
    } catch (const ShapeError&) {
      ++failures;
    }
    try {
      Tensor c = matmul(a, b);
      CHECK(c.shape() == Shape{sa[0], sb[1]});
    } catch (const ShapeError&) {
      ++failures;
    }
  }
  CHECK(failures > 0);
}
