#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "codesumm/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/op_suite.hpp"
#include "support/oracles.hpp"

using codesumm::GradTape;
using codesumm::Shape;
using codesumm::TapeScope;
using codesumm::Tensor;

TEST_CASE("matmul identity and hand cases") {
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_values({2, 2}, {2, 3, 4, 5});
  Tensor r = eye.matmul(m);
  CHECK(r.values() == std::vector<double>{2, 3, 4, 5});

  Tensor a = Tensor::from_values({1, 2}, {1, 2});
  Tensor b = Tensor::from_values({2, 1}, {3, 4});
  CHECK(a.matmul(b).item() == doctest::Approx(11.0).epsilon(1e-12));
}

TEST_CASE("matmul against triple-loop oracle") {
  std::mt19937_64 rng(7);
  Tensor a = op_suite::rand_tensor({4, 5}, rng, -2, 2, false);
  Tensor b = op_suite::rand_tensor({5, 3}, rng, -2, 2, false);
  Tensor c = a.matmul(b);

  std::vector<std::vector<double>> av(4, std::vector<double>(5));
  std::vector<std::vector<double>> bv(5, std::vector<double>(3));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) av[i][j] = a.values()[i * 5 + j];
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) bv[i][j] = b.values()[i * 3 + j];
  auto expect = oracles::matmul(av, bv);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(c.values()[i * 3 + j] ==
            doctest::Approx(expect[i][j]).epsilon(1e-6));
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    a.matmul(b);
    FAIL("expected a dimension error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 2]") != std::string::npos);
  }
}

TEST_CASE("softmax symmetry, stability, frozen high-precision values") {
  Tensor z = Tensor::from_values({3}, {0, 0, 0}).softmax(0);
  for (double v : z.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor big = Tensor::from_values({2}, {1000, 1000}).softmax(0);
  CHECK(big.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(big.values()[1] == doctest::Approx(0.5).epsilon(1e-12));

  // exp(x - max) / sum at extended precision
  Tensor s = Tensor::from_values({3}, {1, 2, 3}).softmax(0);
  CHECK(s.values()[0] == doctest::Approx(0.090030573170380458).epsilon(1e-12));
  CHECK(s.values()[1] == doctest::Approx(0.24472847105479765).epsilon(1e-12));
  CHECK(s.values()[2] == doctest::Approx(0.66524095577482189).epsilon(1e-12));
}

TEST_CASE("softmax rows are stochastic along every axis") {
  std::mt19937_64 rng(21);
  Tensor x = op_suite::rand_tensor({3, 4, 5}, rng, -3, 3, false);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor y = x.softmax(axis);
    const auto& shape = y.shape();
    // sum over `axis` for every (outer, inner) slice
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < 3; ++d) inner *= shape[d];
    std::size_t outer = y.size() / (shape[axis] * inner);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < shape[axis]; ++j) {
          double v = y.values()[(o * shape[axis] + j) * inner + i];
          CHECK(v > 0.0);
          sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("masked positions get exactly zero weight") {
  Tensor scores = Tensor::from_values({2, 3}, {1, 2, 3, -1, 0, 1});
  Tensor mask = Tensor::from_values({2, 3}, {1, 0, 1, 1, 1, 0});
  Tensor w = scores.masked_fill(mask, codesumm::masked_fill_value()).softmax(1);
  CHECK(w.values()[1] == 0.0);
  CHECK(w.values()[5] == 0.0);
  CHECK(w.values()[0] + w.values()[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layer_norm edge and statistic checks") {
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias = Tensor::zeros({3});
  Tensor c = Tensor::from_values({3}, {5, 5, 5}).layer_norm(gain, bias, 1e-5);
  for (double v : c.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

  Tensor g2 = Tensor::full({2}, 1.0);
  Tensor b2 = Tensor::zeros({2});
  Tensor t = Tensor::from_values({2}, {1, -1}).layer_norm(g2, b2, 1e-12);
  CHECK(t.values()[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(t.values()[1] == doctest::Approx(-1.0).epsilon(1e-5));

  std::mt19937_64 rng(3);
  Tensor g8 = Tensor::full({8}, 1.0);
  Tensor b8 = Tensor::zeros({8});
  Tensor x = op_suite::rand_tensor({8}, rng, -2, 2, false);
  Tensor y = x.layer_norm(g8, b8, 1e-10);
  double mu = 0, var = 0;
  for (double v : y.values()) mu += v;
  mu /= 8;
  for (double v : y.values()) var += (v - mu) * (v - mu);
  var /= 8;
  CHECK(std::abs(mu) < 1e-6);
  CHECK(std::abs(var - 1.0) < 1e-4);
}

TEST_CASE("backward: analytic basics") {
  Tensor w = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  GradTape tape;
  {
    TapeScope scope(tape);
    tape.backward(w.sum());
  }
  for (double g : w.grad()) CHECK(g == 1.0);

  Tensor u = Tensor::from_values({4}, {1, -2, 3, 0.5}, true);
  GradTape tape2;
  {
    TapeScope scope(tape2);
    tape2.backward((u * u).sum());
  }
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(u.grad()[i] == doctest::Approx(2 * u.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor w = Tensor::from_values({2}, {1, 2}, true);
  GradTape tape;
  TapeScope scope(tape);
  Tensor y = w * 2.0;
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("gradients accumulate across fan-out and separate passes") {
  Tensor w = Tensor::from_values({2}, {1.0, 2.0}, true);
  // fan-out within one pass: w appears twice in w + w
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward((w + w).sum());
  }
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  // a second forward/backward pass accumulates; the caller zeroes
  {
    GradTape tape;
    TapeScope scope(tape);
    tape.backward((w + w).sum());
  }
  CHECK(w.grad()[0] == doctest::Approx(4.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("cross entropy of a uniform prediction is ln(V)") {
  const std::size_t v = 11;
  Tensor logits = Tensor::zeros({3, v});
  std::size_t count = 0;
  Tensor loss = codesumm::cross_entropy(logits, {1, 4, 10}, 0, &count);
  CHECK(count == 3);
  CHECK(loss.item() == doctest::Approx(std::log((double)v)).epsilon(1e-12));
}

TEST_CASE("cross entropy honors the ignore index") {
  Tensor logits = Tensor::from_values({3, 2}, {5, 0, 0, 5, 9, 9}, true);
  std::size_t count = 0;
  Tensor with_pad = codesumm::cross_entropy(logits, {1, 0, 1}, 0, &count);
  CHECK(count == 2);
  // all-ignored is a contract error
  CHECK_THROWS_AS(codesumm::cross_entropy(logits, {0, 0, 0}, 0),
                  std::invalid_argument);
  (void)with_pad;
}

TEST_CASE("non-finite forward values surface as errors") {
  Tensor huge = Tensor::full({2, 2}, 1e308);
  CHECK_THROWS_AS(huge + huge, std::runtime_error);
}

TEST_CASE("determinism: same seed, bit-identical forward and backward") {
  auto run = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor a = op_suite::rand_tensor({4, 4}, rng, -1, 1, true);
    Tensor b = op_suite::rand_tensor({4, 4}, rng, -1, 1, true);
    GradTape tape;
    std::vector<double> out;
    {
      TapeScope scope(tape);
      Tensor y = a.matmul(b).tanh().softmax(1);
      Tensor loss = op_suite::weighted_sum(y, 5);
      tape.backward(loss);
      out = y.values();
    }
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    return out;
  };
  CHECK(run(123) == run(123));
  CHECK(run(123) != run(124));
}

TEST_CASE("gradient check: every differentiable op") {
  for (auto& check : op_suite::build_op_checks(2024)) {
    auto forward = check.forward;
    auto result = gradcheck::check(
        [forward] { return forward(); }, check.params, 1e-3, 1e-4, 1e-6);
    INFO(check.name, " worst=", result.worst, " at ", result.worst_at);
    CHECK(result.pass());
    CHECK(result.checked > 0);
  }
}

TEST_CASE("inference without a tape records nothing") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4}, true);
  Tensor y = a.matmul(a);  // no TapeScope
  CHECK_FALSE(y.tracked());
  GradTape tape;
  CHECK_THROWS_AS(tape.backward(y.sum()), std::invalid_argument);
}
