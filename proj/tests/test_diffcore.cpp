#include <doctest.h>

#include "oracles.hpp"
#include "symseg/gradcheck.hpp"
#include "symseg/ops.hpp"
#include "symseg/rng.hpp"
#include "symseg/tensor.hpp"

#include <cmath>

using namespace symseg;

TEST_CASE("tensor factories, indexing, and validation") {
  Tensor t = Tensor::from_list({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.shape() == Shape{2, 3});
  CHECK(t.size() == 6);
  CHECK(t.flat_index({1, 2}) == 5);
  CHECK(t.value_at({1, 2}) == 6.0);
  CHECK(t.value_at({0, 1}) == 2.0);
  CHECK_FALSE(t.requires_grad());

  CHECK(Tensor::zeros({4}).values().abs().sum() == 0.0);
  CHECK(Tensor::full({2, 2}, 3.5).values()(3) == 3.5);
  Tensor s = Tensor::scalar(7.0);
  CHECK(s.is_scalar());
  CHECK(s.shape() == Shape{1});

  CHECK_THROWS_AS(Tensor::from_list({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({2, -1}), std::invalid_argument);
  CHECK_THROWS_AS(t.value_at({1}), std::invalid_argument);
  CHECK_THROWS_AS(t.value_at({2, 0}), std::out_of_range);
}

TEST_CASE("elementwise arithmetic with hand-computed gradients") {
  Tensor a = Tensor::from_list({2}, {1.0, -2.0}, true);
  Tensor b = Tensor::from_list({2}, {3.0, 4.0}, true);
  Tensor z = sum(a * b + b - a);
  CHECK(z.values()(0) == doctest::Approx(3.0).epsilon(1e-14));

  backward(z);
  // dz/da = b - 1, dz/db = a + 1
  CHECK(a.grad()(0) == doctest::Approx(2.0));
  CHECK(a.grad()(1) == doctest::Approx(3.0));
  CHECK(b.grad()(0) == doctest::Approx(2.0));
  CHECK(b.grad()(1) == doctest::Approx(-1.0));
}

TEST_CASE("one-element operands broadcast against full tensors") {
  Tensor s = Tensor::scalar(2.0, true);
  Tensor x = Tensor::from_list({3}, {1, 2, 3}, true);
  Tensor z = sum(x * s);
  CHECK(z.values()(0) == doctest::Approx(12.0));
  backward(z);
  CHECK(s.grad()(0) == doctest::Approx(6.0));  // sum of x
  for (int i = 0; i < 3; ++i) CHECK(x.grad()(i) == doctest::Approx(2.0));

  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), std::invalid_argument);
}

TEST_CASE("gradients accumulate when a tensor is used twice") {
  Tensor a = Tensor::from_list({2}, {5.0, -1.0}, true);
  Tensor z = sum(a + a);
  backward(z);
  CHECK(a.grad()(0) == doctest::Approx(2.0));
  CHECK(a.grad()(1) == doctest::Approx(2.0));
}

TEST_CASE("relu clips negatives and never emits negative zero") {
  Tensor a = Tensor::from_list({4}, {-1.0, -0.0, 0.0, 2.0}, true);
  Tensor y = relu(a);
  CHECK(y.values()(0) == 0.0);
  CHECK_FALSE(std::signbit(y.values()(1)));
  CHECK(y.values()(2) == 0.0);
  CHECK(y.values()(3) == 2.0);

  backward(sum(y));
  CHECK(a.grad()(0) == 0.0);
  CHECK(a.grad()(1) == 0.0);  // subgradient 0 at the kink
  CHECK(a.grad()(2) == 0.0);
  CHECK(a.grad()(3) == 1.0);
}

TEST_CASE("exp and log invert each other and log rejects non-positive input") {
  Tensor x = Tensor::scalar(0.5, true);
  Tensor y = log(exp(x));
  CHECK(y.values()(0) == doctest::Approx(0.5).epsilon(1e-14));
  backward(y);
  CHECK(x.grad()(0) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(log(Tensor::scalar(0.0)), std::domain_error);
  CHECK_THROWS_AS(log(Tensor::from_list({2}, {1.0, -3.0})), std::domain_error);
}

TEST_CASE("clamp saturates values and gates the gradient") {
  Tensor a = Tensor::from_list({4}, {-2.0, 0.0, 0.5, 3.0}, true);
  Tensor y = clamp(a, 0.0, 1.0);
  CHECK(y.values()(0) == 0.0);
  CHECK(y.values()(1) == 0.0);
  CHECK(y.values()(2) == 0.5);
  CHECK(y.values()(3) == 1.0);

  backward(sum(y));
  CHECK(a.grad()(0) == 0.0);
  CHECK(a.grad()(1) == 1.0);  // boundary values pass the gradient
  CHECK(a.grad()(2) == 1.0);
  CHECK(a.grad()(3) == 0.0);

  CHECK_THROWS_AS(clamp(a, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("axis reduction keeps the axis with size one") {
  Tensor a = Tensor::from_list({2, 3}, {1, 2, 3, 4, 5, 6}, true);

  Tensor rows = sum_axis(a, 1);
  CHECK(rows.shape() == Shape{2, 1});
  CHECK(rows.values()(0) == 6.0);
  CHECK(rows.values()(1) == 15.0);

  Tensor cols = sum_axis(a, 0);
  CHECK(cols.shape() == Shape{1, 3});
  CHECK(cols.values()(0) == 5.0);
  CHECK(cols.values()(1) == 7.0);
  CHECK(cols.values()(2) == 9.0);

  backward(sum(rows));
  for (int i = 0; i < 6; ++i) CHECK(a.grad()(i) == 1.0);

  CHECK_THROWS_AS(sum_axis(a, 2), std::invalid_argument);
}

TEST_CASE("slice along axis 0 scatters its gradient back in place") {
  Tensor a = Tensor::from_list({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tensor mid = slice_axis0(a, 1, 3);
  CHECK(mid.shape() == Shape{2, 2});
  CHECK(mid.values()(0) == 3.0);
  CHECK(mid.values()(3) == 6.0);

  backward(sum(mid));
  CHECK(a.grad()(0) == 0.0);
  CHECK(a.grad()(1) == 0.0);
  for (int i = 2; i < 6; ++i) CHECK(a.grad()(i) == 1.0);

  CHECK_THROWS_AS(slice_axis0(a, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(slice_axis0(a, 0, 4), std::invalid_argument);
}

TEST_CASE("conv2d forward agrees with the padded reference implementation") {
  Rng rng(42);
  const long c_in = 2, h = 5, w = 6, c_out = 3, k = 3;
  Eigen::ArrayXd xv = rng.uniform_array(c_in * h * w, -1.0, 1.0);
  Eigen::ArrayXd kv = rng.uniform_array(c_out * c_in * k * k, -1.0, 1.0);
  std::vector<double> x_flat(xv.data(), xv.data() + xv.size());
  std::vector<double> k_flat(kv.data(), kv.data() + kv.size());
  Tensor x = Tensor::from_values({c_in, h, w}, xv);
  Tensor kk = Tensor::from_values({c_out, c_in, k, k}, kv);

  for (long stride : {1L, 2L}) {
    long h_ref = 0, w_ref = 0;
    std::vector<double> ref =
        oracle::naive_conv2d(x_flat, c_in, h, w, k_flat, c_out, k, stride, 1, h_ref, w_ref);
    Tensor y = conv2d(x, kk, stride, 1);
    REQUIRE(y.shape() == Shape{c_out, h_ref, w_ref});
    for (Index i = 0; i < y.size(); ++i) {
      CHECK(y.values()(i) == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(7);
  Tensor x0 = Tensor::from_values({1, 4, 4}, rng.uniform_array(16, -1.0, 1.0));
  Tensor k0 = Tensor::from_values({2, 1, 3, 3}, rng.uniform_array(18, -1.0, 1.0), true);

  auto loss_of_kernel = [&](const Tensor& kt) { return sum(mul(conv2d(x0, kt, 1, 1), conv2d(x0, kt, 1, 1))); };
  CHECK(finite_difference_check(loss_of_kernel, k0, 1e-5) < 1e-6);

  Tensor x1 = x0.clone_leaf(true);
  Tensor k1 = k0.detach();
  auto loss_of_input = [&](const Tensor& xt) { return sum(mul(conv2d(xt, k1, 2, 1), conv2d(xt, k1, 2, 1))); };
  CHECK(finite_difference_check(loss_of_input, x1, 1e-5) < 1e-6);
}

TEST_CASE("conv2d validates its operands") {
  Tensor x = Tensor::zeros({2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 2, 2}), 1, 1), std::invalid_argument);  // even k
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 3, 3, 3}), 1, 1), std::invalid_argument);  // c_in
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 3, 3}), 0, 1), std::invalid_argument);  // stride
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 1}), Tensor::zeros({1, 1, 3, 3}), 1, 0),
                  std::invalid_argument);  // empty output
}

TEST_CASE("softmax matches the frozen reference and is shift invariant") {
  Tensor y = softmax(Tensor::from_list({3}, {1, 2, 3}), 0);
  for (int i = 0; i < 3; ++i) {
    CHECK(y.values()(i) == doctest::Approx(oracle::kSoftmax123[i]).epsilon(1e-15));
  }
  CHECK(y.values().sum() == doctest::Approx(1.0).epsilon(1e-15));

  Tensor shifted = softmax(Tensor::from_list({3}, {1001, 1002, 1003}), 0);
  for (int i = 0; i < 3; ++i) {
    CHECK(shifted.values()(i) == doctest::Approx(oracle::kSoftmax123[i]).epsilon(1e-12));
  }

  // axis selection: softmax over the last axis of a [2,3] tensor
  Tensor rows = softmax(Tensor::from_list({2, 3}, {1, 2, 3, 3, 2, 1}), 1);
  CHECK(rows.values()(0) == doctest::Approx(oracle::kSoftmax123[0]).epsilon(1e-14));
  CHECK(rows.values()(3) == doctest::Approx(oracle::kSoftmax123[2]).epsilon(1e-14));
  CHECK(rows.values()(5) == doctest::Approx(oracle::kSoftmax123[0]).epsilon(1e-14));

  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softmax(Tensor::from_list({2}, {1.0, inf}), 0), std::domain_error);
}

TEST_CASE("softmax gradient matches finite differences") {
  Rng rng(11);
  Tensor theta = Tensor::from_values({4}, rng.uniform_array(4, -2.0, 2.0), true);
  Tensor w = Tensor::from_list({4}, {0.3, -1.2, 2.0, 0.7});
  auto f = [&](const Tensor& t) { return sum(mul(w, softmax(t, 0))); };
  CHECK(finite_difference_check(f, theta, 1e-5) < 1e-6);
}

TEST_CASE("nearest upsampling replicates blocks and sums gradients back") {
  Tensor a = Tensor::from_list({1, 2, 2}, {1, 2, 3, 4}, true);

  Tensor up = upsample_nearest(a, 2, 4, 4);
  CHECK(up.shape() == Shape{1, 4, 4});
  CHECK(up.value_at({0, 0, 0}) == 1.0);
  CHECK(up.value_at({0, 1, 1}) == 1.0);
  CHECK(up.value_at({0, 0, 2}) == 2.0);
  CHECK(up.value_at({0, 3, 0}) == 3.0);
  CHECK(up.value_at({0, 3, 3}) == 4.0);

  // odd target size: trailing row/column of the doubled grid is trimmed
  Tensor odd = upsample_nearest(a, 2, 3, 3);
  CHECK(odd.shape() == Shape{1, 3, 3});
  CHECK(odd.value_at({0, 2, 2}) == 4.0);

  backward(sum(odd));
  CHECK(a.grad()(0) == 4.0);  // 2x2 block survives
  CHECK(a.grad()(1) == 2.0);  // one column trimmed
  CHECK(a.grad()(2) == 2.0);  // one row trimmed
  CHECK(a.grad()(3) == 1.0);

  CHECK_THROWS_AS(upsample_nearest(a, 2, 5, 4), std::invalid_argument);
}

TEST_CASE("l2 norm value, gradient, and origin subgradient") {
  Tensor a = Tensor::from_list({2}, {3.0, 4.0}, true);
  Tensor n = l2_norm(a);
  CHECK(n.values()(0) == doctest::Approx(5.0).epsilon(1e-15));
  backward(n);
  CHECK(a.grad()(0) == doctest::Approx(0.6));
  CHECK(a.grad()(1) == doctest::Approx(0.8));

  Tensor z = Tensor::zeros({3}, true);
  Tensor nz = l2_norm(z);
  CHECK(nz.values()(0) == 0.0);
  backward(nz);
  const bool zero_subgrad = !z.has_grad() || z.grad().abs().sum() == 0.0;
  CHECK(zero_subgrad);

  Rng rng(3);
  Tensor theta = Tensor::from_values({5}, rng.uniform_array(5, 0.5, 2.0), true);
  auto f = [](const Tensor& t) { return l2_norm(t); };
  CHECK(finite_difference_check(f, theta, 1e-5) < 1e-6);
}

TEST_CASE("cosine similarity conventions and gradient") {
  Tensor ones2 = Tensor::from_list({2}, {1.0, 1.0});
  CHECK(cosine_similarity(ones2, ones2).values()(0) == doctest::Approx(1.0));
  Tensor ex = Tensor::from_list({2}, {1.0, 0.0});
  Tensor ey = Tensor::from_list({2}, {0.0, 1.0});
  CHECK(cosine_similarity(ex, ey).values()(0) == doctest::Approx(0.0));

  Tensor zero2 = Tensor::zeros({2}, true);
  CHECK(cosine_similarity(zero2, zero2).values()(0) == 1.0);   // both zero
  CHECK(cosine_similarity(zero2, ones2).values()(0) == 0.0);   // exactly one zero
  Tensor deg = cosine_similarity(zero2, ones2);
  backward(deg);
  const bool leaked = zero2.has_grad() && zero2.grad().abs().sum() != 0.0;
  CHECK_FALSE(leaked);

  CHECK_THROWS_AS(cosine_similarity(ex, Tensor::zeros({3})), std::invalid_argument);

  Rng rng(5);
  Tensor theta = Tensor::from_values({6}, rng.uniform_array(6, 0.5, 2.0), true);
  auto f = [](const Tensor& t) {
    return cosine_similarity(slice_axis0(t, 0, 3), slice_axis0(t, 3, 6));
  };
  CHECK(finite_difference_check(f, theta, 1e-5) < 1e-6);
}

TEST_CASE("backward seeds a scalar root, frees the graph, and honors retain_graph") {
  Tensor a = Tensor::from_list({2}, {1.5, -0.5}, true);

  Tensor z1 = sum(a * a);
  backward(z1, /*retain_graph=*/true);
  CHECK(a.grad()(0) == doctest::Approx(3.0));
  backward(z1);  // graph retained once, so a second pass doubles the grads
  CHECK(a.grad()(0) == doctest::Approx(6.0));
  CHECK(a.grad()(1) == doctest::Approx(-2.0));

  // after the non-retaining pass the tape is gone: another backward call
  // can no longer reach the leaf
  backward(z1);
  CHECK(a.grad()(0) == doctest::Approx(6.0));

  CHECK_THROWS_AS(backward(Tensor::zeros({2}, true)), std::invalid_argument);
  CHECK_THROWS_AS(backward(Tensor()), std::invalid_argument);
}

TEST_CASE("detach cuts history and zero_grad clears accumulators") {
  Tensor a = Tensor::from_list({2}, {1.0, 2.0}, true);
  Tensor d = a.detach();
  CHECK_FALSE(d.requires_grad());
  a.values_mut()(0) = 9.0;
  CHECK(d.values()(0) == 1.0);  // detach copies, it does not alias

  Tensor z = sum(a * d);
  backward(z);
  CHECK(a.has_grad());
  a.zero_grad();
  CHECK_FALSE(a.has_grad());
  CHECK_THROWS_AS(a.grad(), std::logic_error);

  // ops over non-tracked tensors stay off the tape entirely
  Tensor y = sum(mul(d, d));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("finite difference check accepts good gradients and flags broken ones") {
  Rng rng(13);
  Tensor theta = Tensor::from_values({6}, rng.uniform_array(6, 0.2, 0.4), true);
  auto good = [](const Tensor& t) { return sum(mul(exp(t), clamp(t, -0.5, 0.5))); };
  CHECK(finite_difference_check(good, theta, 1e-5) < 1e-6);

  // treating one factor as a constant halves the true derivative of t^2
  auto broken = [](const Tensor& t) { return sum(mul(t, t.detach())); };
  Tensor theta2 = Tensor::from_list({2}, {1.0, 2.0}, true);
  CHECK(finite_difference_check(broken, theta2, 1e-5) > 0.1);

  CHECK_THROWS_AS(finite_difference_check(good, theta, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(finite_difference_check(good, theta.detach(), 1e-5), std::invalid_argument);
}

TEST_CASE("deterministic rng replays identically for equal seeds") {
  Rng a(123), b(123), c(124);
  bool same = true, diff = false;
  for (int i = 0; i < 64; ++i) {
    const double va = a.uniform(), vb = b.uniform(), vc = c.uniform();
    same = same && (va == vb);
    diff = diff || (va != vc);
    CHECK(va >= 0.0);
    CHECK(va < 1.0);
  }
  CHECK(same);
  CHECK(diff);

  Rng d(9);
  for (int i = 0; i < 100; ++i) {
    const auto v = d.uniform_int(-3, 5);
    CHECK(v >= -3);
    CHECK(v <= 5);
  }
  Rng e(10);
  for (int i = 0; i < 100; ++i) CHECK(std::isfinite(e.normal()));
}
