#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>

#include "csiid/autodiff.hpp"
#include "csiid/rng.hpp"
#include "doctest.h"

using namespace csiid;
using ad::Tensor;

namespace {

Tensor random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
    std::vector<double> v(ad::shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

// Finite-difference check of an op: inputs become parameters, the output is
// contracted to a scalar against a fixed random projection so every output
// element carries a distinct upstream gradient.
double fd_check_op(const std::function<Tensor(std::vector<Tensor>&)>& op,
                   std::vector<ad::Shape> shapes, std::uint64_t seed,
                   double input_lo = -1.0, double input_hi = 1.0) {
    Rng rng(seed);
    std::vector<ad::Parameter> params;
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        Tensor t = random_tensor(shapes[i], rng, input_lo, input_hi);
        inputs.push_back(t);
        params.push_back({"in" + std::to_string(i), t});
    }
    Tensor probe = op(inputs);
    Tensor proj = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
    auto forward = [&]() { return ad::sum(ad::mul(op(inputs), proj)); };
    const auto report = ad::grad_check(forward, params);
    REQUIRE(report.forward_deterministic);
    return report.max_rel_err;
}

}  // namespace

TEST_CASE("softmax of a uniform row is uniform and rows sum to 1") {
    const Tensor y = ad::softmax(Tensor::from_values({3}, {0.0, 0.0, 0.0}));
    for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0));

    Rng rng(1);
    Tensor x = random_tensor({5, 7}, rng, -4.0, 4.0, false);
    const Tensor s = ad::softmax(x);
    for (std::size_t r = 0; r < 5; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 7; ++c) sum += s.values()[r * 7 + c];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax is shift-invariant") {
    Rng rng(2);
    Tensor x = random_tensor({4, 6}, rng, -3.0, 3.0, false);
    std::vector<double> shifted = x.values();
    for (double& v : shifted) v += 17.5;
    const Tensor a = ad::softmax(x);
    const Tensor b = ad::softmax(Tensor::from_values({4, 6}, shifted));
    for (std::size_t i = 0; i < a.numel(); ++i)
        CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-9);
}

TEST_CASE("softmax survives huge logits") {
    const Tensor y = ad::softmax(Tensor::from_values({2}, {1000.0, -1000.0}));
    CHECK(y.values()[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(y.values()[1]));
}

TEST_CASE("layer_norm_normalize yields zero mean and unit variance rows") {
    Rng rng(3);
    Tensor x = random_tensor({6, 16}, rng, -5.0, 5.0, false);
    const Tensor y = ad::layer_norm_normalize(x, 1e-5);
    for (std::size_t r = 0; r < 6; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 16; ++c) m += y.values()[r * 16 + c];
        m /= 16.0;
        for (std::size_t c = 0; c < 16; ++c) {
            const double d = y.values()[r * 16 + c] - m;
            v += d * d;
        }
        v /= 16.0;
        CHECK(std::abs(m) < 1e-7);
        CHECK(std::abs(v - 1.0) < 1e-5);
    }
}

TEST_CASE("matmul shapes and the row-sum gradient identity") {
    Rng rng(4);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor c = ad::matmul(a, b);
    REQUIRE(c.shape() == ad::Shape{2, 4});

    ad::backward(ad::sum(c));
    // d(sum(AB))/dA[i][k] = sum_j B[k][j]
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 3; ++k) {
            double row_sum = 0.0;
            for (std::size_t j = 0; j < 4; ++j) row_sum += b.values()[k * 4 + j];
            CHECK(a.grad()[i * 3 + k] == doctest::Approx(row_sum).epsilon(1e-12));
        }

    CHECK_THROWS_WITH_AS(ad::matmul(a, a), doctest::Contains("matmul"), ShapeError);
}

TEST_CASE("backward on simple functionals") {
    Tensor x = Tensor::from_values({3}, {1.0, -2.0, 3.0}, true);
    ad::backward(ad::sum(x));
    CHECK(x.grad() == std::vector<double>{1.0, 1.0, 1.0});

    Tensor y = Tensor::from_values({3}, {1.0, -2.0, 3.0}, true);
    ad::backward(ad::scale(ad::sum(ad::mul(y, y)), 0.5));
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(y.grad()[i] == doctest::Approx(y.values()[i]));
}

TEST_CASE("backward requires a scalar loss and accumulates across calls") {
    Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(ad::backward(x), ShapeError);

    const Tensor loss = ad::sum(ad::mul(x, x));
    ad::backward(loss);
    const std::vector<double> once = x.grad();
    ad::backward(loss);
    for (std::size_t i = 0; i < 2; ++i) CHECK(x.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("dropout is identity in eval mode and unbiased in train mode") {
    Rng rng(5);
    Tensor x = random_tensor({64}, rng, 0.5, 1.5);
    Rng mask_rng(6);
    const Tensor eval_out = ad::dropout(x, 0.2, false, mask_rng);
    CHECK(eval_out.values() == x.values());

    double acc = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const Tensor out = ad::dropout(x, 0.2, true, mask_rng);
        for (double v : out.values()) acc += v;
    }
    double input_mean = 0.0;
    for (double v : x.values()) input_mean += v;
    input_mean /= static_cast<double>(x.numel());
    const double mean_kept =
        acc / (static_cast<double>(trials) * static_cast<double>(x.numel()));
    CHECK(mean_kept == doctest::Approx(input_mean).epsilon(0.02));
}

TEST_CASE("dropout backward routes gradients through the mask") {
    Rng rng(7);
    Tensor x = Tensor::from_values({8}, {1, 1, 1, 1, 1, 1, 1, 1}, true);
    Rng mask_rng(8);
    const Tensor y = ad::dropout(x, 0.5, true, mask_rng);
    ad::backward(ad::sum(y));
    for (std::size_t i = 0; i < 8; ++i) CHECK(x.grad()[i] == y.values()[i]);
}

TEST_CASE("finite differences validate every primitive") {
    // Linear ops.
    CHECK(fd_check_op([](auto& in) { return ad::add(in[0], in[1]); },
                      {{3, 4}, {3, 4}}, 10) < 1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::add(in[0], in[1]); },
                      {{2, 3, 4}, {4}}, 11) < 1e-6);  // suffix broadcast
    CHECK(fd_check_op([](auto& in) { return ad::sub(in[0], in[1]); },
                      {{5}, {1}}, 12) < 1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::mul(in[0], in[1]); },
                      {{2, 6}, {6}}, 13) < 1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::scale(in[0], -2.5); }, {{7}}, 14) <
          1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::matmul(in[0], in[1]); },
                      {{4, 3}, {3, 5}}, 15) < 1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::matmul(in[0], in[1]); },
                      {{2, 4, 3}, {3, 5}}, 16) < 1e-6);  // shared rhs
    CHECK(fd_check_op([](auto& in) { return ad::matmul(in[0], in[1]); },
                      {{2, 3, 4, 3}, {2, 3, 3, 2}}, 17) < 1e-6);  // batched
    CHECK(fd_check_op([](auto& in) { return ad::mean(in[0], 1); }, {{3, 5, 2}}, 18) <
          1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::mean(in[0], 0); }, {{4, 3}}, 19) <
          1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::concat(in[0], in[1]); },
                      {{3, 4}, {3, 2}}, 20) < 1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::transpose(in[0]); }, {{2, 3, 4}}, 21) <
          1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::swap_axes(in[0], 1, 2); },
                      {{2, 3, 4, 5}}, 22) < 1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::reshape(in[0], {6, 2}); }, {{3, 4}},
                      23) < 1e-6);
    CHECK(fd_check_op([](auto& in) { return ad::stack_pair(in[0], in[1]); },
                      {{2, 3, 4}, {2, 3, 4}}, 24) < 1e-6);

    // Nonlinear ops.
    CHECK(fd_check_op([](auto& in) { return ad::relu(in[0]); }, {{4, 9}}, 25) < 1e-5);
    CHECK(fd_check_op([](auto& in) { return ad::softmax(in[0]); }, {{3, 7}}, 26) <
          1e-5);
    CHECK(fd_check_op([](auto& in) { return ad::layer_norm_normalize(in[0], 1e-5); },
                      {{4, 8}}, 27) < 1e-5);
    CHECK(fd_check_op(
              [](auto& in) { return ad::layer_norm(in[0], in[1], in[2], 1e-5); },
              {{4, 8}, {8}, {8}}, 28) < 1e-5);
    CHECK(fd_check_op([](auto& in) { return ad::conv2d(in[0], in[1], in[2], 1); },
                      {{2, 2, 5, 6}, {3, 2, 3, 3}, {3}}, 29) < 1e-5);
    CHECK(fd_check_op([](auto& in) { return ad::maxpool2x2(in[0]); }, {{2, 3, 6, 4}},
                      30) < 1e-5);
    CHECK(fd_check_op(
              [](auto& in) {
                  return ad::cross_entropy(in[0], std::vector<int>{1, 0, 2});
              },
              {{3, 4}}, 31, -2.0, 2.0) < 1e-5);
}

TEST_CASE("grad_check flags a non-deterministic forward") {
    Rng rng(32);
    Tensor x = random_tensor({4}, rng);
    std::vector<ad::Parameter> params{{"x", x}};
    Rng dropout_rng(33);
    auto forward = [&]() {
        return ad::sum(ad::dropout(x, 0.5, true, dropout_rng));  // wrongly enabled
    };
    const auto report = ad::grad_check(forward, params);
    CHECK_FALSE(report.forward_deterministic);
    CHECK_FALSE(report.passed(1e-3));
}

TEST_CASE("grad_check on a linear layer is tight") {
    Rng rng(34);
    Tensor w = random_tensor({6, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor x = random_tensor({5, 6}, rng, -1.0, 1.0, false);
    std::vector<ad::Parameter> params{{"W", w}, {"b", b}};
    auto forward = [&]() { return ad::sum(ad::add(ad::matmul(x, w), b)); };
    const auto report = ad::grad_check(forward, params);
    CHECK(report.passed(1e-6));
}

TEST_CASE("shape errors carry the op name and both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 2});
    CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("add"), ShapeError);
    CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("(2,3)"), ShapeError);
    CHECK_THROWS_WITH_AS(ad::concat(a, Tensor::zeros({3, 2})),
                         doctest::Contains("(3,2)"), ShapeError);
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    Tensor x = Tensor::from_values({3}, {1.0, 2.0, 3.0}, true);
    Tensor loss;
    {
        ad::NoGradGuard guard;
        CHECK_FALSE(ad::grad_enabled());
        loss = ad::sum(ad::mul(x, x));
    }
    CHECK(ad::grad_enabled());
    CHECK_FALSE(loss.requires_grad());
    ad::backward(loss);  // no-op: nothing was recorded
    CHECK(x.grad() == std::vector<double>{0.0, 0.0, 0.0});
}
