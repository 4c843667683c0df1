#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lowshot/graph.hpp"
#include "lowshot/rng.hpp"
#include "oracles.hpp"

using namespace lowshot;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(s));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

// Checks every coordinate of every input against central differences.
// `build` must construct a fresh scalar graph from the given leaves.
void check_grads(std::vector<Tensor<double>*> inputs,
                 const std::function<NodePtr<double>(const std::vector<NodePtr<double>>&)>& build,
                 double step = 1e-6, double tol = 1e-6) {
    std::vector<NodePtr<double>> leaves;
    for (auto* t : inputs) leaves.push_back(leaf(*t, true));
    backward(build(leaves));

    auto eval = [&]() {
        std::vector<NodePtr<double>> frozen;
        for (auto* t : inputs) frozen.push_back(leaf(*t, false));
        return scalar_value(build(frozen));
    };
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto& g = leaves[k]->grad_buf();
        for (std::int64_t i = 0; i < inputs[k]->numel(); ++i) {
            const double fd = oracle::fd_coord(*inputs[k], i, step, eval);
            INFO("input ", k, " coord ", i, " analytic ", g[i], " fd ", fd);
            CHECK(oracle::rel_err(g[static_cast<std::size_t>(i)], fd) < tol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise forward values") {
    auto a = leaf(Tensor<double>(Shape{3}, {1, -2, 3}), false);
    auto b = leaf(Tensor<double>(Shape{3}, {10, 20, 30}), false);

    auto s = add(a, b);
    CHECK(s->value[0] == 11.0);
    CHECK(s->value[2] == 33.0);
    CHECK(sub(b, a)->value[1] == 22.0);
    CHECK(mul(a, b)->value[1] == -40.0);
    CHECK(affine(a, 2.0, 1.0)->value[1] == -3.0);
    CHECK(square(a)->value[1] == 4.0);
    CHECK(exp_op(leaf(Tensor<double>(Shape{1}, {0.0}), false))->value[0] == 1.0);

    auto r = relu(leaf(Tensor<double>(Shape{3}, {-1, 0, 2}), false));
    CHECK(r->value[0] == 0.0);
    CHECK(r->value[1] == 0.0);
    CHECK(r->value[2] == 2.0);

    CHECK(tanh_op(leaf(Tensor<double>(Shape{1}, {0.0}), false))->value[0] == 0.0);

    CHECK(scalar_value(sum(a)) == 2.0);
    CHECK(scalar_value(mean(b)) == 20.0);
}

TEST_CASE("shape mismatches rejected") {
    auto a = leaf(Tensor<double>::zeros({2}), false);
    auto b = leaf(Tensor<double>::zeros({3}), false);
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(sub(a, b), ShapeError);
    CHECK_THROWS_AS(mul(a, b), ShapeError);
}

TEST_CASE("backward requires a scalar root") {
    auto a = leaf(Tensor<double>::zeros({2}), true);
    CHECK_THROWS_AS(backward(square(a)), ShapeError);
    CHECK_THROWS_AS(scalar_value(square(a)), ShapeError);
}

TEST_CASE("half norm squared has gradient z") {
    Rng rng(3);
    Tensor<double> z = random_tensor({6}, rng);
    auto zl = leaf(z, true);
    backward(affine(sum(square(zl)), 0.5, 0.0));
    for (std::int64_t i = 0; i < z.numel(); ++i)
        CHECK(zl->grad_buf()[static_cast<std::size_t>(i)] == doctest::Approx(z[i]).epsilon(1e-12));
}

TEST_CASE("constant objective leaves no gradients") {
    auto c = constant(Tensor<double>(Shape{3}, {1, 2, 3}));
    auto x = leaf(Tensor<double>::zeros({3}), true);
    // graph that never touches x
    const double v = backward(sum(c));
    CHECK(v == 6.0);
    CHECK(x->grad.empty());
    CHECK(c->grad.empty());  // constants never receive gradient buffers
}

TEST_CASE("shared subexpression accumulates") {
    // y = sum(x*x) + sum(x): dy/dx = 2x + 1
    Tensor<double> x(Shape{4}, {0.5, -1.5, 2.0, 3.0});
    auto xl = leaf(x, true);
    backward(add(sum(mul(xl, xl)), sum(xl)));
    for (std::int64_t i = 0; i < 4; ++i)
        CHECK(xl->grad_buf()[static_cast<std::size_t>(i)] ==
              doctest::Approx(2.0 * x[i] + 1.0).epsilon(1e-12));
}

TEST_CASE("requires_grad gating skips frozen leaves") {
    Tensor<double> a(Shape{2}, {1, 2}), b(Shape{2}, {3, 4});
    auto al = leaf(a, true);
    auto bl = leaf(b, false);
    backward(sum(mul(al, bl)));
    CHECK(al->grad_buf()[0] == 3.0);
    CHECK(bl->grad.empty());
}

TEST_CASE("non-finite forward names the primitive") {
    auto big = leaf(Tensor<double>(Shape{1}, {1000.0}), false);
    try {
        exp_op(big);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("exp") != std::string::npos);
        CHECK(msg.find("forward") != std::string::npos);
    }
    CHECK_THROWS_AS(leaf(Tensor<double>(Shape{1}, {std::nan("")}), false), NumericError);
}

TEST_CASE("elementwise gradients vs finite differences") {
    Rng rng(17);
    Tensor<double> a = random_tensor({5}, rng);
    Tensor<double> b = random_tensor({5}, rng);
    // keep relu inputs away from the kink
    for (std::int64_t i = 0; i < 5; ++i)
        if (std::abs(a[i]) < 0.1) a[i] += 0.5;

    check_grads({&a, &b}, [](const auto& l) { return sum(mul(l[0], l[1])); });
    check_grads({&a, &b}, [](const auto& l) { return sum(square(sub(l[0], l[1]))); });
    check_grads({&a}, [](const auto& l) { return mean(square(l[0])); });
    check_grads({&a}, [](const auto& l) { return sum(relu(l[0])); });
    check_grads({&a}, [](const auto& l) { return sum(tanh_op(affine(l[0], 0.7, 0.1))); });
    check_grads({&a}, [](const auto& l) { return sum(exp_op(affine(l[0], 0.3, 0.0))); });
    check_grads({&a}, [](const auto& l) {
        return sum(square(reshape(l[0], Shape{5, 1})));
    });
}

TEST_CASE("tanh gradient matches central differences tightly") {
    Rng rng(29);
    for (int t = 0; t < 20; ++t) {
        Tensor<double> x(Shape{1}, {rng.uniform(-2.0, 2.0)});
        auto xl = leaf(x, true);
        backward(sum(tanh_op(xl)));
        const double analytic = xl->grad_buf()[0];
        const double fd = oracle::fd_coord(x, 0, 1e-6, [&]() {
            return scalar_value(sum(tanh_op(leaf(x, false))));
        });
        CHECK(oracle::rel_err(analytic, fd) < 1e-6);
    }
}

TEST_CASE("conv_transpose2d trivial placements") {
    // single input pixel v, all-ones 4x4 kernel, stride 2, pad 1 -> 2x2 of v
    const double v = 2.75;
    auto x = leaf(Tensor<double>(Shape{1, 1, 1}, {v}), false);
    auto w = leaf(Tensor<double>::full({1, 1, 4, 4}, 1.0), false);
    auto y = conv_transpose2d(x, w, 2, 1);
    CHECK(y->value.shape == Shape{1, 2, 2});
    for (std::int64_t i = 0; i < 4; ++i) CHECK(y->value[i] == v);

    // zero input -> zero output
    auto z = conv_transpose2d(leaf(Tensor<double>::zeros({2, 3, 3}), false),
                              leaf(Tensor<double>::full({2, 5, 4, 4}, 0.37), false), 2, 1);
    for (std::int64_t i = 0; i < z->value.numel(); ++i) CHECK(z->value[i] == 0.0);
}

TEST_CASE("conv_transpose2d forward matches scatter-add oracle") {
    Rng rng(5);
    for (auto [stride, padding] : {std::pair{1, 0}, std::pair{2, 1}}) {
        Tensor<double> x = random_tensor({3, 2, 2}, rng);
        Tensor<double> w = random_tensor({3, 4, 4, 4}, rng);
        auto got = conv_transpose2d(leaf(x, false), leaf(w, false), stride, padding);
        auto want = oracle::conv_transpose2d(x, w, stride, padding);
        REQUIRE(got->value.shape == want.shape);
        for (std::int64_t i = 0; i < want.numel(); ++i)
            CHECK(got->value[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv_transpose2d shape contract and errors") {
    auto x = leaf(Tensor<double>::zeros({2, 3, 3}), false);
    auto w = leaf(Tensor<double>::zeros({2, 4, 4, 4}), false);
    CHECK(conv_transpose2d(x, w, 1, 0)->value.shape == Shape{4, 6, 6});
    CHECK(conv_transpose2d(x, w, 2, 1)->value.shape == Shape{4, 6, 6});

    auto wbad = leaf(Tensor<double>::zeros({3, 4, 4, 4}), false);
    CHECK_THROWS_AS(conv_transpose2d(x, wbad, 1, 0), ShapeError);
    auto wrect = leaf(Tensor<double>::zeros({2, 4, 4, 3}), false);
    CHECK_THROWS_AS(conv_transpose2d(x, wrect, 1, 0), ShapeError);
    auto xflat = leaf(Tensor<double>::zeros({18}), false);
    CHECK_THROWS_AS(conv_transpose2d(xflat, w, 1, 0), ShapeError);
    CHECK_THROWS_AS(conv_transpose2d(x, w, 0, 0), ConfigError);
    CHECK_THROWS_AS(conv_transpose2d(x, w, 1, -1), ConfigError);
}

TEST_CASE("conv_transpose2d is the adjoint of strided convolution") {
    Rng rng(41);
    for (auto [stride, padding] : {std::pair{1, 0}, std::pair{2, 1}}) {
        Tensor<double> x = random_tensor({2, 3, 3}, rng);
        Tensor<double> w = random_tensor({2, 3, 4, 4}, rng);
        auto ax = conv_transpose2d(leaf(x, false), leaf(w, false), stride, padding)->value;
        Tensor<double> y = random_tensor(ax.shape, rng);
        const double lhs = oracle::dot(ax, y);
        const double rhs = oracle::dot(x, oracle::conv2d_adjoint(y, w, stride, padding, 3, 3));
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("conv_transpose2d gradients vs finite differences") {
    Rng rng(7);
    Tensor<double> x = random_tensor({2, 2, 2}, rng);
    Tensor<double> w = random_tensor({2, 3, 4, 4}, rng, 0.5);
    Tensor<double> probe; // random cotangent via elementwise product with a constant
    for (auto [stride, padding] : {std::pair{1, 0}, std::pair{2, 1}}) {
        Tensor<double> c = random_tensor(
            conv_transpose2d(leaf(x, false), leaf(w, false), stride, padding)->value.shape, rng);
        check_grads({&x, &w}, [&, stride, padding](const auto& l) {
            return sum(mul(conv_transpose2d(l[0], l[1], stride, padding), constant(c)));
        }, 1e-6, 1e-5);
    }
}

TEST_CASE("batch_norm forward matches statistics oracle") {
    Rng rng(13);
    Tensor<double> x = random_tensor({4, 2, 3, 3}, rng, 2.0);
    Tensor<double> gamma(Shape{2}, {1.3, 0.8});
    Tensor<double> beta(Shape{2}, {0.1, -0.2});
    const double eps = 1e-5;
    auto got = batch_norm(leaf(x, false), leaf(gamma, false), leaf(beta, false), eps);
    auto want = oracle::batch_norm(x, gamma, beta, eps);
    for (std::int64_t i = 0; i < want.numel(); ++i)
        CHECK(got->value[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("batch_norm constant input maps to beta") {
    auto x = leaf(Tensor<double>::full({1, 2, 3, 3}, 5.0), false);
    auto g = leaf(Tensor<double>::full({2}, 1.0), false);
    auto b = leaf(Tensor<double>::zeros({2}), false);
    auto y = batch_norm(x, g, b, 1e-5);
    for (std::int64_t i = 0; i < y->value.numel(); ++i)
        CHECK(std::abs(y->value[i]) <= 1e-8);
}

TEST_CASE("batch_norm passes through normalized input as eps vanishes") {
    // channel values with exact zero mean, unit (biased) variance
    Tensor<double> x = Tensor<double>::zeros({1, 1, 2, 2});
    x[0] = 1; x[1] = -1; x[2] = 1; x[3] = -1;
    auto y = batch_norm(leaf(x, false), leaf(Tensor<double>::full({1}, 1.0), false),
                        leaf(Tensor<double>::zeros({1}), false), 1e-12);
    for (std::int64_t i = 0; i < 4; ++i)
        CHECK(y->value[i] == doctest::Approx(x[i]).epsilon(1e-9));
}

TEST_CASE("batch_norm rejects bad shapes and eps") {
    auto x = leaf(Tensor<double>::zeros({2, 3, 4, 4}), false);
    auto g3 = leaf(Tensor<double>::full({3}, 1.0), false);
    auto b3 = leaf(Tensor<double>::zeros({3}), false);
    auto g2 = leaf(Tensor<double>::full({2}, 1.0), false);
    CHECK_THROWS_AS(batch_norm(x, g2, b3, 1e-5), ShapeError);
    CHECK_THROWS_AS(batch_norm(leaf(Tensor<double>::zeros({3, 4, 4}), false), g3, b3, 1e-5),
                    ShapeError);
    CHECK_THROWS_AS(batch_norm(x, g3, b3, 0.0), ConfigError);
}

TEST_CASE("batch_norm gradients vs finite differences") {
    Rng rng(19);
    Tensor<double> x = random_tensor({2, 2, 2, 2}, rng);
    Tensor<double> gamma(Shape{2}, {1.1, 0.9});
    Tensor<double> beta(Shape{2}, {0.05, -0.6});
    Tensor<double> c = random_tensor({2, 2, 2, 2}, rng);
    check_grads({&x, &gamma, &beta}, [&](const auto& l) {
        return sum(mul(batch_norm(l[0], l[1], l[2], 1e-5), constant(c)));
    }, 1e-6, 2e-5);
}

TEST_CASE("matvec forward and gradient") {
    Rng rng(23);
    Tensor<double> a = random_tensor({3, 5}, rng);
    Tensor<double> x = random_tensor({5}, rng);
    auto y = matvec(a, leaf(x, false));
    REQUIRE(y->value.shape == Shape{3});
    for (std::int64_t r = 0; r < 3; ++r) {
        double acc = 0;
        for (std::int64_t c = 0; c < 5; ++c) acc += a[r * 5 + c] * x[c];
        CHECK(y->value[r] == doctest::Approx(acc).epsilon(1e-12));
    }
    Tensor<double> cot = random_tensor({3}, rng);
    check_grads({&x}, [&](const auto& l) { return sum(mul(matvec(a, l[0]), constant(cot))); });

    CHECK_THROWS_AS(matvec(a, leaf(Tensor<double>::zeros({4}), false)), ShapeError);
    CHECK_THROWS_AS(matvec(Tensor<double>::zeros({5}), leaf(x, false)), ShapeError);
}

TEST_CASE("channel_weighted_sum forward and gradient") {
    Rng rng(31);
    Tensor<double> x = random_tensor({3, 2, 2}, rng);
    Tensor<double> coeff(Shape{3}, {0.25, 0.5, 0.25});
    auto y = channel_weighted_sum(leaf(x, false), coeff);
    REQUIRE(y->value.shape == Shape{2, 2});
    for (std::int64_t i = 0; i < 4; ++i)
        CHECK(y->value[i] ==
              doctest::Approx(0.25 * x[i] + 0.5 * x[4 + i] + 0.25 * x[8 + i]).epsilon(1e-12));

    Tensor<double> cot = random_tensor({2, 2}, rng);
    check_grads({&x}, [&](const auto& l) {
        return sum(mul(channel_weighted_sum(l[0], coeff), constant(cot)));
    });

    CHECK_THROWS_AS(channel_weighted_sum(leaf(Tensor<double>::zeros({2, 2}), false), coeff),
                    ShapeError);
    CHECK_THROWS_AS(channel_weighted_sum(leaf(x, false), Tensor<double>::zeros({2})), ShapeError);
}

TEST_CASE("forward evaluation is deterministic") {
    Rng rng(37);
    Tensor<double> x = random_tensor({2, 3, 3}, rng);
    Tensor<double> w = random_tensor({2, 4, 4, 4}, rng);
    auto a = conv_transpose2d(leaf(x, false), leaf(w, false), 2, 1);
    auto b = conv_transpose2d(leaf(x, false), leaf(w, false), 2, 1);
    CHECK(bit_equal(a->value, b->value));
}
