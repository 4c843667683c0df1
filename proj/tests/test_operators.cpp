#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "lowshot/invert.hpp"
#include "lowshot/operators.hpp"
#include "lowshot/rng.hpp"
#include "oracles.hpp"

using namespace lowshot;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(s));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

}  // namespace

TEST_CASE("gaussian operator construction and determinism") {
    auto a = MeasureOp<double>::gaussian(4, 6, 99);
    auto b = MeasureOp<double>::gaussian(4, 6, 99);
    CHECK(bit_equal(a.matrix(), b.matrix()));
    CHECK(a.m() == 4);
    CHECK(a.n() == 6);
    CHECK(a.kind_name() == "gaussian");

    auto c = MeasureOp<double>::gaussian(4, 6, 100);
    CHECK_FALSE(bit_equal(a.matrix(), c.matrix()));

    CHECK_THROWS_AS(MeasureOp<double>::gaussian(0, 6, 1), ConfigError);
    CHECK_THROWS_AS(MeasureOp<double>::gaussian(4, 0, 1), ConfigError);
    CHECK_THROWS_AS(MeasureOp<double>::luma(0, 4), ConfigError);
    CHECK_THROWS_AS(MeasureOp<double>::identity(0), ConfigError);
}

TEST_CASE("gaussian operator ratio") {
    // 64x64x3 image, m = 410 rows
    auto op = MeasureOp<double>::gaussian(410, 12288, 7);
    CHECK(op.ratio() == doctest::Approx(410.0 / 12288.0).epsilon(1e-15));
}

TEST_CASE("gaussian matrix entries look standard normal") {
    auto op = MeasureOp<double>::gaussian(1000, 1000, 2024);
    const auto& m = op.matrix();
    double mean = 0;
    for (std::int64_t i = 0; i < m.numel(); ++i) mean += m[i];
    mean /= static_cast<double>(m.numel());
    double var = 0;
    for (std::int64_t i = 0; i < m.numel(); ++i) var += (m[i] - mean) * (m[i] - mean);
    var /= static_cast<double>(m.numel());
    CHECK(std::abs(mean) < 0.005);
    CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("gaussian apply equals a hand matvec") {
    Rng rng(5);
    auto op = MeasureOp<double>::gaussian(3, 12, 17);
    Tensor<double> x = random_tensor({3, 2, 2}, rng);

    Tensor<double> y = op.apply(x);
    CHECK(y.shape == Shape{3});
    const auto& m = op.matrix();
    for (std::int64_t r = 0; r < 3; ++r) {
        double want = 0;
        for (std::int64_t c = 0; c < 12; ++c) want += m[r * 12 + c] * x[c];
        CHECK(y[r] == doctest::Approx(want).epsilon(1e-12));
    }

    Tensor<double> bad = random_tensor({3, 2, 3}, rng);
    CHECK_THROWS_AS(op.apply(bad), ShapeError);
}

TEST_CASE("identity operator hands back the image") {
    Rng rng(6);
    auto op = MeasureOp<double>::identity(12);
    Tensor<double> x = random_tensor({3, 2, 2}, rng);
    CHECK(bit_equal(op.apply(x), x));
    CHECK(op.ratio() == 1.0);
    CHECK_THROWS_AS(op.apply(random_tensor({3, 2, 3}, rng)), ShapeError);
    CHECK_THROWS_AS(op.matrix(), ConfigError);
}

TEST_CASE("luma coefficients") {
    auto op = MeasureOp<double>::luma(2, 2);
    CHECK(op.m() == 4);
    CHECK(op.n() == 12);
    CHECK(op.height() == 2);
    CHECK(op.width() == 2);

    // white -> 1, red -> 0.299
    Tensor<double> white = Tensor<double>::full({3, 2, 2}, 1.0);
    Tensor<double> yw = op.apply(white);
    CHECK(yw.shape == Shape{2, 2});
    for (std::int64_t i = 0; i < 4; ++i) CHECK(yw[i] == doctest::Approx(1.0).epsilon(1e-6));

    Tensor<double> red = Tensor<double>::zeros({3, 2, 2});
    for (std::int64_t i = 0; i < 4; ++i) red[i] = 1.0;
    Tensor<double> yr = op.apply(red);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(yr[i] == doctest::Approx(0.299).epsilon(1e-12));

    // red at level 255 lands on the 8-bit oracle's level 76 within one level
    CHECK(std::abs(yr[0] * 255.0 - oracle::luma8(255, 0, 0)) <= 1.0);

    CHECK_THROWS_AS(op.apply(Tensor<double>::zeros({3, 2, 3})), ShapeError);
    CHECK_THROWS_AS(op.apply(Tensor<double>::zeros({1, 2, 2})), ShapeError);
}

TEST_CASE("luma tracks the integer oracle within one 8-bit level") {
    auto op = MeasureOp<double>::luma(1, 1);
    Rng rng(77);
    for (int t = 0; t < 100; ++t) {
        const int r = static_cast<int>(rng.uniform() * 256.0) & 255;
        const int g = static_cast<int>(rng.uniform() * 256.0) & 255;
        const int b = static_cast<int>(rng.uniform() * 256.0) & 255;
        Tensor<double> px(Shape{3, 1, 1}, {r / 255.0, g / 255.0, b / 255.0});
        const double got = op.apply(px)[0] * 255.0;
        CHECK(std::abs(got - oracle::luma8(r, g, b)) <= 1.0);
    }
}

TEST_CASE("luma is a fixed point on gray images") {
    auto op = MeasureOp<double>::luma(3, 3);
    Rng rng(78);
    Tensor<double> gray = Tensor<double>::zeros({3, 3, 3});
    for (std::int64_t p = 0; p < 9; ++p) {
        const double v = rng.uniform();
        for (std::int64_t c = 0; c < 3; ++c) gray[c * 9 + p] = v;
    }
    Tensor<double> y = op.apply(gray);
    for (std::int64_t p = 0; p < 9; ++p)
        CHECK(y[p] == doctest::Approx(gray[p]).epsilon(1e-12));
}

TEST_CASE("all operators are linear maps") {
    Rng rng(80);
    std::vector<MeasureOp<double>> ops;
    ops.push_back(MeasureOp<double>::gaussian(5, 27, 3));
    ops.push_back(MeasureOp<double>::luma(3, 3));
    ops.push_back(MeasureOp<double>::identity(27));

    for (const auto& op : ops) {
        Tensor<double> x = random_tensor({3, 3, 3}, rng);
        Tensor<double> y = random_tensor({3, 3, 3}, rng);
        const double a = 1.7, b = -0.4;

        Tensor<double> combo = Tensor<double>::zeros({3, 3, 3});
        for (std::int64_t i = 0; i < 27; ++i) combo[i] = a * x[i] + b * y[i];

        Tensor<double> lhs = op.apply(combo);
        Tensor<double> fx = op.apply(x);
        Tensor<double> fy = op.apply(y);
        for (std::int64_t i = 0; i < lhs.numel(); ++i)
            CHECK(std::abs(lhs[i] - (a * fx[i] + b * fy[i])) <= 1e-9);
    }
}

TEST_CASE("add_noise") {
    Rng rng(81);
    Tensor<double> y = random_tensor({40}, rng);

    auto clean = add_noise(y, 0.0, 5);
    CHECK(bit_equal(clean.values, y));

    auto n1 = add_noise(y, 0.1, 5);
    auto n2 = add_noise(y, 0.1, 5);
    CHECK(bit_equal(n1.values, n2.values));
    CHECK_FALSE(bit_equal(n1.values, add_noise(y, 0.1, 6).values));

    CHECK_THROWS_AS(add_noise(y, -0.1, 5), ConfigError);
}

TEST_CASE("add_noise matches the requested scale") {
    Tensor<double> zero = Tensor<double>::zeros({100000});
    auto noisy = add_noise(zero, 0.05, 909);
    const double sd = oracle::sample_std(std::vector<double>(
        noisy.values.data(), noisy.values.data() + noisy.values.numel()));
    CHECK(std::abs(sd - 0.05) < 0.002);
    double mean = 0;
    for (std::int64_t i = 0; i < noisy.values.numel(); ++i) mean += noisy.values[i];
    mean /= static_cast<double>(noisy.values.numel());
    CHECK(std::abs(mean) < 0.002);
}

TEST_CASE("measurement objective differentiates through each operator") {
    Rng rng(83);
    std::vector<MeasureOp<double>> ops;
    ops.push_back(MeasureOp<double>::gaussian(4, 12, 21));
    ops.push_back(MeasureOp<double>::luma(2, 2));
    ops.push_back(MeasureOp<double>::identity(12));

    for (const auto& op : ops) {
        Tensor<double> img = random_tensor({3, 2, 2}, rng, 0.5);
        Tensor<double> target = random_tensor({3, 2, 2}, rng, 0.4);
        Tensor<double> y = op.apply(unit_range(target));

        auto g = leaf(img, true);
        backward(measurement_loss_node(op, g, y));

        for (std::int64_t i = 0; i < img.numel(); ++i) {
            const double fd = oracle::fd_coord(img, i, 1e-6, [&]() {
                return scalar_value(measurement_loss_node(op, leaf(img, false), y));
            });
            CHECK(oracle::rel_err(g->grad_buf()[static_cast<std::size_t>(i)], fd) < 1e-5);
        }
    }
}

TEST_CASE("measurement objective rejects mismatched targets") {
    Rng rng(84);
    auto op = MeasureOp<double>::gaussian(4, 12, 21);
    Tensor<double> img = random_tensor({3, 2, 2}, rng);
    Tensor<double> y = Tensor<double>::zeros({5});
    CHECK_THROWS_AS(measurement_loss_node(op, leaf(img, false), y), ShapeError);
}
