#include <doctest.h>

#include <cmath>
#include <cstring>

#include "lowshot/params.hpp"
#include "lowshot/rng.hpp"
#include "lowshot/tensor.hpp"
#include "oracles.hpp"

using namespace lowshot;

TEST_CASE("tensor construction and shape checks") {
    Tensor<float> t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t[4] == 5.0f);

    CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}, {}), ShapeError);
    CHECK_THROWS_AS(Tensor<float>(Shape{-1}, {1.0f}), ShapeError);

    auto z = Tensor<double>::zeros({4});
    for (std::int64_t i = 0; i < 4; ++i) CHECK(z[i] == 0.0);
    auto f = Tensor<double>::full({3}, 2.5);
    CHECK(f[2] == 2.5);
}

TEST_CASE("tensor copies alias, clone does not") {
    Tensor<float> a(Shape{3}, {1, 2, 3});
    Tensor<float> b = a;       // shares storage
    Tensor<float> c = a.clone();
    b[0] = 9;
    CHECK(a[0] == 9.0f);
    CHECK(c[0] == 1.0f);
}

TEST_CASE("reshaped shares storage and checks numel") {
    Tensor<float> a(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = a.reshaped({3, 2});
    r[5] = 42;
    CHECK(a[5] == 42.0f);
    CHECK_THROWS_AS(a.reshaped({4}), ShapeError);
}

TEST_CASE("all_finite flags NaN and Inf") {
    Tensor<double> a(Shape{3}, {1, 2, 3});
    CHECK(a.all_finite());
    a[1] = std::nan("");
    CHECK_FALSE(a.all_finite());
    a[1] = 2;
    a[2] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(a.all_finite());
}

TEST_CASE("cast between precisions") {
    Tensor<float> a(Shape{2}, {1.5f, -2.25f});
    auto d = a.cast<double>();
    CHECK(d[0] == 1.5);
    CHECK(d[1] == -2.25);
    auto back = d.cast<float>();
    CHECK(bit_equal(a, back));
}

TEST_CASE("bit_equal is exact bit comparison") {
    Tensor<float> a(Shape{1}, {0.0f});
    Tensor<float> b(Shape{1}, {-0.0f});
    CHECK(a[0] == b[0]);      // numeric equality
    CHECK_FALSE(bit_equal(a, b));  // but different bits
    CHECK_FALSE(bit_equal(a, Tensor<float>(Shape{1, 1}, {0.0f})));
}

TEST_CASE("fnv1a64 matches published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("derive_seed is deterministic and tag-sensitive") {
    CHECK(derive_seed(42, "x") == derive_seed(42, "x"));
    CHECK(derive_seed(42, "x") != derive_seed(42, "y"));
    CHECK(derive_seed(42, "x") != derive_seed(43, "x"));
    CHECK(derive_seed(0, "") != derive_seed(1, ""));
}

TEST_CASE("rng streams are reproducible") {
    Rng a(123), b(123), c(124);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    bool differs = false;
    Rng a2(123);
    for (int i = 0; i < 100; ++i) differs |= a2.next_u64() != c.next_u64();
    CHECK(differs);
}

TEST_CASE("rng uniform range and moments") {
    Rng rng(7);
    const int n = 100000;
    std::vector<double> xs(n);
    for (auto& x : xs) {
        x = rng.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    // mean 1/2, var 1/12; 5 sigma bounds
    CHECK(std::abs(oracle::mean(xs) - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / n));

    Rng r2(7);
    CHECK(r2.uniform(2.0, 4.0) >= 2.0);
    CHECK(r2.uniform(2.0, 4.0) < 4.0);
}

TEST_CASE("rng normal moments") {
    Rng rng(11);
    const int n = 200000;
    std::vector<double> xs(n);
    for (auto& x : xs) x = rng.normal();
    CHECK(std::abs(oracle::mean(xs)) < 5.0 / std::sqrt(double(n)));
    // var of the sample variance of a normal is ~2/n
    CHECK(std::abs(oracle::variance(xs) - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("param set keeps order and rejects duplicates") {
    ParamSet<float> ps;
    ps.add("w0", Tensor<float>::zeros({2, 2}));
    ps.add("g0", Tensor<float>::full({2}, 1.0f));
    CHECK(ps.size() == 2);
    CHECK(ps.name(0) == "w0");
    CHECK(ps.name(1) == "g0");
    CHECK(ps.contains("g0"));
    CHECK_FALSE(ps.contains("nope"));
    CHECK(ps.total_numel() == 6);
    CHECK(ps.at("g0")[0] == 1.0f);
    CHECK_THROWS_AS(ps.add("w0", Tensor<float>::zeros({1})), ConfigError);
    CHECK_THROWS_AS(ps.at("nope"), ConfigError);

    auto cl = ps.clone();
    cl.at("w0")[0] = 5;
    CHECK(ps.at("w0")[0] == 0.0f);

    auto pd = ps.cast<double>();
    CHECK(pd.name(0) == "w0");
    CHECK(pd.at("g0")[1] == 1.0);
}

TEST_CASE("error taxonomy prefixes") {
    CHECK(std::string(ShapeError("x").what()) == "shape: x");
    CHECK(std::string(ConfigError("x").what()) == "config: x");
    CHECK(std::string(NumericError("x").what()) == "numeric: x");
    CHECK(std::string(IoError("x").what()) == "io: x");
    CHECK(std::string(IncompatibleError("x").what()) == "incompatible: x");
    try {
        throw NumericError("boom");
    } catch (const Error& e) {
        CHECK(error_detail(e) == "boom");
    }
}
