#include <doctest.h>

#include <cmath>
#include <vector>

#include "lowshot/decoder.hpp"
#include "oracles.hpp"

using namespace lowshot;

namespace {

Tensor<float> random_latent(std::int64_t k, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> z = Tensor<float>::zeros({k});
    for (std::int64_t i = 0; i < k; ++i) z[i] = static_cast<float>(rng.normal());
    return z;
}

const DecoderDesc kTiny{8, 16, 3, 16, 1e-5};

}  // namespace

TEST_CASE("layer table reproduces the canonical 64x64 generator") {
    DecoderDesc d{};  // defaults: k=128, 64x64x3, base 512
    auto layers = layer_table(d);
    REQUIRE(layers.size() == 5);

    const std::int64_t cins[] = {128, 512, 256, 128, 64};
    const std::int64_t couts[] = {512, 256, 128, 64, 3};
    for (int i = 0; i < 5; ++i) {
        CHECK(layers[i].cin == cins[i]);
        CHECK(layers[i].cout == couts[i]);
        CHECK(layers[i].stride == (i == 0 ? 1 : 2));
        CHECK(layers[i].padding == (i == 0 ? 0 : 1));
        CHECK(layers[i].has_bn == (i != 4));
    }
}

TEST_CASE("parameter count matches the closed-form layer sum") {
    // independently summed: 4x4 kernels cin*cout*16, plus gamma and beta per
    // batch-normed layer
    const std::int64_t want = (128 * 512 + 512 * 256 + 256 * 128 + 128 * 64 + 64 * 3) * 16 +
                              2 * (512 + 256 + 128 + 64);
    DecoderDesc d{};
    CHECK(param_count(d) == want);

    Rng rng(1);
    // count over the actual initialized tensors at a smaller scale
    const std::int64_t tiny_want = (8 * 16 + 16 * 8 + 8 * 3) * 16 + 2 * (16 + 8);
    CHECK(param_count(kTiny) == tiny_want);
    auto ps = init_params<float>(kTiny, rng);
    CHECK(ps.total_numel() == tiny_want);
}

TEST_CASE("descriptor validation") {
    DecoderDesc d = kTiny;
    d.resolution = 12;  // not a power of two
    CHECK_THROWS_AS(validate(d), ConfigError);
    d.resolution = 8;  // below minimum
    CHECK_THROWS_AS(validate(d), ConfigError);
    d = kTiny;
    d.base_channels = 7;  // not divisible by 2^(stages-1)
    CHECK_THROWS_AS(validate(d), ConfigError);
    d = kTiny;
    d.latent_dim = 0;
    CHECK_THROWS_AS(validate(d), ConfigError);
    d = kTiny;
    d.bn_eps = 0;
    CHECK_THROWS_AS(validate(d), ConfigError);
    DecoderDesc full{};
    full.base_channels = 100;  // 100 % 8 != 0 at 64x64
    CHECK_THROWS_AS(validate(full), ConfigError);
}

TEST_CASE("init is deterministic, beta zero, moments near spec") {
    Rng a(99), b(99);
    auto pa = init_params<float>(kTiny, a);
    auto pb = init_params<float>(kTiny, b);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa.name(i) == pb.name(i));
        CHECK(bit_equal(pa.value(i), pb.value(i)));
    }

    CHECK(pa.contains("conv0.weight"));
    CHECK(pa.contains("bn0.gamma"));
    CHECK(pa.contains("bn0.beta"));
    CHECK(pa.contains("conv2.weight"));
    CHECK_FALSE(pa.contains("bn2.gamma"));  // final layer has no norm

    for (std::int64_t i = 0; i < pa.at("bn0.beta").numel(); ++i)
        CHECK(pa.at("bn0.beta")[i] == 0.0f);

    // moments over a large weight tensor at the default size
    Rng c(7);
    DecoderDesc big{};
    auto pc = init_params<float>(big, c);
    const auto& w = pc.at("conv1.weight");  // 512*256*16 values
    std::vector<double> vals(static_cast<std::size_t>(w.numel()));
    for (std::int64_t i = 0; i < w.numel(); ++i) vals[static_cast<std::size_t>(i)] = w[i];
    CHECK(std::abs(oracle::mean(vals)) < 1e-4);
    CHECK(std::sqrt(oracle::variance(vals)) == doctest::Approx(0.02).epsilon(0.02));
    const auto& g = pc.at("bn0.gamma");
    std::vector<double> gvals(static_cast<std::size_t>(g.numel()));
    for (std::int64_t i = 0; i < g.numel(); ++i) gvals[static_cast<std::size_t>(i)] = g[i];
    CHECK(oracle::mean(gvals) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("forward shape, range, and determinism") {
    Rng rng(5);
    auto params = init_params<float>(kTiny, rng);
    auto z = random_latent(kTiny.latent_dim, 21);

    auto x = decoder_eval(kTiny, params, z);
    REQUIRE(x.shape == Shape{3, 16, 16});
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        CHECK(x[i] > -1.0f);
        CHECK(x[i] < 1.0f);
    }
    CHECK(bit_equal(x, decoder_eval(kTiny, params, z)));
}

TEST_CASE("latent dimension mismatch rejected") {
    Rng rng(5);
    auto params = init_params<float>(kTiny, rng);
    CHECK_THROWS_AS(decoder_eval(kTiny, params, Tensor<float>::zeros({4})), ShapeError);
}

TEST_CASE("leaf count is checked") {
    Rng rng(5);
    auto params = init_params<float>(kTiny, rng);
    auto leaves = make_param_leaves(params, false);
    auto z = leaf(random_latent(kTiny.latent_dim, 3), false);

    auto fewer = std::span<const NodePtr<float>>(leaves.data(), leaves.size() - 1);
    CHECK_THROWS_AS(decoder_forward<float>(kTiny, fewer, z), ConfigError);

    auto extra = leaves;
    extra.push_back(leaf(Tensor<float>::zeros({1}), false));
    CHECK_THROWS_AS(decoder_forward<float>(kTiny, extra, z), ConfigError);
}

TEST_CASE("set evaluation has no cross-image state") {
    Rng rng(5);
    auto params = init_params<float>(kTiny, rng);
    auto z1 = random_latent(kTiny.latent_dim, 100);
    auto z2 = random_latent(kTiny.latent_dim, 200);

    auto alone = decoder_eval(kTiny, params, z1);
    (void)decoder_eval(kTiny, params, z2);  // interleave another image
    auto after = decoder_eval(kTiny, params, z1);
    CHECK(bit_equal(alone, after));
}

TEST_CASE("small latent perturbations stay small in the output") {
    Rng rng(5);
    auto params = init_params<float>(kTiny, rng);
    auto z = random_latent(kTiny.latent_dim, 8);
    auto base = decoder_eval(kTiny, params, z);
    auto z2 = z.clone();
    z2[0] += 1e-6f;
    auto moved = decoder_eval(kTiny, params, z2);
    float linf = 0;
    for (std::int64_t i = 0; i < base.numel(); ++i)
        linf = std::max(linf, std::abs(base[i] - moved[i]));
    CHECK(linf <= 1e-2f);
}

TEST_CASE("gradients flow to every parameter and the latent") {
    Rng rng(5);
    auto params = init_params<double>(kTiny, rng);
    auto leaves = make_param_leaves(params, true);
    auto zt = random_latent(kTiny.latent_dim, 77).cast<double>();
    auto zl = leaf(zt, true);
    auto out = decoder_forward<double>(kTiny, leaves, zl);
    backward(sum(square(out)));
    CHECK_FALSE(zl->grad.empty());
    bool any_nonzero = false;
    for (double g : zl->grad_buf()) any_nonzero |= g != 0.0;
    CHECK(any_nonzero);
    for (const auto& l : leaves) CHECK_FALSE(l->grad.empty());
}
