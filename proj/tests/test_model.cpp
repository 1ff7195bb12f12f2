#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "gradcheck.hpp"
#include "hyperchange/model.hpp"
#include "hyperchange/nn.hpp"

using namespace hyperchange;
using hctest::grad_check;
using hctest::random_tensor;

namespace {

ModelConfig small_config(bool attention = true) {
    ModelConfig cfg;
    cfg.input_channels = 4;
    cfg.feature_width = 4;
    cfg.ca_reduction = 4;
    cfg.attention = attention;
    return cfg;
}

HyperNetParams make_params(bool attention = true, std::uint64_t seed = 5) {
    std::mt19937_64 rng(seed);
    return HyperNetParams::init(small_config(attention), rng);
}

}  // namespace

TEST_CASE("conv2d matches a hand-computed 3x3 case") {
    // single channel, kernel = identity at center plus right neighbor
    Tensor input = Tensor::from_values({1, 3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    ConvParams p;
    std::vector<double> k(9, 0.0);
    k[4] = 1.0;  // center
    k[5] = 1.0;  // (dy=0, dx=+1)
    p.kernel = Tensor::from_values({3, 3, 1, 1}, k);
    p.bias = Tensor::from_values({1, 1, 1, 1}, {0.5});
    Tensor out = conv2d(input, p);
    CHECK(out.shape() == Shape{1, 3, 3, 1});
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(1 + 2 + 0.5));
    CHECK(out.at(0, 1, 1, 0) == doctest::Approx(5 + 6 + 0.5));
    CHECK(out.at(0, 2, 2, 0) == doctest::Approx(9 + 0 + 0.5));  // zero pad
}

TEST_CASE("conv2d gradients") {
    std::mt19937_64 rng(31);
    Tensor input = random_tensor(rng, {1, 4, 4, 2});
    ConvParams p;
    p.kernel = random_tensor(rng, {3, 3, 2, 3});
    p.bias = random_tensor(rng, {1, 1, 1, 3});
    Tensor w = random_tensor(rng, {1, 4, 4, 3});
    std::vector<Tensor> leaves{input, p.kernel, p.bias};
    auto res = grad_check([&] { return sum(mul(conv2d(input, p), w)); }, leaves);
    CHECK_MESSAGE(res.ok, res.where, " rel=", res.worst_rel);
}

TEST_CASE("batch_norm2d normalizes in training mode") {
    std::mt19937_64 rng(37);
    Tensor input = random_tensor(rng, {1, 5, 5, 3}, -4.0, 4.0);
    BnParams bn = BnParams::create(3);
    Tensor out = batch_norm2d(input, bn);
    for (int c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) mean += out.at(0, y, x, c);
        mean /= 25.0;
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) {
                double d = out.at(0, y, x, c) - mean;
                var += d * d;
            }
        var /= 25.0;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
    }
    // running stats moved toward batch stats
    CHECK(bn.running_mean[0] != 0.0);
    CHECK(bn.running_var[0] != 1.0);
}

TEST_CASE("batch_norm2d inference uses running statistics") {
    BnParams bn = BnParams::create(1);
    bn.running_mean = {2.0};
    bn.running_var = {4.0};
    bn.mode = BnMode::Inference;
    Tensor input = Tensor::from_values({1, 1, 2, 1}, {2.0, 6.0});
    Tensor out = batch_norm2d(input, bn);
    CHECK(out.values()[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(out.values()[1] == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-9));
}

TEST_CASE("batch_norm2d gradients through batch statistics") {
    std::mt19937_64 rng(41);
    Tensor input = random_tensor(rng, {1, 4, 4, 2});
    BnParams bn = BnParams::create(2);
    Tensor w = random_tensor(rng, {1, 4, 4, 2});
    std::vector<Tensor> leaves{input, bn.gamma, bn.beta};
    auto res = grad_check([&] { return sum(mul(batch_norm2d(input, bn), w)); }, leaves);
    CHECK_MESSAGE(res.ok, res.where, " rel=", res.worst_rel);
}

TEST_CASE("reduce_pool shapes and max routing") {
    Tensor input = Tensor::from_values({1, 2, 2, 2},
                                       {1, 5, 2, 6, 3, 7, 4, 8}, true);
    Tensor avg_sp = reduce_pool(input, PoolAxis::Spatial, PoolKind::Avg);
    CHECK(avg_sp.shape() == Shape{1, 1, 1, 2});
    CHECK(avg_sp.values() == std::vector<double>{2.5, 6.5});

    Tensor max_ch = reduce_pool(input, PoolAxis::Channel, PoolKind::Max);
    CHECK(max_ch.shape() == Shape{1, 2, 2, 1});
    CHECK(max_ch.values() == std::vector<double>{5, 6, 7, 8});
    backward(sum(max_ch));
    CHECK(input.grad() == std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1});
}

TEST_CASE("max pool ties go to the first occurrence") {
    Tensor input = Tensor::from_values({1, 1, 3, 1}, {2, 2, 1}, true);
    Tensor m = reduce_pool(input, PoolAxis::Spatial, PoolKind::Max);
    backward(sum(m));
    CHECK(input.grad() == std::vector<double>{1, 0, 0});
}

TEST_CASE("pooling gradients") {
    std::mt19937_64 rng(43);
    Tensor input = random_tensor(rng, {1, 3, 4, 3});
    std::vector<Tensor> leaves{input};
    for (auto axis : {PoolAxis::Spatial, PoolAxis::Channel})
        for (auto kind : {PoolKind::Avg, PoolKind::Max}) {
            auto res = grad_check([&] { return sum(reduce_pool(input, axis, kind)); },
                                  leaves);
            CHECK_MESSAGE(res.ok, "axis=", static_cast<int>(axis),
                          " kind=", static_cast<int>(kind), " rel=", res.worst_rel);
        }
}

TEST_CASE("sgd momentum follows the classical update") {
    Tensor w = Tensor::from_values({1, 1, 1, 1}, {1.0}, true);
    w.grad()[0] = 2.0;
    std::vector<Tensor> params{w};
    SgdMomentum opt;
    opt.momentum = 0.9;
    opt.weight_decay = 0.1;
    // v = 0.9*0 + (2 + 0.1*1) = 2.1; w = 1 - 0.5*2.1 = -0.05
    opt.step(params, 0.5);
    CHECK(w.values()[0] == doctest::Approx(-0.05).epsilon(1e-12));
    // second step with zero grad: v = 0.9*2.1 + (0 + 0.1*(-0.05)) = 1.885
    w.zero_grad();
    opt.step(params, 0.5);
    CHECK(w.values()[0] == doctest::Approx(-0.05 - 0.5 * 1.885).epsilon(1e-12));
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.05) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(cosine_lr(50, 100, 0.05) == doctest::Approx(0.025).epsilon(1e-12));
    CHECK(cosine_lr(100, 100, 0.05) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(cosine_lr(-1, 100, 0.05), ContractViolation);
    CHECK_THROWS_AS(cosine_lr(101, 100, 0.05), ContractViolation);
}

TEST_CASE("he init statistics") {
    std::mt19937_64 rng(47);
    Tensor t = he_normal_init(rng, {3, 3, 32, 32}, 3 * 3 * 32);
    double mean = 0, var = 0;
    for (double v : t.values()) mean += v;
    mean /= t.numel();
    for (double v : t.values()) var += (v - mean) * (v - mean);
    var /= t.numel();
    double expected = 2.0 / (3 * 3 * 32);
    CHECK(std::fabs(mean) < 0.005);
    CHECK(var == doctest::Approx(expected).epsilon(0.15));
}

TEST_CASE("attention gates stay in (0,1) and shapes are right") {
    std::mt19937_64 rng(53);
    HyperNetParams params = make_params();
    Tensor x = random_tensor(rng, {1, 5, 5, 4});
    Tensor ca = channel_attention(x, *params.rsab[0].ca);
    CHECK(ca.shape() == Shape{1, 1, 1, 4});
    for (double v : ca.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    Tensor sa = spatial_attention(x, *params.rsab[0].sa);
    CHECK(sa.shape() == Shape{1, 5, 5, 1});
    for (double v : sa.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("encoder and heads produce the documented shapes") {
    std::mt19937_64 rng(59);
    HyperNetParams params = make_params();
    Tensor x = random_tensor(rng, {1, 6, 6, 4});
    Tensor f = encoder_forward(x, params);
    CHECK(f.shape() == Shape{1, 6, 6, 8});  // 2n with n = 4
    Tensor z = projector_forward(f, params);
    CHECK(z.shape() == Shape{1, 6, 6, 8});
    Tensor p = predictor_forward(z, params);
    CHECK(p.shape() == Shape{1, 6, 6, 8});
}

TEST_CASE("ablation base omits attention parameters") {
    HyperNetParams full = make_params(true);
    HyperNetParams base = make_params(false);
    CHECK(full.rsab[0].ca.has_value());
    CHECK(full.rsab[0].sa.has_value());
    CHECK_FALSE(base.rsab[0].ca.has_value());
    CHECK_FALSE(base.rsab[0].sa.has_value());
    CHECK_FALSE(base.rcab[1].ca.has_value());
    CHECK(base.parameters().size() < full.parameters().size());

    std::mt19937_64 rng(61);
    Tensor x = random_tensor(rng, {1, 4, 4, 4});
    Tensor f = encoder_forward(x, base);
    CHECK(f.shape() == Shape{1, 4, 4, 8});
}

TEST_CASE("only block 1 has a shortcut projection") {
    HyperNetParams params = make_params();
    CHECK(params.rsab[0].shortcut.has_value());
    CHECK_FALSE(params.rsab[1].shortcut.has_value());
    CHECK_FALSE(params.rsab[2].shortcut.has_value());
}

TEST_CASE("named parameters are unique and deterministic") {
    HyperNetParams a = make_params(true, 9);
    HyperNetParams b = make_params(true, 9);
    auto na = a.named_parameters();
    auto nb = b.named_parameters();
    REQUIRE(na.size() == nb.size());
    for (size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].first == nb[i].first);
        CHECK(na[i].second.values() == nb[i].second.values());
        for (size_t j = i + 1; j < na.size(); ++j)
            CHECK(na[i].first != na[j].first);
    }
}

TEST_CASE("checkpoint round trip preserves everything") {
    std::mt19937_64 rng(67);
    HyperNetParams params = make_params();
    // make running stats non-trivial first
    Tensor x = random_tensor(rng, {1, 5, 5, 4});
    (void)encoder_forward(x, params);

    std::string path = "model_roundtrip.hcube";
    params.save_checkpoint(path);
    HyperNetParams loaded = HyperNetParams::load_checkpoint(path);
    std::remove(path.c_str());

    CHECK(loaded.cfg.input_channels == params.cfg.input_channels);
    CHECK(loaded.cfg.feature_width == params.cfg.feature_width);
    CHECK(loaded.cfg.attention == params.cfg.attention);
    auto pa = params.named_parameters();
    auto pb = loaded.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second.values() == pb[i].second.values());
    }
    CHECK(loaded.rsab[0].main.bn.running_mean == params.rsab[0].main.bn.running_mean);
    CHECK(loaded.rsab[0].main.bn.running_var == params.rsab[0].main.bn.running_var);

    // inference outputs agree bit for bit
    params.set_mode(BnMode::Inference);
    loaded.set_mode(BnMode::Inference);
    Tensor y = random_tensor(rng, {1, 4, 4, 4});
    CHECK(encoder_forward(y, params).values() == encoder_forward(y, loaded).values());
}

TEST_CASE("siamese forward shares weights across views") {
    std::mt19937_64 rng(71);
    HyperNetParams params = make_params();
    Tensor x = random_tensor(rng, {1, 4, 4, 4});
    SiameseOutputs out = hypernet_forward(x, x, params);
    CHECK(out.f1.values() == out.f2.values());
    CHECK(out.z1.values() == out.z2.values());
    CHECK(out.p1.values() == out.p2.values());
}

TEST_CASE("composite block gradients") {
    std::mt19937_64 rng(73);
    ModelConfig cfg = small_config();
    HyperNetParams params = HyperNetParams::init(cfg, rng);
    Tensor x = random_tensor(rng, {1, 4, 4, 4});
    x.set_requires_grad(true);
    std::vector<Tensor> leaves{x};
    auto res = grad_check([&] { return sum(rsab_forward(x, 1, params)); }, leaves, 1e-6, 2e-5);
    CHECK_MESSAGE(res.ok, "rsab: ", res.where, " rel=", res.worst_rel);

    Tensor s = random_tensor(rng, {1, 4, 4, 4});
    s.set_requires_grad(true);
    std::vector<Tensor> sleaves{s};
    auto res2 = grad_check([&] { return sum(rcab_forward(s, 1, params)); }, sleaves, 1e-6, 2e-5);
    CHECK_MESSAGE(res2.ok, "rcab: ", res2.where, " rel=", res2.worst_rel);
}
