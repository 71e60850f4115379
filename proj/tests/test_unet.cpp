// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "wavediff/signal.hpp"
#include "wavediff/unet.hpp"

using namespace wavediff;
using nn::ParamRegistry;
using nn::Tensor;
using unet::Conditioning;
using unet::UNetConfig;

namespace {

// sampled central-difference check (double precision)
double fd_sampled(const std::function<Tensor<double>()>& loss_fn,
                  const ParamRegistry<double>& reg, int samples, uint64_t seed,
                  double h = 1e-4) {
    for (const auto& [_, p] : reg.items()) p.node()->grad.assign(p.data().size(), 0.0);
    auto loss = loss_fn();
    nn::backward(loss);

    Rng rng(seed);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const auto& [name, p] =
            reg.items()[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(reg.size()) - 1))];
        auto& value = p.node()->value;
        const auto i = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(value.size()) - 1));
        const double analytic = p.node()->grad.empty() ? 0.0 : p.node()->grad[i];

        const double keep = value[i];
        value[i] = keep + h;
        const double up = loss_fn().item();
        value[i] = keep - h;
        const double down = loss_fn().item();
        value[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic - fd) / (std::abs(analytic) + 1e-8));
    }
    return worst;
}

UNetConfig small_config() {
    UNetConfig cfg;
    cfg.in_channels = 2;
    cfg.channels = {4, 6};
    cfg.factors = {1, 2};
    cfg.items = {1, 1};
    cfg.attentions = {0, 1};
    cfg.cross_attentions = {0, 0};
    cfg.attention_features = 3;
    cfg.attention_heads = 2;
    cfg.modulation_features = 4;
    cfg.training_length = 16;
    return cfg;
}

template <typename T>
Conditioning<T> features_only(int64_t batch, int64_t dim, uint64_t seed) {
    Rng rng(seed);
    Conditioning<T> cond;
    cond.features = Tensor<T>::randn({batch, dim}, rng);
    return cond;
}

}  // namespace

TEST_CASE("forward preserves shape over random valid configs") {
    Rng meta(123);
    for (int trial = 0; trial < 8; ++trial) {
        UNetConfig cfg;
        cfg.in_channels = meta.uniform_int(1, 3);
        const int levels = static_cast<int>(meta.uniform_int(1, 3));
        int64_t total = 1;
        for (int i = 0; i < levels; ++i) {
            cfg.channels.push_back(meta.uniform_int(2, 6));
            const int64_t f = meta.uniform_int(1, 2) == 1 ? 1 : 2;
            cfg.factors.push_back(f);
            total *= f;
            cfg.items.push_back(meta.uniform_int(0, 2));
            cfg.attentions.push_back(meta.uniform_int(0, 1) ? 1 : 0);
            cfg.cross_attentions.push_back(0);
        }
        cfg.attention_features = 2;
        cfg.attention_heads = 2;
        cfg.modulation_features = 4;
        cfg.training_length = total * 8;

        ParamRegistry<float> reg;
        Rng rng(500 + trial);
        auto net = unet::build_unet(cfg, reg, rng);

        Rng data(900 + trial);
        auto x = Tensor<float>::randn({2, cfg.in_channels, cfg.training_length}, data);
        auto cond = features_only<float>(2, cfg.modulation_features, 40 + trial);
        const auto y = net.forward(x, cond);
        CHECK(y.shape() == x.shape());
    }
}

TEST_CASE("construction and forward are deterministic in the seed") {
    const auto cfg = small_config();
    ParamRegistry<float> reg1, reg2;
    Rng r1(42), r2(42);
    auto n1 = unet::build_unet(cfg, reg1, r1);
    auto n2 = unet::build_unet(cfg, reg2, r2);

    REQUIRE(reg1.size() == reg2.size());
    for (size_t i = 0; i < reg1.size(); ++i) {
        CHECK(reg1.items()[i].first == reg2.items()[i].first);
        CHECK(reg1.items()[i].second.data() == reg2.items()[i].second.data());
    }

    Rng data(7);
    auto x = Tensor<float>::randn({1, cfg.in_channels, cfg.training_length}, data);
    auto cond = features_only<float>(1, cfg.modulation_features, 8);
    const auto y1 = n1.forward(x, cond);
    const auto y2 = n2.forward(x, cond);
    CHECK(y1.data() == y2.data());
}

TEST_CASE("gradient check: resnet item") {
    ParamRegistry<double> reg;
    Rng rng(1);
    unet::ResnetItem<double> item(reg, "res", 6, rng);
    Rng data(2);
    auto x = Tensor<double>::randn({2, 6, 8}, data);
    auto target = Tensor<double>::randn({2, 6, 8}, data);
    Conditioning<double> cond;
    auto loss = [&] { return nn::mse(item.forward(x, cond, 0), target); };
    CHECK(fd_sampled(loss, reg, 60, 11) < 1e-3);
}

TEST_CASE("gradient check: modulation item") {
    ParamRegistry<double> reg;
    Rng rng(3);
    unet::ModulationItem<double> item(reg, "mod", 5, 6, rng);
    // zero-init last layer has zero analytic gradient only at exactly zero
    // input; nudge weights off zero so finite differences see curvature
    Rng nudge(4);
    for (auto& v : item.l2.w.data()) v = nudge.normal() * 0.1;
    Rng data(5);
    auto x = Tensor<double>::randn({2, 5, 7}, data);
    auto target = Tensor<double>::randn({2, 5, 7}, data);
    auto cond = features_only<double>(2, 6, 6);
    auto loss = [&] { return nn::mse(item.forward(x, cond, 0), target); };
    CHECK(fd_sampled(loss, reg, 60, 12) < 1e-3);

    Conditioning<double> empty;
    CHECK_THROWS(item.forward(x, empty, 0));
}

TEST_CASE("gradient check: attention item") {
    ParamRegistry<double> reg;
    Rng rng(7);
    unet::AttentionItem<double> item(reg, "att", 6, 2, 3, rng);
    Rng nudge(8);
    for (auto& v : item.out.w.data()) v = nudge.normal() * 0.1;
    Rng data(9);
    auto x = Tensor<double>::randn({2, 6, 5}, data);
    auto target = Tensor<double>::randn({2, 6, 5}, data);
    Conditioning<double> cond;
    auto loss = [&] { return nn::mse(item.forward(x, cond, 0), target); };
    CHECK(fd_sampled(loss, reg, 60, 13) < 1e-3);
}

TEST_CASE("gradient check: cross-attention item") {
    ParamRegistry<double> reg;
    Rng rng(10);
    unet::CrossAttentionItem<double> item(reg, "xatt", 6, 4, 2, 3, rng);
    Rng nudge(11);
    for (auto& v : item.out.w.data()) v = nudge.normal() * 0.1;
    Rng data(12);
    auto x = Tensor<double>::randn({2, 6, 5}, data);
    auto target = Tensor<double>::randn({2, 6, 5}, data);
    Conditioning<double> cond;
    cond.embedding = Tensor<double>::randn({2, 3, 4}, data);
    auto loss = [&] { return nn::mse(item.forward(x, cond, 0), target); };
    CHECK(fd_sampled(loss, reg, 60, 14) < 1e-3);

    Conditioning<double> empty;
    CHECK_THROWS(item.forward(x, empty, 0));
}

TEST_CASE("gradient check: feed-forward item") {
    ParamRegistry<double> reg;
    Rng rng(15);
    unet::FeedForwardItem<double> item(reg, "ff", 5, rng);
    Rng data(16);
    auto x = Tensor<double>::randn({2, 5, 6}, data);
    auto target = Tensor<double>::randn({2, 5, 6}, data);
    Conditioning<double> cond;
    auto loss = [&] { return nn::mse(item.forward(x, cond, 0), target); };
    CHECK(fd_sampled(loss, reg, 60, 17) < 1e-3);
}

TEST_CASE("gradient check: inject item") {
    ParamRegistry<double> reg;
    Rng rng(18);
    unet::InjectItem<double> item(reg, "inj", 5, 3, rng);
    Rng nudge(19);
    for (auto& v : item.proj.w.data()) v = nudge.normal() * 0.1;
    Rng data(20);
    auto x = Tensor<double>::randn({2, 5, 6}, data);
    auto target = Tensor<double>::randn({2, 5, 6}, data);
    Conditioning<double> cond;
    cond.inject[0] = Tensor<double>::randn({2, 3, 6}, data);
    auto loss = [&] { return nn::mse(item.forward(x, cond, 0), target); };
    CHECK(fd_sampled(loss, reg, 60, 21) < 1e-3);

    Conditioning<double> empty;
    CHECK_THROWS(item.forward(x, empty, 0));
}

TEST_CASE("gradient check: composed two-level u-net (20 random parameters)") {
    auto cfg = small_config();
    ParamRegistry<double> reg;
    Rng rng(22);
    auto net = unet::build_unet(cfg, reg, rng);
    // move zero-initialized projections off zero so every path carries signal
    Rng nudge(23);
    for (const auto& [name, p] : reg.items()) {
        if (p.data().empty()) continue;
        bool all_zero = true;
        for (double v : p.data()) all_zero = all_zero && v == 0.0;
        if (all_zero) {
            for (auto& v : p.node()->value) v = nudge.normal() * 0.05;
        }
    }
    Rng data(24);
    auto x = Tensor<double>::randn({2, cfg.in_channels, cfg.training_length}, data);
    auto target = Tensor<double>::randn({2, cfg.in_channels, cfg.training_length}, data);
    auto cond = features_only<double>(2, cfg.modulation_features, 25);
    auto loss = [&] { return nn::mse(net.forward(x, cond), target); };
    CHECK(fd_sampled(loss, reg, 20, 26) < 1e-3);
}

TEST_CASE("modulation with zero features and zero-init MLP is the identity") {
    ParamRegistry<float> reg;
    Rng rng(30);
    unet::ModulationItem<float> item(reg, "mod", 4, 6, rng);
    Rng data(31);
    auto x = Tensor<float>::randn({2, 4, 8}, data);
    Conditioning<float> cond;
    cond.features = Tensor<float>::zeros({2, 6});
    const auto y = item.forward(x, cond, 0);
    for (size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("zero-injected channels with zero-init projection match the no-inject forward") {
    auto cfg = small_config();
    cfg.inject_channels = {3, 0};
    ParamRegistry<float> reg_a;
    Rng ra(33);
    auto net_a = unet::build_unet(cfg, reg_a, ra);

    auto cfg_b = cfg;
    cfg_b.inject_channels.clear();
    ParamRegistry<float> reg_b;
    Rng rb(34);
    auto net_b = unet::build_unet(cfg_b, reg_b, rb);

    // item names are type-indexed, so everything except the inject projection
    // aligns by name; copy A's weights into B
    for (const auto& [name, pb] : reg_b.items()) {
        auto pa = reg_a.find(name);
        pb.node()->value = pa.data();
    }

    Rng data(35);
    auto x = Tensor<float>::randn({2, cfg.in_channels, cfg.training_length}, data);
    auto cond_a = features_only<float>(2, cfg.modulation_features, 36);
    Conditioning<float> cond_b;
    cond_b.features = cond_a.features;
    cond_a.inject[0] = Tensor<float>::zeros({2, 3, cfg.training_length});

    const auto ya = net_a.forward(x, cond_a);
    const auto yb = net_b.forward(x, cond_b);
    for (size_t i = 0; i < ya.data().size(); ++i) CHECK(ya.data()[i] == yb.data()[i]);

    // missing inject channels must be reported
    Conditioning<float> missing;
    missing.features = cond_a.features;
    CHECK_THROWS(net_a.forward(x, missing));
}

TEST_CASE("a lone self-attention item is permutation-equivariant over positions") {
    ParamRegistry<float> reg;
    Rng rng(40);
    unet::AttentionItem<float> item(reg, "att", 4, 2, 3, rng);
    Rng nudge(41);
    for (auto& v : item.out.w.data()) v = nudge.normal() * 0.2;

    const int64_t L = 7;
    Rng data(42);
    auto x = Tensor<float>::randn({1, 4, L}, data);
    Conditioning<float> cond;
    const auto y = item.forward(x, cond, 0);

    const std::vector<int64_t> perm = {3, 0, 6, 1, 5, 2, 4};
    auto xp = Tensor<float>::zeros({1, 4, L});
    for (int64_t c = 0; c < 4; ++c) {
        for (int64_t l = 0; l < L; ++l) {
            xp.data()[c * L + l] = x.data()[c * L + perm[l]];
        }
    }
    const auto yp = item.forward(xp, cond, 0);
    for (int64_t c = 0; c < 4; ++c) {
        for (int64_t l = 0; l < L; ++l) {
            CHECK(yp.data()[c * L + l] ==
                  doctest::Approx(y.data()[c * L + perm[l]]).epsilon(1e-5));
        }
    }
}

TEST_CASE("time conditioning fourier features") {
    ParamRegistry<float> reg;
    Rng rng(50);
    unet::TimeConditioning<float> tc(reg, "time", 8, rng);

    auto t0 = Tensor<float>::from_data({2}, {0.0f, 0.0f});
    const auto f0 = tc.fourier(t0);
    CHECK(f0.shape() == nn::Shape{2, 8});
    for (int64_t b = 0; b < 2; ++b) {
        for (int64_t i = 0; i < 4; ++i) {
            CHECK(f0.data()[b * 8 + i] == 0.0f);      // sin half
            CHECK(f0.data()[b * 8 + 4 + i] == 1.0f);  // cos half
        }
    }

    // sin^2 + cos^2 = 1 per frequency
    auto t = Tensor<float>::from_data({3}, {0.17f, -1.3f, 42.0f});
    const auto f = tc.fourier(t);
    for (int64_t b = 0; b < 3; ++b) {
        for (int64_t i = 0; i < 4; ++i) {
            const float s = f.data()[b * 8 + i];
            const float c = f.data()[b * 8 + 4 + i];
            CHECK(s * s + c * c == doctest::Approx(1.0f).epsilon(1e-5));
        }
    }

    // distinct noise levels produce distinct pre-MLP features
    Rng pick(51);
    for (int i = 0; i < 100; ++i) {
        const float a = static_cast<float>(pick.uniform());
        const float b = static_cast<float>(pick.uniform());
        if (a == b) continue;
        auto ft = tc.fourier(Tensor<float>::from_data({2}, {a, b}));
        bool differs = false;
        for (int64_t j = 0; j < 8; ++j) {
            differs = differs || ft.data()[j] != ft.data()[8 + j];
        }
        CHECK(differs);
    }

    const auto feats = tc.forward(t);
    CHECK(feats.shape() == nn::Shape{3, 8});
}

TEST_CASE("classifier-free guidance algebra") {
    UNetConfig cfg;
    cfg.in_channels = 2;
    cfg.channels = {4};
    cfg.factors = {1};
    cfg.items = {1};
    cfg.attentions = {0};
    cfg.cross_attentions = {1};
    cfg.attention_features = 3;
    cfg.attention_heads = 2;
    cfg.modulation_features = 4;
    cfg.embedding_features = 5;
    cfg.training_length = 8;

    ParamRegistry<double> reg;
    Rng rng(60);
    auto net = unet::build_unet(cfg, reg, rng);
    unet::TextConditioner<double> text(reg, "text", 64, 6, 5, rng);
    Rng nudge(61);
    for (const auto& [name, p] : reg.items()) {
        bool all_zero = !p.data().empty();
        for (double v : p.data()) all_zero = all_zero && v == 0.0;
        if (all_zero) {
            for (auto& v : p.node()->value) v = nudge.normal() * 0.1;
        }
    }

    Rng data(62);
    auto x = Tensor<double>::randn({2, 2, 8}, data);
    auto cond = features_only<double>(2, 4, 63);
    cond.embedding = text.embed({"low tone", "high tone"});
    Conditioning<double> masked;
    masked.features = cond.features;
    masked.embedding = text.masked_batch(2);

    const auto y_m = net.forward(x, masked);
    const auto y_e = net.forward(x, cond);

    const auto at0 = unet::cfg_forward(net, x, cond, masked, 0.0);
    const auto at1 = unet::cfg_forward(net, x, cond, masked, 1.0);
    for (size_t i = 0; i < y_m.data().size(); ++i) {
        CHECK(at0.data()[i] == y_m.data()[i]);  // bit-exact short circuit
        CHECK(at1.data()[i] == y_e.data()[i]);
    }

    const auto at5 = unet::cfg_forward(net, x, cond, masked, 5.0);
    for (size_t i = 0; i < y_m.data().size(); ++i) {
        const double want = y_m.data()[i] + (y_e.data()[i] - y_m.data()[i]) * 5.0;
        CHECK(std::abs(at5.data()[i] - want) <= 1e-12);
    }

    Conditioning<double> no_embedding;
    no_embedding.features = cond.features;
    CHECK_THROWS(unet::cfg_forward(net, x, cond, no_embedding, 0.5));
}

TEST_CASE("toy text embedder determinism and padding") {
    ParamRegistry<float> reg;
    Rng rng(70);
    unet::TextConditioner<float> text(reg, "text", 128, 8, 6, rng);

    const auto a = text.embed({"sine 440", "sine 440"});
    for (int64_t j = 0; j < 8 * 6; ++j) {
        CHECK(a.data()[j] == a.data()[8 * 6 + j]);  // same text -> same rows
    }

    const auto empty = text.embed({""});
    const auto masked = text.masked_batch(1);
    CHECK(empty.data() == masked.data());

    const auto two = text.embed({"sine low", "sine high"});
    bool differs = false;
    for (int64_t j = 0; j < 8 * 6; ++j) {
        differs = differs || two.data()[j] != two.data()[8 * 6 + j];
    }
    CHECK(differs);
}

TEST_CASE("learned transform geometry and orthonormal round trip") {
    ParamRegistry<float> reg;
    Rng rng(80);
    unet::LearnedTransform<float> lt(reg, "lt", 2, 2, 16, 8, 8, rng);

    Rng data(81);
    auto x = Tensor<float>::randn({1, 2, 64}, data);
    const auto h = lt.encode(x);
    CHECK(h.shape() == nn::Shape{1, 16, 8});
    CHECK(lt.decode(h).shape() == nn::Shape{1, 2, 64});

    unet::init_learned_transform_orthonormal(lt, rng);
    const auto back = lt.decode(lt.encode(x));
    for (size_t i = 0; i < x.data().size(); ++i) {
        CHECK(std::abs(back.data()[i] - x.data()[i]) < 1e-5);
    }

    // overlapping variant: kernel 2*stride needs padding stride/2
    unet::LearnedTransform<float> overlap(reg, "lt2", 1, 1, 8, 16, 8, rng);
    auto x1 = Tensor<float>::randn({1, 1, 64}, data);
    CHECK(overlap.encode(x1).shape() == nn::Shape{1, 8, 8});
    CHECK(overlap.decode(overlap.encode(x1)).shape() == nn::Shape{1, 1, 64});

    CHECK_THROWS(unet::LearnedTransform<float>(reg, "bad", 1, 1, 8, 4, 8, rng));
}

TEST_CASE("patch_op matches the signal-module layout and round trips") {
    Rng data(90);
    auto x = Tensor<float>::randn({1, 2, 12}, data);
    const auto p = unet::patch_op(x, 3);
    CHECK(p.shape() == nn::Shape{1, 6, 4});

    signal::Waveform w(2, 12, 4000);
    for (size_t i = 0; i < w.data.size(); ++i) w.data[i] = x.data()[i];
    const auto ps = signal::patch(w, 3);
    for (size_t i = 0; i < ps.data.size(); ++i) {
        CHECK(p.data()[i] == doctest::Approx(ps.data[i]));
    }

    const auto back = unet::unpatch_op(p, 3);
    for (size_t i = 0; i < x.data().size(); ++i) CHECK(back.data()[i] == x.data()[i]);
    CHECK_THROWS(unet::patch_op(x, 5));
}

TEST_CASE("config validation: the first-attention context rule") {
    UNetConfig cfg;
    cfg.in_channels = 8;
    cfg.channels = {16, 16, 32, 32, 64, 64};
    cfg.factors = {1, 2, 2, 2, 2, 2};
    cfg.items = {2, 2, 2, 2, 4, 4};
    cfg.attentions = {0, 0, 0, 0, 1, 1};
    cfg.cross_attentions = {0, 0, 0, 0, 0, 0};
    cfg.attention_features = 8;
    cfg.attention_heads = 4;
    cfg.modulation_features = 16;
    cfg.training_length = 8192;  // 2^19 waveform / 2^6 transform stride

    // first attention level sees 2^10
    CHECK(unet::attention_context_at(cfg, 4) == 1024);
    CHECK_NOTHROW(unet::validate_config(cfg));

    auto bad = cfg;
    bad.attentions = {0, 1, 0, 0, 1, 1};  // context 8192 at level 1
    try {
        unet::validate_config(bad);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("level 1") != std::string::npos);
        CHECK(msg.find("8192") != std::string::npos);
    }

    auto indivisible = cfg;
    indivisible.training_length = 8192 + 4;
    CHECK_THROWS(unet::validate_config(indivisible));
}

TEST_CASE("six-level configuration: reproducible parameter count via an independent formula") {
    UNetConfig cfg;
    cfg.in_channels = 8;
    cfg.channels = {16, 16, 32, 32, 64, 64};
    cfg.factors = {1, 2, 2, 2, 2, 2};
    cfg.items = {2, 2, 2, 2, 4, 4};
    cfg.attentions = {0, 0, 0, 0, 1, 1};
    cfg.cross_attentions = {0, 0, 0, 0, 0, 0};
    cfg.attention_features = 8;
    cfg.attention_heads = 4;
    cfg.modulation_features = 16;
    cfg.training_length = 8192;

    ParamRegistry<float> reg;
    Rng rng(1234);
    auto net = unet::build_unet(cfg, reg, rng);

    // independent count from the declared layer dimensions
    int64_t expected = 0;
    const int64_t dmod = cfg.modulation_features;
    const int64_t D = cfg.attention_heads * cfg.attention_features;
    for (int i = 0; i < cfg.levels(); ++i) {
        const int64_t in_ch = i == 0 ? cfg.in_channels : cfg.channels[i - 1];
        const int64_t ch = cfg.channels[i];
        const int64_t f = cfg.factors[i];
        expected += ch * in_ch * 3 * f + ch;      // down conv
        expected += ch * in_ch * 3 * f + in_ch;   // up transposed conv
        expected += in_ch * 2 * in_ch + in_ch;    // skip merge 1x1
        int64_t stack = 0;
        stack += cfg.items[i] * (2 * (ch * ch * 3 + ch) + 2 * 2 * ch);        // resnets + norms
        stack += cfg.items[i] * (dmod * dmod + dmod + dmod * 2 * ch + 2 * ch);  // modulations
        if (cfg.attentions[i]) {
            stack += 2 * ch;                       // gn
            stack += ch * 3 * D + 3 * D;           // qkv
            stack += D * ch + ch;                  // out
        }
        if (cfg.attentions[i] || cfg.cross_attentions[i]) {
            stack += 2 * ch;                       // ff gn
            stack += ch * 2 * ch + 2 * ch;         // ff up
            stack += 2 * ch * ch + ch;             // ff down
        }
        expected += 2 * stack;  // mirrored down/up stacks
    }
    CHECK(reg.total_params() == expected);

    // same seed -> identical parameters
    ParamRegistry<float> reg2;
    Rng rng2(1234);
    auto net2 = unet::build_unet(cfg, reg2, rng2);
    REQUIRE(reg.size() == reg2.size());
    for (size_t i = 0; i < reg.size(); ++i) {
        CHECK(reg.items()[i].second.data() == reg2.items()[i].second.data());
    }
}
