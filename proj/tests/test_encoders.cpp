#include <doctest.h>

#include <cstring>
#include <random>

#include "stainer/conv_encoder.hpp"
#include "stainer/swin_encoder.hpp"

using namespace stainer;

namespace {

FeatureMap random_map(int c, int h, int w, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    FeatureMap fm(c, h, w);
    for (double& v : fm.data) v = u(rng);
    return fm;
}

bool bitwise_equal(const FeatureMap& a, const FeatureMap& b) {
    return a.data.size() == b.data.size() &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("default conv channel schedule doubles every two layers, capped at 256") {
    ConvEncoderConfig cfg;
    cfg.num_layers = 12;
    cfg.out_channels = 64;
    std::vector<int> s = resolve_conv_schedule(cfg);
    std::vector<int> expect = {32, 32, 64, 64, 128, 128, 256, 256, 256, 256, 256, 64};
    CHECK(s == expect);
}

TEST_CASE("explicit conv schedule is validated") {
    ConvEncoderConfig cfg;
    cfg.num_layers = 3;
    cfg.out_channels = 8;
    cfg.channel_schedule = {4, 4};
    CHECK_THROWS_AS(resolve_conv_schedule(cfg), std::invalid_argument);
    cfg.channel_schedule = {4, 4, 9};
    CHECK_THROWS_AS(resolve_conv_schedule(cfg), std::invalid_argument);
    cfg.channel_schedule = {4, 4, 8};
    CHECK(resolve_conv_schedule(cfg) == std::vector<int>{4, 4, 8});
}

TEST_CASE("conv encoder preserves spatial dims and is seed-deterministic") {
    ConvEncoderConfig cfg;
    cfg.in_channels = 3;
    cfg.num_layers = 3;
    cfg.out_channels = 6;
    cfg.channel_schedule = {4, 4, 6};
    std::mt19937_64 r1(9), r2(9);
    ConvEncoder e1(cfg, r1), e2(cfg, r2);
    FeatureMap in = random_map(3, 11, 7, 1);
    FeatureMap o1 = e1.forward(in), o2 = e2.forward(in);
    CHECK(o1.channels == 6);
    CHECK(o1.height == 11);
    CHECK(o1.width == 7);
    CHECK(bitwise_equal(o1, o2));
}

TEST_CASE("conv encoder is translation-equivariant away from borders") {
    ConvEncoderConfig cfg;
    cfg.in_channels = 1;
    cfg.num_layers = 2;
    cfg.out_channels = 3;
    cfg.channel_schedule = {4, 3};
    std::mt19937_64 rng(4);
    ConvEncoder enc(cfg, rng);

    FeatureMap a = random_map(1, 12, 12, 2);
    FeatureMap b(1, 12, 12);  // a shifted one pixel right
    for (int y = 0; y < 12; ++y)
        for (int x = 1; x < 12; ++x) b.at(0, y, x) = a.at(0, y, x - 1);
    FeatureMap fa = enc.forward(a), fb = enc.forward(b);
    // receptive field is 5x5; compare interior pixels at distance >= 3 from edges
    for (int c = 0; c < 3; ++c)
        for (int y = 3; y < 9; ++y)
            for (int x = 4; x < 9; ++x)
                CHECK(fb.at(c, y, x) == doctest::Approx(fa.at(c, y, x - 1)).epsilon(1e-12));
}

TEST_CASE("conv encoder gradients match finite differences") {
    ConvEncoderConfig cfg;
    cfg.in_channels = 2;
    cfg.num_layers = 2;
    cfg.out_channels = 2;
    cfg.channel_schedule = {3, 2};
    std::mt19937_64 rng(6);
    ConvEncoder enc(cfg, rng);
    FeatureMap in = random_map(2, 4, 5, 3);
    FeatureMap dout = random_map(2, 4, 5, 8);
    for (double& v : dout.data) v -= 0.5;

    ConvCache cache;
    enc.forward(in, &cache);
    for (Param* p : enc.params()) p->zero_grad();
    FeatureMap din;
    enc.backward(cache, dout, &din);

    auto loss = [&]() {
        FeatureMap out = enc.forward(in);
        double s = 0;
        for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * dout.data[i];
        return s;
    };
    const double eps = 1e-6;
    for (Param* p : enc.params()) {
        for (size_t i = 0; i < p->size(); i += 11) {
            double save = p->w[i];
            p->w[i] = save + eps;
            double lp = loss();
            p->w[i] = save - eps;
            double lm = loss();
            p->w[i] = save;
            CHECK(p->g[i] == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-4));
        }
    }
    for (size_t i = 0; i < in.data.size(); i += 7) {
        double save = in.data[i];
        in.data[i] = save + eps;
        double lp = loss();
        in.data[i] = save - eps;
        double lm = loss();
        in.data[i] = save;
        CHECK(din.data[i] == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-4));
    }
}

TEST_CASE("attention encoder keeps spatial dims for non-window-multiple inputs") {
    AttnEncoderConfig cfg;
    cfg.in_channels = 3;
    cfg.num_heads = 2;
    cfg.depth = 2;
    cfg.embed_dim = 8;
    cfg.window = 4;
    cfg.out_channels = 5;
    std::mt19937_64 rng(12);
    SwinEncoder enc(cfg, rng);
    for (auto [h, w] : {std::pair{10, 7}, std::pair{4, 4}, std::pair{3, 9}}) {
        FeatureMap in = random_map(3, h, w, 100 + h * w);
        FeatureMap out = enc.forward(in);
        CHECK(out.channels == 5);
        CHECK(out.height == h);
        CHECK(out.width == w);
        for (double v : out.data) CHECK(std::isfinite(v));
    }
}

TEST_CASE("attention encoder is deterministic and seed-reproducible") {
    AttnEncoderConfig cfg;
    cfg.in_channels = 2;
    cfg.num_heads = 2;
    cfg.depth = 2;
    cfg.embed_dim = 8;
    cfg.window = 4;
    cfg.out_channels = 4;
    std::mt19937_64 r1(77), r2(77);
    SwinEncoder e1(cfg, r1), e2(cfg, r2);
    FeatureMap in = random_map(2, 8, 8, 5);
    CHECK(bitwise_equal(e1.forward(in), e2.forward(in)));
    CHECK(bitwise_equal(e1.forward(in), e1.forward(in)));
}

TEST_CASE("attention output reacts to distant pixels, conv output does not") {
    // Both encoders see the same 16x16 input; flipping a pixel in the far
    // corner must change the attention features at the opposite corner
    // (window 8 + shifted windows span the image in two blocks) while the
    // 2-layer conv encoder's 5x5 receptive field cannot.
    AttnEncoderConfig ac;
    ac.in_channels = 1;
    ac.num_heads = 2;
    ac.depth = 4;
    ac.embed_dim = 8;
    ac.window = 8;
    ac.out_channels = 4;
    std::mt19937_64 rng(21);
    SwinEncoder attn(ac, rng);

    ConvEncoderConfig cc;
    cc.in_channels = 1;
    cc.num_layers = 2;
    cc.out_channels = 4;
    cc.channel_schedule = {4, 4};
    ConvEncoder conv(cc, rng);

    FeatureMap in = random_map(1, 16, 16, 9);
    FeatureMap in2 = in;
    in2.at(0, 15, 15) += 0.5;

    FeatureMap a1 = attn.forward(in), a2 = attn.forward(in2);
    double attn_delta = 0;
    for (int c = 0; c < 4; ++c) attn_delta += std::fabs(a2.at(c, 0, 0) - a1.at(c, 0, 0));
    CHECK(attn_delta > 1e-12);

    FeatureMap c1 = conv.forward(in), c2 = conv.forward(in2);
    double conv_delta = 0;
    for (int c = 0; c < 4; ++c) conv_delta += std::fabs(c2.at(c, 0, 0) - c1.at(c, 0, 0));
    CHECK(conv_delta == 0.0);
}

TEST_CASE("attention encoder rejects embed_dim not divisible by heads") {
    AttnEncoderConfig cfg;
    cfg.num_heads = 3;
    cfg.embed_dim = 8;
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(SwinEncoder(cfg, rng), std::invalid_argument);
}

TEST_CASE("attention encoder gradients match finite differences") {
    AttnEncoderConfig cfg;
    cfg.in_channels = 2;
    cfg.num_heads = 2;
    cfg.depth = 2;  // one plain + one shifted block
    cfg.embed_dim = 4;
    cfg.window = 2;
    cfg.out_channels = 3;
    cfg.mlp_ratio = 2;
    std::mt19937_64 rng(33);
    SwinEncoder enc(cfg, rng);
    FeatureMap in = random_map(2, 3, 4, 14);  // exercises padding too
    FeatureMap dout = random_map(3, 3, 4, 15);
    for (double& v : dout.data) v -= 0.5;

    SwinCache cache;
    enc.forward(in, &cache);
    for (Param* p : enc.params()) p->zero_grad();
    FeatureMap din;
    enc.backward(cache, dout, &din);

    auto loss = [&]() {
        FeatureMap out = enc.forward(in);
        double s = 0;
        for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * dout.data[i];
        return s;
    };
    const double eps = 1e-6;
    for (Param* p : enc.params()) {
        size_t stride = std::max<size_t>(1, p->size() / 6);
        for (size_t i = 0; i < p->size(); i += stride) {
            double save = p->w[i];
            p->w[i] = save + eps;
            double lp = loss();
            p->w[i] = save - eps;
            double lm = loss();
            p->w[i] = save;
            double fd = (lp - lm) / (2 * eps);
            CHECK(p->g[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
        }
    }
    for (size_t i = 0; i < in.data.size(); i += 3) {
        double save = in.data[i];
        in.data[i] = save + eps;
        double lp = loss();
        in.data[i] = save - eps;
        double lm = loss();
        in.data[i] = save;
        CHECK(din.data[i] == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("fuse concatenates conv features first") {
    FeatureMap a(2, 2, 2, 1.0), b(2, 2, 2, 2.0);
    FeatureMap f = fuse(a, b);
    CHECK(f.channels == 4);
    CHECK(f.at(0, 0, 0) == 1.0);
    CHECK(f.at(1, 1, 1) == 1.0);
    CHECK(f.at(2, 0, 0) == 2.0);
    CHECK(f.at(3, 1, 1) == 2.0);
    FeatureMap c(3, 2, 2);
    CHECK_THROWS_AS(fuse(a, c), std::invalid_argument);
}
