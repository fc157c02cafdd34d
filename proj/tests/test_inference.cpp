#include <doctest.h>

#include <cstring>
#include <random>

#include "stainer/inference.hpp"

using namespace stainer;

namespace {

RasterImage random_image(int h, int w, int c, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    RasterImage img(h, w, c);
    for (double& v : img.data) v = u(rng);
    return img;
}

ImplicitModel tiny_model() {
    ModelConfig cfg;
    cfg.in_channels = 3;
    cfg.out_channels = 3;
    cfg.conv.num_layers = 2;
    cfg.conv.out_channels = 4;
    cfg.conv.channel_schedule = {4, 4};
    cfg.attn.num_heads = 2;
    cfg.attn.depth = 1;
    cfg.attn.embed_dim = 4;
    cfg.attn.window = 4;
    cfg.attn.out_channels = 4;
    cfg.pos_dim = 4;
    cfg.mlp_hidden = {8};
    cfg.seed = 3;
    return ImplicitModel(cfg);
}

}  // namespace

TEST_CASE("translate at scale 1 equals a direct grid prediction") {
    ImplicitModel m = tiny_model();
    RasterImage img = random_image(8, 10, 3, 1);
    RasterImage a = translate(img, m, {});
    RasterImage b = m.predict_grid(img, make_grid(8, 10));
    CHECK(a.same_shape(b));
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
}

TEST_CASE("translate output dims follow round(scale * dim)") {
    ImplicitModel m = tiny_model();
    RasterImage img = random_image(8, 6, 3, 2);
    RasterImage up = translate(img, m, {.scale = 2.0});
    CHECK(up.height == 16);
    CHECK(up.width == 12);
    RasterImage down = translate(img, m, {.scale = 0.5});
    CHECK(down.height == 4);
    CHECK(down.width == 3);
    CHECK_THROWS_AS(translate(img, m, {.scale = 0.01}), std::invalid_argument);
}

TEST_CASE("tiles covering the full image reproduce the whole-image result") {
    ImplicitModel m = tiny_model();
    RasterImage img = random_image(8, 8, 3, 3);
    RasterImage whole = translate(img, m, {});
    RasterImage tiled = translate(img, m, {.scale = 1.0, .tile = 8, .overlap = 2});
    CHECK(std::memcmp(whole.data.data(), tiled.data.data(),
                      whole.data.size() * sizeof(double)) == 0);
}

TEST_CASE("tiled inference is deterministic and rejects bad overlap") {
    ImplicitModel m = tiny_model();
    RasterImage img = random_image(12, 10, 3, 4);
    InferenceOptions opts{.scale = 1.0, .tile = 6, .overlap = 2};
    RasterImage a = translate(img, m, opts);
    RasterImage b = translate(img, m, opts);
    CHECK(a.height == 12);
    CHECK(a.width == 10);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
    CHECK_THROWS_AS(translate(img, m, {.scale = 1.0, .tile = 4, .overlap = 4}),
                    std::invalid_argument);
}
