#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

#include "stainer/model.hpp"

using namespace stainer;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 2;
    cfg.use_conv = true;
    cfg.use_attn = true;
    cfg.conv.num_layers = 2;
    cfg.conv.out_channels = 4;
    cfg.conv.channel_schedule = {4, 4};
    cfg.attn.num_heads = 2;
    cfg.attn.depth = 1;
    cfg.attn.embed_dim = 4;
    cfg.attn.window = 2;
    cfg.attn.out_channels = 4;
    cfg.radius = 1;
    cfg.pos_dim = 4;
    cfg.mlp_hidden = {8, 8};
    cfg.seed = 17;
    return cfg;
}

RasterImage random_image(int h, int w, int c, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    RasterImage img(h, w, c);
    for (double& v : img.data) v = u(rng);
    return img;
}

}  // namespace

TEST_CASE("positional embedding is the affine map w*(x,y)+b") {
    std::mt19937_64 rng(2);
    PositionalEmbedding pe(3, rng);
    pe.weight().w = {1, 2, 3, 4, 5, 6};
    pe.bias().w = {0.5, -0.5, 0.25};
    std::vector<double> out = pe.embed(0.1, -0.2);
    CHECK(out[0] == doctest::Approx(1 * 0.1 + 2 * -0.2 + 0.5));
    CHECK(out[1] == doctest::Approx(3 * 0.1 + 4 * -0.2 - 0.5));
    CHECK(out[2] == doctest::Approx(5 * 0.1 + 6 * -0.2 + 0.25));
}

TEST_CASE("positional embedding rejects non-finite coordinates") {
    std::mt19937_64 rng(2);
    PositionalEmbedding pe(2, rng);
    CHECK_THROWS(pe.embed(std::nan(""), 0.0));
    CHECK_THROWS(pe.embed(0.0, std::numeric_limits<double>::infinity()));
}

TEST_CASE("positional embedding gradients are dout-outer-coord") {
    std::mt19937_64 rng(3);
    PositionalEmbedding pe(2, rng);
    pe.weight().zero_grad();
    pe.bias().zero_grad();
    double dout[2] = {1.5, -2.0};
    pe.backward(0.3, 0.7, dout);
    CHECK(pe.weight().g[0] == doctest::Approx(1.5 * 0.3));
    CHECK(pe.weight().g[1] == doctest::Approx(1.5 * 0.7));
    CHECK(pe.weight().g[2] == doctest::Approx(-2.0 * 0.3));
    CHECK(pe.weight().g[3] == doctest::Approx(-2.0 * 0.7));
    CHECK(pe.bias().g[0] == doctest::Approx(1.5));
    CHECK(pe.bias().g[1] == doctest::Approx(-2.0));
}

TEST_CASE("implicit MLP computes a hand-checkable ReLU composition") {
    ImplicitMLPConfig cfg;
    cfg.feature_dim = 1;
    cfg.pos_dim = 1;
    cfg.hidden = {2};
    cfg.out_channels = 1;
    std::mt19937_64 rng(4);
    ImplicitMLP mlp(cfg, rng);
    ParamRefs ps = mlp.params();
    REQUIRE(ps.size() == 4);  // w0,b0,w1,b1
    // layer0: 2x2 weights, layer1: 1x2
    ps[0]->w = {1, -1, 2, 0};  // h = relu([x0-x1, 2x0])
    ps[1]->w = {0, -1};
    ps[2]->w = {3, 1};
    ps[3]->w = {0.5};
    double x[2] = {1.0, 0.25};
    std::vector<double> out = mlp.forward(x, 1);
    // h0 = relu(1-0.25+0)=0.75 ; h1 = relu(2-1)=1 ; y = 3*0.75+1*1+0.5
    CHECK(out[0] == doctest::Approx(3.75));
}

TEST_CASE("implicit MLP backward matches finite differences") {
    ImplicitMLPConfig cfg;
    cfg.feature_dim = 3;
    cfg.pos_dim = 2;
    cfg.hidden = {5, 4};
    cfg.out_channels = 2;
    std::mt19937_64 rng(5);
    ImplicitMLP mlp(cfg, rng);

    int rows = 3, din = mlp.input_dim();
    std::vector<double> x(static_cast<size_t>(rows) * din), dout(rows * 2);
    std::uniform_real_distribution<double> u(-1, 1);
    for (double& v : x) v = u(rng);
    for (double& v : dout) v = u(rng);

    MLPCache cache;
    mlp.forward(x.data(), rows, &cache);
    for (Param* p : mlp.params()) p->zero_grad();
    std::vector<double> dx(x.size());
    mlp.backward(cache, dout.data(), dx.data());

    auto loss = [&]() {
        std::vector<double> out = mlp.forward(x.data(), rows);
        double s = 0;
        for (size_t i = 0; i < out.size(); ++i) s += out[i] * dout[i];
        return s;
    };
    const double eps = 1e-6;
    for (Param* p : mlp.params()) {
        for (size_t i = 0; i < p->size(); i += 3) {
            double save = p->w[i];
            p->w[i] = save + eps;
            double lp = loss();
            p->w[i] = save - eps;
            double lm = loss();
            p->w[i] = save;
            CHECK(p->g[i] == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-4).scale(1.0));
        }
    }
    for (size_t i = 0; i < x.size(); i += 2) {
        double save = x[i];
        x[i] = save + eps;
        double lp = loss();
        x[i] = save - eps;
        double lm = loss();
        x[i] = save;
        CHECK(dx[i] == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-4).scale(1.0));
    }
}

TEST_CASE("model requires at least one encoder and matching fusion channels") {
    ModelConfig cfg = tiny_config();
    cfg.use_conv = false;
    cfg.use_attn = false;
    CHECK_THROWS_AS(ImplicitModel{cfg}, std::invalid_argument);
    cfg = tiny_config();
    cfg.attn.out_channels = 5;
    CHECK_THROWS_AS(ImplicitModel{cfg}, std::invalid_argument);
}

TEST_CASE("model prediction is bit-deterministic across repeated runs") {
    ImplicitModel m(tiny_config());
    RasterImage img = random_image(6, 6, 2, 8);
    CoordinateGrid grid = make_grid(6, 6);
    RasterImage p1 = m.predict_grid(img, grid);
    RasterImage p2 = m.predict_grid(img, grid);
    CHECK(std::memcmp(p1.data.data(), p2.data.data(),
                      p1.data.size() * sizeof(double)) == 0);
    ImplicitModel m2(tiny_config());  // same seed, fresh instance
    RasterImage p3 = m2.predict_grid(img, grid);
    CHECK(std::memcmp(p1.data.data(), p3.data.data(),
                      p1.data.size() * sizeof(double)) == 0);
}

TEST_CASE("build_row lays out window features then positional embedding") {
    ModelConfig cfg = tiny_config();
    ImplicitModel m(cfg);
    RasterImage img = random_image(4, 4, 2, 3);
    FeatureMap f = m.encode(img);
    int d = cfg.feature_dim();
    std::vector<double> row(d + cfg.pos_dim);
    CoordinateGrid g = make_grid(4, 4);
    m.build_row(f, g.x(1, 2), g.y(1, 2), row.data());
    std::vector<double> win = extract_window(f, 1, 2, cfg.radius);
    for (int i = 0; i < d; ++i) CHECK(row[i] == win[i]);
    std::vector<double> pe = m.pos().embed(g.x(1, 2), g.y(1, 2));
    for (int i = 0; i < cfg.pos_dim; ++i) CHECK(row[d + i] == pe[i]);
}

TEST_CASE("checkpoint save/load round-trips weights and predictions") {
    namespace fs = std::filesystem;
    ImplicitModel m(tiny_config());
    RasterImage img = random_image(5, 5, 2, 12);
    CoordinateGrid grid = make_grid(7, 7);
    RasterImage before = m.predict_grid(img, grid);

    fs::path path = fs::temp_directory_path() / "stainer_test_ckpt.json";
    m.save(path.string());
    ImplicitModel loaded = ImplicitModel::load(path.string());
    CHECK(loaded.weight_hash() == m.weight_hash());
    RasterImage after = loaded.predict_grid(img, grid);
    CHECK(std::memcmp(before.data.data(), after.data.data(),
                      before.data.size() * sizeof(double)) == 0);
    fs::remove(path);
}

TEST_CASE("checkpoint loader reports malformed files") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "stainer_bad_ckpt.json";
    {
        std::FILE* f = std::fopen(path.string().c_str(), "w");
        std::fputs("{\"version\": 2}", f);
        std::fclose(f);
    }
    CHECK_THROWS_WITH_AS(ImplicitModel::load(path.string()),
                         doctest::Contains("unsupported version"), std::runtime_error);
    {
        std::FILE* f = std::fopen(path.string().c_str(), "w");
        std::fputs("not json", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(ImplicitModel::load(path.string()), std::runtime_error);
    fs::remove(path);
    CHECK_THROWS_AS(ImplicitModel::load(path.string()), std::runtime_error);
}

TEST_CASE("predict_grid supports grids of a different resolution than the input") {
    ImplicitModel m(tiny_config());
    RasterImage img = random_image(6, 6, 2, 14);
    RasterImage up = m.predict_grid(img, make_grid(12, 12));
    CHECK(up.height == 12);
    CHECK(up.width == 12);
    CHECK(up.channels == 2);
    for (double v : up.data) CHECK(std::isfinite(v));
}
