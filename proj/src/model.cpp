#include "stainer/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace stainer {

ImplicitModel::ImplicitModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (!cfg.use_conv && !cfg.use_attn)
        throw std::invalid_argument("model: at least one encoder must be enabled");
    if (cfg.use_conv && cfg.use_attn && cfg.conv.out_channels != cfg.attn.out_channels)
        throw std::invalid_argument("model: encoder output channels must match for fusion");
    std::mt19937_64 rng(cfg.seed);
    if (cfg.use_conv) {
        ConvEncoderConfig cc = cfg.conv;
        cc.in_channels = cfg.in_channels;
        conv_ = std::make_unique<ConvEncoder>(cc, rng);
    }
    if (cfg.use_attn) {
        AttnEncoderConfig ac = cfg.attn;
        ac.in_channels = cfg.in_channels;
        attn_ = std::make_unique<SwinEncoder>(ac, rng);
    }
    pos_ = PositionalEmbedding(cfg.pos_dim, rng);
    ImplicitMLPConfig mc;
    mc.feature_dim = cfg.feature_dim();
    mc.pos_dim = cfg.pos_dim;
    mc.hidden = cfg.mlp_hidden;
    mc.out_channels = cfg.out_channels;
    mlp_ = ImplicitMLP(mc, rng);
}

FeatureMap ImplicitModel::encode(const RasterImage& image, EncodeCaches* caches) const {
    FeatureMap input = to_feature_map(image);
    if (cfg_.use_conv && cfg_.use_attn) {
        FeatureMap fc = conv_->forward(input, caches ? &caches->conv : nullptr);
        FeatureMap fa = attn_->forward(input, caches ? &caches->swin : nullptr);
        return fuse(fc, fa);
    }
    if (cfg_.use_conv) return conv_->forward(input, caches ? &caches->conv : nullptr);
    return attn_->forward(input, caches ? &caches->swin : nullptr);
}

void ImplicitModel::encode_backward(const EncodeCaches& caches, const FeatureMap& dfused) {
    if (cfg_.use_conv && cfg_.use_attn) {
        int c = cfg_.conv.out_channels;
        FeatureMap dc(c, dfused.height, dfused.width), da(c, dfused.height, dfused.width);
        size_t half = dc.data.size();
        std::copy(dfused.data.begin(), dfused.data.begin() + half, dc.data.begin());
        std::copy(dfused.data.begin() + half, dfused.data.end(), da.data.begin());
        conv_->backward(caches.conv, dc, nullptr);
        attn_->backward(caches.swin, da, nullptr);
    } else if (cfg_.use_conv) {
        conv_->backward(caches.conv, dfused, nullptr);
    } else {
        attn_->backward(caches.swin, dfused, nullptr);
    }
}

void ImplicitModel::build_row(const FeatureMap& features, double cx, double cy,
                              double* row) const {
    auto [pr, pc] = nearest_pixel(cx, cy, features.height, features.width);
    extract_window_into(features, pr, pc, cfg_.radius, row);
    pos_.embed(cx, cy, row + cfg_.feature_dim());
}

RasterImage ImplicitModel::predict_grid(const RasterImage& image,
                                        const CoordinateGrid& grid) const {
    FeatureMap features = encode(image);
    int rows = grid.height * grid.width;
    int din = mlp_.input_dim();
    std::vector<double> x(static_cast<size_t>(rows) * din);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        double cx = grid.coords[static_cast<size_t>(i) * 2];
        double cy = grid.coords[static_cast<size_t>(i) * 2 + 1];
        build_row(features, cx, cy, x.data() + static_cast<size_t>(i) * din);
    }
    std::vector<double> out = mlp_.forward(x.data(), rows);
    RasterImage img(grid.height, grid.width, cfg_.out_channels);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cfg_.out_channels; ++c)
            img.data[static_cast<size_t>(i) * cfg_.out_channels + c] =
                out[static_cast<size_t>(i) * cfg_.out_channels + c];
    return img;
}

ParamRefs ImplicitModel::params() {
    ParamRefs ps;
    if (conv_) {
        ParamRefs c = conv_->params();
        ps.insert(ps.end(), c.begin(), c.end());
    }
    if (attn_) {
        ParamRefs a = attn_->params();
        ps.insert(ps.end(), a.begin(), a.end());
    }
    ParamRefs pe = pos_.params();
    ps.insert(ps.end(), pe.begin(), pe.end());
    ParamRefs m = mlp_.params();
    ps.insert(ps.end(), m.begin(), m.end());
    return ps;
}

void to_json(json& j, const ModelConfig& c) {
    j = json{{"in_channels", c.in_channels},
                {"out_channels", c.out_channels},
                {"use_conv", c.use_conv},
                {"use_attn", c.use_attn},
                {"conv",
                 {{"num_layers", c.conv.num_layers},
                  {"out_channels", c.conv.out_channels},
                  {"channel_schedule", c.conv.channel_schedule}}},
                {"attn",
                 {{"num_heads", c.attn.num_heads},
                  {"depth", c.attn.depth},
                  {"embed_dim", c.attn.embed_dim},
                  {"window", c.attn.window},
                  {"out_channels", c.attn.out_channels},
                  {"mlp_ratio", c.attn.mlp_ratio}}},
                {"radius", c.radius},
                {"pos_dim", c.pos_dim},
                {"mlp_hidden", c.mlp_hidden},
                {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
    try {
        c.in_channels = j.at("in_channels");
        c.out_channels = j.at("out_channels");
        c.use_conv = j.at("use_conv");
        c.use_attn = j.at("use_attn");
        c.conv.num_layers = j.at("conv").at("num_layers");
        c.conv.out_channels = j.at("conv").at("out_channels");
        c.conv.channel_schedule = j.at("conv").at("channel_schedule").get<std::vector<int>>();
        c.attn.num_heads = j.at("attn").at("num_heads");
        c.attn.depth = j.at("attn").at("depth");
        c.attn.embed_dim = j.at("attn").at("embed_dim");
        c.attn.window = j.at("attn").at("window");
        c.attn.out_channels = j.at("attn").at("out_channels");
        c.attn.mlp_ratio = j.at("attn").at("mlp_ratio");
        c.radius = j.at("radius");
        c.pos_dim = j.at("pos_dim");
        c.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
        c.seed = j.at("seed");
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model config: ") + e.what());
    }
}

void ImplicitModel::save(const std::string& path) const {
    json j;
    j["version"] = 1;
    j["format"] = "implicit-stainer-checkpoint";
    j["optimizer"] = "adam";
    j["config"] = cfg_;
    json weights = json::object();
    ParamRefs ps = const_cast<ImplicitModel*>(this)->params();
    for (const Param* p : ps) weights[p->name] = p->w;
    j["weights"] = std::move(weights);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
    f << j.dump();
}

ImplicitModel ImplicitModel::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("checkpoint: parse error in " + path + ": " + e.what());
    }
    if (!j.contains("version")) throw std::runtime_error("checkpoint: missing version field");
    if (j["version"] != 1) throw std::runtime_error("checkpoint: unsupported version");
    ImplicitModel model(j.at("config").get<ModelConfig>());
    ParamRefs ps = model.params();
    const json& weights = j.at("weights");
    for (Param* p : ps) {
        if (!weights.contains(p->name))
            throw std::runtime_error("checkpoint: missing weight array " + p->name);
        std::vector<double> v = weights.at(p->name).get<std::vector<double>>();
        if (v.size() != p->w.size())
            throw std::runtime_error("checkpoint: size mismatch in " + p->name);
        p->w = std::move(v);
    }
    return model;
}

std::string ImplicitModel::weight_hash() const {
    uint64_t h = 1469598103934665603ull;
    ParamRefs ps = const_cast<ImplicitModel*>(this)->params();
    for (const Param* p : ps) {
        for (double v : p->w) {
            uint64_t bits;
            static_assert(sizeof(bits) == sizeof(v));
            std::memcpy(&bits, &v, sizeof(bits));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 1099511628211ull;
            }
        }
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace stainer
