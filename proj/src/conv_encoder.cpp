#include "stainer/conv_encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "stainer/kernels.hpp"

namespace stainer {

std::vector<int> resolve_conv_schedule(const ConvEncoderConfig& cfg) {
    if (cfg.num_layers < 1) throw std::invalid_argument("conv encoder: num_layers must be >= 1");
    if (!cfg.channel_schedule.empty()) {
        if (static_cast<int>(cfg.channel_schedule.size()) != cfg.num_layers)
            throw std::invalid_argument("conv encoder: schedule length != num_layers");
        if (cfg.channel_schedule.back() != cfg.out_channels)
            throw std::invalid_argument("conv encoder: schedule must end at out_channels");
        return cfg.channel_schedule;
    }
    // 32,32,64,64,128,128,... capped at 256, last layer projects to out_channels
    std::vector<int> s(cfg.num_layers);
    for (int i = 0; i + 1 < cfg.num_layers; ++i)
        s[i] = std::min(256, 32 << (i / 2));
    s[cfg.num_layers - 1] = cfg.out_channels;
    return s;
}

FeatureMap to_feature_map(const RasterImage& img) {
    FeatureMap fm(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c) {
        double* p = fm.plane(c);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                p[static_cast<size_t>(y) * img.width + x] = img.at(y, x, c);
    }
    return fm;
}

ConvEncoder::ConvEncoder(const ConvEncoderConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg), sched_(resolve_conv_schedule(cfg)) {
    int cin = cfg_.in_channels;
    for (int l = 0; l < cfg_.num_layers; ++l) {
        int cout = sched_[l];
        Param w("conv.layer" + std::to_string(l) + ".weight", static_cast<size_t>(cout) * cin * 9);
        init_normal(w, std::sqrt(2.0 / (cin * 9)), rng);
        weights_.push_back(std::move(w));
        biases_.emplace_back("conv.layer" + std::to_string(l) + ".bias", cout);
        cin = cout;
    }
}

FeatureMap ConvEncoder::forward(const FeatureMap& input, ConvCache* cache) const {
    if (input.channels != cfg_.in_channels)
        throw std::invalid_argument("conv encoder: input channel mismatch");
    if (cache) {
        cache->acts.clear();
        cache->acts.push_back(input);
    }
    FeatureMap cur = input;
    for (int l = 0; l < cfg_.num_layers; ++l) {
        FeatureMap next(sched_[l], cur.height, cur.width);
        kernels::conv2d_forward(cur.data.data(), weights_[l].w.data(), biases_[l].w.data(),
                                next.data.data(), cur.channels, next.channels,
                                cur.height, cur.width, 1);
        if (l + 1 < cfg_.num_layers)
            for (double& v : next.data) v = v > 0.0 ? v : 0.0;
        if (cache) cache->acts.push_back(next);
        cur = std::move(next);
    }
    return cur;
}

void ConvEncoder::backward(const ConvCache& cache, const FeatureMap& dout, FeatureMap* din) {
    FeatureMap grad = dout;
    for (int l = cfg_.num_layers - 1; l >= 0; --l) {
        const FeatureMap& in = cache.acts[l];
        const FeatureMap& out = cache.acts[l + 1];
        if (l + 1 < cfg_.num_layers)  // ReLU adjoint
            for (size_t i = 0; i < grad.data.size(); ++i)
                if (out.data[i] <= 0.0) grad.data[i] = 0.0;
        kernels::conv2d_backward_params(grad.data.data(), in.data.data(),
                                        weights_[l].g.data(), biases_[l].g.data(),
                                        in.channels, out.channels, in.height, in.width, 1);
        if (l > 0 || din) {
            FeatureMap gin(in.channels, in.height, in.width);
            kernels::conv2d_backward_input(grad.data.data(), weights_[l].w.data(),
                                           gin.data.data(), in.channels, out.channels,
                                           in.height, in.width, 1);
            grad = std::move(gin);
        }
    }
    if (din) *din = std::move(grad);
}

ParamRefs ConvEncoder::params() {
    ParamRefs ps;
    for (size_t l = 0; l < weights_.size(); ++l) {
        ps.push_back(&weights_[l]);
        ps.push_back(&biases_[l]);
    }
    return ps;
}

FeatureMap fuse(const FeatureMap& conv_features, const FeatureMap& attn_features) {
    if (conv_features.height != attn_features.height ||
        conv_features.width != attn_features.width ||
        conv_features.channels != attn_features.channels)
        throw std::invalid_argument("fuse: feature map dims must match");
    FeatureMap out(conv_features.channels * 2, conv_features.height, conv_features.width);
    std::copy(conv_features.data.begin(), conv_features.data.end(), out.data.begin());
    std::copy(attn_features.data.begin(), attn_features.data.end(),
              out.data.begin() + conv_features.data.size());
    return out;
}

}  // namespace stainer
