#include "stainer/losses.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "stainer/conv_encoder.hpp"
#include "stainer/kernels.hpp"

namespace stainer {

namespace {

class IdentityNetwork final : public FeatureNetwork {
public:
    std::string name() const override { return "identity"; }
    std::vector<FeatureMap> taps(const RasterImage& img) const override {
        return {to_feature_map(img)};
    }
    RasterImage taps_backward(const RasterImage& img,
                              const std::vector<FeatureMap>& dtaps) const override {
        RasterImage out(img.height, img.width, img.channels);
        const FeatureMap& d = dtaps[0];
        for (int c = 0; c < img.channels; ++c)
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) out.at(y, x, c) = d.at(c, y, x);
        return out;
    }
};

// 3 conv layers (3x3, stride 1, zero pad), ReLU, frozen weights seeded from
// the style name. Tap after every layer.
class RandomConvNetwork final : public FeatureNetwork {
public:
    RandomConvNetwork(std::string style, int in_channels)
        : style_(std::move(style)), cin_(in_channels) {
        uint64_t seed = 1099511628211ull;
        for (char ch : style_) seed = seed * 131 + static_cast<unsigned char>(ch);
        std::mt19937_64 rng(seed);
        int c = cin_;
        for (int ch : {8, 16, 16}) {
            channels_.push_back(ch);
            std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (c * 9)));
            std::vector<double> w(static_cast<size_t>(ch) * c * 9);
            for (double& v : w) v = d(rng);
            weights_.push_back(std::move(w));
            c = ch;
        }
    }

    std::string name() const override { return style_; }

    std::vector<FeatureMap> taps(const RasterImage& img) const override {
        if (img.channels != cin_)
            throw std::invalid_argument("perceptual network " + style_ + ": channel mismatch");
        std::vector<FeatureMap> out;
        FeatureMap cur = to_feature_map(img);
        for (size_t l = 0; l < weights_.size(); ++l) {
            FeatureMap next(channels_[l], cur.height, cur.width);
            kernels::conv2d_forward(cur.data.data(), weights_[l].data(), nullptr,
                                    next.data.data(), cur.channels, next.channels,
                                    cur.height, cur.width, 1);
            for (double& v : next.data) v = v > 0.0 ? v : 0.0;
            out.push_back(next);
            cur = std::move(next);
        }
        return out;
    }

    RasterImage taps_backward(const RasterImage& img,
                              const std::vector<FeatureMap>& dtaps) const override {
        std::vector<FeatureMap> acts = taps(img);
        FeatureMap grad(0, 0, 0);
        for (size_t li = weights_.size(); li-- > 0;) {
            FeatureMap g = dtaps[li];
            if (grad.channels > 0)
                for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += grad.data[i];
            for (size_t i = 0; i < g.data.size(); ++i)
                if (acts[li].data[i] <= 0.0) g.data[i] = 0.0;
            int prev_c = li == 0 ? cin_ : channels_[li - 1];
            FeatureMap gin(prev_c, g.height, g.width);
            kernels::conv2d_backward_input(g.data.data(), weights_[li].data(), gin.data.data(),
                                           prev_c, g.channels, g.height, g.width, 1);
            grad = std::move(gin);
        }
        RasterImage out(img.height, img.width, img.channels);
        for (int c = 0; c < img.channels; ++c)
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) out.at(y, x, c) = grad.at(c, y, x);
        return out;
    }

private:
    std::string style_;
    int cin_;
    std::vector<int> channels_;
    std::vector<std::vector<double>> weights_;
};

void check_shapes(const RasterImage& a, const RasterImage& b, const char* who) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

}  // namespace

std::unique_ptr<FeatureNetwork> make_identity_network() {
    return std::make_unique<IdentityNetwork>();
}

std::unique_ptr<FeatureNetwork> make_random_conv_network(const std::string& style,
                                                         int in_channels) {
    return std::make_unique<RandomConvNetwork>(style, in_channels);
}

std::vector<PerceptualNetworkSpec> default_perceptual_specs(const std::vector<double>& lambdas,
                                                            int in_channels) {
    static const char* styles[3] = {"alexnet-style", "vgg-style", "resnet50-style"};
    std::vector<PerceptualNetworkSpec> specs;
    for (size_t i = 0; i < lambdas.size() && i < 3; ++i) {
        if (lambdas[i] < 0.0) throw std::invalid_argument("perceptual lambda must be >= 0");
        specs.push_back({std::shared_ptr<const FeatureNetwork>(
                             make_random_conv_network(styles[i], in_channels)),
                         lambdas[i]});
    }
    return specs;
}

double implicit_loss(const RasterImage& pred, const RasterImage& target) {
    check_shapes(pred, target, "implicit_loss");
    double s = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) s += std::fabs(pred.data[i] - target.data[i]);
    return s / pred.data.size();
}

double implicit_loss_backward(const RasterImage& pred, const RasterImage& target,
                              RasterImage* dpred, double weight) {
    check_shapes(pred, target, "implicit_loss");
    double s = 0.0;
    double inv = weight / pred.data.size();
    for (size_t i = 0; i < pred.data.size(); ++i) {
        double d = pred.data[i] - target.data[i];
        s += std::fabs(d);
        if (dpred) dpred->data[i] += d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    return s / pred.data.size();
}

static double perceptual_impl(const RasterImage& pred, const RasterImage& target,
                              const std::vector<PerceptualNetworkSpec>& specs,
                              RasterImage* dpred, double weight) {
    check_shapes(pred, target, "perceptual_loss");
    double total = 0.0;
    for (const PerceptualNetworkSpec& spec : specs) {
        if (spec.lambda == 0.0) continue;
        if (!spec.network) throw std::runtime_error("perceptual_loss: missing network weights");
        std::vector<FeatureMap> tp = spec.network->taps(pred);
        std::vector<FeatureMap> tt = spec.network->taps(target);
        double net_loss = 0.0;
        std::vector<FeatureMap> dtaps;
        for (size_t k = 0; k < tp.size(); ++k) {
            double s = 0.0;
            size_t nel = tp[k].data.size();
            FeatureMap d(tp[k].channels, tp[k].height, tp[k].width);
            double scale = 2.0 / (nel * tp.size());
            for (size_t i = 0; i < nel; ++i) {
                double diff = tp[k].data[i] - tt[k].data[i];
                s += diff * diff;
                d.data[i] = diff * scale;
            }
            net_loss += s / nel;
            dtaps.push_back(std::move(d));
        }
        net_loss /= tp.size();
        total += spec.lambda * net_loss;
        if (dpred) {
            RasterImage g = spec.network->taps_backward(pred, dtaps);
            double w = weight * spec.lambda;
            for (size_t i = 0; i < g.data.size(); ++i) dpred->data[i] += w * g.data[i];
        }
    }
    return total;
}

double perceptual_loss(const RasterImage& pred, const RasterImage& target,
                       const std::vector<PerceptualNetworkSpec>& specs) {
    return perceptual_impl(pred, target, specs, nullptr, 1.0);
}

double perceptual_loss_backward(const RasterImage& pred, const RasterImage& target,
                                const std::vector<PerceptualNetworkSpec>& specs,
                                RasterImage* dpred, double weight) {
    return perceptual_impl(pred, target, specs, dpred, weight);
}

double total_loss(const RasterImage& pred, const RasterImage& target,
                  const std::vector<PerceptualNetworkSpec>& specs) {
    return implicit_loss(pred, target) + perceptual_loss(pred, target, specs);
}

}  // namespace stainer
