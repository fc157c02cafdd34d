#pragma once

#include <vector>

#include "stainer/image.hpp"
#include "stainer/params.hpp"

namespace stainer {

struct ConvEncoderConfig {
    int in_channels = 3;
    int num_layers = 12;
    int out_channels = 64;
    // Optional explicit per-layer output channels; must have num_layers entries
    // ending in out_channels. Empty selects the default 32,32,64,64,... ramp.
    std::vector<int> channel_schedule;
};

std::vector<int> resolve_conv_schedule(const ConvEncoderConfig& cfg);

// Planar CxHxW view of an interleaved image.
FeatureMap to_feature_map(const RasterImage& img);

struct ConvCache {
    // acts[0] = input, acts[l+1] = layer l output (post-ReLU except the last layer)
    std::vector<FeatureMap> acts;
};

// Stride-1 same-padded 3x3 stack, ReLU between layers, no pooling: output
// spatial dims always equal input dims.
class ConvEncoder {
public:
    ConvEncoder(const ConvEncoderConfig& cfg, std::mt19937_64& rng);

    FeatureMap forward(const FeatureMap& input, ConvCache* cache = nullptr) const;

    // Accumulates parameter grads; writes input grads into *din when non-null.
    void backward(const ConvCache& cache, const FeatureMap& dout, FeatureMap* din);

    ParamRefs params();
    const ConvEncoderConfig& config() const { return cfg_; }

private:
    ConvEncoderConfig cfg_;
    std::vector<int> sched_;
    std::vector<Param> weights_;
    std::vector<Param> biases_;
};

// Channel concatenation, conv block first.
FeatureMap fuse(const FeatureMap& conv_features, const FeatureMap& attn_features);

}  // namespace stainer
