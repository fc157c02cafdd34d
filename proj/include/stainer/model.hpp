#pragma once

#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "stainer/conv_encoder.hpp"
#include "stainer/implicit_head.hpp"
#include "stainer/swin_encoder.hpp"

namespace stainer {

struct ModelConfig {
    int in_channels = 3;
    int out_channels = 3;
    bool use_conv = true;
    bool use_attn = true;
    ConvEncoderConfig conv;
    AttnEncoderConfig attn;
    int radius = 1;
    int pos_dim = 32;
    std::vector<int> mlp_hidden = {256, 256, 256, 256};
    uint64_t seed = 0;

    int feature_channels() const {
        return (use_conv ? conv.out_channels : 0) + (use_attn ? attn.out_channels : 0);
    }
    int feature_dim() const {
        int side = 2 * radius + 1;
        return feature_channels() * side * side;
    }
};

// JSON (de)serialization for configs, shared by checkpoints and the CLI.
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct EncodeCaches {
    ConvCache conv;
    SwinCache swin;
};

// Encoder pair + positional embedding + MLP head, one checkpointable object.
class ImplicitModel {
public:
    explicit ImplicitModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }

    // Runs the enabled encoders and fuses (conv block first).
    FeatureMap encode(const RasterImage& image, EncodeCaches* caches = nullptr) const;

    // Splits a fused feature gradient and backpropagates through the encoders,
    // accumulating parameter grads.
    void encode_backward(const EncodeCaches& caches, const FeatureMap& dfused);

    // Builds one MLP input row: window features followed by the positional embedding.
    void build_row(const FeatureMap& features, double cx, double cy, double* row) const;

    // Evaluates the head over an entire grid (batched, parallel over coordinates).
    RasterImage predict_grid(const RasterImage& image, const CoordinateGrid& grid) const;

    ConvEncoder& conv() { return *conv_; }
    SwinEncoder& attn() { return *attn_; }
    PositionalEmbedding& pos() { return pos_; }
    ImplicitMLP& mlp() { return mlp_; }
    const ImplicitMLP& mlp() const { return mlp_; }
    const PositionalEmbedding& pos() const { return pos_; }

    ParamRefs params();

    void save(const std::string& path) const;
    static ImplicitModel load(const std::string& path);

    // FNV-1a over the serialized weights, for provenance sidecars.
    std::string weight_hash() const;

private:
    ModelConfig cfg_;
    std::unique_ptr<ConvEncoder> conv_;
    std::unique_ptr<SwinEncoder> attn_;
    PositionalEmbedding pos_;
    ImplicitMLP mlp_;
};

}  // namespace stainer
