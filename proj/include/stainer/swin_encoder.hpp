#pragma once

#include <vector>

#include "stainer/image.hpp"
#include "stainer/params.hpp"

namespace stainer {

struct AttnEncoderConfig {
    int in_channels = 3;
    int num_heads = 8;
    int depth = 6;
    int embed_dim = 256;
    int window = 8;
    int out_channels = 64;
    int mlp_ratio = 2;
};

struct SwinBlockCache {
    std::vector<double> x_in;       // [T,E] block input
    std::vector<double> xhat1;      // LN1 normalized
    std::vector<double> rstd1;      // [T]
    std::vector<double> y1;         // LN1 output, windowed (gathered) order
    std::vector<double> qkv;        // [T,3E] windowed order
    std::vector<double> attn;       // [nw*heads*n*n] softmax rows
    std::vector<double> attn_out;   // [T,E] windowed order, pre output-proj
    std::vector<double> x_mid;      // after attention residual
    std::vector<double> xhat2;
    std::vector<double> rstd2;
    std::vector<double> y2;         // LN2 output
    std::vector<double> hidden;     // pre-ReLU MLP hidden
};

struct SwinCache {
    int h = 0, w = 0;       // unpadded dims
    int hp = 0, wp = 0;     // padded dims
    std::vector<double> tokens_in;  // [T,E] after input projection
    std::vector<double> img_padded; // [T,cin] padded input pixels
    std::vector<SwinBlockCache> blocks;
    std::vector<double> tokens_out; // [T,E] before output projection
};

// Windowed multi-head self-attention at patch size 1 (token grid = pixel grid),
// shifted windows on odd blocks via cyclic roll, relative position bias per
// window. No downsampling: output is out_channels x H x W for any input size;
// non-multiples of the window size are replicate-padded internally.
class SwinEncoder {
public:
    SwinEncoder(const AttnEncoderConfig& cfg, std::mt19937_64& rng);

    FeatureMap forward(const FeatureMap& input, SwinCache* cache = nullptr) const;
    void backward(const SwinCache& cache, const FeatureMap& dout, FeatureMap* din);

    ParamRefs params();
    const AttnEncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        Param ln1_g, ln1_b;
        Param wqkv, bqkv;   // [3E,E],[3E]
        Param wo, bo;       // [E,E],[E]
        Param relbias;      // [(2w-1)^2 * heads]
        Param ln2_g, ln2_b;
        Param w1, b1;       // [Hd,E],[Hd]
        Param w2, b2;       // [E,Hd],[E]
    };

    void build_perm(int hp, int wp, int shift, std::vector<int>& perm) const;

    AttnEncoderConfig cfg_;
    Param in_w_, in_b_;     // [E,cin],[E]
    Param out_w_, out_b_;   // [C,E],[C]
    std::vector<Block> blocks_;
    std::vector<int> relindex_;  // [n*n] window-relative position index table
};

}  // namespace stainer
