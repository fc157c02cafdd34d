#pragma once

#include <vector>

#include "stainer/image.hpp"
#include "stainer/params.hpp"

namespace stainer {

// Learnable linear map (x,y) -> R^p appended to the window feature vector.
class PositionalEmbedding {
public:
    PositionalEmbedding() = default;
    PositionalEmbedding(int out_dim, std::mt19937_64& rng);

    int out_dim() const { return out_dim_; }
    void embed(double x, double y, double* out) const;
    std::vector<double> embed(double x, double y) const;

    // Accumulates parameter grads for one coordinate given d(out).
    void backward(double x, double y, const double* dout);

    ParamRefs params() { return {&w_, &b_}; }
    Param& weight() { return w_; }
    Param& bias() { return b_; }

private:
    int out_dim_ = 0;
    Param w_;  // [p,2]
    Param b_;  // [p]
};

struct ImplicitMLPConfig {
    int feature_dim = 0;            // d = feature_channels * (2r+1)^2
    int pos_dim = 32;               // p
    std::vector<int> hidden = {256, 256, 256, 256};
    int out_channels = 3;           // c
};

struct MLPCache {
    int rows = 0;
    std::vector<std::vector<double>> acts;  // acts[0]=input, acts[l+1]=post-ReLU (raw for last)
};

// F_theta: [features..., pos embedding...] -> target pixel value (unclamped).
class ImplicitMLP {
public:
    ImplicitMLP() = default;
    ImplicitMLP(const ImplicitMLPConfig& cfg, std::mt19937_64& rng);

    int input_dim() const { return cfg_.feature_dim + cfg_.pos_dim; }
    const ImplicitMLPConfig& config() const { return cfg_; }

    // x: [rows, input_dim] -> [rows, out_channels]
    std::vector<double> forward(const double* x, int rows, MLPCache* cache = nullptr) const;
    void backward(const MLPCache& cache, const double* dout, double* dx);

    ParamRefs params();

private:
    ImplicitMLPConfig cfg_;
    std::vector<int> dims_;  // layer widths including input and output
    std::vector<Param> weights_, biases_;
};

}  // namespace stainer
