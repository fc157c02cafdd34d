#include "stainer/implicit_head.hpp"

#include <cmath>
#include <stdexcept>

#include "stainer/kernels.hpp"

namespace stainer {

PositionalEmbedding::PositionalEmbedding(int out_dim, std::mt19937_64& rng) : out_dim_(out_dim) {
    w_ = Param("pos.weight", static_cast<size_t>(out_dim) * 2);
    init_normal(w_, std::sqrt(1.0 / 2.0), rng);
    b_ = Param("pos.bias", out_dim);
}

void PositionalEmbedding::embed(double x, double y, double* out) const {
    if (!std::isfinite(x) || !std::isfinite(y))
        throw std::invalid_argument("positional embedding: non-finite coordinate");
    for (int i = 0; i < out_dim_; ++i)
        out[i] = w_.w[2 * i] * x + w_.w[2 * i + 1] * y + b_.w[i];
}

std::vector<double> PositionalEmbedding::embed(double x, double y) const {
    std::vector<double> out(out_dim_);
    embed(x, y, out.data());
    return out;
}

void PositionalEmbedding::backward(double x, double y, const double* dout) {
    for (int i = 0; i < out_dim_; ++i) {
        w_.g[2 * i] += dout[i] * x;
        w_.g[2 * i + 1] += dout[i] * y;
        b_.g[i] += dout[i];
    }
}

ImplicitMLP::ImplicitMLP(const ImplicitMLPConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    if (cfg.feature_dim < 0 || cfg.pos_dim < 0 || cfg.out_channels < 1)
        throw std::invalid_argument("implicit mlp: bad dimensions");
    dims_.push_back(cfg.feature_dim + cfg.pos_dim);
    for (int h : cfg.hidden) dims_.push_back(h);
    dims_.push_back(cfg.out_channels);
    for (size_t l = 0; l + 1 < dims_.size(); ++l) {
        Param w("mlp.layer" + std::to_string(l) + ".weight",
                static_cast<size_t>(dims_[l + 1]) * dims_[l]);
        init_normal(w, std::sqrt(2.0 / dims_[l]), rng);
        weights_.push_back(std::move(w));
        biases_.emplace_back("mlp.layer" + std::to_string(l) + ".bias", dims_[l + 1]);
    }
}

std::vector<double> ImplicitMLP::forward(const double* x, int rows, MLPCache* cache) const {
    size_t nl = weights_.size();
    std::vector<double> cur(x, x + static_cast<size_t>(rows) * dims_[0]);
    if (cache) {
        cache->rows = rows;
        cache->acts.clear();
        cache->acts.push_back(cur);
    }
    for (size_t l = 0; l < nl; ++l) {
        std::vector<double> next(static_cast<size_t>(rows) * dims_[l + 1]);
        kernels::linear_forward(cur.data(), weights_[l].w.data(), biases_[l].w.data(),
                                next.data(), rows, dims_[l], dims_[l + 1]);
        if (l + 1 < nl)
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        if (cache) cache->acts.push_back(next);
        cur = std::move(next);
    }
    return cur;
}

void ImplicitMLP::backward(const MLPCache& cache, const double* dout, double* dx) {
    int rows = cache.rows;
    size_t nl = weights_.size();
    std::vector<double> grad(dout, dout + static_cast<size_t>(rows) * dims_.back());
    for (size_t li = nl; li-- > 0;) {
        const std::vector<double>& in = cache.acts[li];
        if (li + 1 < nl) {  // ReLU adjoint via stored post-activation
            const std::vector<double>& out = cache.acts[li + 1];
            for (size_t i = 0; i < grad.size(); ++i)
                if (out[i] <= 0.0) grad[i] = 0.0;
        }
        kernels::linear_backward_params(grad.data(), in.data(), weights_[li].g.data(),
                                        biases_[li].g.data(), rows, dims_[li], dims_[li + 1]);
        if (li > 0 || dx) {
            std::vector<double> gin(static_cast<size_t>(rows) * dims_[li]);
            kernels::linear_backward_input(grad.data(), weights_[li].w.data(), gin.data(),
                                           rows, dims_[li], dims_[li + 1]);
            grad = std::move(gin);
        }
    }
    if (dx) std::copy(grad.begin(), grad.end(), dx);
}

ParamRefs ImplicitMLP::params() {
    ParamRefs ps;
    for (size_t l = 0; l < weights_.size(); ++l) {
        ps.push_back(&weights_[l]);
        ps.push_back(&biases_[l]);
    }
    return ps;
}

}  // namespace stainer
