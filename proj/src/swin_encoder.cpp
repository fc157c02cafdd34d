#include "stainer/swin_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stainer/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stainer {

namespace {

constexpr double kLnEps = 1e-5;

// Per-token layer norm. Caches xhat and rstd for the backward pass.
void layernorm_forward(const double* x, const double* g, const double* b, int t, int e,
                       double* y, double* xhat, double* rstd) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < t; ++i) {
        const double* xi = x + static_cast<size_t>(i) * e;
        double mean = 0.0;
        for (int j = 0; j < e; ++j) mean += xi[j];
        mean /= e;
        double var = 0.0;
        for (int j = 0; j < e; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= e;
        double rs = 1.0 / std::sqrt(var + kLnEps);
        rstd[i] = rs;
        double* xh = xhat + static_cast<size_t>(i) * e;
        double* yi = y + static_cast<size_t>(i) * e;
        for (int j = 0; j < e; ++j) {
            xh[j] = (xi[j] - mean) * rs;
            yi[j] = g[j] * xh[j] + b[j];
        }
    }
}

void layernorm_backward(const double* dy, const double* xhat, const double* rstd,
                        const double* g, int t, int e, double* dx, double* dg, double* db) {
    // parameter grads: fixed token order per channel
#pragma omp parallel for schedule(static)
    for (int j = 0; j < e; ++j) {
        double sg = 0.0, sb = 0.0;
        for (int i = 0; i < t; ++i) {
            sg += dy[static_cast<size_t>(i) * e + j] * xhat[static_cast<size_t>(i) * e + j];
            sb += dy[static_cast<size_t>(i) * e + j];
        }
        dg[j] += sg;
        db[j] += sb;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < t; ++i) {
        const double* dyi = dy + static_cast<size_t>(i) * e;
        const double* xh = xhat + static_cast<size_t>(i) * e;
        double* dxi = dx + static_cast<size_t>(i) * e;
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < e; ++j) {
            double dxh = dyi[j] * g[j];
            m1 += dxh;
            m2 += dxh * xh[j];
        }
        m1 /= e;
        m2 /= e;
        for (int j = 0; j < e; ++j) {
            double dxh = dyi[j] * g[j];
            dxi[j] = rstd[i] * (dxh - m1 - xh[j] * m2);
        }
    }
}

}  // namespace

SwinEncoder::SwinEncoder(const AttnEncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    if (cfg_.embed_dim % cfg_.num_heads != 0)
        throw std::invalid_argument("swin encoder: embed_dim must be divisible by num_heads");
    if (cfg_.window < 1) throw std::invalid_argument("swin encoder: window must be >= 1");
    int e = cfg_.embed_dim, cin = cfg_.in_channels, w = cfg_.window;
    int hd = e * cfg_.mlp_ratio;

    in_w_ = Param("swin.in_proj.weight", static_cast<size_t>(e) * cin);
    init_normal(in_w_, std::sqrt(1.0 / cin), rng);
    in_b_ = Param("swin.in_proj.bias", e);
    out_w_ = Param("swin.out_proj.weight", static_cast<size_t>(cfg_.out_channels) * e);
    init_normal(out_w_, std::sqrt(1.0 / e), rng);
    out_b_ = Param("swin.out_proj.bias", cfg_.out_channels);

    blocks_.resize(cfg_.depth);
    for (int bi = 0; bi < cfg_.depth; ++bi) {
        std::string pre = "swin.block" + std::to_string(bi) + ".";
        Block& b = blocks_[bi];
        b.ln1_g = Param(pre + "ln1.gamma", e);
        std::fill(b.ln1_g.w.begin(), b.ln1_g.w.end(), 1.0);
        b.ln1_b = Param(pre + "ln1.beta", e);
        b.wqkv = Param(pre + "attn.qkv.weight", static_cast<size_t>(3 * e) * e);
        init_normal(b.wqkv, std::sqrt(1.0 / e), rng);
        b.bqkv = Param(pre + "attn.qkv.bias", 3 * e);
        b.wo = Param(pre + "attn.proj.weight", static_cast<size_t>(e) * e);
        init_normal(b.wo, std::sqrt(1.0 / e), rng);
        b.bo = Param(pre + "attn.proj.bias", e);
        b.relbias = Param(pre + "attn.relbias",
                          static_cast<size_t>(2 * w - 1) * (2 * w - 1) * cfg_.num_heads);
        b.ln2_g = Param(pre + "ln2.gamma", e);
        std::fill(b.ln2_g.w.begin(), b.ln2_g.w.end(), 1.0);
        b.ln2_b = Param(pre + "ln2.beta", e);
        b.w1 = Param(pre + "mlp.fc1.weight", static_cast<size_t>(hd) * e);
        init_normal(b.w1, std::sqrt(2.0 / e), rng);
        b.b1 = Param(pre + "mlp.fc1.bias", hd);
        b.w2 = Param(pre + "mlp.fc2.weight", static_cast<size_t>(e) * hd);
        init_normal(b.w2, std::sqrt(2.0 / hd), rng);
        b.b2 = Param(pre + "mlp.fc2.bias", e);
    }

    int n = w * w;
    relindex_.resize(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        int iy = i / w, ix = i % w;
        for (int j = 0; j < n; ++j) {
            int jy = j / w, jx = j % w;
            relindex_[static_cast<size_t>(i) * n + j] =
                (iy - jy + w - 1) * (2 * w - 1) + (ix - jx + w - 1);
        }
    }
}

void SwinEncoder::build_perm(int hp, int wp, int shift, std::vector<int>& perm) const {
    int w = cfg_.window;
    perm.resize(static_cast<size_t>(hp) * wp);
    int t = 0;
    for (int wy = 0; wy < hp / w; ++wy) {
        for (int wx = 0; wx < wp / w; ++wx) {
            for (int iy = 0; iy < w; ++iy) {
                for (int ix = 0; ix < w; ++ix) {
                    int y = (wy * w + iy + shift) % hp;
                    int x = (wx * w + ix + shift) % wp;
                    perm[t++] = y * wp + x;
                }
            }
        }
    }
}

FeatureMap SwinEncoder::forward(const FeatureMap& input, SwinCache* cache) const {
    if (input.channels != cfg_.in_channels)
        throw std::invalid_argument("swin encoder: input channel mismatch");
    int h = input.height, wdt = input.width, w = cfg_.window, e = cfg_.embed_dim;
    int hp = (h + w - 1) / w * w, wp = (wdt + w - 1) / w * w;
    int t = hp * wp, cin = cfg_.in_channels;
    int heads = cfg_.num_heads, dh = e / heads, n = w * w, nw = t / n;
    int hdim = e * cfg_.mlp_ratio;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    SwinCache local;
    SwinCache& cc = cache ? *cache : local;
    cc.h = h;
    cc.w = wdt;
    cc.hp = hp;
    cc.wp = wp;

    // replicate-pad into token-major [T,cin]
    cc.img_padded.assign(static_cast<size_t>(t) * cin, 0.0);
    for (int y = 0; y < hp; ++y) {
        int ys = std::min(y, h - 1);
        for (int x = 0; x < wp; ++x) {
            int xs = std::min(x, wdt - 1);
            for (int c = 0; c < cin; ++c)
                cc.img_padded[(static_cast<size_t>(y) * wp + x) * cin + c] = input.at(c, ys, xs);
        }
    }

    cc.tokens_in.assign(static_cast<size_t>(t) * e, 0.0);
    kernels::linear_forward(cc.img_padded.data(), in_w_.w.data(), in_b_.w.data(),
                            cc.tokens_in.data(), t, cin, e);

    std::vector<double> x = cc.tokens_in;
    cc.blocks.clear();
    cc.blocks.resize(cfg_.depth);
    std::vector<int> perm;
    for (int bi = 0; bi < cfg_.depth; ++bi) {
        const Block& blk = blocks_[bi];
        SwinBlockCache& bc = cc.blocks[bi];
        int shift = (bi % 2 == 1 && w > 1) ? w / 2 : 0;
        build_perm(hp, wp, shift, perm);

        bc.x_in = x;
        bc.xhat1.resize(static_cast<size_t>(t) * e);
        bc.rstd1.resize(t);
        std::vector<double> y1_orig(static_cast<size_t>(t) * e);
        layernorm_forward(x.data(), blk.ln1_g.w.data(), blk.ln1_b.w.data(), t, e,
                          y1_orig.data(), bc.xhat1.data(), bc.rstd1.data());
        // gather to windowed order
        bc.y1.resize(static_cast<size_t>(t) * e);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < t; ++i)
            std::copy_n(y1_orig.data() + static_cast<size_t>(perm[i]) * e, e,
                        bc.y1.data() + static_cast<size_t>(i) * e);

        bc.qkv.assign(static_cast<size_t>(t) * 3 * e, 0.0);
        kernels::linear_forward(bc.y1.data(), blk.wqkv.w.data(), blk.bqkv.w.data(),
                                bc.qkv.data(), t, e, 3 * e);

        bc.attn.assign(static_cast<size_t>(nw) * heads * n * n, 0.0);
        bc.attn_out.assign(static_cast<size_t>(t) * e, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
        for (int wi = 0; wi < nw; ++wi) {
            for (int hd2 = 0; hd2 < heads; ++hd2) {
                int base = wi * n;
                double* arow = bc.attn.data() +
                               (static_cast<size_t>(wi) * heads + hd2) * n * n;
                for (int i = 0; i < n; ++i) {
                    const double* qi = bc.qkv.data() + (static_cast<size_t>(base + i)) * 3 * e + hd2 * dh;
                    double mx = -1e300;
                    double* si = arow + static_cast<size_t>(i) * n;
                    for (int j = 0; j < n; ++j) {
                        const double* kj = bc.qkv.data() + (static_cast<size_t>(base + j)) * 3 * e + e + hd2 * dh;
                        double s = 0.0;
                        for (int d = 0; d < dh; ++d) s += qi[d] * kj[d];
                        s = s * scale +
                            blk.relbias.w[static_cast<size_t>(relindex_[static_cast<size_t>(i) * n + j]) * heads + hd2];
                        si[j] = s;
                        mx = std::max(mx, s);
                    }
                    double denom = 0.0;
                    for (int j = 0; j < n; ++j) {
                        si[j] = std::exp(si[j] - mx);
                        denom += si[j];
                    }
                    for (int j = 0; j < n; ++j) si[j] /= denom;
                    double* oi = bc.attn_out.data() + (static_cast<size_t>(base + i)) * e + hd2 * dh;
                    for (int d = 0; d < dh; ++d) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += si[j] *
                                   bc.qkv[(static_cast<size_t>(base + j)) * 3 * e + 2 * e + hd2 * dh + d];
                        oi[d] = acc;
                    }
                }
            }
        }

        std::vector<double> proj(static_cast<size_t>(t) * e);
        kernels::linear_forward(bc.attn_out.data(), blk.wo.w.data(), blk.bo.w.data(),
                                proj.data(), t, e, e);
        // scatter back to row-major order, residual add
#pragma omp parallel for schedule(static)
        for (int i = 0; i < t; ++i) {
            double* xi = x.data() + static_cast<size_t>(perm[i]) * e;
            const double* pi = proj.data() + static_cast<size_t>(i) * e;
            for (int j = 0; j < e; ++j) xi[j] += pi[j];
        }
        bc.x_mid = x;

        bc.xhat2.resize(static_cast<size_t>(t) * e);
        bc.rstd2.resize(t);
        bc.y2.resize(static_cast<size_t>(t) * e);
        layernorm_forward(x.data(), blk.ln2_g.w.data(), blk.ln2_b.w.data(), t, e,
                          bc.y2.data(), bc.xhat2.data(), bc.rstd2.data());
        bc.hidden.assign(static_cast<size_t>(t) * hdim, 0.0);
        kernels::linear_forward(bc.y2.data(), blk.w1.w.data(), blk.b1.w.data(),
                                bc.hidden.data(), t, e, hdim);
        std::vector<double> hr(bc.hidden);
        for (double& v : hr) v = v > 0.0 ? v : 0.0;
        std::vector<double> m(static_cast<size_t>(t) * e);
        kernels::linear_forward(hr.data(), blk.w2.w.data(), blk.b2.w.data(), m.data(), t, hdim, e);
        for (size_t i = 0; i < x.size(); ++i) x[i] += m[i];
    }
    cc.tokens_out = x;

    std::vector<double> out(static_cast<size_t>(t) * cfg_.out_channels);
    kernels::linear_forward(x.data(), out_w_.w.data(), out_b_.w.data(), out.data(), t, e,
                            cfg_.out_channels);
    FeatureMap fm(cfg_.out_channels, h, wdt);
    for (int c = 0; c < cfg_.out_channels; ++c) {
        double* p = fm.plane(c);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < wdt; ++xx)
                p[static_cast<size_t>(y) * wdt + xx] =
                    out[(static_cast<size_t>(y) * wp + xx) * cfg_.out_channels + c];
    }
    return fm;
}

void SwinEncoder::backward(const SwinCache& cc, const FeatureMap& dout, FeatureMap* din) {
    int h = cc.h, wdt = cc.w, hp = cc.hp, wp = cc.wp;
    int w = cfg_.window, e = cfg_.embed_dim, cin = cfg_.in_channels;
    int t = hp * wp, heads = cfg_.num_heads, dh = e / heads, n = w * w, nw = t / n;
    int hdim = e * cfg_.mlp_ratio, co = cfg_.out_channels;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // output projection
    std::vector<double> dtok(static_cast<size_t>(t) * co, 0.0);
    for (int c = 0; c < co; ++c) {
        const double* p = dout.plane(c);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < wdt; ++xx)
                dtok[(static_cast<size_t>(y) * wp + xx) * co + c] =
                    p[static_cast<size_t>(y) * wdt + xx];
    }
    kernels::linear_backward_params(dtok.data(), cc.tokens_out.data(), out_w_.g.data(),
                                    out_b_.g.data(), t, e, co);
    std::vector<double> dx(static_cast<size_t>(t) * e);
    kernels::linear_backward_input(dtok.data(), out_w_.w.data(), dx.data(), t, e, co);

    std::vector<int> perm;
    std::vector<double> ds_buf(static_cast<size_t>(nw) * heads * n * n);
    for (int bi = cfg_.depth - 1; bi >= 0; --bi) {
        Block& blk = blocks_[bi];
        const SwinBlockCache& bc = cc.blocks[bi];
        int shift = (bi % 2 == 1 && w > 1) ? w / 2 : 0;
        build_perm(hp, wp, shift, perm);

        // MLP branch
        std::vector<double> hr(bc.hidden);
        for (double& v : hr) v = v > 0.0 ? v : 0.0;
        kernels::linear_backward_params(dx.data(), hr.data(), blk.w2.g.data(), blk.b2.g.data(),
                                        t, hdim, e);
        std::vector<double> dhr(static_cast<size_t>(t) * hdim);
        kernels::linear_backward_input(dx.data(), blk.w2.w.data(), dhr.data(), t, hdim, e);
        for (size_t i = 0; i < dhr.size(); ++i)
            if (bc.hidden[i] <= 0.0) dhr[i] = 0.0;
        kernels::linear_backward_params(dhr.data(), bc.y2.data(), blk.w1.g.data(), blk.b1.g.data(),
                                        t, e, hdim);
        std::vector<double> dy2(static_cast<size_t>(t) * e);
        kernels::linear_backward_input(dhr.data(), blk.w1.w.data(), dy2.data(), t, e, hdim);
        std::vector<double> dx_mid(static_cast<size_t>(t) * e);
        layernorm_backward(dy2.data(), bc.xhat2.data(), bc.rstd2.data(), blk.ln2_g.w.data(), t, e,
                           dx_mid.data(), blk.ln2_g.g.data(), blk.ln2_b.g.data());
        for (size_t i = 0; i < dx.size(); ++i) dx_mid[i] += dx[i];

        // attention branch: gather residual grad into windowed order
        std::vector<double> dproj(static_cast<size_t>(t) * e);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < t; ++i)
            std::copy_n(dx_mid.data() + static_cast<size_t>(perm[i]) * e, e,
                        dproj.data() + static_cast<size_t>(i) * e);
        kernels::linear_backward_params(dproj.data(), bc.attn_out.data(), blk.wo.g.data(),
                                        blk.bo.g.data(), t, e, e);
        std::vector<double> dao(static_cast<size_t>(t) * e);
        kernels::linear_backward_input(dproj.data(), blk.wo.w.data(), dao.data(), t, e, e);

        std::vector<double> dqkv(static_cast<size_t>(t) * 3 * e, 0.0);
#pragma omp parallel for collapse(2) schedule(static)
        for (int wi = 0; wi < nw; ++wi) {
            for (int hd2 = 0; hd2 < heads; ++hd2) {
                int base = wi * n;
                const double* arow = bc.attn.data() +
                                     (static_cast<size_t>(wi) * heads + hd2) * n * n;
                double* dsrow = ds_buf.data() + (static_cast<size_t>(wi) * heads + hd2) * n * n;
                for (int i = 0; i < n; ++i) {
                    const double* ai = arow + static_cast<size_t>(i) * n;
                    double* dsi = dsrow + static_cast<size_t>(i) * n;
                    const double* daoi = dao.data() + (static_cast<size_t>(base + i)) * e + hd2 * dh;
                    // dA then softmax adjoint
                    double dot = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double* vj = bc.qkv.data() +
                                           (static_cast<size_t>(base + j)) * 3 * e + 2 * e + hd2 * dh;
                        double da = 0.0;
                        for (int d = 0; d < dh; ++d) da += daoi[d] * vj[d];
                        dsi[j] = da;
                        dot += da * ai[j];
                    }
                    for (int j = 0; j < n; ++j) dsi[j] = ai[j] * (dsi[j] - dot);
                }
                // dQ
                for (int i = 0; i < n; ++i) {
                    const double* dsi = dsrow + static_cast<size_t>(i) * n;
                    double* dqi = dqkv.data() + (static_cast<size_t>(base + i)) * 3 * e + hd2 * dh;
                    for (int d = 0; d < dh; ++d) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += dsi[j] *
                                   bc.qkv[(static_cast<size_t>(base + j)) * 3 * e + e + hd2 * dh + d];
                        dqi[d] += acc * scale;
                    }
                }
                // dK, dV
                for (int j = 0; j < n; ++j) {
                    double* dkj = dqkv.data() + (static_cast<size_t>(base + j)) * 3 * e + e + hd2 * dh;
                    double* dvj = dqkv.data() + (static_cast<size_t>(base + j)) * 3 * e + 2 * e + hd2 * dh;
                    for (int d = 0; d < dh; ++d) {
                        double ak = 0.0, av = 0.0;
                        for (int i = 0; i < n; ++i) {
                            double ds = dsrow[static_cast<size_t>(i) * n + j];
                            ak += ds * bc.qkv[(static_cast<size_t>(base + i)) * 3 * e + hd2 * dh + d];
                            av += arow[static_cast<size_t>(i) * n + j] *
                                  dao[(static_cast<size_t>(base + i)) * e + hd2 * dh + d];
                        }
                        dkj[d] += ak * scale;
                        dvj[d] += av;
                    }
                }
            }
        }
        // relative position bias grads, fixed window order per head
#pragma omp parallel for schedule(static)
        for (int hd2 = 0; hd2 < heads; ++hd2) {
            for (int wi = 0; wi < nw; ++wi) {
                const double* dsrow = ds_buf.data() + (static_cast<size_t>(wi) * heads + hd2) * n * n;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        blk.relbias.g[static_cast<size_t>(relindex_[static_cast<size_t>(i) * n + j]) * heads + hd2] +=
                            dsrow[static_cast<size_t>(i) * n + j];
            }
        }

        kernels::linear_backward_params(dqkv.data(), bc.y1.data(), blk.wqkv.g.data(),
                                        blk.bqkv.g.data(), t, e, 3 * e);
        std::vector<double> dy1w(static_cast<size_t>(t) * e);
        kernels::linear_backward_input(dqkv.data(), blk.wqkv.w.data(), dy1w.data(), t, e, 3 * e);
        std::vector<double> dy1(static_cast<size_t>(t) * e);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < t; ++i)
            std::copy_n(dy1w.data() + static_cast<size_t>(i) * e, e,
                        dy1.data() + static_cast<size_t>(perm[i]) * e);
        std::vector<double> dx_in(static_cast<size_t>(t) * e);
        layernorm_backward(dy1.data(), bc.xhat1.data(), bc.rstd1.data(), blk.ln1_g.w.data(), t, e,
                           dx_in.data(), blk.ln1_g.g.data(), blk.ln1_b.g.data());
        for (size_t i = 0; i < dx.size(); ++i) dx[i] = dx_mid[i] + dx_in[i];
    }

    // input projection
    kernels::linear_backward_params(dx.data(), cc.img_padded.data(), in_w_.g.data(),
                                    in_b_.g.data(), t, cin, e);
    if (din) {
        std::vector<double> dimg(static_cast<size_t>(t) * cin);
        kernels::linear_backward_input(dx.data(), in_w_.w.data(), dimg.data(), t, cin, e);
        *din = FeatureMap(cin, h, wdt);
        for (int y = 0; y < hp; ++y) {
            int ys = std::min(y, h - 1);
            for (int x = 0; x < wp; ++x) {
                int xs = std::min(x, wdt - 1);
                for (int c = 0; c < cin; ++c)
                    din->at(c, ys, xs) += dimg[(static_cast<size_t>(y) * wp + x) * cin + c];
            }
        }
    }
}

ParamRefs SwinEncoder::params() {
    ParamRefs ps{&in_w_, &in_b_};
    for (Block& b : blocks_) {
        ps.push_back(&b.ln1_g);
        ps.push_back(&b.ln1_b);
        ps.push_back(&b.wqkv);
        ps.push_back(&b.bqkv);
        ps.push_back(&b.wo);
        ps.push_back(&b.bo);
        ps.push_back(&b.relbias);
        ps.push_back(&b.ln2_g);
        ps.push_back(&b.ln2_b);
        ps.push_back(&b.w1);
        ps.push_back(&b.b1);
        ps.push_back(&b.w2);
        ps.push_back(&b.b2);
    }
    ps.push_back(&out_w_);
    ps.push_back(&out_b_);
    return ps;
}

}  // namespace stainer
