#include "stainer/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "stainer/optimizer.hpp"

namespace stainer {

std::vector<PairedPatch> make_patches(const RasterImage& source, const RasterImage& target,
                                      int patch, int stride) {
    if (!source.same_shape(target) &&
        !(source.height == target.height && source.width == target.width))
        throw std::invalid_argument("make_patches: source/target spatial dims differ");
    if (patch < 1 || stride < 1) throw std::invalid_argument("make_patches: bad patch/stride");
    std::vector<PairedPatch> out;
    if (patch > source.height || patch > source.width) return out;  // remainder-drop rule
    int idx = 0;
    for (int y = 0; y + patch <= source.height; y += stride) {
        for (int x = 0; x + patch <= source.width; x += stride) {
            PairedPatch p;
            p.source = RasterImage(patch, patch, source.channels);
            p.target = RasterImage(patch, patch, target.channels);
            for (int i = 0; i < patch; ++i)
                for (int j = 0; j < patch; ++j) {
                    for (int c = 0; c < source.channels; ++c)
                        p.source.at(i, j, c) = source.at(y + i, x + j, c);
                    for (int c = 0; c < target.channels; ++c)
                        p.target.at(i, j, c) = target.at(y + i, x + j, c);
                }
            p.id = "patch_" + std::to_string(idx++);
            out.push_back(std::move(p));
        }
    }
    return out;
}

namespace {

struct CoordBatch {
    std::vector<int> pixel_index;  // into H*W raster order
    std::vector<double> rows;      // [m, d+p]
    int m = 0;
};

CoordBatch build_rows(const ImplicitModel& model, const FeatureMap& features, int h, int w,
                      const std::vector<int>& idx) {
    CoordBatch cb;
    cb.pixel_index = idx;
    cb.m = static_cast<int>(idx.size());
    int din = model.mlp().input_dim();
    cb.rows.resize(static_cast<size_t>(cb.m) * din);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < cb.m; ++i) {
        int iy = idx[i] / w, ix = idx[i] % w;
        double cx = -1.0 + (2.0 * ix + 1.0) / w;
        double cy = -1.0 + (2.0 * iy + 1.0) / h;
        model.build_row(features, cx, cy, cb.rows.data() + static_cast<size_t>(i) * din);
    }
    return cb;
}

std::vector<int> all_indices(int n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

std::vector<int> sample_indices(int n, double fraction, std::mt19937_64& rng) {
    int m = std::max(1, static_cast<int>(std::lround(fraction * n)));
    std::vector<int> idx = all_indices(n);
    for (int i = 0; i < m; ++i) {  // partial Fisher-Yates
        std::uniform_int_distribution<int> d(i, n - 1);
        std::swap(idx[i], idx[d(rng)]);
    }
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Backprop one coordinate pass: MLP backward, window scatter, pos-embed grads.
void backprop_rows(ImplicitModel& model, const CoordBatch& cb, MLPCache& cache,
                   const std::vector<double>& dout, int h, int w, FeatureMap& dfeat) {
    int din = model.mlp().input_dim();
    int d = model.config().feature_dim();
    int r = model.config().radius;
    std::vector<double> dx(static_cast<size_t>(cb.m) * din);
    model.mlp().backward(cache, dout.data(), dx.data());
    for (int i = 0; i < cb.m; ++i) {
        int iy = cb.pixel_index[i] / w, ix = cb.pixel_index[i] % w;
        double cx = -1.0 + (2.0 * ix + 1.0) / w;
        double cy = -1.0 + (2.0 * iy + 1.0) / h;
        auto [pr, pc] = nearest_pixel(cx, cy, dfeat.height, dfeat.width);
        scatter_window(dfeat, pr, pc, r, dx.data() + static_cast<size_t>(i) * din);
        model.pos().backward(cx, cy, dx.data() + static_cast<size_t>(i) * din + d);
    }
}

StepLoss process_batch(ImplicitModel& model, const std::vector<const PairedPatch*>& batch,
                       const std::vector<PerceptualNetworkSpec>& specs,
                       CoordSampling sampling, double fraction, std::mt19937_64& rng,
                       bool with_grads) {
    if (batch.empty()) throw std::invalid_argument("training: empty batch");
    bool perc_active = std::any_of(specs.begin(), specs.end(),
                                   [](const PerceptualNetworkSpec& s) { return s.lambda > 0.0; });
    double bw = 1.0 / batch.size();
    StepLoss loss;
    int c = model.config().out_channels;
    for (const PairedPatch* patch : batch) {
        int h = patch->target.height, w = patch->target.width;
        int n = h * w;
        EncodeCaches caches;
        FeatureMap features = model.encode(patch->source, with_grads ? &caches : nullptr);
        FeatureMap dfeat(features.channels, features.height, features.width);

        bool full = sampling == CoordSampling::full_grid;
        std::vector<int> idx = full ? all_indices(n) : sample_indices(n, fraction, rng);
        CoordBatch cb = build_rows(model, features, h, w, idx);
        MLPCache cache;
        std::vector<double> out =
            model.mlp().forward(cb.rows.data(), cb.m, with_grads ? &cache : nullptr);

        // L1 on the sampled coordinates
        double l1 = 0.0;
        std::vector<double> dout(out.size(), 0.0);
        double inv = bw / (static_cast<double>(cb.m) * c);
        for (int i = 0; i < cb.m; ++i) {
            const double* tgt = patch->target.data.data() + static_cast<size_t>(cb.pixel_index[i]) * c;
            for (int k = 0; k < c; ++k) {
                double d = out[static_cast<size_t>(i) * c + k] - tgt[k];
                l1 += std::fabs(d);
                dout[static_cast<size_t>(i) * c + k] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
            }
        }
        l1 /= static_cast<double>(cb.m) * c;
        loss.implicit += bw * l1;

        // perceptual on the full-grid prediction
        double pl = 0.0;
        if (perc_active) {
            CoordBatch cbf;
            MLPCache cachef;
            std::vector<double>* pred_vals = &out;
            std::vector<double> outf;
            CoordBatch* pred_cb = &cb;
            MLPCache* pred_cache = &cache;
            if (!full) {
                cbf = build_rows(model, features, h, w, all_indices(n));
                outf = model.mlp().forward(cbf.rows.data(), cbf.m, with_grads ? &cachef : nullptr);
                pred_vals = &outf;
                pred_cb = &cbf;
                pred_cache = &cachef;
            }
            RasterImage pred(h, w, c);
            pred.data.assign(pred_vals->begin(), pred_vals->end());
            if (with_grads) {
                RasterImage dpred(h, w, c);
                pl = perceptual_loss_backward(pred, patch->target, specs, &dpred, 1.0);
                if (full) {
                    for (size_t i = 0; i < dout.size(); ++i) dout[i] += bw * dpred.data[i];
                } else {
                    std::vector<double> doutf(dpred.data.size());
                    for (size_t i = 0; i < doutf.size(); ++i) doutf[i] = bw * dpred.data[i];
                    backprop_rows(model, *pred_cb, *pred_cache, doutf, h, w, dfeat);
                }
            } else {
                pl = perceptual_loss(pred, patch->target, specs);
            }
            loss.perceptual += bw * pl;
        }

        if (with_grads) {
            backprop_rows(model, cb, cache, dout, h, w, dfeat);
            model.encode_backward(caches, dfeat);
        }
    }
    loss.total = loss.implicit + loss.perceptual;
    return loss;
}

}  // namespace

StepLoss compute_batch_gradients(ImplicitModel& model,
                                 const std::vector<const PairedPatch*>& batch,
                                 const std::vector<PerceptualNetworkSpec>& specs,
                                 CoordSampling sampling, double fraction,
                                 std::mt19937_64& rng) {
    return process_batch(model, batch, specs, sampling, fraction, rng, true);
}

StepLoss evaluate_batch_loss(ImplicitModel& model,
                             const std::vector<const PairedPatch*>& batch,
                             const std::vector<PerceptualNetworkSpec>& specs,
                             CoordSampling sampling, double fraction, std::mt19937_64& rng) {
    return process_batch(model, batch, specs, sampling, fraction, rng, false);
}

TrainResult train_model(ImplicitModel& model, const std::vector<PairedPatch>& dataset,
                        const TrainConfig& cfg,
                        const std::vector<PerceptualNetworkSpec>& specs,
                        const std::function<void(int, const ImplicitModel&)>& on_checkpoint) {
    if (dataset.empty()) throw std::invalid_argument("train_model: empty dataset");
    for (const PairedPatch& p : dataset) {
        if (p.source.channels != model.config().in_channels ||
            p.target.channels != model.config().out_channels)
            throw std::invalid_argument("train_model: channel mismatch in patch " + p.id);
    }
    if (cfg.learning_rate < 0.0) throw std::invalid_argument("train_model: learning_rate < 0");
    if (cfg.fraction <= 0.0 || cfg.fraction > 1.0)
        throw std::invalid_argument("train_model: fraction must be in (0,1]");

    int n = static_cast<int>(dataset.size());
    int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    int total_steps = cfg.steps > 0 ? cfg.steps : cfg.epochs * steps_per_epoch;

    std::mt19937_64 order_rng(cfg.seed);
    std::mt19937_64 coord_rng(cfg.seed + 0x9e3779b97f4a7c15ull);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    ParamRefs ps = model.params();
    AdamOptimizer opt(ps, cfg.learning_rate);

    TrainResult result;
    int cursor = n;  // forces an initial shuffle
    for (int step = 0; step < total_steps; ++step) {
        std::vector<const PairedPatch*> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= n) {
                std::shuffle(order.begin(), order.end(), order_rng);
                cursor = 0;
            }
            batch.push_back(&dataset[order[cursor++]]);
        }
        zero_grads(ps);
        StepLoss loss = compute_batch_gradients(model, batch, specs, cfg.coord_sampling,
                                                cfg.fraction, coord_rng);
        if (!std::isfinite(loss.total))
            throw std::runtime_error("train_model: non-finite loss at step " +
                                     std::to_string(step) + " (batch head " + batch[0]->id + ")");
        if (cfg.learning_rate > 0.0) opt.step();
        loss.step = step;
        result.history.push_back(loss);
        if (cfg.checkpoint_every > 0 && on_checkpoint && (step + 1) % cfg.checkpoint_every == 0)
            on_checkpoint(step + 1, model);
    }
    return result;
}

void write_loss_history_csv(const TrainResult& result, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "step,implicit_loss,perceptual_loss,total\n";
    for (const StepLoss& s : result.history)
        f << s.step << "," << s.implicit << "," << s.perceptual << "," << s.total << "\n";
}

}  // namespace stainer
