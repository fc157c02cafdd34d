#include "stainer/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stainer {

RasterImage translate(const RasterImage& image, const ImplicitModel& model,
                      const InferenceOptions& opts) {
    int out_h = static_cast<int>(std::lround(opts.scale * image.height));
    int out_w = static_cast<int>(std::lround(opts.scale * image.width));
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("translate: scale yields empty output");

    if (opts.tile <= 0 || (opts.tile >= image.height && opts.tile >= image.width))
        return model.predict_grid(image, make_grid(out_h, out_w));

    if (opts.overlap >= opts.tile)
        throw std::invalid_argument("translate: overlap must be smaller than tile");
    int c = model.config().out_channels;
    RasterImage acc(out_h, out_w, c);
    std::vector<double> weight(static_cast<size_t>(out_h) * out_w, 0.0);

    int step = opts.tile - opts.overlap;
    auto starts = [&](int extent) {
        std::vector<int> s;
        int t = std::min(opts.tile, extent);
        for (int v = 0;; v += step) {
            if (v + t >= extent) {
                s.push_back(extent - t);
                break;
            }
            s.push_back(v);
        }
        return s;
    };

    for (int y0 : starts(image.height)) {
        for (int x0 : starts(image.width)) {
            int th = std::min(opts.tile, image.height);
            int tw = std::min(opts.tile, image.width);
            RasterImage sub(th, tw, image.channels);
            for (int i = 0; i < th; ++i)
                for (int j = 0; j < tw; ++j)
                    for (int k = 0; k < image.channels; ++k)
                        sub.at(i, j, k) = image.at(y0 + i, x0 + j, k);
            int oh = static_cast<int>(std::lround(opts.scale * th));
            int ow = static_cast<int>(std::lround(opts.scale * tw));
            RasterImage pred = model.predict_grid(sub, make_grid(oh, ow));
            int oy = static_cast<int>(std::lround(opts.scale * y0));
            int ox = static_cast<int>(std::lround(opts.scale * x0));
            for (int i = 0; i < oh && oy + i < out_h; ++i)
                for (int j = 0; j < ow && ox + j < out_w; ++j) {
                    for (int k = 0; k < c; ++k) acc.at(oy + i, ox + j, k) += pred.at(i, j, k);
                    weight[static_cast<size_t>(oy + i) * out_w + ox + j] += 1.0;
                }
        }
    }
    for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
            double wv = weight[static_cast<size_t>(i) * out_w + j];
            for (int k = 0; k < c; ++k) acc.at(i, j, k) /= wv;
        }
    return acc;
}

}  // namespace stainer
