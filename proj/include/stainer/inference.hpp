#pragma once

#include "stainer/model.hpp"

namespace stainer {

struct InferenceOptions {
    double scale = 1.0;
    int tile = 0;      // 0 = whole image in one pass
    int overlap = 32;  // tile overlap in input pixels; overlapping outputs averaged
};

// Deterministic translation at round(scale*H) x round(scale*W).
RasterImage translate(const RasterImage& image, const ImplicitModel& model,
                      const InferenceOptions& opts = {});

}  // namespace stainer
