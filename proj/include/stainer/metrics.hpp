#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stainer/image.hpp"

namespace stainer {

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;  // 0/1

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0) {}
    uint8_t& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    uint8_t at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    size_t count() const;
};

struct TextureMetrics {
    double psnr = 0.0;  // dB, 8-bit dynamic range, capped at 100 when MSE = 0
    double ssim = 0.0;
    double mse = 0.0;   // squared 8-bit intensity
};

// Metrics are computed on 8-bit-quantized intensities scaled to [0,255].
TextureMetrics texture_metrics(const RasterImage& pred, const RasterImage& ref);

struct OtsuResult {
    double threshold = 0.0;  // in [0,1]
    bool degenerate = false; // single-valued image; downstream masks are empty
};

// 256-bin histogram threshold maximizing between-class variance; ties break low.
OtsuResult otsu_threshold(const RasterImage& gray);

// Mask of pixels >= threshold; empty when degenerate.
BinaryMask binarize(const RasterImage& gray, const OtsuResult& otsu);

struct MorphologyParams {
    int dilate_size = 3;
    int dilate_iterations = 1;
    int median_size = 3;
};

BinaryMask dilate(const BinaryMask& m, int size, int iterations);
BinaryMask median_filter(const BinaryMask& m, int size);  // zero padding, majority rule

struct MifMasks {
    BinaryMask dapi;   // red channel
    BinaryMask cd3;    // blue channel
    BinaryMask panck;  // green channel
};

// Per channel: Otsu -> binarize -> dilation -> median filter.
MifMasks mif_channel_masks(const RasterImage& image, const MorphologyParams& morph = {});

// Ruifrok-Johnston H/E/DAB stain vectors, row-normalized:
//   H   (0.65, 0.70, 0.29)
//   E   (0.07, 0.99, 0.11)
//   DAB (0.27, 0.57, 0.78)
// OD = -log10(I + eps), eps = 1/255; concentrations = OD * inverse(M),
// negatives clamped to 0. Output channels are (H, E, DAB).
RasterImage color_deconvolution(const RasterImage& rgb);

// Beer-Lambert forward model consistent with the deconvolution epsilon:
// I = 10^{-(conc*M)} - eps, so color_deconvolution recovers the inputs
// exactly. Values can dip slightly below zero for very dense stains; clamp
// before display if needed. Used to synthesize IHC-like inputs.
RasterImage beer_lambert_forward(const RasterImage& concentrations);

// DAB channel -> min-max normalize -> Otsu -> binarize. Degenerate -> empty.
BinaryMask ihc_dab_mask(const RasterImage& image);

struct SegmentationMetrics {
    double dice = 0.0;
    double iou = 0.0;
    double hd = 0.0;  // symmetric Hausdorff, Euclidean pixels
    double tpr = 0.0;
    double tnr = 0.0;
};

// Empty-mask conventions: both empty -> dice=iou=1, hd=0; exactly one empty ->
// dice=iou=0, hd = image diagonal sentinel.
SegmentationMetrics segmentation_metrics(const BinaryMask& pred, const BinaryMask& ref);

// Exact Euclidean distance transform (squared distances), used for Hausdorff.
std::vector<double> squared_distance_transform(const BinaryMask& m);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    virtual std::vector<double> embed(const RasterImage& img) const = 0;
};

// Flattened pixel values (sets must share dimensions).
std::unique_ptr<Embedder> make_identity_embedder();
// Lightweight fixed random conv embedder: resize to 32x32, two conv layers,
// per-channel mean and std pooling. Ships so no external weights are needed.
std::unique_ptr<Embedder> make_tinyconv_embedder(int in_channels);

struct DistributionMetrics {
    double fid = 0.0;
    std::string embedder_id;
    bool covariance_regularized = false;
};

DistributionMetrics distribution_metrics(const std::vector<RasterImage>& pred_set,
                                         const std::vector<RasterImage>& ref_set,
                                         const Embedder& embedder);

// Frechet distance between Gaussian fits of two embedded sets.
double frechet_distance(const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b,
                        bool* regularized = nullptr);

}  // namespace stainer
