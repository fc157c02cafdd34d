#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stainer {

// H x W x c image, interleaved (channel fastest), values nominally in [0,1].
struct RasterImage {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    RasterImage() = default;
    RasterImage(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {
        if (h < 1 || w < 1 || c < 1)
            throw std::invalid_argument("RasterImage: dims must be >= 1");
    }

    double& at(int r, int c, int ch) {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    double at(int r, int c, int ch) const {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    size_t size() const { return data.size(); }
    bool same_shape(const RasterImage& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

// C x H x W planar feature tensor at full spatial resolution.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double* plane(int c) { return data.data() + static_cast<size_t>(c) * height * width; }
    const double* plane(int c) const { return data.data() + static_cast<size_t>(c) * height * width; }
};

// H' x W' grid of normalized sample locations, components in (-1,1).
// coords stores (x, y) pairs row-major.
struct CoordinateGrid {
    int height = 0;
    int width = 0;
    std::vector<double> coords;

    double x(int i, int j) const { return coords[(static_cast<size_t>(i) * width + j) * 2]; }
    double y(int i, int j) const { return coords[(static_cast<size_t>(i) * width + j) * 2 + 1]; }
};

// Cell-center convention: pixel (i,j) maps to (-1 + (2j+1)/W, -1 + (2i+1)/H).
CoordinateGrid make_grid(int height, int width);

// Inverse of make_grid on exact grid points; out-of-range coords clamp to the border.
std::pair<int, int> nearest_pixel(double x, double y, int height, int width);

// Flattened (2r+1)^2 neighborhood around `pixel`, replicate padding at borders.
// Ordering: channel-major, then row-major within the window.
std::vector<double> extract_window(const FeatureMap& fm, int row, int col, int radius);

// In-place variant writing into `out` (length channels*(2r+1)^2).
void extract_window_into(const FeatureMap& fm, int row, int col, int radius, double* out);

// Adjoint of extract_window: scatter-adds a window gradient back into `grad`.
void scatter_window(FeatureMap& grad, int row, int col, int radius, const double* wgrad);

// Bilinear resize, used by perceptual networks and the synthetic LR tasks.
RasterImage bilinear_resize(const RasterImage& img, int out_h, int out_w);

}  // namespace stainer
