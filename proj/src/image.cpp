#include "stainer/image.hpp"

#include <algorithm>
#include <cmath>

namespace stainer {

CoordinateGrid make_grid(int height, int width) {
    if (height < 1 || width < 1)
        throw std::invalid_argument("make_grid: dimensions must be >= 1");
    CoordinateGrid g;
    g.height = height;
    g.width = width;
    g.coords.resize(static_cast<size_t>(height) * width * 2);
    for (int i = 0; i < height; ++i) {
        double yv = -1.0 + (2.0 * i + 1.0) / height;
        for (int j = 0; j < width; ++j) {
            double xv = -1.0 + (2.0 * j + 1.0) / width;
            g.coords[(static_cast<size_t>(i) * width + j) * 2] = xv;
            g.coords[(static_cast<size_t>(i) * width + j) * 2 + 1] = yv;
        }
    }
    return g;
}

static int nearest_index(double t, int n) {
    int idx = static_cast<int>(std::lround((t + 1.0) * n / 2.0 - 0.5));
    return std::clamp(idx, 0, n - 1);
}

std::pair<int, int> nearest_pixel(double x, double y, int height, int width) {
    return {nearest_index(y, height), nearest_index(x, width)};
}

void extract_window_into(const FeatureMap& fm, int row, int col, int radius, double* out) {
    if (radius < 0) throw std::invalid_argument("extract_window: radius must be >= 0");
    int k = 0;
    for (int c = 0; c < fm.channels; ++c) {
        const double* p = fm.plane(c);
        for (int dy = -radius; dy <= radius; ++dy) {
            int y = std::clamp(row + dy, 0, fm.height - 1);
            for (int dx = -radius; dx <= radius; ++dx) {
                int x = std::clamp(col + dx, 0, fm.width - 1);
                out[k++] = p[static_cast<size_t>(y) * fm.width + x];
            }
        }
    }
}

std::vector<double> extract_window(const FeatureMap& fm, int row, int col, int radius) {
    if (radius < 0) throw std::invalid_argument("extract_window: radius must be >= 0");
    int side = 2 * radius + 1;
    std::vector<double> out(static_cast<size_t>(fm.channels) * side * side);
    extract_window_into(fm, row, col, radius, out.data());
    return out;
}

void scatter_window(FeatureMap& grad, int row, int col, int radius, const double* wgrad) {
    int k = 0;
    for (int c = 0; c < grad.channels; ++c) {
        double* p = grad.plane(c);
        for (int dy = -radius; dy <= radius; ++dy) {
            int y = std::clamp(row + dy, 0, grad.height - 1);
            for (int dx = -radius; dx <= radius; ++dx) {
                int x = std::clamp(col + dx, 0, grad.width - 1);
                p[static_cast<size_t>(y) * grad.width + x] += wgrad[k++];
            }
        }
    }
}

RasterImage bilinear_resize(const RasterImage& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bilinear_resize: dims must be >= 1");
    RasterImage out(out_h, out_w, img.channels);
    double sy = static_cast<double>(img.height) / out_h;
    double sx = static_cast<double>(img.width) / out_w;
    for (int i = 0; i < out_h; ++i) {
        double fy = (i + 0.5) * sy - 0.5;
        int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.height - 1);
        int y1 = std::min(y0 + 1, img.height - 1);
        double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int j = 0; j < out_w; ++j) {
            double fx = (j + 0.5) * sx - 0.5;
            int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.width - 1);
            int x1 = std::min(x0 + 1, img.width - 1);
            double wx = std::clamp(fx - x0, 0.0, 1.0);
            for (int c = 0; c < img.channels; ++c) {
                double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
                           wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
                out.at(i, j, c) = v;
            }
        }
    }
    return out;
}

}  // namespace stainer
