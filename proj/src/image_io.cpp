#include "stainer/image_io.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace stainer {

RasterImage load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw std::runtime_error("load_image: cannot read " + path);
    int ch = m.channels();
    if (ch != 1 && ch != 3 && ch != 4)
        throw std::runtime_error("load_image: unsupported channel count in " + path);
    int out_ch = ch == 1 ? 1 : 3;  // alpha dropped
    double maxval;
    switch (m.depth()) {
        case CV_8U: maxval = 255.0; break;
        case CV_16U: maxval = 65535.0; break;
        default: throw std::runtime_error("load_image: unsupported bit depth in " + path);
    }
    RasterImage out(m.rows, m.cols, out_ch);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            for (int k = 0; k < out_ch; ++k) {
                double v;
                if (m.depth() == CV_8U)
                    v = ch == 1 ? m.at<uchar>(r, c) : m.ptr<uchar>(r)[c * ch + k];
                else
                    v = ch == 1 ? m.at<ushort>(r, c) : m.ptr<ushort>(r)[c * ch + k];
                // OpenCV loads BGR; store as RGB
                int dst = out_ch == 3 ? 2 - k : 0;
                out.at(r, c, dst) = v / maxval;
            }
        }
    }
    return out;
}

static double quantize(double v, double maxval) {
    v = std::clamp(v, 0.0, 1.0) * maxval;
    return std::round(v);  // std::round is half-away-from-zero
}

void save_image(const RasterImage& img, const std::string& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument("save_image: bit depth must be 8 or 16");
    double maxval = bit_depth == 8 ? 255.0 : 65535.0;
    int type = bit_depth == 8 ? CV_8UC(img.channels) : CV_16UC(img.channels);
    cv::Mat m(img.height, img.width, type);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            for (int k = 0; k < img.channels; ++k) {
                int src = img.channels == 3 ? 2 - k : 0;  // RGB -> BGR
                double q = quantize(img.at(r, c, src), maxval);
                if (bit_depth == 8) {
                    if (img.channels == 1) m.at<uchar>(r, c) = static_cast<uchar>(q);
                    else m.at<cv::Vec3b>(r, c)[k] = static_cast<uchar>(q);
                } else {
                    if (img.channels == 1) m.at<ushort>(r, c) = static_cast<ushort>(q);
                    else m.at<cv::Vec3w>(r, c)[k] = static_cast<ushort>(q);
                }
            }
        }
    }
    if (!cv::imwrite(path, m))
        throw std::runtime_error("save_image: cannot write " + path);
}

}  // namespace stainer
