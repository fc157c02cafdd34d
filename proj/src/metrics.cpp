#include "stainer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "stainer/conv_encoder.hpp"
#include "stainer/kernels.hpp"

namespace stainer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline int quantize8(double v) {
    double q = std::round(v * 255.0);
    return static_cast<int>(std::clamp(q, 0.0, 255.0));
}

// Gaussian-weighted SSIM on 8-bit intensities, averaged over channels and over
// window positions fully inside the image.
double ssim_value(const RasterImage& pred, const RasterImage& ref) {
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    int win = std::min({11, pred.height, pred.width});
    if (win % 2 == 0) win -= 1;
    int half = win / 2;
    const double sigma = 1.5;

    std::vector<double> kern(static_cast<size_t>(win) * win);
    double ks = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            double dy = i - half, dx = j - half;
            double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            kern[static_cast<size_t>(i) * win + j] = v;
            ks += v;
        }
    for (double& v : kern) v /= ks;

    double total = 0.0;
    size_t count = 0;
    for (int ch = 0; ch < pred.channels; ++ch) {
        for (int y = half; y + half < pred.height; ++y) {
            for (int x = half; x + half < pred.width; ++x) {
                double m1 = 0, m2 = 0, s11 = 0, s22 = 0, s12 = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        double k = kern[static_cast<size_t>(i) * win + j];
                        double a = quantize8(pred.at(y + i - half, x + j - half, ch));
                        double b = quantize8(ref.at(y + i - half, x + j - half, ch));
                        m1 += k * a;
                        m2 += k * b;
                        s11 += k * a * a;
                        s22 += k * b * b;
                        s12 += k * a * b;
                    }
                double v1 = s11 - m1 * m1;
                double v2 = s22 - m2 * m2;
                double cov = s12 - m1 * m2;
                double num = (2.0 * m1 * m2 + c1) * (2.0 * cov + c2);
                double den = (m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2);
                total += num / den;
                ++count;
            }
        }
    }
    return count ? total / count : 1.0;
}

// Large finite stand-in for "no source pixel"; keeps the lower-envelope
// algorithm exact for real sites while dominating any true distance.
constexpr double kFar = 1e18;

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void dt1d(const double* f, int n, double* d) {
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                   (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

size_t BinaryMask::count() const {
    return static_cast<size_t>(std::count(data.begin(), data.end(), uint8_t{1}));
}

TextureMetrics texture_metrics(const RasterImage& pred, const RasterImage& ref) {
    if (!pred.same_shape(ref))
        throw std::invalid_argument("texture_metrics: shape mismatch");
    TextureMetrics tm;
    double se = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        double d = quantize8(pred.data[i]) - quantize8(ref.data[i]);
        se += d * d;
    }
    tm.mse = se / pred.data.size();
    tm.psnr = tm.mse == 0.0 ? 100.0
                            : std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / tm.mse));
    tm.ssim = ssim_value(pred, ref);
    return tm;
}

OtsuResult otsu_threshold(const RasterImage& gray) {
    if (gray.channels != 1)
        throw std::invalid_argument("otsu_threshold: expects a single-channel image");
    long hist[256] = {0};
    for (double v : gray.data) ++hist[quantize8(v)];
    long n = static_cast<long>(gray.data.size());

    double total_mean = 0.0;
    int occupied = 0, only_bin = 0;
    for (int b = 0; b < 256; ++b) {
        total_mean += static_cast<double>(hist[b]) * b;
        if (hist[b] > 0) {
            ++occupied;
            only_bin = b;
        }
    }
    total_mean /= n;

    OtsuResult res;
    if (occupied <= 1) {
        res.threshold = only_bin / 255.0;
        res.degenerate = true;
        return res;
    }

    double best = -1.0;
    int best_t = 0;
    long w0 = 0;
    double sum0 = 0.0;
    for (int t = 0; t < 255; ++t) {
        w0 += hist[t];
        sum0 += static_cast<double>(hist[t]) * t;
        long w1 = n - w0;
        if (w0 == 0 || w1 == 0) continue;
        double mu0 = sum0 / w0;
        double mu1 = (total_mean * n - sum0) / w1;
        double var = static_cast<double>(w0) * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best) {  // strict: ties resolve to the lowest threshold
            best = var;
            best_t = t;
        }
    }
    res.threshold = (best_t + 0.5) / 255.0;
    return res;
}

BinaryMask binarize(const RasterImage& gray, const OtsuResult& otsu) {
    if (gray.channels != 1)
        throw std::invalid_argument("binarize: expects a single-channel image");
    BinaryMask m(gray.height, gray.width);
    if (otsu.degenerate) return m;
    for (size_t i = 0; i < gray.data.size(); ++i)
        m.data[i] = gray.data[i] >= otsu.threshold ? 1 : 0;
    return m;
}

BinaryMask dilate(const BinaryMask& m, int size, int iterations) {
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("dilate: size must be odd and positive");
    int half = size / 2;
    BinaryMask cur = m;
    for (int it = 0; it < iterations; ++it) {
        BinaryMask next(cur.height, cur.width);
#pragma omp parallel for schedule(static)
        for (int y = 0; y < cur.height; ++y)
            for (int x = 0; x < cur.width; ++x) {
                uint8_t v = 0;
                for (int i = -half; i <= half && !v; ++i)
                    for (int j = -half; j <= half; ++j) {
                        int yy = y + i, xx = x + j;
                        if (yy < 0 || yy >= cur.height || xx < 0 || xx >= cur.width) continue;
                        if (cur.at(yy, xx)) {
                            v = 1;
                            break;
                        }
                    }
                next.at(y, x) = v;
            }
        cur = std::move(next);
    }
    return cur;
}

BinaryMask median_filter(const BinaryMask& m, int size) {
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("median_filter: size must be odd and positive");
    int half = size / 2;
    int majority = (size * size) / 2 + 1;  // zero padding outside
    BinaryMask out(m.height, m.width);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            int ones = 0;
            for (int i = -half; i <= half; ++i)
                for (int j = -half; j <= half; ++j) {
                    int yy = y + i, xx = x + j;
                    if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width) continue;
                    ones += m.at(yy, xx);
                }
            out.at(y, x) = ones >= majority ? 1 : 0;
        }
    return out;
}

MifMasks mif_channel_masks(const RasterImage& image, const MorphologyParams& morph) {
    if (image.channels != 3)
        throw std::invalid_argument("mif_channel_masks: expects a 3-channel image");
    auto channel_mask = [&](int ch) {
        RasterImage gray(image.height, image.width, 1);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) gray.at(y, x, 0) = image.at(y, x, ch);
        BinaryMask m = binarize(gray, otsu_threshold(gray));
        m = dilate(m, morph.dilate_size, morph.dilate_iterations);
        return median_filter(m, morph.median_size);
    };
    MifMasks masks;
    masks.dapi = channel_mask(0);
    masks.cd3 = channel_mask(2);
    masks.panck = channel_mask(1);
    return masks;
}

namespace {

// Row-normalized stain matrix M (rows H, E, DAB) and its inverse.
struct StainBasis {
    double m[3][3];
    double inv[3][3];
    StainBasis() {
        const double raw[3][3] = {{0.65, 0.70, 0.29}, {0.07, 0.99, 0.11}, {0.27, 0.57, 0.78}};
        for (int r = 0; r < 3; ++r) {
            double nrm = std::sqrt(raw[r][0] * raw[r][0] + raw[r][1] * raw[r][1] +
                                   raw[r][2] * raw[r][2]);
            for (int c = 0; c < 3; ++c) m[r][c] = raw[r][c] / nrm;
        }
        double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        double adj[3][3] = {
            {m[1][1] * m[2][2] - m[1][2] * m[2][1], m[0][2] * m[2][1] - m[0][1] * m[2][2],
             m[0][1] * m[1][2] - m[0][2] * m[1][1]},
            {m[1][2] * m[2][0] - m[1][0] * m[2][2], m[0][0] * m[2][2] - m[0][2] * m[2][0],
             m[0][2] * m[1][0] - m[0][0] * m[1][2]},
            {m[1][0] * m[2][1] - m[1][1] * m[2][0], m[0][1] * m[2][0] - m[0][0] * m[2][1],
             m[0][0] * m[1][1] - m[0][1] * m[1][0]}};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) inv[r][c] = adj[r][c] / det;
    }
};

const StainBasis& stain_basis() {
    static const StainBasis basis;
    return basis;
}

constexpr double kOdEps = 1.0 / 255.0;

}  // namespace

RasterImage color_deconvolution(const RasterImage& rgb) {
    if (rgb.channels != 3)
        throw std::invalid_argument("color_deconvolution: expects a 3-channel image");
    const StainBasis& sb = stain_basis();
    RasterImage conc(rgb.height, rgb.width, 3);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x) {
            double od[3];
            for (int c = 0; c < 3; ++c) od[c] = -std::log10(rgb.at(y, x, c) + kOdEps);
            for (int s = 0; s < 3; ++s) {
                // concentrations = OD * inv(M): row vector times matrix
                double v = od[0] * sb.inv[0][s] + od[1] * sb.inv[1][s] + od[2] * sb.inv[2][s];
                conc.at(y, x, s) = v > 0.0 ? v : 0.0;
            }
        }
    return conc;
}

RasterImage beer_lambert_forward(const RasterImage& concentrations) {
    if (concentrations.channels != 3)
        throw std::invalid_argument("beer_lambert_forward: expects a 3-channel image");
    const StainBasis& sb = stain_basis();
    RasterImage rgb(concentrations.height, concentrations.width, 3);
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double od = concentrations.at(y, x, 0) * sb.m[0][c] +
                            concentrations.at(y, x, 1) * sb.m[1][c] +
                            concentrations.at(y, x, 2) * sb.m[2][c];
                // No clamp: dense stains (OD > log10(255)) dip slightly below
                // zero here so the epsilon in the inverse cancels exactly.
                rgb.at(y, x, c) = std::pow(10.0, -od) - kOdEps;
            }
    return rgb;
}

BinaryMask ihc_dab_mask(const RasterImage& image) {
    RasterImage conc = color_deconvolution(image);
    RasterImage dab(image.height, image.width, 1);
    double lo = kInf, hi = -kInf;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            double v = conc.at(y, x, 2);
            dab.at(y, x, 0) = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi <= lo) return BinaryMask(image.height, image.width);  // flat channel -> empty
    for (double& v : dab.data) v = (v - lo) / (hi - lo);
    return binarize(dab, otsu_threshold(dab));
}

std::vector<double> squared_distance_transform(const BinaryMask& m) {
    int h = m.height, w = m.width;
    std::vector<double> d(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < d.size(); ++i) d[i] = m.data[i] ? 0.0 : kFar;

    std::vector<double> col(h), colo(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = d[static_cast<size_t>(y) * w + x];
        dt1d(col.data(), h, colo.data());
        for (int y = 0; y < h; ++y) d[static_cast<size_t>(y) * w + x] = colo[y];
    }
    std::vector<double> row(w), rowo(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[x] = d[static_cast<size_t>(y) * w + x];
        dt1d(row.data(), w, rowo.data());
        for (int x = 0; x < w; ++x) d[static_cast<size_t>(y) * w + x] = rowo[x];
    }
    return d;
}

SegmentationMetrics segmentation_metrics(const BinaryMask& pred, const BinaryMask& ref) {
    if (pred.height != ref.height || pred.width != ref.width)
        throw std::invalid_argument("segmentation_metrics: shape mismatch");
    size_t n = pred.data.size();
    size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < n; ++i) {
        if (pred.data[i] && ref.data[i]) ++tp;
        else if (pred.data[i]) ++fp;
        else if (ref.data[i]) ++fn;
        else ++tn;
    }
    size_t np = tp + fp, nr = tp + fn;

    SegmentationMetrics sm;
    if (np == 0 && nr == 0) {
        sm.dice = sm.iou = 1.0;
        sm.hd = 0.0;
    } else if (np == 0 || nr == 0) {
        sm.dice = sm.iou = 0.0;
        sm.hd = std::sqrt(static_cast<double>(pred.height) * pred.height +
                          static_cast<double>(pred.width) * pred.width);
    } else {
        sm.dice = 2.0 * tp / static_cast<double>(np + nr);
        sm.iou = static_cast<double>(tp) / (tp + fp + fn);
        std::vector<double> dp = squared_distance_transform(pred);
        std::vector<double> dr = squared_distance_transform(ref);
        double h2 = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (pred.data[i]) h2 = std::max(h2, dr[i]);
            if (ref.data[i]) h2 = std::max(h2, dp[i]);
        }
        sm.hd = std::sqrt(h2);
    }
    size_t neg = fp + tn;  // reference negatives
    sm.tpr = nr == 0 ? 1.0 : static_cast<double>(tp) / nr;
    sm.tnr = neg == 0 ? 1.0 : static_cast<double>(tn) / neg;
    return sm;
}

namespace {

class IdentityEmbedder final : public Embedder {
public:
    std::string id() const override { return "identity"; }
    std::vector<double> embed(const RasterImage& img) const override { return img.data; }
};

class TinyConvEmbedder final : public Embedder {
public:
    explicit TinyConvEmbedder(int in_channels) : cin_(in_channels) {
        std::mt19937_64 rng(0x7f1d5eedULL);
        int c = cin_;
        for (int ch : {8, 16}) {
            channels_.push_back(ch);
            std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (c * 9)));
            std::vector<double> w(static_cast<size_t>(ch) * c * 9);
            for (double& v : w) v = d(rng);
            weights_.push_back(std::move(w));
            c = ch;
        }
    }

    std::string id() const override { return "tinyconv"; }

    std::vector<double> embed(const RasterImage& img) const override {
        if (img.channels != cin_)
            throw std::invalid_argument("tinyconv embedder: channel mismatch");
        RasterImage small = (img.height == 32 && img.width == 32)
                                ? img
                                : bilinear_resize(img, 32, 32);
        FeatureMap cur = to_feature_map(small);
        for (size_t l = 0; l < weights_.size(); ++l) {
            FeatureMap next(channels_[l], cur.height, cur.width);
            kernels::conv2d_forward(cur.data.data(), weights_[l].data(), nullptr,
                                    next.data.data(), cur.channels, next.channels,
                                    cur.height, cur.width, 1);
            for (double& v : next.data) v = v > 0.0 ? v : 0.0;
            cur = std::move(next);
        }
        std::vector<double> out;
        out.reserve(static_cast<size_t>(cur.channels) * 2);
        size_t plane = static_cast<size_t>(cur.height) * cur.width;
        for (int c = 0; c < cur.channels; ++c) {
            const double* p = cur.plane(c);
            double mean = std::accumulate(p, p + plane, 0.0) / plane;
            double var = 0.0;
            for (size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
            out.push_back(mean);
            out.push_back(std::sqrt(var / plane));
        }
        return out;
    }

private:
    int cin_;
    std::vector<int> channels_;
    std::vector<std::vector<double>> weights_;
};

}  // namespace

std::unique_ptr<Embedder> make_identity_embedder() {
    return std::make_unique<IdentityEmbedder>();
}

std::unique_ptr<Embedder> make_tinyconv_embedder(int in_channels) {
    return std::make_unique<TinyConvEmbedder>(in_channels);
}

double frechet_distance(const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b,
                        bool* regularized) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("frechet_distance: empty embedding set");
    long dim = static_cast<long>(a[0].size());
    if (dim == 0 || static_cast<long>(b[0].size()) != dim)
        throw std::invalid_argument("frechet_distance: embedding dimension mismatch");

    auto fit = [dim](const std::vector<std::vector<double>>& set, Eigen::VectorXd& mu,
                     Eigen::MatrixXd& cov) {
        long n = static_cast<long>(set.size());
        Eigen::MatrixXd x(n, dim);
        for (long i = 0; i < n; ++i) {
            if (static_cast<long>(set[i].size()) != dim)
                throw std::invalid_argument("frechet_distance: ragged embedding set");
            for (long j = 0; j < dim; ++j) x(i, j) = set[i][j];
        }
        mu = x.colwise().mean();
        Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
        cov = n > 1 ? Eigen::MatrixXd((centered.transpose() * centered) / double(n - 1))
                    : Eigen::MatrixXd::Zero(dim, dim);
    };

    Eigen::VectorXd mu1, mu2;
    Eigen::MatrixXd s1, s2;
    fit(a, mu1, s1);
    fit(b, mu2, s2);

    bool reg = static_cast<long>(a.size()) <= dim || static_cast<long>(b.size()) <= dim;
    if (reg) {
        s1 += 1e-6 * Eigen::MatrixXd::Identity(dim, dim);
        s2 += 1e-6 * Eigen::MatrixXd::Identity(dim, dim);
    }
    if (regularized) *regularized = reg;

    // tr((s1 s2)^{1/2}) via the symmetric form tr((s1^{1/2} s2 s1^{1/2})^{1/2})
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(s1);
    Eigen::VectorXd ev = es1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd root1 =
        es1.eigenvectors() * ev.asDiagonal() * es1.eigenvectors().transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(root1 * s2 * root1);
    double tr_sqrt = es2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double fid = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, fid);
}

DistributionMetrics distribution_metrics(const std::vector<RasterImage>& pred_set,
                                         const std::vector<RasterImage>& ref_set,
                                         const Embedder& embedder) {
    auto embed_all = [&](const std::vector<RasterImage>& set) {
        std::vector<std::vector<double>> out;
        out.reserve(set.size());
        for (const RasterImage& img : set) out.push_back(embedder.embed(img));
        return out;
    };
    DistributionMetrics dm;
    dm.embedder_id = embedder.id();
    dm.fid = frechet_distance(embed_all(pred_set), embed_all(ref_set),
                              &dm.covariance_regularized);
    return dm;
}

}  // namespace stainer
