#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stainer/image.hpp"

namespace stainer {

// Frozen feature extractor used by the perceptual loss. Never trained.
class FeatureNetwork {
public:
    virtual ~FeatureNetwork() = default;
    virtual std::string name() const = 0;
    // Tap activations for an image.
    virtual std::vector<FeatureMap> taps(const RasterImage& img) const = 0;
    // d(sum_k <dtap_k, tap_k>)/d(image); dtaps align with taps().
    virtual RasterImage taps_backward(const RasterImage& img,
                                      const std::vector<FeatureMap>& dtaps) const = 0;
};

// One tap: the image itself. Degenerate oracle network; perceptual loss with a
// single identity spec equals mean-squared pixel difference.
std::unique_ptr<FeatureNetwork> make_identity_network();

// Fixed random-weight conv stack (seeded by style name), taps after each layer.
// Stand-in for the pretrained alexnet/vgg/resnet style networks when no
// external weight assets are available.
std::unique_ptr<FeatureNetwork> make_random_conv_network(const std::string& style,
                                                         int in_channels);

struct PerceptualNetworkSpec {
    std::shared_ptr<const FeatureNetwork> network;
    double lambda = 0.0;
};

// Builds the default spec list for lambdas (l1,l2,l3) mapped to the
// alexnet/vgg/resnet style stand-ins. Zero-lambda entries are kept (they
// contribute 0) so configs stay positionally stable.
std::vector<PerceptualNetworkSpec> default_perceptual_specs(const std::vector<double>& lambdas,
                                                            int in_channels);

// Mean over all pixels and channels of |pred - target|.
double implicit_loss(const RasterImage& pred, const RasterImage& target);
// Also accumulates d(loss)/d(pred) into *dpred (same shape, added).
double implicit_loss_backward(const RasterImage& pred, const RasterImage& target,
                              RasterImage* dpred, double weight = 1.0);

// sum_k lambda_k * mean over taps of mean squared feature difference.
double perceptual_loss(const RasterImage& pred, const RasterImage& target,
                       const std::vector<PerceptualNetworkSpec>& specs);
double perceptual_loss_backward(const RasterImage& pred, const RasterImage& target,
                                const std::vector<PerceptualNetworkSpec>& specs,
                                RasterImage* dpred, double weight = 1.0);

double total_loss(const RasterImage& pred, const RasterImage& target,
                  const std::vector<PerceptualNetworkSpec>& specs);

}  // namespace stainer
