#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "stainer/losses.hpp"
#include "stainer/model.hpp"

namespace stainer {

struct PairedPatch {
    RasterImage source;
    RasterImage target;
    std::string id;
};

enum class CoordSampling { full_grid, random_fraction };

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 4;
    int epochs = 200;
    int steps = 0;  // when > 0, overrides epochs
    CoordSampling coord_sampling = CoordSampling::full_grid;
    double fraction = 1.0;  // used with random_fraction, in (0,1]
    uint64_t seed = 0;
    int checkpoint_every = 0;
    std::vector<double> lambdas = {1.0, 1.0, 0.0};
};

struct StepLoss {
    int step = 0;
    double implicit = 0.0;
    double perceptual = 0.0;
    double total = 0.0;
};

struct TrainResult {
    std::vector<StepLoss> history;
};

// Identical crop windows applied to both images, raster order, remainder dropped.
std::vector<PairedPatch> make_patches(const RasterImage& source, const RasterImage& target,
                                      int patch, int stride);

// Forward + backward over one batch. Accumulates parameter grads (caller zeroes
// them) and returns the batch loss breakdown. With random_fraction sampling the
// perceptual term is evaluated on the full-grid prediction whenever any lambda
// is nonzero; the L1 term uses only the sampled coordinates.
StepLoss compute_batch_gradients(ImplicitModel& model,
                                 const std::vector<const PairedPatch*>& batch,
                                 const std::vector<PerceptualNetworkSpec>& specs,
                                 CoordSampling sampling, double fraction,
                                 std::mt19937_64& rng);

// Loss-only evaluation with the same sampling semantics (used by oracles).
StepLoss evaluate_batch_loss(ImplicitModel& model,
                             const std::vector<const PairedPatch*>& batch,
                             const std::vector<PerceptualNetworkSpec>& specs,
                             CoordSampling sampling, double fraction,
                             std::mt19937_64& rng);

TrainResult train_model(ImplicitModel& model, const std::vector<PairedPatch>& dataset,
                        const TrainConfig& cfg,
                        const std::vector<PerceptualNetworkSpec>& specs,
                        const std::function<void(int, const ImplicitModel&)>& on_checkpoint = {});

void write_loss_history_csv(const TrainResult& result, const std::string& path);

}  // namespace stainer
