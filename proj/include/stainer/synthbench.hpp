#pragma once

#include <string>
#include <vector>

#include "stainer/training.hpp"

namespace stainer {

enum class SynthMapping { pointwise, contextual, longrange };

std::string to_string(SynthMapping m);
SynthMapping synth_mapping_from_string(const std::string& s);

struct SynthSpec {
    uint64_t seed = 0;
    int size = 32;        // square, >= 16
    int blob_count = 6;
    SynthMapping mapping = SynthMapping::pointwise;
    double noise_std = 0.0;  // source-only; targets always derive from the clean source
};

// Smooth random blob field (sum of Gaussian bumps, clipped to [0,1]), 3 channels.
RasterImage synth_source(const SynthSpec& spec);

// Analytic mapping applied to a clean source:
//   pointwise  - channel-permuted 1-s
//   contextual - 3x3 neighborhood mean (replicate borders, all channels)
//                thresholded at 0.5 into one of two fixed colors
//   longrange  - s scaled by an indicator of the dominant (max-mean) quadrant
RasterImage oracle_target(const RasterImage& source, SynthMapping mapping);

// Deterministic pair for the spec; noise (if any) perturbs only the stored source.
PairedPatch generate_pair(const SynthSpec& spec);

struct SynthManifestEntry {
    std::string id;
    std::string source_file;
    std::string target_file;
    uint64_t seed = 0;
};

struct SynthManifest {
    SynthSpec spec;
    std::vector<SynthManifestEntry> pairs;
};

// n pairs with seeds spec.seed .. spec.seed+n-1, saved as 16-bit PNGs plus a
// JSON manifest. Regeneration with the same spec is byte-identical.
SynthManifest generate_dataset(const SynthSpec& spec, int n, const std::string& out_dir);

void save_manifest(const SynthManifest& m, const std::string& path);
SynthManifest load_manifest(const std::string& path);

// Reads the pairs referenced by a manifest (paths relative to its directory).
std::vector<PairedPatch> load_dataset(const std::string& manifest_path);

}  // namespace stainer
