#include "stainer/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "stainer/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stainer {

namespace {

// Fixed two-color code for the contextual mapping.
constexpr double kHighCode[3] = {0.9, 0.1, 0.6};
constexpr double kLowCode[3] = {0.1, 0.9, 0.3};
// Indicator levels for the longrange mapping: dominant quadrant keeps the
// source, the rest is attenuated.
constexpr double kDominantGain = 1.0;
constexpr double kOtherGain = 0.25;

double quadrant_mean(const RasterImage& s, int y0, int y1, int x0, int x1) {
    double sum = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            for (int c = 0; c < s.channels; ++c) sum += s.at(y, x, c);
    return sum / (static_cast<double>(y1 - y0) * (x1 - x0) * s.channels);
}

}  // namespace

std::string to_string(SynthMapping m) {
    switch (m) {
        case SynthMapping::pointwise: return "pointwise";
        case SynthMapping::contextual: return "contextual";
        case SynthMapping::longrange: return "longrange";
    }
    throw std::logic_error("unknown mapping");
}

SynthMapping synth_mapping_from_string(const std::string& s) {
    if (s == "pointwise") return SynthMapping::pointwise;
    if (s == "contextual") return SynthMapping::contextual;
    if (s == "longrange") return SynthMapping::longrange;
    throw std::invalid_argument("unknown mapping '" + s + "'");
}

RasterImage synth_source(const SynthSpec& spec) {
    if (spec.size < 16) throw std::invalid_argument("synth_source: size must be >= 16");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> upos(0.0, spec.size);
    std::uniform_real_distribution<double> usigma(spec.size / 16.0, spec.size / 6.0);
    std::uniform_real_distribution<double> uamp(0.5, 1.0);
    std::uniform_real_distribution<double> uw(0.3, 1.0);

    struct Blob {
        double cx, cy, sigma, amp, w[3];
    };
    std::vector<Blob> blobs(std::max(1, spec.blob_count));
    for (Blob& b : blobs) {
        b.cx = upos(rng);
        b.cy = upos(rng);
        b.sigma = usigma(rng);
        b.amp = uamp(rng);
        for (double& w : b.w) w = uw(rng);
    }

    RasterImage s(spec.size, spec.size, 3);
    for (int y = 0; y < spec.size; ++y)
        for (int x = 0; x < spec.size; ++x) {
            double acc[3] = {0, 0, 0};
            for (const Blob& b : blobs) {
                double dx = x - b.cx, dy = y - b.cy;
                double g = b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
                for (int c = 0; c < 3; ++c) acc[c] += g * b.w[c];
            }
            for (int c = 0; c < 3; ++c) s.at(y, x, c) = std::clamp(acc[c], 0.0, 1.0);
        }
    return s;
}

RasterImage oracle_target(const RasterImage& source, SynthMapping mapping) {
    int h = source.height, w = source.width;
    RasterImage t(h, w, source.channels);
    switch (mapping) {
        case SynthMapping::pointwise: {
            // channel permutation (1,2,0) of 1-s
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < source.channels; ++c)
                        t.at(y, x, c) = 1.0 - source.at(y, x, (c + 1) % source.channels);
            break;
        }
        case SynthMapping::contextual: {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double m = 0.0;
                    for (int i = -1; i <= 1; ++i)
                        for (int j = -1; j <= 1; ++j) {
                            int yy = std::clamp(y + i, 0, h - 1);
                            int xx = std::clamp(x + j, 0, w - 1);
                            for (int c = 0; c < source.channels; ++c) m += source.at(yy, xx, c);
                        }
                    m /= 9.0 * source.channels;
                    const double* code = m > 0.5 ? kHighCode : kLowCode;
                    for (int c = 0; c < source.channels; ++c) t.at(y, x, c) = code[c];
                }
            break;
        }
        case SynthMapping::longrange: {
            int hy = h / 2, hx = w / 2;
            double means[4] = {quadrant_mean(source, 0, hy, 0, hx),
                               quadrant_mean(source, 0, hy, hx, w),
                               quadrant_mean(source, hy, h, 0, hx),
                               quadrant_mean(source, hy, h, hx, w)};
            int dominant = 0;
            for (int q = 1; q < 4; ++q)
                if (means[q] > means[dominant]) dominant = q;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    int q = (y >= hy ? 2 : 0) + (x >= hx ? 1 : 0);
                    double gain = q == dominant ? kDominantGain : kOtherGain;
                    for (int c = 0; c < source.channels; ++c)
                        t.at(y, x, c) = gain * source.at(y, x, c);
                }
            break;
        }
    }
    return t;
}

PairedPatch generate_pair(const SynthSpec& spec) {
    PairedPatch p;
    RasterImage clean = synth_source(spec);
    p.target = oracle_target(clean, spec.mapping);
    if (spec.noise_std > 0.0) {
        std::mt19937_64 rng(spec.seed ^ 0xa5a5a5a5a5a5a5a5ull);
        std::normal_distribution<double> noise(0.0, spec.noise_std);
        for (double& v : clean.data) v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
    p.source = std::move(clean);
    p.id = "synth_" + to_string(spec.mapping) + "_" + std::to_string(spec.seed);
    return p;
}

static json spec_to_json(const SynthSpec& s) {
    return json{{"seed", s.seed},
                {"size", s.size},
                {"blob_count", s.blob_count},
                {"mapping", to_string(s.mapping)},
                {"noise_std", s.noise_std}};
}

static SynthSpec spec_from_json(const json& j) {
    SynthSpec s;
    s.seed = j.at("seed").get<uint64_t>();
    s.size = j.at("size").get<int>();
    s.blob_count = j.at("blob_count").get<int>();
    s.mapping = synth_mapping_from_string(j.at("mapping").get<std::string>());
    s.noise_std = j.at("noise_std").get<double>();
    return s;
}

SynthManifest generate_dataset(const SynthSpec& spec, int n, const std::string& out_dir) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir))
        throw std::runtime_error("generate_dataset: cannot create directory " + out_dir);

    SynthManifest manifest;
    manifest.spec = spec;
    manifest.pairs.resize(n);

    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        try {
            SynthSpec s = spec;
            s.seed = spec.seed + static_cast<uint64_t>(i);
            PairedPatch p = generate_pair(s);
            SynthManifestEntry e;
            e.id = p.id;
            e.seed = s.seed;
            e.source_file = p.id + "_source.png";
            e.target_file = p.id + "_target.png";
            save_image(p.source, (fs::path(out_dir) / e.source_file).string());
            save_image(p.target, (fs::path(out_dir) / e.target_file).string());
            manifest.pairs[i] = std::move(e);
        } catch (...) {
#pragma omp critical
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

void save_manifest(const SynthManifest& m, const std::string& path) {
    json j;
    j["spec"] = spec_to_json(m.spec);
    j["pairs"] = json::array();
    for (const SynthManifestEntry& e : m.pairs)
        j["pairs"].push_back({{"id", e.id},
                              {"seed", e.seed},
                              {"source", e.source_file},
                              {"target", e.target_file}});
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << j.dump(2) << "\n";
}

SynthManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    json j = json::parse(f);
    SynthManifest m;
    m.spec = spec_from_json(j.at("spec"));
    for (const json& e : j.at("pairs")) {
        SynthManifestEntry ent;
        ent.id = e.at("id").get<std::string>();
        ent.seed = e.at("seed").get<uint64_t>();
        ent.source_file = e.at("source").get<std::string>();
        ent.target_file = e.at("target").get<std::string>();
        m.pairs.push_back(std::move(ent));
    }
    return m;
}

std::vector<PairedPatch> load_dataset(const std::string& manifest_path) {
    SynthManifest m = load_manifest(manifest_path);
    fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<PairedPatch> out;
    out.reserve(m.pairs.size());
    for (const SynthManifestEntry& e : m.pairs) {
        PairedPatch p;
        p.id = e.id;
        p.source = load_image((dir / e.source_file).string());
        p.target = load_image((dir / e.target_file).string());
        if (p.source.height != p.target.height || p.source.width != p.target.width)
            throw std::runtime_error("dataset pair " + e.id + ": source/target dims differ");
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace stainer
