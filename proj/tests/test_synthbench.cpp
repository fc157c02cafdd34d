#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "stainer/synthbench.hpp"

using namespace stainer;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("mapping names round-trip") {
    for (SynthMapping m :
         {SynthMapping::pointwise, SynthMapping::contextual, SynthMapping::longrange})
        CHECK(synth_mapping_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(synth_mapping_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("pointwise mapping: constant 0.3 source maps to constant 0.7 target") {
    RasterImage s(16, 16, 3, 0.3);
    RasterImage t = oracle_target(s, SynthMapping::pointwise);
    for (double v : t.data) CHECK(v == doctest::Approx(0.7));
    // permutation moves channels: make channel 1 distinct and check it lands on 0
    RasterImage s2(16, 16, 3, 0.3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) s2.at(y, x, 1) = 0.9;
    RasterImage t2 = oracle_target(s2, SynthMapping::pointwise);
    CHECK(t2.at(5, 5, 0) == doctest::Approx(0.1));  // 1 - s[ch 1]
    CHECK(t2.at(5, 5, 1) == doctest::Approx(0.7));  // 1 - s[ch 2]
    CHECK(t2.at(5, 5, 2) == doctest::Approx(0.7));  // 1 - s[ch 0]
}

TEST_CASE("contextual mapping: constant 0.6 source maps to the high code everywhere") {
    RasterImage s(16, 16, 3, 0.6);
    RasterImage t = oracle_target(s, SynthMapping::contextual);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            CHECK(t.at(y, x, 0) == t.at(0, 0, 0));
            CHECK(t.at(y, x, 1) == t.at(0, 0, 1));
        }
    RasterImage low(16, 16, 3, 0.4);
    RasterImage tl = oracle_target(low, SynthMapping::contextual);
    CHECK(tl.at(0, 0, 0) != t.at(0, 0, 0));  // two distinct codes
}

TEST_CASE("contextual mapping flips within one column of a vertical step edge") {
    int k = 8;
    RasterImage s(16, 16, 3);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) s.at(y, x, c) = x < k ? 0.2 : 0.8;
    RasterImage t = oracle_target(s, SynthMapping::contextual);
    // 3x3 means: columns <= k-2 are 0.2 (low), >= k+1 are 0.8 (high);
    // column k-1 mixes to 0.4 (low), column k mixes to 0.6 (high)
    for (int y = 0; y < 16; ++y) {
        CHECK(t.at(y, 0, 0) == t.at(y, k - 2, 0));
        CHECK(t.at(y, 15, 0) == t.at(y, k + 1, 0));
        CHECK(t.at(y, k - 1, 0) == t.at(y, 0, 0));
        CHECK(t.at(y, k, 0) == t.at(y, 15, 0));
    }
    CHECK(t.at(0, 0, 0) != t.at(0, 15, 0));
}

TEST_CASE("longrange targets depend on the dominant quadrant, not the 3x3 patch") {
    // Two sources identical inside a window in the top-right quadrant but with
    // different dominant quadrants -> different targets at that window center.
    RasterImage a(16, 16, 3, 0.1), b(16, 16, 3, 0.1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) a.at(y, x, c) = 0.9;  // top-left dominates
    for (int y = 0; y < 8; ++y)
        for (int x = 8; x < 16; ++x)
            for (int c = 0; c < 3; ++c) b.at(y, x, c) = 0.9;  // top-right dominates
    // shared probe patch whose 3x3 window around (3, 12) is identical in both
    for (int y = 2; y <= 4; ++y)
        for (int x = 11; x <= 13; ++x)
            for (int c = 0; c < 3; ++c) {
                a.at(y, x, c) = 0.5;
                b.at(y, x, c) = 0.5;
            }
    for (int c = 0; c < 3; ++c) CHECK(a.at(3, 12, c) == b.at(3, 12, c));
    RasterImage ta = oracle_target(a, SynthMapping::longrange);
    RasterImage tb = oracle_target(b, SynthMapping::longrange);
    CHECK(ta.at(3, 12, 0) != tb.at(3, 12, 0));
    // target scales the source: dominant quadrant keeps it, others attenuate
    CHECK(ta.at(3, 3, 0) == doctest::Approx(0.9));
    CHECK(ta.at(12, 12, 0) == doctest::Approx(0.25 * 0.1));
}

TEST_CASE("generate_pair is deterministic and honors the noise contract") {
    SynthSpec spec;
    spec.seed = 42;
    spec.size = 24;
    spec.mapping = SynthMapping::contextual;
    PairedPatch p1 = generate_pair(spec);
    PairedPatch p2 = generate_pair(spec);
    CHECK(p1.source.data == p2.source.data);
    CHECK(p1.target.data == p2.target.data);
    CHECK(p1.source.height == 24);

    // noiseless: target is exactly the oracle of the stored source
    RasterImage oracle = oracle_target(p1.source, spec.mapping);
    CHECK(p1.target.data == oracle.data);

    // noisy: source perturbed, target still derived from the clean source
    SynthSpec noisy = spec;
    noisy.noise_std = 0.05;
    PairedPatch pn = generate_pair(noisy);
    CHECK(pn.source.data != p1.source.data);
    CHECK(pn.target.data == p1.target.data);
}

TEST_CASE("generate_pair rejects tiny sizes") {
    SynthSpec spec;
    spec.size = 8;
    CHECK_THROWS_AS(generate_pair(spec), std::invalid_argument);
}

TEST_CASE("generate_dataset writes n pairs, a manifest, and regenerates byte-identically") {
    fs::path dir = fs::temp_directory_path() / "stainer_synth_test";
    fs::remove_all(dir);
    SynthSpec spec;
    spec.seed = 7;
    spec.size = 16;
    spec.mapping = SynthMapping::pointwise;
    SynthManifest m = generate_dataset(spec, 4, dir.string());
    CHECK(m.pairs.size() == 4);
    CHECK(m.pairs[0].seed == 7);
    CHECK(m.pairs[3].seed == 10);

    int pngs = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") ++pngs;
    CHECK(pngs == 8);

    std::string before = slurp(dir / m.pairs[2].source_file);
    std::string manifest_before = slurp(dir / "manifest.json");
    generate_dataset(spec, 4, dir.string());
    CHECK(slurp(dir / m.pairs[2].source_file) == before);
    CHECK(slurp(dir / "manifest.json") == manifest_before);

    std::vector<PairedPatch> loaded = load_dataset((dir / "manifest.json").string());
    REQUIRE(loaded.size() == 4);
    for (const PairedPatch& p : loaded) {
        CHECK(p.source.height == 16);
        CHECK(p.source.width == 16);
        CHECK(p.target.height == 16);
        CHECK(p.source.channels == 3);
    }
    // 16-bit quantization keeps loaded pairs close to the analytic mapping
    SynthSpec s0 = spec;
    PairedPatch fresh = generate_pair(s0);
    for (size_t i = 0; i < fresh.source.data.size(); ++i)
        CHECK(std::fabs(loaded[0].source.data[i] - fresh.source.data[i]) < 1e-4);
    fs::remove_all(dir);
}

TEST_CASE("manifest round-trips through save/load") {
    fs::path path = fs::temp_directory_path() / "stainer_manifest_test.json";
    SynthManifest m;
    m.spec.seed = 3;
    m.spec.size = 20;
    m.spec.mapping = SynthMapping::longrange;
    m.spec.noise_std = 0.01;
    m.pairs.push_back({"id_a", "a_s.png", "a_t.png", 3});
    save_manifest(m, path.string());
    SynthManifest r = load_manifest(path.string());
    CHECK(r.spec.seed == 3);
    CHECK(r.spec.size == 20);
    CHECK(r.spec.mapping == SynthMapping::longrange);
    CHECK(r.spec.noise_std == 0.01);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].id == "id_a");
    CHECK(r.pairs[0].source_file == "a_s.png");
    fs::remove(path);
}
