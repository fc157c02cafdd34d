#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace stainer {

// A named weight array with its gradient accumulator.
struct Param {
    std::string name;
    std::vector<double> w;
    std::vector<double> g;

    Param() = default;
    Param(std::string n, size_t count) : name(std::move(n)), w(count, 0.0), g(count, 0.0) {}

    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
    size_t size() const { return w.size(); }
};

using ParamRefs = std::vector<Param*>;

inline void zero_grads(const ParamRefs& ps) {
    for (Param* p : ps) p->zero_grad();
}

// Kaiming-style init for fan_in inputs.
inline void init_normal(Param& p, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, stddev);
    for (double& v : p.w) v = d(rng);
}

}  // namespace stainer
