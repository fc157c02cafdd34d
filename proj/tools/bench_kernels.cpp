// Timing comparison of the serial reference kernels vs their OpenMP versions,
// with a bitwise equality check on every output buffer.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "stainer/kernels.hpp"

using namespace stainer;

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::vector<double> random_vec(size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        double t0 = now_seconds();
        fn();
        best = std::min(best, now_seconds() - t0);
    }
    return best;
}

void report(const char* name, double t_serial, double t_omp, bool identical) {
    std::printf("%-28s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name,
                t_serial * 1e3, t_omp * 1e3, t_serial / t_omp,
                identical ? "bit-identical" : "MISMATCH");
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads = %d\n\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled; both columns run the serial path\n\n");
#endif
    std::mt19937_64 rng(7);
    const int reps = 5;

    {  // linear: 4096 x 512 x 512
        int m = 4096, k = 512, n = 512;
        auto x = random_vec(static_cast<size_t>(m) * k, rng);
        auto w = random_vec(static_cast<size_t>(n) * k, rng);
        auto b = random_vec(n, rng);
        std::vector<double> o1(static_cast<size_t>(m) * n), o2(o1.size());
        double ts = time_best_of(reps, [&] {
            kernels::linear_forward_serial(x.data(), w.data(), b.data(), o1.data(), m, k, n);
        });
        double tp = time_best_of(reps, [&] {
            kernels::linear_forward_omp(x.data(), w.data(), b.data(), o2.data(), m, k, n);
        });
        report("linear_forward", ts, tp, same_bits(o1, o2));

        auto dout = random_vec(static_cast<size_t>(m) * n, rng);
        std::vector<double> dx1(static_cast<size_t>(m) * k), dx2(dx1.size());
        ts = time_best_of(reps, [&] {
            kernels::linear_backward_input_serial(dout.data(), w.data(), dx1.data(), m, k, n);
        });
        tp = time_best_of(reps, [&] {
            kernels::linear_backward_input_omp(dout.data(), w.data(), dx2.data(), m, k, n);
        });
        report("linear_backward_input", ts, tp, same_bits(dx1, dx2));

        std::vector<double> dw1(static_cast<size_t>(n) * k, 0.0), dw2(dw1.size(), 0.0);
        std::vector<double> db1(n, 0.0), db2(n, 0.0);
        ts = time_best_of(reps, [&] {
            std::fill(dw1.begin(), dw1.end(), 0.0);
            std::fill(db1.begin(), db1.end(), 0.0);
            kernels::linear_backward_params_serial(dout.data(), x.data(), dw1.data(),
                                                   db1.data(), m, k, n);
        });
        tp = time_best_of(reps, [&] {
            std::fill(dw2.begin(), dw2.end(), 0.0);
            std::fill(db2.begin(), db2.end(), 0.0);
            kernels::linear_backward_params_omp(dout.data(), x.data(), dw2.data(),
                                                db2.data(), m, k, n);
        });
        report("linear_backward_params", ts, tp, same_bits(dw1, dw2) && same_bits(db1, db2));
    }

    {  // conv: 32 -> 64 channels on 256x256
        int ci = 32, co = 64, h = 256, w = 256, pad = 1;
        auto in = random_vec(static_cast<size_t>(ci) * h * w, rng);
        auto wt = random_vec(static_cast<size_t>(co) * ci * 9, rng);
        auto b = random_vec(co, rng);
        std::vector<double> o1(static_cast<size_t>(co) * h * w), o2(o1.size());
        double ts = time_best_of(reps, [&] {
            kernels::conv2d_forward_serial(in.data(), wt.data(), b.data(), o1.data(), ci, co,
                                           h, w, pad);
        });
        double tp = time_best_of(reps, [&] {
            kernels::conv2d_forward_omp(in.data(), wt.data(), b.data(), o2.data(), ci, co, h,
                                        w, pad);
        });
        report("conv2d_forward", ts, tp, same_bits(o1, o2));

        auto dout = random_vec(static_cast<size_t>(co) * h * w, rng);
        std::vector<double> di1(static_cast<size_t>(ci) * h * w), di2(di1.size());
        ts = time_best_of(reps, [&] {
            kernels::conv2d_backward_input_serial(dout.data(), wt.data(), di1.data(), ci, co,
                                                  h, w, pad);
        });
        tp = time_best_of(reps, [&] {
            kernels::conv2d_backward_input_omp(dout.data(), wt.data(), di2.data(), ci, co, h,
                                               w, pad);
        });
        report("conv2d_backward_input", ts, tp, same_bits(di1, di2));

        std::vector<double> dw1(wt.size(), 0.0), dw2(wt.size(), 0.0);
        std::vector<double> db1(co, 0.0), db2(co, 0.0);
        ts = time_best_of(reps, [&] {
            std::fill(dw1.begin(), dw1.end(), 0.0);
            std::fill(db1.begin(), db1.end(), 0.0);
            kernels::conv2d_backward_params_serial(dout.data(), in.data(), dw1.data(),
                                                   db1.data(), ci, co, h, w, pad);
        });
        tp = time_best_of(reps, [&] {
            std::fill(dw2.begin(), dw2.end(), 0.0);
            std::fill(db2.begin(), db2.end(), 0.0);
            kernels::conv2d_backward_params_omp(dout.data(), in.data(), dw2.data(),
                                                db2.data(), ci, co, h, w, pad);
        });
        report("conv2d_backward_params", ts, tp, same_bits(dw1, dw2) && same_bits(db1, db2));
    }
    return 0;
}
