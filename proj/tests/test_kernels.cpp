#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include "stainer/kernels.hpp"

using namespace stainer;

namespace {

std::vector<double> randv(size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0, 1);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("linear_forward matches a hand-computed 2x2x2 case") {
    // out[m,n] = x[m,:] . w[n,:] + b[n]
    double x[4] = {1, 2, 3, 4};
    double w[4] = {5, 6, 7, 8};
    double b[2] = {0.5, -0.5};
    double out[4];
    kernels::linear_forward_serial(x, w, b, out, 2, 2, 2);
    CHECK(out[0] == doctest::Approx(1 * 5 + 2 * 6 + 0.5));
    CHECK(out[1] == doctest::Approx(1 * 7 + 2 * 8 - 0.5));
    CHECK(out[2] == doctest::Approx(3 * 5 + 4 * 6 + 0.5));
    CHECK(out[3] == doctest::Approx(3 * 7 + 4 * 8 - 0.5));
}

TEST_CASE("conv2d_forward matches a hand-computed 3x3 case") {
    // single channel, kernel = centered +1 with +0.5 on the east neighbor
    double in[9] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    double w[9] = {0, 0, 0, 0, 1, 0.5, 0, 0, 0};
    double out[9];
    kernels::conv2d_forward_serial(in, w, nullptr, out, 1, 1, 3, 3, 1);
    CHECK(out[0] == doctest::Approx(1 + 0.5 * 2));
    CHECK(out[2] == doctest::Approx(3 + 0.0));  // east neighbor zero-padded
    CHECK(out[4] == doctest::Approx(5 + 0.5 * 6));
    CHECK(out[8] == doctest::Approx(9 + 0.0));
}

TEST_CASE("OpenMP kernels are bit-identical to the serial references") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 4; ++trial) {
        int m = 3 + static_cast<int>(rng() % 40);
        int k = 1 + static_cast<int>(rng() % 30);
        int n = 1 + static_cast<int>(rng() % 30);
        auto x = randv(static_cast<size_t>(m) * k, rng);
        auto w = randv(static_cast<size_t>(n) * k, rng);
        auto b = randv(n, rng);
        auto dout = randv(static_cast<size_t>(m) * n, rng);

        std::vector<double> o1(static_cast<size_t>(m) * n), o2(o1.size());
        kernels::linear_forward_serial(x.data(), w.data(), b.data(), o1.data(), m, k, n);
        kernels::linear_forward_omp(x.data(), w.data(), b.data(), o2.data(), m, k, n);
        CHECK(bitwise_equal(o1, o2));

        std::vector<double> dx1(static_cast<size_t>(m) * k), dx2(dx1.size());
        kernels::linear_backward_input_serial(dout.data(), w.data(), dx1.data(), m, k, n);
        kernels::linear_backward_input_omp(dout.data(), w.data(), dx2.data(), m, k, n);
        CHECK(bitwise_equal(dx1, dx2));

        std::vector<double> dw1(w.size(), 0), dw2(w.size(), 0), db1(n, 0), db2(n, 0);
        kernels::linear_backward_params_serial(dout.data(), x.data(), dw1.data(), db1.data(),
                                               m, k, n);
        kernels::linear_backward_params_omp(dout.data(), x.data(), dw2.data(), db2.data(), m,
                                            k, n);
        CHECK(bitwise_equal(dw1, dw2));
        CHECK(bitwise_equal(db1, db2));
    }

    for (int trial = 0; trial < 4; ++trial) {
        int ci = 1 + static_cast<int>(rng() % 4);
        int co = 1 + static_cast<int>(rng() % 4);
        int h = 2 + static_cast<int>(rng() % 14);
        int w = 2 + static_cast<int>(rng() % 14);
        int pad = 1;
        auto in = randv(static_cast<size_t>(ci) * h * w, rng);
        auto wt = randv(static_cast<size_t>(co) * ci * 9, rng);
        auto b = randv(co, rng);
        auto dout = randv(static_cast<size_t>(co) * h * w, rng);

        std::vector<double> o1(static_cast<size_t>(co) * h * w), o2(o1.size());
        kernels::conv2d_forward_serial(in.data(), wt.data(), b.data(), o1.data(), ci, co, h,
                                       w, pad);
        kernels::conv2d_forward_omp(in.data(), wt.data(), b.data(), o2.data(), ci, co, h, w,
                                    pad);
        CHECK(bitwise_equal(o1, o2));

        std::vector<double> di1(in.size()), di2(in.size());
        kernels::conv2d_backward_input_serial(dout.data(), wt.data(), di1.data(), ci, co, h,
                                              w, pad);
        kernels::conv2d_backward_input_omp(dout.data(), wt.data(), di2.data(), ci, co, h, w,
                                           pad);
        CHECK(bitwise_equal(di1, di2));

        std::vector<double> dw1(wt.size(), 0), dw2(wt.size(), 0), db1(co, 0), db2(co, 0);
        kernels::conv2d_backward_params_serial(dout.data(), in.data(), dw1.data(), db1.data(),
                                               ci, co, h, w, pad);
        kernels::conv2d_backward_params_omp(dout.data(), in.data(), dw2.data(), db2.data(),
                                            ci, co, h, w, pad);
        CHECK(bitwise_equal(dw1, dw2));
        CHECK(bitwise_equal(db1, db2));
    }
}

TEST_CASE("conv2d backward passes match central finite differences") {
    std::mt19937_64 rng(7);
    int ci = 2, co = 2, h = 4, w = 3, pad = 1;
    auto in = randv(static_cast<size_t>(ci) * h * w, rng);
    auto wt = randv(static_cast<size_t>(co) * ci * 9, rng);
    auto b = randv(co, rng);
    auto dout = randv(static_cast<size_t>(co) * h * w, rng);

    auto loss = [&](const std::vector<double>& input, const std::vector<double>& weights,
                    const std::vector<double>& bias) {
        std::vector<double> out(static_cast<size_t>(co) * h * w);
        kernels::conv2d_forward_serial(input.data(), weights.data(), bias.data(), out.data(),
                                       ci, co, h, w, pad);
        double s = 0;
        for (size_t i = 0; i < out.size(); ++i) s += out[i] * dout[i];
        return s;
    };

    std::vector<double> din(in.size());
    kernels::conv2d_backward_input_serial(dout.data(), wt.data(), din.data(), ci, co, h, w,
                                          pad);
    std::vector<double> dw(wt.size(), 0), db(co, 0);
    kernels::conv2d_backward_params_serial(dout.data(), in.data(), dw.data(), db.data(), ci,
                                           co, h, w, pad);

    const double eps = 1e-6;
    for (size_t i = 0; i < in.size(); i += 5) {
        auto ip = in, im = in;
        ip[i] += eps;
        im[i] -= eps;
        double fd = (loss(ip, wt, b) - loss(im, wt, b)) / (2 * eps);
        CHECK(din[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (size_t i = 0; i < wt.size(); i += 7) {
        auto wp = wt, wm = wt;
        wp[i] += eps;
        wm[i] -= eps;
        double fd = (loss(in, wp, b) - loss(in, wm, b)) / (2 * eps);
        CHECK(dw[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int i = 0; i < co; ++i) {
        auto bp = b, bm = b;
        bp[i] += eps;
        bm[i] -= eps;
        double fd = (loss(in, wt, bp) - loss(in, wt, bm)) / (2 * eps);
        CHECK(db[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}
