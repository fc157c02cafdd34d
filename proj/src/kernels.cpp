#include "stainer/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stainer::kernels {

// ---- linear ----

static inline void linear_forward_row(const double* x, const double* w, const double* bias,
                                      double* out, int k, int n, int i) {
    const double* xi = x + static_cast<size_t>(i) * k;
    double* oi = out + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const double* wj = w + static_cast<size_t>(j) * k;
        double acc = bias ? bias[j] : 0.0;
        for (int t = 0; t < k; ++t) acc += xi[t] * wj[t];
        oi[j] = acc;
    }
}

void linear_forward_serial(const double* x, const double* w, const double* bias,
                           double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) linear_forward_row(x, w, bias, out, k, n, i);
}

void linear_forward_omp(const double* x, const double* w, const double* bias,
                        double* out, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) linear_forward_row(x, w, bias, out, k, n, i);
}

static inline void linear_backward_input_row(const double* dout, const double* w, double* dx,
                                             int k, int n, int i) {
    const double* di = dout + static_cast<size_t>(i) * n;
    double* xi = dx + static_cast<size_t>(i) * k;
    std::fill(xi, xi + k, 0.0);
    for (int j = 0; j < n; ++j) {
        const double* wj = w + static_cast<size_t>(j) * k;
        double d = di[j];
        for (int t = 0; t < k; ++t) xi[t] += d * wj[t];
    }
}

void linear_backward_input_serial(const double* dout, const double* w, double* dx,
                                  int m, int k, int n) {
    for (int i = 0; i < m; ++i) linear_backward_input_row(dout, w, dx, k, n, i);
}

void linear_backward_input_omp(const double* dout, const double* w, double* dx,
                               int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) linear_backward_input_row(dout, w, dx, k, n, i);
}

static inline void linear_backward_params_cell(const double* dout, const double* x, double* dw,
                                               int m, int k, int n, int j) {
    double* wj = dw + static_cast<size_t>(j) * k;
    for (int t = 0; t < k; ++t) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i)
            acc += dout[static_cast<size_t>(i) * n + j] * x[static_cast<size_t>(i) * k + t];
        wj[t] += acc;
    }
}

void linear_backward_params_serial(const double* dout, const double* x, double* dw,
                                   double* db, int m, int k, int n) {
    for (int j = 0; j < n; ++j) {
        linear_backward_params_cell(dout, x, dw, m, k, n, j);
        if (db) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += dout[static_cast<size_t>(i) * n + j];
            db[j] += acc;
        }
    }
}

void linear_backward_params_omp(const double* dout, const double* x, double* dw,
                                double* db, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) {
        linear_backward_params_cell(dout, x, dw, m, k, n, j);
        if (db) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += dout[static_cast<size_t>(i) * n + j];
            db[j] += acc;
        }
    }
}

// ---- conv2d ----

static inline void conv2d_forward_plane(const double* in, const double* w, const double* bias,
                                        double* out, int ci, int h, int wd, int pad,
                                        int o, int y) {
    int side = 2 * pad + 1;
    double* orow = out + (static_cast<size_t>(o) * h + y) * wd;
    for (int x = 0; x < wd; ++x) orow[x] = bias ? bias[o] : 0.0;
    for (int c = 0; c < ci; ++c) {
        const double* wk = w + (static_cast<size_t>(o) * ci + c) * side * side;
        const double* ip = in + static_cast<size_t>(c) * h * wd;
        for (int ky = 0; ky < side; ++ky) {
            int yy = y + ky - pad;
            if (yy < 0 || yy >= h) continue;
            const double* irow = ip + static_cast<size_t>(yy) * wd;
            for (int kx = 0; kx < side; ++kx) {
                double wv = wk[ky * side + kx];
                int x0 = std::max(0, pad - kx);
                int x1 = std::min(wd, wd + pad - kx);
                int off = kx - pad;
                for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x + off];
            }
        }
    }
}

void conv2d_forward_serial(const double* in, const double* w, const double* bias,
                           double* out, int ci, int co, int h, int wd, int pad) {
    for (int o = 0; o < co; ++o)
        for (int y = 0; y < h; ++y) conv2d_forward_plane(in, w, bias, out, ci, h, wd, pad, o, y);
}

void conv2d_forward_omp(const double* in, const double* w, const double* bias,
                        double* out, int ci, int co, int h, int wd, int pad) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < co; ++o)
        for (int y = 0; y < h; ++y) conv2d_forward_plane(in, w, bias, out, ci, h, wd, pad, o, y);
}

// din[c][y][x] = sum_o sum_ky,kx dout[o][y+pad-ky][x+pad-kx] * w[o][c][ky][kx]
static inline void conv2d_backward_input_row(const double* dout, const double* w, double* din,
                                             int ci, int co, int h, int wd, int pad,
                                             int c, int y) {
    int side = 2 * pad + 1;
    double* drow = din + (static_cast<size_t>(c) * h + y) * wd;
    std::fill(drow, drow + wd, 0.0);
    for (int o = 0; o < co; ++o) {
        const double* wk = w + (static_cast<size_t>(o) * ci + c) * side * side;
        const double* op = dout + static_cast<size_t>(o) * h * wd;
        for (int ky = 0; ky < side; ++ky) {
            int yy = y + pad - ky;
            if (yy < 0 || yy >= h) continue;
            const double* orow = op + static_cast<size_t>(yy) * wd;
            for (int kx = 0; kx < side; ++kx) {
                double wv = wk[ky * side + kx];
                int off = pad - kx;
                int x0 = std::max(0, -off);
                int x1 = std::min(wd, wd - off);
                for (int x = x0; x < x1; ++x) drow[x] += wv * orow[x + off];
            }
        }
    }
}

void conv2d_backward_input_serial(const double* dout, const double* w, double* din,
                                  int ci, int co, int h, int wd, int pad) {
    for (int c = 0; c < ci; ++c)
        for (int y = 0; y < h; ++y) conv2d_backward_input_row(dout, w, din, ci, co, h, wd, pad, c, y);
}

void conv2d_backward_input_omp(const double* dout, const double* w, double* din,
                               int ci, int co, int h, int wd, int pad) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < ci; ++c)
        for (int y = 0; y < h; ++y) conv2d_backward_input_row(dout, w, din, ci, co, h, wd, pad, c, y);
}

static inline void conv2d_backward_params_cell(const double* dout, const double* in, double* dw,
                                               int ci, int h, int wd, int pad, int o, int c) {
    int side = 2 * pad + 1;
    const double* op = dout + static_cast<size_t>(o) * h * wd;
    const double* ip = in + static_cast<size_t>(c) * h * wd;
    double* wk = dw + (static_cast<size_t>(o) * ci + c) * side * side;
    for (int ky = 0; ky < side; ++ky) {
        for (int kx = 0; kx < side; ++kx) {
            double acc = 0.0;
            for (int y = 0; y < h; ++y) {
                int yy = y + ky - pad;
                if (yy < 0 || yy >= h) continue;
                const double* orow = op + static_cast<size_t>(y) * wd;
                const double* irow = ip + static_cast<size_t>(yy) * wd;
                int x0 = std::max(0, pad - kx);
                int x1 = std::min(wd, wd + pad - kx);
                int off = kx - pad;
                for (int x = x0; x < x1; ++x) acc += orow[x] * irow[x + off];
            }
            wk[ky * side + kx] += acc;
        }
    }
}

void conv2d_backward_params_serial(const double* dout, const double* in, double* dw,
                                   double* db, int ci, int co, int h, int wd, int pad) {
    for (int o = 0; o < co; ++o) {
        for (int c = 0; c < ci; ++c) conv2d_backward_params_cell(dout, in, dw, ci, h, wd, pad, o, c);
        if (db) {
            const double* op = dout + static_cast<size_t>(o) * h * wd;
            double acc = 0.0;
            for (int t = 0; t < h * wd; ++t) acc += op[t];
            db[o] += acc;
        }
    }
}

void conv2d_backward_params_omp(const double* dout, const double* in, double* dw,
                                double* db, int ci, int co, int h, int wd, int pad) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < co; ++o) {
        for (int c = 0; c < ci; ++c) conv2d_backward_params_cell(dout, in, dw, ci, h, wd, pad, o, c);
        if (db) {
            const double* op = dout + static_cast<size_t>(o) * h * wd;
            double acc = 0.0;
            for (int t = 0; t < h * wd; ++t) acc += op[t];
            db[o] += acc;
        }
    }
}

// ---- dispatch ----

void linear_forward(const double* x, const double* w, const double* bias,
                    double* out, int m, int k, int n) {
#ifdef _OPENMP
    linear_forward_omp(x, w, bias, out, m, k, n);
#else
    linear_forward_serial(x, w, bias, out, m, k, n);
#endif
}

void linear_backward_input(const double* dout, const double* w, double* dx,
                           int m, int k, int n) {
#ifdef _OPENMP
    linear_backward_input_omp(dout, w, dx, m, k, n);
#else
    linear_backward_input_serial(dout, w, dx, m, k, n);
#endif
}

void linear_backward_params(const double* dout, const double* x, double* dw,
                            double* db, int m, int k, int n) {
#ifdef _OPENMP
    linear_backward_params_omp(dout, x, dw, db, m, k, n);
#else
    linear_backward_params_serial(dout, x, dw, db, m, k, n);
#endif
}

void conv2d_forward(const double* in, const double* w, const double* bias,
                    double* out, int ci, int co, int h, int wd, int pad) {
#ifdef _OPENMP
    conv2d_forward_omp(in, w, bias, out, ci, co, h, wd, pad);
#else
    conv2d_forward_serial(in, w, bias, out, ci, co, h, wd, pad);
#endif
}

void conv2d_backward_input(const double* dout, const double* w, double* din,
                           int ci, int co, int h, int wd, int pad) {
#ifdef _OPENMP
    conv2d_backward_input_omp(dout, w, din, ci, co, h, wd, pad);
#else
    conv2d_backward_input_serial(dout, w, din, ci, co, h, wd, pad);
#endif
}

void conv2d_backward_params(const double* dout, const double* in, double* dw,
                            double* db, int ci, int co, int h, int wd, int pad) {
#ifdef _OPENMP
    conv2d_backward_params_omp(dout, in, dw, db, ci, co, h, wd, pad);
#else
    conv2d_backward_params_serial(dout, in, dw, db, ci, co, h, wd, pad);
#endif
}

}  // namespace stainer::kernels
