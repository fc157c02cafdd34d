#pragma once

#include <cstddef>

// Hot inner loops, each with a serial reference and an OpenMP version.
// Parallel loops only write disjoint output elements and keep every
// accumulation in a fixed order, so results are bit-identical to the
// serial reference.
namespace stainer::kernels {

// out[m,n] = x[m,k] * w[n,k]^T (+ bias[n] if bias != nullptr)
void linear_forward_serial(const double* x, const double* w, const double* bias,
                           double* out, int m, int k, int n);
void linear_forward_omp(const double* x, const double* w, const double* bias,
                        double* out, int m, int k, int n);

// dx[m,k] = dout[m,n] * w[n,k]
void linear_backward_input_serial(const double* dout, const double* w, double* dx,
                                  int m, int k, int n);
void linear_backward_input_omp(const double* dout, const double* w, double* dx,
                               int m, int k, int n);

// dw[n,k] += dout[m,n]^T * x[m,k];  db[n] += sum_m dout[m,n]
void linear_backward_params_serial(const double* dout, const double* x, double* dw,
                                   double* db, int m, int k, int n);
void linear_backward_params_omp(const double* dout, const double* x, double* dw,
                                double* db, int m, int k, int n);

// 3x3-style same-padded conv on planar CxHxW tensors, stride 1, zero padding.
// w layout: [co][ci][ky][kx], kernel side = 2*pad+1.
void conv2d_forward_serial(const double* in, const double* w, const double* bias,
                           double* out, int ci, int co, int h, int wd, int pad);
void conv2d_forward_omp(const double* in, const double* w, const double* bias,
                        double* out, int ci, int co, int h, int wd, int pad);

// din[ci,h,w] = full correlation adjoint
void conv2d_backward_input_serial(const double* dout, const double* w, double* din,
                                  int ci, int co, int h, int wd, int pad);
void conv2d_backward_input_omp(const double* dout, const double* w, double* din,
                               int ci, int co, int h, int wd, int pad);

// dw += adjoint wrt weights; db += per-output-channel sums
void conv2d_backward_params_serial(const double* dout, const double* in, double* dw,
                                   double* db, int ci, int co, int h, int wd, int pad);
void conv2d_backward_params_omp(const double* dout, const double* in, double* dw,
                                double* db, int ci, int co, int h, int wd, int pad);

// Default dispatch used by the library (OpenMP builds use the parallel path).
void linear_forward(const double* x, const double* w, const double* bias,
                    double* out, int m, int k, int n);
void linear_backward_input(const double* dout, const double* w, double* dx,
                           int m, int k, int n);
void linear_backward_params(const double* dout, const double* x, double* dw,
                            double* db, int m, int k, int n);
void conv2d_forward(const double* in, const double* w, const double* bias,
                    double* out, int ci, int co, int h, int wd, int pad);
void conv2d_backward_input(const double* dout, const double* w, double* din,
                           int ci, int co, int h, int wd, int pad);
void conv2d_backward_params(const double* dout, const double* in, double* dw,
                            double* db, int ci, int co, int h, int wd, int pad);

}  // namespace stainer::kernels
